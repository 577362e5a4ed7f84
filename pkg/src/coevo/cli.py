"""Command-line entry point: ``python -m coevo <command>``.

Exit codes: 0 success, 2 usage or configuration error, 3 runtime or I/O
error.
"""
from __future__ import annotations

import argparse
import csv
import glob
import itertools
import json
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from .analysis.coverage import exploration_table
from .analysis.som import map_to_som, train_som
from .analysis.stats import mann_whitney_u
from .analysis.tournament import load_champions, master_tournament, read_master_csv, write_master_csv
from .coevolution import run_evolution
from .config import dump_config, load_config, load_manifest
from .errors import ConfigurationError, InvalidInputError, InvalidStateError
from .neuro import NETWORKS, PREDATOR, PREY, SPECIES, Genome, genome_length
from .novelty import parse_method
from .sim import run_trial

log = logging.getLogger("coevo")

EXIT_OK, EXIT_USAGE, EXIT_RUNTIME = 0, 2, 3
COMPLETE_MARKER = "COMPLETE"
COVERAGE_COLUMNS = ("run", "method", "species", "global_coverage", "elite_coverage")
STATS_METRICS = ("global_coverage", "elite_coverage", "best_master_fitness")


class UsageError(Exception):
    pass


def _threads(value) -> int:
    if value is None:
        value = os.environ.get("COEVO_THREADS", "1")
    try:
        n = int(value)
    except ValueError:
        raise UsageError(f"threads: expected an integer, got {value!r}") from None
    if n < 1:
        raise UsageError("threads: must be >= 1")
    return n


# ---------------------------------------------------------------- evolve / batch

def execute_run(config, out_dir, threads: int = 1) -> None:
    """Run one evolution and persist it; the marker file is written last."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    marker = out / COMPLETE_MARKER
    if marker.exists():
        marker.unlink()
    arts = run_evolution(config, threads=threads)
    arts.write(out)
    (out / "config.ini").write_text(dump_config(config), encoding="utf-8")
    marker.write_text("ok\n", encoding="utf-8")


def cmd_evolve(args) -> int:
    config = load_config(args.config, master_seed=args.seed, method=args.method,
                         generations=args.generations, population_size=args.population)
    execute_run(config, args.out, _threads(args.threads))
    print(f"wrote {args.out} ({config.method}, seed {config.master_seed}, {config.generations} generations)")
    return EXIT_OK


def _batch_job(job):
    config, out, threads = job
    try:
        execute_run(config, out, threads)
        return str(out), None
    except Exception as exc:  # reported per run
        return str(out), f"{type(exc).__name__}: {exc}"


def cmd_batch(args) -> int:
    manifest = load_manifest(args.manifest)
    threads = _threads(args.threads)
    jobs, skipped = [], 0
    for method in manifest.methods:
        for i in range(manifest.runs):
            out = manifest.run_dir(method, i)
            if (out / COMPLETE_MARKER).exists():
                skipped += 1
                continue
            jobs.append((manifest.run_config(method, i), out, threads))
    log.info("batch: %d runs to execute, %d already complete", len(jobs), skipped)
    if args.jobs > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(args.jobs) as pool:
            results = list(pool.map(_batch_job, jobs))
    else:
        results = [_batch_job(j) for j in jobs]
    failed = [(out, err) for out, err in results if err]
    for out, err in failed:
        print(f"FAILED {out}: {err}", file=sys.stderr)
    print(f"batch: {len(results) - len(failed)} completed, {skipped} skipped, {len(failed)} failed")
    return EXIT_RUNTIME if failed else EXIT_OK


# ---------------------------------------------------------------- analyze

def discover_runs(pattern: str) -> list[Path]:
    dirs = sorted({Path(p) for p in glob.glob(pattern) if (Path(p) / "champions.jsonl").is_file()})
    if not dirs:
        raise UsageError(f"runs: no run directories with champions.jsonl match {pattern!r}")
    return dirs


def load_runs(pattern: str):
    runs = {}
    for d in discover_runs(pattern):
        config = load_config(d / "config.ini") if (d / "config.ini").exists() else load_config()
        runs[d.as_posix()] = (config, load_champions(d / "champions.jsonl", d.as_posix(), config.method))
    return runs


def _master_rows(args):
    if getattr(args, "master", None):
        return read_master_csv(args.master)
    runs = load_runs(args.runs)
    config = next(iter(runs.values()))[0]
    scored, _ = master_tournament({k: v[1] for k, v in runs.items()}, args.top_n, args.trials,
                                  config.arena, config.body, _threads(args.threads))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_master_csv(scored, out / "master.csv")
    return read_master_csv(out / "master.csv")


def _write_rows(path, columns, rows) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(columns)
        for r in rows:
            w.writerow([repr(r[c]) if isinstance(r[c], float) else r[c] for c in columns])


def _coverage_rows(args, master):
    rows = exploration_table(master, args.levels, args.pred_threshold, args.prey_threshold, args.measure)
    _write_rows(Path(args.out) / "coverage.csv", COVERAGE_COLUMNS, rows)
    return rows


def _som(args, master):
    try:
        w, h = (int(v) for v in args.grid.lower().split("x"))
    except ValueError:
        raise UsageError(f"grid: expected WxH, got {args.grid!r}") from None
    rows = [r for r in master if r["species"] == args.som_species]
    som = train_som([r["descriptor"] for r in rows], w, h, args.iterations, rng=np.random.default_rng(args.seed))
    out = Path(args.out)
    with open(out / "som_units.csv", "w", newline="", encoding="utf-8") as fh:
        wr = csv.writer(fh)
        wr.writerow(("unit_x", "unit_y", "w1", "w2", "w3", "w4"))
        for y in range(h):
            for x in range(w):
                wr.writerow([x, y, *(repr(float(v)) for v in som.weights[y, x])])
    with open(out / "som_mapping.csv", "w", newline="", encoding="utf-8") as fh:
        wr = csv.writer(fh)
        wr.writerow(("run", "unit_x", "unit_y", "count"))
        for run in sorted({r["run"] for r in rows}):
            counts = map_to_som(som, [r["descriptor"] for r in rows if r["run"] == run])
            for y in range(h):
                for x in range(w):
                    wr.writerow([run, x, y, int(counts[y, x])])
    return som


def _parse_pairs(text, methods):
    if not text:
        return list(itertools.combinations(methods, 2))
    pairs = []
    for item in text.split(","):
        try:
            a, b = item.split(":")
            pairs.append((parse_method(a), parse_method(b)))
        except (ValueError, ConfigurationError):
            raise UsageError(f"pairs: expected A:B[,C:D], got {item!r}") from None
    return pairs


def _stats(args, master, coverage_rows):
    per_run = {}
    for r in coverage_rows:
        per_run[(r["run"], r["species"])] = {"method": r["method"], "global_coverage": r["global_coverage"],
                                             "elite_coverage": r["elite_coverage"]}
    for r in master:
        d = per_run[(r["run"], r["species"])]
        d["best_master_fitness"] = max(d.get("best_master_fitness", 0.0), r["master_fitness"])
    methods = list(dict.fromkeys(r["method"] for r in master))
    rows = []
    for species in SPECIES:
        for metric in STATS_METRICS:
            for a, b in _parse_pairs(args.pairs, methods):
                xa = [v[metric] for (run, s), v in per_run.items() if s == species and v["method"] == a]
                xb = [v[metric] for (run, s), v in per_run.items() if s == species and v["method"] == b]
                if not xa or not xb:
                    continue
                res = mann_whitney_u(xa, xb)
                rows.append({"comparison": f"{species}:{metric}:{a}_vs_{b}", "U": res.U, "p": res.p})
    _write_rows(Path(args.out) / "stats.csv", ("comparison", "U", "p"), rows)
    return rows


def cmd_analyze(args) -> int:
    Path(args.out).mkdir(parents=True, exist_ok=True)
    master = _master_rows(args)
    if args.what in ("coverage", "stats", "all"):
        cov = _coverage_rows(args, master)
        if args.what in ("stats", "all"):
            _stats(args, master, cov)
    if args.what in ("som", "all"):
        _som(args, master)
    print(f"analyze {args.what}: {len(master)} champion records -> {args.out}")
    return EXIT_OK


# ---------------------------------------------------------------- replay / defaults

def _read_genome(path, line: int, species: str, flag: str) -> Genome:
    records = [json.loads(s) for s in Path(path).read_text(encoding="utf-8").splitlines() if s.strip()]
    if not records:
        raise UsageError(f"{flag}: no genome in {path}")
    if not 0 <= line < len(records):
        raise UsageError(f"{flag}-line: {line} out of range (file has {len(records)} records)")
    d = records[line]
    d = d.get("genome", d)
    if d.get("species") != species or len(d.get("genes", ())) != genome_length(NETWORKS[species]):
        raise UsageError(f"{flag}: expected a {species} genome, got species {d.get('species')!r} "
                         f"with {len(d.get('genes', ()))} genes")
    return Genome.from_dict(d)


def cmd_replay(args) -> int:
    pred = _read_genome(args.predator, args.predator_line, PREDATOR, "predator")
    prey = _read_genome(args.prey, args.prey_line, PREY, "prey")
    out = run_trial(pred, prey, record_trace=True)
    out.trace.write_csv(args.trace)
    fmt = lambda d: "(" + ", ".join(f"{v:.4f}" for v in d) + ")"  # noqa: E731
    print(f"captured={str(out.captured).lower()} duration={out.duration:g} steps={len(out.trace.rows)}")
    print(f"predator_descriptor={fmt(out.predator_descriptor)}")
    print(f"prey_descriptor={fmt(out.prey_descriptor)}")
    return EXIT_OK


def cmd_defaults(args) -> int:
    sys.stdout.write(dump_config(load_config()))
    return EXIT_OK


# ---------------------------------------------------------------- parser

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="coevo", description="Predator-prey coevolution with novelty search.")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    e = sub.add_parser("evolve", help="run one evolution")
    e.add_argument("--config", help="INI file; defaults apply to missing keys")
    e.add_argument("--seed", type=int, help="master seed (overrides evolution.master_seed)")
    e.add_argument("--out", required=True, help="output directory")
    e.add_argument("--method", help="Fit, NSBoth, NSPred, NSPrey or PMCNS")
    e.add_argument("--generations", type=int)
    e.add_argument("--population", type=int)
    e.add_argument("--threads", help="worker threads (default: $COEVO_THREADS or 1)")
    e.set_defaults(func=cmd_evolve)

    b = sub.add_parser("batch", help="run every (method, run) of a manifest, skipping completed runs")
    b.add_argument("--manifest", required=True)
    b.add_argument("--threads")
    b.add_argument("--jobs", type=int, default=1, help="runs executed concurrently")
    b.set_defaults(func=cmd_batch)

    a = sub.add_parser("analyze", help="master tournament and exploration analyses")
    a.add_argument("what", choices=("tournament", "coverage", "som", "stats", "all"))
    a.add_argument("--runs", help="glob matching run directories")
    a.add_argument("--master", help="reuse an existing master.csv instead of replaying the tournament")
    a.add_argument("--out", required=True)
    a.add_argument("--top-n", type=int, default=1)
    a.add_argument("--trials", type=int, default=1, help="trials per pairing")
    a.add_argument("--pred-threshold", type=float, default=0.8)
    a.add_argument("--prey-threshold", type=float, default=0.3)
    a.add_argument("--levels", type=int, default=5)
    a.add_argument("--measure", choices=("entropy", "visited"), default="entropy")
    a.add_argument("--grid", default="7x7")
    a.add_argument("--iterations", type=int, default=10_000)
    a.add_argument("--som-species", choices=SPECIES, default=PREDATOR)
    a.add_argument("--seed", type=int, default=0, help="SOM seed")
    a.add_argument("--pairs", help="method pairs to compare, e.g. NSBoth:Fit,PMCNS:Fit")
    a.add_argument("--threads")
    a.set_defaults(func=cmd_analyze)

    r = sub.add_parser("replay", help="run one recorded pairing and export its trace")
    r.add_argument("--predator", required=True, help="JSON or JSONL genome / champion file")
    r.add_argument("--prey", required=True)
    r.add_argument("--trace", required=True, help="trace CSV to write")
    r.add_argument("--predator-line", type=int, default=0, help="record index in a JSONL file")
    r.add_argument("--prey-line", type=int, default=0)
    r.set_defaults(func=cmd_replay)

    d = sub.add_parser("defaults", help="print every configuration key with its default")
    d.set_defaults(func=cmd_defaults)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(asctime)s %(name)s %(message)s")
    if args.command == "analyze" and not args.runs and not args.master:
        print("error: analyze needs --runs or --master", file=sys.stderr)
        return EXIT_USAGE
    try:
        return args.func(args)
    except (ConfigurationError, InvalidInputError, UsageError, json.JSONDecodeError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (OSError, InvalidStateError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
