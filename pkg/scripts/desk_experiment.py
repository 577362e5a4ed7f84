"""Desk-scale comparison of pure fitness against novelty-on-both-species.

Runs a batch (default: 10 runs x {Fit, NSBoth}, population 50, 150
generations), then the master tournament, exploration scores, SOM maps and
Mann-Whitney comparisons. Runs go to ``<out>/<key>/runs`` where ``key``
hashes the settings and the evolution sources; analysis CSVs go next to
them in a directory keyed by the analysis sources. A second call with
unchanged code only reads the cached CSVs.

    python scripts/desk_experiment.py --out .desk --threads 8
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import logging
import statistics
import sys
from pathlib import Path

from coevo import cli

SRC = Path(__file__).resolve().parents[1] / "src" / "coevo"
# argument and file-format handling; editing these does not change results
_PLUMBING = ("cli.py", "config.py", "__main__.py")


def source_key(files, **settings) -> str:
    h = hashlib.sha256(repr(sorted(settings.items())).encode())
    for p in files:
        h.update(p.relative_to(SRC).as_posix().encode())
        h.update(p.read_bytes())
    return h.hexdigest()[:16]


def evolution_sources():
    return sorted(p for p in SRC.glob("*.py") if p.name not in _PLUMBING)


def analysis_sources():
    return sorted(SRC.glob("analysis/*.py"))


def run(out_root, runs=10, population=50, generations=150, methods=("Fit", "NSBoth"), threads=1, jobs=1,
        base_seed=0) -> Path:
    """Execute (or reuse) the batch and its analysis; returns the analysis dir."""
    key = source_key(evolution_sources(), runs=runs, population=population, generations=generations,
                     methods=tuple(methods), base_seed=base_seed)
    root = Path(out_root) / key
    root.mkdir(parents=True, exist_ok=True)
    manifest = root / "manifest.ini"
    manifest.write_text(
        "[batch]\n"
        f"methods = {', '.join(methods)}\nruns = {runs}\nbase_seed = {base_seed}\nout = runs\n\n"
        f"[evolution]\npopulation_size = {population}\ngenerations = {generations}\n",
        encoding="utf-8")
    rc = cli.main(["batch", "--manifest", str(manifest), "--threads", str(threads), "--jobs", str(jobs)])
    if rc:
        raise RuntimeError(f"batch failed with exit code {rc}")
    analysis = root / f"analysis-{source_key(analysis_sources())}"
    if not (analysis / "stats.csv").exists():
        rc = cli.main(["analyze", "all", "--runs", str(root / "runs" / "*" / "run_*"), "--out", str(analysis),
                       "--threads", str(threads)])
        if rc:
            raise RuntimeError(f"analysis failed with exit code {rc}")
    return analysis


def summarize(analysis: Path) -> str:
    with open(analysis / "coverage.csv", newline="") as fh:
        cov = list(csv.DictReader(fh))
    best = {}
    with open(analysis / "master.csv", newline="") as fh:
        for r in csv.DictReader(fh):
            k = (r["method"], r["species"], r["run"])
            best[k] = max(best.get(k, 0.0), float(r["master_fitness"]))
    lines = [f"{'method':8} {'species':9} {'global':>7} {'elite':>7} {'best':>7}  (medians over runs)"]
    for method in sorted({r["method"] for r in cov}):
        for species in ("predator", "prey"):
            rows = [r for r in cov if r["method"] == method and r["species"] == species]
            fits = [v for (m, s, _), v in best.items() if m == method and s == species]
            lines.append(f"{method:8} {species:9} "
                         f"{statistics.median(float(r['global_coverage']) for r in rows):7.3f} "
                         f"{statistics.median(float(r['elite_coverage']) for r in rows):7.3f} "
                         f"{statistics.median(fits):7.3f}")
    lines.append("")
    lines.append((analysis / "stats.csv").read_text().strip())
    return "\n".join(lines)


def main(argv=None) -> int:
    p = argparse.ArgumentParser(description=__doc__.split("\n")[0])
    p.add_argument("--out", default=".desk")
    p.add_argument("--runs", type=int, default=10)
    p.add_argument("--population", type=int, default=50)
    p.add_argument("--generations", type=int, default=150)
    p.add_argument("--methods", default="Fit,NSBoth")
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--jobs", type=int, default=1, help="runs executed concurrently")
    p.add_argument("--base-seed", type=int, default=0)
    a = p.parse_args(argv)
    logging.basicConfig(level=logging.INFO, format="%(asctime)s %(message)s")
    analysis = run(a.out, a.runs, a.population, a.generations, tuple(a.methods.split(",")), a.threads,
                   a.jobs, a.base_seed)
    print(summarize(analysis))
    return 0


if __name__ == "__main__":
    sys.exit(main())
