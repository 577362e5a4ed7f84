"""Two-step master tournament over recorded per-generation champions.

Step one ranks each run's champions against the opposing champions of the
same run and keeps the best few. Step two plays every champion against the
whole pool of step-one elites, across runs and methods, giving it a master
fitness and a master behavior descriptor.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from ..errors import InvalidInputError, InvalidStateError
from ..neuro import PREDATOR, PREY, SPECIES, Genome
from ..sim import AgentBodyConfig, ArenaConfig, run_pairings


@dataclass(frozen=True)
class ChampionRecord:
    run: str
    method: str
    species: str
    generation: int
    genome: Genome
    master_fitness: float | None = None
    master_descriptor: tuple | None = None


def load_champions(path, run: str, method: str) -> list[ChampionRecord]:
    out = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                d = json.loads(line)
                out.append(ChampionRecord(run, method, d["species"], int(d["generation"]),
                                          Genome.from_dict(d["genome"])))
    return out


def _round_robin(preds: Sequence[Genome], preys: Sequence[Genome], trials: int, arena, body, threads):
    """Capture matrix (n_pred, n_prey, trials) plus descriptor tensors."""
    ip, iq, _ = np.meshgrid(np.arange(len(preds)), np.arange(len(preys)), np.arange(trials), indexing="ij")
    out = run_pairings(preds, preys, ip.ravel(), iq.ravel(), arena, body, threads=threads)
    shape = (len(preds), len(preys), trials)
    return (out.captured.reshape(shape), out.predator_descriptor.reshape(*shape, 4),
            out.prey_descriptor.reshape(*shape, 4))


def identify_run_elites(champions: Sequence[ChampionRecord], trials_per_pairing: int = 1, top_n: int = 1,
                        arena: ArenaConfig = ArenaConfig(), body: AgentBodyConfig = AgentBodyConfig(),
                        threads: int = 1) -> dict[str, list[ChampionRecord]]:
    """Best ``top_n`` champions per species of a single run, ranked by their
    mean score against every opposing champion of that run."""
    by_species = {s: [c for c in champions if c.species == s] for s in SPECIES}
    if not by_species[PREDATOR] or not by_species[PREY]:
        raise InvalidInputError("both species are needed to rank a run")
    if len({c.run for c in champions}) > 1:
        raise InvalidInputError("champions must come from a single run")
    preds = [c.genome for c in by_species[PREDATOR]]
    preys = [c.genome for c in by_species[PREY]]
    caught, _, _ = _round_robin(preds, preys, trials_per_pairing, arena, body, threads)
    scores = {
        PREDATOR: caught.mean(axis=(1, 2)),
        PREY: 1.0 - caught.mean(axis=(0, 2)),
    }
    elites = {}
    for s in SPECIES:
        order = np.argsort(-scores[s], kind="stable")
        elites[s] = [by_species[s][i] for i in order[:top_n]]
    return elites


def master_evaluate(champions: Sequence[ChampionRecord], elite_pool: Mapping[str, Sequence[Genome]],
                    trials_per_pairing: int = 1, arena: ArenaConfig = ArenaConfig(),
                    body: AgentBodyConfig = AgentBodyConfig(), threads: int = 1) -> list[ChampionRecord]:
    """Score each champion against every elite of the opposing species."""
    out = list(champions)
    for s in SPECIES:
        idx = [i for i, c in enumerate(champions) if c.species == s]
        if not idx:
            continue
        opp = PREY if s == PREDATOR else PREDATOR
        pool = list(elite_pool.get(opp, ()))
        if not pool:
            raise InvalidStateError(f"no {opp} elites to play against")
        mine = [champions[i].genome for i in idx]
        if s == PREDATOR:
            caught, pdesc, _ = _round_robin(mine, pool, trials_per_pairing, arena, body, threads)
            wins = caught.reshape(len(mine), -1).astype(float)
            desc = pdesc.reshape(len(mine), -1, 4)
        else:
            caught, _, qdesc = _round_robin(pool, mine, trials_per_pairing, arena, body, threads)
            wins = (~caught).transpose(1, 0, 2).reshape(len(mine), -1).astype(float)
            desc = qdesc.transpose(1, 0, 2, 3).reshape(len(mine), -1, 4)
        fit = wins.mean(axis=1)
        mdesc = desc.mean(axis=1)
        for k, i in enumerate(idx):
            out[i] = replace(champions[i], master_fitness=float(fit[k]),
                             master_descriptor=tuple(float(v) for v in mdesc[k]))
    return out


def master_tournament(runs: Mapping[str, Sequence[ChampionRecord]], top_n: int = 1, trials_per_pairing: int = 1,
                      arena: ArenaConfig = ArenaConfig(), body: AgentBodyConfig = AgentBodyConfig(),
                      threads: int = 1) -> tuple[list[ChampionRecord], dict[str, list[ChampionRecord]]]:
    """Run both steps over every run; returns (scored champions, elite pool)."""
    pool = {s: [] for s in SPECIES}
    for run_id in sorted(runs):
        elites = identify_run_elites(runs[run_id], trials_per_pairing, top_n, arena, body, threads)
        for s in SPECIES:
            pool[s].extend(elites[s])
    genomes = {s: [c.genome for c in pool[s]] for s in SPECIES}
    scored = []
    for run_id in sorted(runs):
        scored.extend(master_evaluate(runs[run_id], genomes, trials_per_pairing, arena, body, threads))
    return scored, pool


MASTER_COLUMNS = ("run", "method", "species", "generation", "master_fitness", "b1", "b2", "b3", "b4")


def write_master_csv(records: Sequence[ChampionRecord], path) -> None:
    import csv

    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(MASTER_COLUMNS)
        for r in records:
            w.writerow([r.run, r.method, r.species, r.generation, repr(r.master_fitness),
                        *(repr(v) for v in r.master_descriptor)])


def read_master_csv(path) -> list[dict]:
    """Rows of a master.csv with numeric fields converted."""
    import csv

    rows = []
    with open(Path(path), newline="", encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            rows.append({
                "run": row["run"],
                "method": row["method"],
                "species": row["species"],
                "generation": int(row["generation"]),
                "master_fitness": float(row["master_fitness"]),
                "descriptor": tuple(float(row[f"b{i}"]) for i in range(1, 5)),
            })
    return rows
