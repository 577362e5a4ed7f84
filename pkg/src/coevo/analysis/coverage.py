"""Behavior-space discretization and exploration scores.

The unit hypercube is cut into ``levels**4`` equal regions. A run's
exploration is the normalized Shannon entropy of its visit counts over a
set of included regions: 1 for a uniform spread, 0 when everything falls in
one region.
"""
from __future__ import annotations

import math
from collections import Counter
from typing import Iterable, Mapping

import numpy as np

from ..errors import InvalidInputError, InvalidStateError
from ..neuro import PREDATOR, PREY

DEFAULT_THRESHOLDS = {PREDATOR: 0.8, PREY: 0.3}


def bin_behavior(d, levels: int = 5) -> tuple[int, ...]:
    d = np.asarray(d, dtype=np.float64)
    if d.shape != (4,) or not np.all((d >= 0.0) & (d <= 1.0)):
        raise InvalidInputError(f"descriptor must lie in [0, 1]^4, got {d!r}")
    return tuple(int(b) for b in np.minimum(np.floor(d * levels), levels - 1))


def visit_counts(descriptors: Iterable, levels: int = 5) -> Counter:
    return Counter(bin_behavior(d, levels) for d in descriptors)


def coverage(counts: Mapping[tuple, int], included_regions, measure: str = "entropy") -> float:
    """Uniformity of ``counts`` restricted to ``included_regions``.

    ``measure="visited"`` gives the fraction of included regions visited.
    A run with no visits inside the included set scores 0.
    """
    included = set(included_regions)
    if not included:
        raise InvalidStateError("no included regions")
    c = np.array([counts.get(r, 0) for r in included], dtype=np.float64)
    total = c.sum()
    if total == 0:
        return 0.0
    if measure == "visited":
        return float(np.count_nonzero(c) / len(included))
    if measure != "entropy":
        raise InvalidInputError(f"unknown coverage measure {measure!r}")
    if len(included) == 1:
        return 1.0
    p = c[c > 0] / total
    h = -math.fsum((p * np.log(p)).tolist())
    return float(min(max(h / math.log(len(included)), 0.0), 1.0))


def elite_regions(records: Iterable, predator_threshold: float = 0.8, prey_threshold: float = 0.3,
                  levels: int = 5) -> dict[str, set]:
    """Regions holding at least one record at or above its species threshold.

    Records need ``species``, ``master_fitness`` and ``master_descriptor``
    (either attributes or mapping keys; ``descriptor`` is accepted too).
    """
    thr = {PREDATOR: predator_threshold, PREY: prey_threshold}
    out = {PREDATOR: set(), PREY: set()}
    for r in records:
        species, fit, desc = _fields(r)
        if fit >= thr[species]:
            out[species].add(bin_behavior(desc, levels))
    return out


def _fields(r):
    if isinstance(r, Mapping):
        desc = r.get("master_descriptor", r.get("descriptor"))
        return r["species"], r["master_fitness"], desc
    return r.species, r.master_fitness, r.master_descriptor


def exploration_table(records: Iterable, levels: int = 5, predator_threshold: float = 0.8,
                      prey_threshold: float = 0.3, measure: str = "entropy") -> list[dict]:
    """Global and elite exploration per (run, species).

    Global exploration only counts regions visited by some run in the batch;
    elite exploration only regions that hold a high-master-fitness record.
    """
    records = list(records)
    elite = elite_regions(records, predator_threshold, prey_threshold, levels)
    groups: dict = {}
    for r in records:
        species, _, desc = _fields(r)
        run = r["run"] if isinstance(r, Mapping) else r.run
        method = r["method"] if isinstance(r, Mapping) else r.method
        groups.setdefault((run, method, species), []).append(bin_behavior(desc, levels))
    visited = {PREDATOR: set(), PREY: set()}
    for (_, _, species), bins in groups.items():
        visited[species].update(bins)
    rows = []
    for (run, method, species), bins in sorted(groups.items()):
        counts = Counter(bins)
        rows.append({
            "run": run,
            "method": method,
            "species": species,
            "global_coverage": coverage(counts, visited[species], measure),
            "elite_coverage": coverage(counts, elite[species], measure) if elite[species] else 0.0,
        })
    return rows
