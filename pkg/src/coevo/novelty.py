"""Behavioral novelty, the stochastic novelty archive, and selection scores.

Novelty of an individual is the mean distance to its k nearest neighbours
among the other members of its generation plus the species archive.
Neighbour means use ``math.fsum`` so the result is the correctly rounded
mean regardless of the order neighbours were found in.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError, InvalidInputError
from .neuro import PREDATOR, PREY

FIT, NS_BOTH, NS_PRED, NS_PREY, PMCNS = "Fit", "NSBoth", "NSPred", "NSPrey", "PMCNS"
METHODS = (FIT, NS_BOTH, NS_PRED, NS_PREY, PMCNS)
_METHOD_ALIASES = {m.lower(): m for m in METHODS}


def parse_method(name: str) -> str:
    """Canonical method id; accepts e.g. ``NS-Both`` or ``nsboth``."""
    key = str(name).replace("-", "").replace("_", "").strip().lower()
    try:
        return _METHOD_ALIASES[key]
    except KeyError:
        raise ConfigurationError(f"unknown method {name!r}; expected one of {', '.join(METHODS)}") from None


@dataclass(frozen=True)
class NoveltyConfig:
    k: int = 15
    add_probability: float = 0.03
    capacity: int = 1000

    def __post_init__(self):
        if self.k < 1 or self.capacity < 1:
            raise ConfigurationError("k and capacity must be >= 1")
        if not 0.0 <= self.add_probability <= 1.0:
            raise ConfigurationError("add_probability must lie in [0, 1]")


def _pairwise(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    diff = a[:, None, :] - b[None, :, :]
    sq = diff[..., 0] * diff[..., 0]
    for j in range(1, diff.shape[-1]):
        sq = sq + diff[..., j] * diff[..., j]
    return np.sqrt(sq)


def behavior_distance(a, b) -> float:
    a = np.asarray(a, dtype=np.float64).reshape(1, -1)
    b = np.asarray(b, dtype=np.float64).reshape(1, -1)
    return float(_pairwise(a, b)[0, 0])


def _knn_mean(dists: np.ndarray, k: int) -> float:
    if dists.size == 0:
        return 0.0
    if dists.size > k:
        dists = np.partition(dists, k - 1)[:k]
    return math.fsum(dists.tolist()) / dists.size


def novelty_score(subject, generation_peers, archive: "Archive | np.ndarray | None", k: int) -> float:
    """Novelty of one descriptor; ``generation_peers`` must exclude the subject."""
    if k < 1:
        raise InvalidInputError("k must be >= 1")
    pool = [np.asarray(generation_peers, dtype=np.float64).reshape(-1, 4)]
    if archive is not None:
        entries = archive.entries if isinstance(archive, Archive) else archive
        pool.append(np.asarray(entries, dtype=np.float64).reshape(-1, 4))
    pool = np.concatenate(pool)
    subject = np.asarray(subject, dtype=np.float64).reshape(1, 4)
    return _knn_mean(_pairwise(subject, pool)[0], k)


def population_novelty(descriptors: np.ndarray, archive: "Archive | np.ndarray | None", k: int) -> np.ndarray:
    """Novelty of every member of a generation against its peers and the archive."""
    desc = np.asarray(descriptors, dtype=np.float64).reshape(-1, 4)
    n = len(desc)
    entries = np.zeros((0, 4))
    if archive is not None:
        entries = archive.entries if isinstance(archive, Archive) else np.asarray(archive, dtype=np.float64)
    d_peer = _pairwise(desc, desc)
    d_arch = _pairwise(desc, entries.reshape(-1, 4))
    out = np.empty(n)
    keep = ~np.eye(n, dtype=bool)
    for i in range(n):
        out[i] = _knn_mean(np.concatenate([d_peer[i][keep[i]], d_arch[i]]), k)
    return out


@dataclass
class Archive:
    """Bounded store of past descriptors with random eviction once full."""

    capacity: int = 1000
    _rows: list = field(default_factory=list, repr=False)

    def __post_init__(self):
        if self.capacity < 1:
            raise ConfigurationError("archive capacity must be >= 1")

    def __len__(self):
        return len(self._rows)

    @property
    def entries(self) -> np.ndarray:
        if not self._rows:
            return np.zeros((0, 4))
        return np.array(self._rows, dtype=np.float64)

    def add(self, descriptor, rng: np.random.Generator) -> None:
        if len(self._rows) >= self.capacity:
            del self._rows[int(rng.integers(len(self._rows)))]
        self._rows.append(tuple(float(v) for v in descriptor))

    def copy(self) -> "Archive":
        return Archive(self.capacity, list(self._rows))


def maybe_archive(archive: Archive, descriptor, p: float, rng: np.random.Generator) -> Archive:
    """Insert ``descriptor`` with probability ``p`` (in place; returns the archive)."""
    if rng.random() < p:
        archive.add(descriptor, rng)
    return archive


def pmcns_scores(fitnesses, novelties, P: float) -> np.ndarray:
    """Novelty for individuals at or above the P-th fitness percentile, else 0."""
    f = np.asarray(fitnesses, dtype=np.float64)
    nov = np.asarray(novelties, dtype=np.float64)
    if f.shape != nov.shape:
        raise InvalidInputError("fitnesses and novelties must have the same length")
    if not 0.0 < P < 1.0:
        raise InvalidInputError("percentile P must lie in (0, 1)")
    if f.size == 0:
        return f.copy()
    mc = minimal_criterion(f, P)
    return np.where(f >= mc, nov, 0.0)


def minimal_criterion(fitnesses, P: float) -> float:
    return float(np.percentile(np.asarray(fitnesses, dtype=np.float64), 100.0 * P, method="linear"))


def select_scores(method: str, species: str, fitnesses, novelties, P: float = 0.5) -> np.ndarray:
    method = parse_method(method)
    if species not in (PREDATOR, PREY):
        raise ConfigurationError(f"unknown species {species!r}")
    f = np.asarray(fitnesses, dtype=np.float64)
    nov = np.asarray(novelties, dtype=np.float64)
    if f.shape != nov.shape:
        raise InvalidInputError("fitnesses and novelties must be aligned")
    if method == FIT:
        return f.copy()
    if method == NS_BOTH:
        return nov.copy()
    if method == NS_PRED:
        return nov.copy() if species == PREDATOR else f.copy()
    if method == NS_PREY:
        return nov.copy() if species == PREY else f.copy()
    return pmcns_scores(f, nov, P)
