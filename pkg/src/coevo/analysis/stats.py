"""Two-sided Mann-Whitney U test with midranks for ties.

Small samples (both sizes <= 8) get the exact permutation distribution of U
given the observed midranks; larger ones use the normal approximation with
tie and continuity corrections.
"""
from __future__ import annotations

import itertools
import math
from typing import NamedTuple

import numpy as np

EXACT_LIMIT = 8


class MannWhitneyResult(NamedTuple):
    U: float
    p: float


def midranks(values) -> np.ndarray:
    v = np.asarray(values, dtype=np.float64)
    order = np.argsort(v, kind="mergesort")
    ranks = np.empty(len(v))
    i = 0
    while i < len(v):
        j = i
        while j + 1 < len(v) and v[order[j + 1]] == v[order[i]]:
            j += 1
        ranks[order[i:j + 1]] = (i + j) / 2.0 + 1.0
        i = j + 1
    return ranks


def _u_from_ranks(rank_sum: float, n: int) -> float:
    return rank_sum - n * (n + 1) / 2.0


def exact_p(ranks: np.ndarray, n_a: int, u_obs: float) -> float:
    """Two-sided exact p: twice the smaller tail of U over all splits."""
    total = len(ranks)
    us = np.array([_u_from_ranks(ranks[list(c)].sum(), n_a) for c in itertools.combinations(range(total), n_a)])
    eps = 1e-9
    lower = np.mean(us <= u_obs + eps)
    upper = np.mean(us >= u_obs - eps)
    return float(min(1.0, 2.0 * min(lower, upper)))


def normal_p(ranks: np.ndarray, n_a: int, n_b: int, u_obs: float) -> float:
    n = n_a + n_b
    _, ties = np.unique(ranks, return_counts=True)
    tie_term = float(((ties ** 3) - ties).sum()) / (n * (n - 1)) if n > 1 else 0.0
    var = n_a * n_b / 12.0 * ((n + 1) - tie_term)
    if var <= 0:
        return 1.0
    z = (abs(u_obs - n_a * n_b / 2.0) - 0.5) / math.sqrt(var)
    if z <= 0:
        return 1.0
    return float(min(1.0, math.erfc(z / math.sqrt(2.0))))


def mann_whitney_u(a, b, method: str = "auto") -> MannWhitneyResult:
    """U statistic of ``a`` (number of (a, b) pairs with a > b, ties half)
    and the two-sided p-value."""
    a = np.asarray(a, dtype=np.float64).ravel()
    b = np.asarray(b, dtype=np.float64).ravel()
    if len(a) == 0 or len(b) == 0:
        raise ValueError("both samples must be non-empty")
    ranks = midranks(np.concatenate([a, b]))
    u = _u_from_ranks(ranks[: len(a)].sum(), len(a))
    if method == "auto":
        method = "exact" if max(len(a), len(b)) <= EXACT_LIMIT else "asymptotic"
    if method == "exact":
        p = exact_p(ranks, len(a), u)
    elif method == "asymptotic":
        p = normal_p(ranks, len(a), len(b), u)
    else:
        raise ValueError(f"unknown method {method!r}")
    return MannWhitneyResult(float(u), p)
