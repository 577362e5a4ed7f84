import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from coevo.errors import ConfigurationError, InvalidInputError
from coevo.novelty import (
    Archive, behavior_distance, maybe_archive, minimal_criterion, novelty_score, parse_method, pmcns_scores,
    population_novelty, select_scores,
)

unit_vec = arrays(np.float64, 4, elements=st.floats(0, 1))


def brute_novelty(subject, pool, k):
    """Sort every distance, average the first k."""
    d = sorted(math.sqrt(sum((s - p) ** 2 for s, p in zip(subject, q))) for q in pool)
    head = d[:k]
    return math.fsum(head) / len(head) if head else 0.0


@pytest.mark.parametrize("a, b, expected", [
    ((0, 0, 0, 0), (0, 0, 0, 0), 0.0),
    ((0, 0, 0, 0), (1, 0, 0, 0), 1.0),
    ((0, 0, 0, 0), (1, 1, 1, 1), 2.0),
])
def test_distance_examples(a, b, expected):
    assert behavior_distance(a, b) == expected


@given(unit_vec, unit_vec, unit_vec)
def test_distance_metric_axioms(a, b, c):
    assert behavior_distance(a, b) == behavior_distance(b, a)
    assert behavior_distance(a, a) == 0
    assert behavior_distance(a, c) <= behavior_distance(a, b) + behavior_distance(b, c) + 1e-12


def test_novelty_examples():
    pool = [(1, 0, 0, 0), (0, 1, 0, 0), (0, 0, 1, 0)]
    assert novelty_score((0, 0, 0, 0), pool, None, 2) == 1.0
    v = (0.2, 0.3, 0.4, 0.5)
    assert novelty_score(v, [v] * 15, None, 15) == 0.0
    assert novelty_score((0, 0, 0, 0), [(0.5, 0, 0, 0)], Archive(), 15) == 0.5
    assert novelty_score((0, 0, 0, 0), np.zeros((0, 4)), Archive(), 15) == 0.0


def test_novelty_uses_archive():
    arch = Archive()
    arch.add((0.1, 0, 0, 0), np.random.default_rng(0))
    assert novelty_score((0, 0, 0, 0), [(1, 0, 0, 0)], arch, 1) == pytest.approx(0.1)


@pytest.mark.parametrize("k", [1, 5, 15])
def test_novelty_matches_brute_force(k):
    rng = np.random.default_rng(k)
    for _ in range(100):
        n_peer, n_arch = rng.integers(0, 250, 2)
        peers = rng.random((n_peer, 4))
        arch = rng.random((n_arch, 4))
        s = rng.random(4)
        pool = [tuple(r) for r in np.concatenate([peers, arch])]
        assert novelty_score(s, peers, arch, k) == brute_novelty(tuple(s), pool, k)


def test_population_novelty_matches_per_subject():
    rng = np.random.default_rng(9)
    desc = rng.random((30, 4))
    arch = rng.random((40, 4))
    got = population_novelty(desc, arch, 15)
    for i in range(30):
        peers = np.delete(desc, i, axis=0)
        assert got[i] == novelty_score(desc[i], peers, arch, 15)


def test_archive_bounded_with_random_eviction():
    rng = np.random.default_rng(1)
    arch = Archive(capacity=1000)
    for i in range(1000):
        arch.add((i / 1000, 0, 0, 0), rng)
    assert len(arch) == 1000
    new = (0.5, 0.5, 0.5, 0.5)
    maybe_archive(arch, new, 1.0, rng)
    assert len(arch) == 1000
    assert any(np.array_equal(e, new) for e in arch.entries)


def test_archive_probability_zero_and_one():
    rng = np.random.default_rng(2)
    arch = Archive()
    maybe_archive(arch, (0, 0, 0, 0), 0.0, rng)
    assert len(arch) == 0
    maybe_archive(arch, (0, 0, 0, 0), 1.0, rng)
    assert len(arch) == 1


def test_archive_insertion_rate():
    rng = np.random.default_rng(3)
    arch = Archive(capacity=100_000)
    n, p = 10_000, 0.03
    for _ in range(n):
        maybe_archive(arch, (0, 0, 0, 0), p, rng)
    sigma = math.sqrt(n * p * (1 - p))
    assert abs(len(arch) - n * p) <= 5 * sigma


def test_archive_never_exceeds_small_capacity():
    rng = np.random.default_rng(4)
    arch = Archive(capacity=5)
    for _ in range(100):
        maybe_archive(arch, rng.random(4), 0.7, rng)
        assert len(arch) <= 5


def test_pmcns_examples():
    # fitness 0.4 below a 0.5 criterion, 0.6 above it
    f = [0.4, 0.6]
    n = [0.9, 0.8]
    assert minimal_criterion(f, 0.5) == pytest.approx(0.5)
    assert list(pmcns_scores(f, n, 0.5)) == [0.0, 0.8]
    same = pmcns_scores([0.3] * 5, [0.1, 0.2, 0.3, 0.4, 0.5], 0.5)
    assert list(same) == [0.1, 0.2, 0.3, 0.4, 0.5]


def test_pmcns_boundary_is_inclusive():
    f = [0.1, 0.2, 0.3, 0.4, 0.5]
    # median is exactly 0.3, which passes
    assert list(pmcns_scores(f, [1] * 5, 0.5)) == [0, 0, 1, 1, 1]


def test_pmcns_errors():
    with pytest.raises(InvalidInputError):
        pmcns_scores([0.1, 0.2], [0.1], 0.5)


@given(st.lists(st.floats(0, 1), min_size=1, max_size=200), st.floats(0.05, 0.95))
def test_pmcns_passing_fraction(fits, P):
    nov = np.linspace(0.1, 1.0, len(fits))
    s = pmcns_scores(fits, nov, P)
    frac = np.count_nonzero(s) / len(fits)
    assert (1 - P) - 1 / len(fits) <= frac <= 1


def test_select_scores_dispatch():
    f = np.array([0.1, 0.9, 0.5])
    n = np.array([0.7, 0.2, 0.4])
    assert np.array_equal(select_scores("Fit", "predator", f, n), f)
    assert np.array_equal(select_scores("Fit", "prey", f, n), f)
    assert np.array_equal(select_scores("NSBoth", "prey", f, n), n)
    assert np.array_equal(select_scores("NSBoth", "predator", f, n), n)
    assert np.array_equal(select_scores("NSPred", "predator", f, n), n)
    assert np.array_equal(select_scores("NSPred", "prey", f, n), f)
    assert np.array_equal(select_scores("NSPrey", "prey", f, n), n)
    assert np.array_equal(select_scores("NSPrey", "predator", f, n), f)
    assert np.array_equal(select_scores("PMCNS", "prey", f, n), pmcns_scores(f, n, 0.5))
    with pytest.raises(ConfigurationError):
        select_scores("Elitist", "prey", f, n)


@given(st.lists(st.floats(0, 1), min_size=1, max_size=50))
def test_fit_scores_preserve_argmax(fits):
    s = select_scores("Fit", "predator", fits, np.zeros(len(fits)))
    assert np.array_equal(s, fits)
    assert np.argmax(s) == np.argmax(fits)


def test_method_aliases():
    assert parse_method("NS-Both") == "NSBoth"
    assert parse_method("pmcns") == "PMCNS"
    with pytest.raises(ConfigurationError):
        parse_method("NS-All")
