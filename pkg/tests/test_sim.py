import csv
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from coevo.errors import ConfigurationError, InvalidInputError
from coevo.neuro import PREDATOR, PREDATOR_NET, PREY, PREY_NET, Genome, random_genome
from coevo.sim import (
    TRACE_COLUMNS, AgentBodyConfig, AgentState, ArenaConfig, ConstantPolicy, NetworkPolicy, TrialTrace,
    characterize, check_capture, read_proximity, read_vision, run_pairings, run_trial, simulate, start_poses,
    step_agent,
)
import reference_sim

ARENA = ArenaConfig()
BODY = AgentBodyConfig()
STILL_PRED = ConstantPolicy([0.5, 0.5], 13)
STILL_PREY = ConstantPolicy([0.5, 0.5], 8)


def random_pairs(seed, n):
    rng = np.random.default_rng(seed)
    pg = rng.uniform(-1, 1, (n, 114)) * rng.uniform(0.5, 4, (n, 1))
    qg = rng.uniform(-1, 1, (n, 57)) * rng.uniform(0.5, 4, (n, 1))
    return pg, qg


# -- configs -----------------------------------------------------------------

def test_arena_validation():
    with pytest.raises(ConfigurationError):
        ArenaConfig(side_length=0)
    with pytest.raises(ConfigurationError):
        ArenaConfig(trial_time_limit=1.0, timestep=0.3)
    assert ArenaConfig().max_steps == 1000


def test_body_must_fit():
    with pytest.raises(ConfigurationError):
        simulate(STILL_PRED, STILL_PREY, arena=ArenaConfig(side_length=5.0))


# -- step_agent ----------------------------------------------------------------

def test_straight_line():
    s = step_agent(AgentState(10, 37.5, 0.0), 5, 5, BODY, ARENA)
    assert s == (pytest.approx(10.5, abs=1e-12), 37.5, 0.0)


def test_pure_rotation():
    s = step_agent(AgentState(10, 37.5, 0.0), 5, -5, BODY, ARENA)
    assert (s.x, s.y) == (10, 37.5)
    assert s.heading == pytest.approx((-(10 / 5.5) * 0.1) % (2 * math.pi), abs=1e-12)


def test_wall_clamp():
    s = step_agent(AgentState(2.75, 37.5, math.pi), 5, 5, BODY, ARENA)
    assert s.x == 2.75 and s.y == pytest.approx(37.5, abs=1e-12)


def test_wheel_input_clamped():
    assert step_agent(AgentState(10, 37.5, 0.0), 50, 50, BODY, ARENA).x == pytest.approx(10.5)


@given(st.floats(2.75, 72.25), st.floats(2.75, 72.25), st.floats(-10, 10), st.floats(-5, 5), st.floats(-5, 5))
def test_step_stays_in_arena(x, y, h, vl, vr):
    s = step_agent(AgentState(x, y, h), vl, vr, BODY, ARENA)
    assert 2.75 <= s.x <= 72.25 and 2.75 <= s.y <= 72.25
    assert 0 <= s.heading < 2 * math.pi


# -- sensors -----------------------------------------------------------------

def test_proximity_detects_opponent_within_range():
    me = AgentState(37.5, 37.5, 0.0)
    # sensor 0 origin is (40.25, 37.5); opponent center 4 cm further along
    assert read_proximity(me, AgentState(44.25, 37.5, 0.0), BODY, ARENA)[0] == 1


def test_proximity_ignores_opponent_beyond_range():
    me = AgentState(37.5, 37.5, 0.0)
    far = AgentState(40.25 + 6 + 2.75, 37.5, 0.0)
    assert read_proximity(me, far, BODY, ARENA)[0] == 0


def test_proximity_blank_at_center():
    assert read_proximity(AgentState(37.5, 37.5, 0.3), AgentState(60, 60, 0.0), BODY, ARENA) == (0,) * 8


def test_proximity_sees_walls():
    # hugging the left wall: sensors pointing left (index 4) and diagonals 3, 5 fire
    got = read_proximity(AgentState(2.75, 37.5, 0.0), AgentState(60, 60, 0.0), BODY, ARENA)
    assert got[4] == 1 and got[3] == 1 and got[5] == 1 and got[0] == 0


def test_proximity_matches_reference(rng):
    for _ in range(2000):
        x, y = rng.uniform(2.75, 72.25, 2)
        h = rng.uniform(0, 2 * math.pi)
        ox, oy = np.array([x, y]) + rng.normal(0, 6, 2)
        got = read_proximity(AgentState(x, y, h), AgentState(ox, oy, 0.0), BODY, ARENA)
        assert list(got) == reference_sim.proximity(x, y, h, ox, oy)


@pytest.mark.parametrize("bearing_deg, expected", [
    (0.0, (0, 0, 1, 0, 0)),
    (25.0, (0, 0, 0, 0, 0)),
    (-18.0, (1, 0, 0, 0, 0)),
    (18.0, (0, 0, 0, 0, 1)),
    (-5.0, (0, 1, 0, 0, 0)),
    (180.0, (0, 0, 0, 0, 0)),
])
def test_vision_sectors(bearing_deg, expected):
    h = 1.0
    pred = AgentState(37.5, 37.5, h)
    a = h + math.radians(bearing_deg)
    prey = AgentState(37.5 + 20 * math.cos(a), 37.5 + 20 * math.sin(a), 0.0)
    assert read_vision(pred, prey, BODY) == expected


def test_vision_matches_reference(rng):
    for _ in range(2000):
        px, py, qx, qy = rng.uniform(3, 72, 4)
        h = rng.uniform(0, 2 * math.pi)
        assert list(read_vision(AgentState(px, py, h), AgentState(qx, qy, 0.0), BODY)) == \
            reference_sim.vision(px, py, h, qx, qy)


@given(st.floats(3, 72), st.floats(3, 72), st.floats(0, 6.28), st.floats(3, 72), st.floats(3, 72))
def test_sensors_binary_and_vision_one_hot(px, py, h, qx, qy):
    v = read_vision(AgentState(px, py, h), AgentState(qx, qy, 0), BODY)
    p = read_proximity(AgentState(px, py, h), AgentState(qx, qy, 0), BODY, ARENA)
    assert set(v) <= {0, 1} and set(p) <= {0, 1}
    assert sum(v) <= 1


# -- capture -----------------------------------------------------------------

@pytest.mark.parametrize("gap, expected", [(5.5, True), (5.6, False), (0.0, True)])
def test_capture(gap, expected):
    assert check_capture(AgentState(20, 30, 0), AgentState(20 + gap, 30, 1), BODY) is expected


# -- trials ------------------------------------------------------------------

def test_still_agents_never_meet():
    out = run_trial(STILL_PRED, STILL_PREY)
    assert not out.captured and out.duration == pytest.approx(100.0)
    assert out.predator_descriptor[2] == 0.0 and out.prey_descriptor[2] == 0.0
    assert out.predator_descriptor[0] == 1.0 and out.prey_descriptor[0] == 1.0


def test_zero_genomes_idle():
    out = run_trial(Genome(np.zeros(114), PREDATOR), Genome(np.zeros(57), PREY))
    assert not out.captured and out.duration == pytest.approx(100.0)


def test_straight_chase_capture_time():
    pred0, prey0 = start_poses(ARENA)
    facing = AgentState(pred0.x, pred0.y, 0.0)
    out = run_trial(ConstantPolicy([1, 1], 13), STILL_PREY, start=(facing, prey0))
    gap = prey0.x - pred0.x
    assert out.captured
    assert out.duration == pytest.approx((gap - 5.5) / 5.0, abs=1e-9)


def test_start_poses():
    pred, prey = start_poses(ARENA)
    assert pred == (18.75, 37.5, math.pi) and prey == (56.25, 37.5, 0.0)


def test_run_trial_deterministic():
    pg, qg = random_pairs(1, 1)
    a = run_trial(Genome(pg[0], PREDATOR), Genome(qg[0], PREY), record_trace=True)
    b = run_trial(Genome(pg[0], PREDATOR), Genome(qg[0], PREY), record_trace=True)
    assert a.captured == b.captured and a.duration == b.duration
    assert np.array_equal(a.predator_descriptor, b.predator_descriptor)
    assert np.array_equal(a.prey_descriptor, b.prey_descriptor)
    assert np.array_equal(a.trace.rows, b.trace.rows)


def test_arity_mismatch():
    with pytest.raises(ConfigurationError):
        run_trial(ConstantPolicy([0.5, 0.5], 8), STILL_PREY)
    with pytest.raises(ConfigurationError):
        run_trial(Genome(np.zeros(57), PREY), STILL_PREY)


def test_engine_matches_reference_simulator():
    pg, qg = random_pairs(2, 60)
    res = simulate(NetworkPolicy(pg, PREDATOR), NetworkPolicy(qg, PREY))
    assert res.captured.any() and not res.captured.all()
    for i in range(len(pg)):
        cap, steps, pd, qd = reference_sim.trial(list(pg[i]), list(qg[i]))
        assert res.captured[i] == cap and res.steps[i] == steps
        np.testing.assert_allclose(res.predator_descriptor[i], pd, atol=1e-9)
        np.testing.assert_allclose(res.prey_descriptor[i], qd, atol=1e-9)


def test_batch_composition_does_not_matter():
    pg, qg = random_pairs(3, 40)
    whole = simulate(NetworkPolicy(pg, PREDATOR), NetworkPolicy(qg, PREY))
    for i in (0, 17, 39):
        single = run_trial(Genome(pg[i], PREDATOR), Genome(qg[i], PREY))
        assert single.captured == whole.captured[i]
        assert np.array_equal(single.predator_descriptor, whole.predator_descriptor[i])
        assert np.array_equal(single.prey_descriptor, whole.prey_descriptor[i])
    preds = [Genome(g, PREDATOR) for g in pg]
    preys = [Genome(g, PREY) for g in qg]
    idx = np.arange(40)
    threaded = run_pairings(preds, preys, idx, idx, threads=7)
    assert np.array_equal(threaded.captured, whole.captured)
    assert np.array_equal(threaded.predator_descriptor, whole.predator_descriptor)
    assert np.array_equal(threaded.prey_descriptor, whole.prey_descriptor)


def test_indexed_pairings():
    pg, qg = random_pairs(4, 3)
    preds = [Genome(g, PREDATOR) for g in pg]
    preys = [Genome(g, PREY) for g in qg]
    res = run_pairings(preds, preys, [2, 0, 2], [1, 1, 0])
    direct = run_trial(preds[2], preys[1])
    assert res.captured[0] == direct.captured
    assert np.array_equal(res.prey_descriptor[0], direct.prey_descriptor)


def _check_trace_invariants(res, i):
    steps = res.steps[i]
    rows = res.trace[i, :steps]
    assert not np.isnan(rows).any() and np.isnan(res.trace[i, steps:]).all()
    for cols in ((0, 1), (3, 4)):
        xy = rows[:, cols]
        assert xy.min() >= 2.75 and xy.max() <= 75 - 2.75
    d = np.hypot(rows[:, 3] - rows[:, 0], rows[:, 4] - rows[:, 1])
    if res.captured[i]:
        assert d[-1] <= 5.5 and np.all(d[:-1] > 5.5)
    else:
        assert steps == 1000 and np.all(d > 5.5)


def test_trace_invariants_and_characterize_agree():
    pg, qg = random_pairs(5, 80)
    res = simulate(NetworkPolicy(pg, PREDATOR), NetworkPolicy(qg, PREY), record_trace=True)
    for i in range(len(pg)):
        _check_trace_invariants(res, i)
        out = res.outcome(i, ARENA)
        np.testing.assert_allclose(characterize(out.trace, PREDATOR, ARENA, BODY), out.predator_descriptor,
                                   atol=1e-12)
        np.testing.assert_allclose(characterize(out.trace, PREY, ARENA, BODY), out.prey_descriptor, atol=1e-12)


@settings(max_examples=25)
@given(st.integers(0, 2**32 - 1), st.floats(0.1, 10.0))
def test_descriptors_in_unit_cube(seed, scale):
    rng = np.random.default_rng(seed)
    pg = np.clip(rng.normal(0, scale, (4, 114)), -10, 10)
    qg = np.clip(rng.normal(0, scale, (4, 57)), -10, 10)
    res = simulate(NetworkPolicy(pg, PREDATOR), NetworkPolicy(qg, PREY), record_trace=True)
    for d in (res.predator_descriptor, res.prey_descriptor):
        assert np.all((d >= 0) & (d <= 1))
    for i in range(4):
        _check_trace_invariants(res, i)


def test_characterize_fixtures():
    start = np.array([37.5, 37.5, 0.0, 60.0, 37.5, 0.0])
    rows = np.tile(start, (1000, 1))
    d = characterize(TrialTrace(start, rows), PREDATOR, ARENA, BODY)
    assert d[0] == 1.0  # survived the whole trial
    assert d[2] == 0.0  # never moved
    assert d[3] == 1.0  # parked at the arena center
    assert d[1] == pytest.approx(22.5 / (75 * math.sqrt(2)))
    with pytest.raises(InvalidInputError):
        characterize(TrialTrace(start, np.zeros((0, 6))), PREY, ARENA, BODY)


def test_trace_csv(tmp_path):
    pg, qg = random_pairs(6, 1)
    out = run_trial(Genome(pg[0], PREDATOR), Genome(qg[0], PREY), record_trace=True)
    path = tmp_path / "trace.csv"
    out.trace.write_csv(path)
    with open(path) as fh:
        rows = list(csv.reader(fh))
    assert tuple(rows[0]) == TRACE_COLUMNS
    assert len(rows) - 1 == round(out.duration / 0.1)
    assert float(rows[-1][1]) == out.trace.rows[-1, 0]
