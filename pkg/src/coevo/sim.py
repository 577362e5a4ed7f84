"""Predator-prey pursuit in a closed square arena.

Two differential-drive robots with binary sensors. One trial runs until the
predator touches the prey or the time limit elapses. Trials are compiled
with numba and run one after another inside a kernel that releases the GIL;
every trial is computed on its own, so its result does not depend on the
batch, chunking or thread it ran in.
"""
from __future__ import annotations

import csv
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numba
import numpy as np

from .errors import ConfigurationError, InvalidInputError
from .neuro import NETWORKS, PREDATOR, PREY, Genome, split_weights

TWO_PI = 2.0 * math.pi
DESCRIPTOR_FIELDS = ("sim_length", "mean_opponent_distance", "mean_speed", "mean_wall_distance")
TRACE_COLUMNS = ("step", "pred_x", "pred_y", "pred_heading", "prey_x", "prey_y", "prey_heading")

_jit = numba.njit(cache=True, nogil=True)


@dataclass(frozen=True)
class ArenaConfig:
    side_length: float = 75.0
    trial_time_limit: float = 100.0
    timestep: float = 0.1

    def __post_init__(self):
        if self.side_length <= 0 or self.trial_time_limit <= 0 or self.timestep <= 0:
            raise ConfigurationError("arena dimensions and times must be positive")
        ratio = self.trial_time_limit / self.timestep
        if abs(ratio - round(ratio)) > 1e-9:
            raise ConfigurationError("timestep must divide trial_time_limit evenly")

    @property
    def max_steps(self) -> int:
        return int(round(self.trial_time_limit / self.timestep))


@dataclass(frozen=True)
class AgentBodyConfig:
    body_radius: float = 2.75
    max_wheel_speed: float = 5.0
    proximity_count: int = 8
    proximity_range: float = 5.0
    vision_count: int = 5
    vision_total_angle: float = 40.0  # degrees

    def __post_init__(self):
        if self.body_radius <= 0 or self.max_wheel_speed <= 0 or self.proximity_range <= 0:
            raise ConfigurationError("body radius, wheel speed and sensor range must be positive")
        if self.proximity_count != 8 or self.vision_count != 5:
            raise ConfigurationError("sensor counts are fixed at 8 proximity / 5 vision")
        if not 0 < self.vision_total_angle < 360:
            raise ConfigurationError("vision_total_angle must lie in (0, 360)")

    @property
    def axle(self) -> float:
        return 2.0 * self.body_radius


def check_bodies(arena: ArenaConfig, body: AgentBodyConfig) -> None:
    if 2 * body.body_radius >= arena.side_length:
        raise ConfigurationError("robot body does not fit in the arena")


class AgentState(NamedTuple):
    x: float
    y: float
    heading: float


@dataclass(frozen=True)
class TrialTrace:
    """Start poses plus one row of poses after every simulated step.

    Row layout: pred_x, pred_y, pred_heading, prey_x, prey_y, prey_heading.
    """

    start: np.ndarray
    rows: np.ndarray

    def write_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(TRACE_COLUMNS)
            for i, row in enumerate(self.rows, start=1):
                w.writerow([i, *(repr(float(v)) for v in row)])


@dataclass(frozen=True)
class TrialOutcome:
    captured: bool
    duration: float
    predator_descriptor: np.ndarray
    prey_descriptor: np.ndarray
    trace: TrialTrace | None = None


# ---------------------------------------------------------------------------
# compiled kernels

_PROX_COS = np.cos(np.arange(8) * (TWO_PI / 8))
_PROX_SIN = np.sin(np.arange(8) * (TWO_PI / 8))
_OUT_LO = np.nextafter(0.0, 1.0)
_OUT_HI = np.nextafter(1.0, 0.0)


@_jit
def _move(x, y, h, ch, sh, vl, vr, axle, radius, side, dt):
    v = 0.5 * (vl + vr)
    omega = (vr - vl) / axle
    nx = min(max(x + v * ch * dt, radius), side - radius)
    ny = min(max(y + v * sh * dt, radius), side - radius)
    nh = (h + omega * dt) % TWO_PI
    if nh >= TWO_PI:
        nh = 0.0
    return nx, ny, nh


@_jit
def _proximity(x, y, ch, sh, ox, oy, radius, reach, side, pcos, psin, out, offset):
    for i in range(8):
        dx = ch * pcos[i] - sh * psin[i]
        dy = sh * pcos[i] + ch * psin[i]
        sx = x + radius * dx
        sy = y + radius * dy
        ex = sx + reach * dx
        ey = sy + reach * dy
        # the sensor origin lies inside the convex arena, so the segment meets
        # a wall iff its far end is on or beyond the boundary
        hit = ex <= 0.0 or ex >= side or ey <= 0.0 or ey >= side
        if not hit:
            mx = sx - ox
            my = sy - oy
            t = min(max(-(mx * dx + my * dy), 0.0), reach)
            px = mx + t * dx
            py = my + t * dy
            hit = px * px + py * py <= radius * radius
        out[offset + i] = 1.0 if hit else 0.0


@_jit
def _vision(x, y, h, tx, ty, half, width, count, out, offset):
    bearing = math.atan2(ty - y, tx - x) - h
    bearing = (bearing + math.pi) % TWO_PI - math.pi
    sector = math.floor((bearing + half) / width)
    for j in range(count):
        out[offset + j] = 1.0 if sector == j else 0.0


@_jit
def _forward(w1, w2, inp, hidden, out, lo, hi):
    n_hidden, n_in1 = w1.shape
    n_in = n_in1 - 1
    for j in range(n_hidden):
        acc = 0.0
        for i in range(n_in):
            acc += w1[j, i] * inp[i]
        hidden[j] = math.tanh(acc + w1[j, n_in])
    for k in range(w2.shape[0]):
        acc = 0.0
        for j in range(n_hidden):
            acc += w2[k, j] * hidden[j]
        o = 1.0 / (1.0 + math.exp(-(acc + w2[k, n_hidden])))
        out[k] = min(max(o, lo), hi)


@_jit
def _wall_distance(x, y, side):
    return min(min(x, side - x), min(y, side - y))


@_jit
def _run_trials(pred_w1, pred_w2, pred_idx, pred_const, prey_w1, prey_w2, prey_idx, prey_const,
                start, radius, vmax, reach, side, dt, max_steps, half, width, pcos, psin,
                captured, steps_out, sums, trace, record):
    """sums columns: opponent distance, predator displacement, prey
    displacement, predator wall distance, prey wall distance."""
    axle = 2.0 * radius
    capture_dist = 2.0 * radius
    lo = _OUT_LO
    hi = _OUT_HI
    pred_in = np.zeros(13)
    prey_in = np.zeros(8)
    pred_h = np.zeros(pred_w1.shape[1])
    prey_h = np.zeros(prey_w1.shape[1])
    po = np.zeros(2)
    qo = np.zeros(2)
    use_pred_const = pred_const[0] == pred_const[0]  # NaN marks "use the network"
    use_prey_const = prey_const[0] == prey_const[0]
    for b in range(captured.shape[0]):
        px, py, ph = start[0], start[1], start[2]
        qx, qy, qh = start[3], start[4], start[5]
        opp = 0.0
        pdisp = 0.0
        qdisp = 0.0
        pwall = 0.0
        qwall = 0.0
        w1p = pred_w1[pred_idx[b]]
        w2p = pred_w2[pred_idx[b]]
        w1q = prey_w1[prey_idx[b]]
        w2q = prey_w2[prey_idx[b]]
        hit = False
        step = 0
        for step in range(1, max_steps + 1):
            pc = math.cos(ph)
            ps = math.sin(ph)
            qc = math.cos(qh)
            qs = math.sin(qh)
            _proximity(px, py, pc, ps, qx, qy, radius, reach, side, pcos, psin, pred_in, 0)
            _vision(px, py, ph, qx, qy, half, width, 5, pred_in, 8)
            _proximity(qx, qy, qc, qs, px, py, radius, reach, side, pcos, psin, prey_in, 0)
            if use_pred_const:
                po[0] = pred_const[0]
                po[1] = pred_const[1]
            else:
                _forward(w1p, w2p, pred_in, pred_h, po, lo, hi)
            if use_prey_const:
                qo[0] = prey_const[0]
                qo[1] = prey_const[1]
            else:
                _forward(w1q, w2q, prey_in, prey_h, qo, lo, hi)
            npx, npy, ph = _move(px, py, ph, pc, ps, (2.0 * po[0] - 1.0) * vmax, (2.0 * po[1] - 1.0) * vmax,
                                 axle, radius, side, dt)
            nqx, nqy, qh = _move(qx, qy, qh, qc, qs, (2.0 * qo[0] - 1.0) * vmax, (2.0 * qo[1] - 1.0) * vmax,
                                 axle, radius, side, dt)
            pdisp += math.hypot(npx - px, npy - py)
            qdisp += math.hypot(nqx - qx, nqy - qy)
            px, py, qx, qy = npx, npy, nqx, nqy
            dist = math.hypot(qx - px, qy - py)
            opp += dist
            pwall += _wall_distance(px, py, side)
            qwall += _wall_distance(qx, qy, side)
            if record:
                trace[b, step - 1, 0] = px
                trace[b, step - 1, 1] = py
                trace[b, step - 1, 2] = ph
                trace[b, step - 1, 3] = qx
                trace[b, step - 1, 4] = qy
                trace[b, step - 1, 5] = qh
            if dist <= capture_dist:
                hit = True
                break
        captured[b] = hit
        steps_out[b] = step
        sums[b, 0] = opp
        sums[b, 1] = pdisp
        sums[b, 2] = qdisp
        sums[b, 3] = pwall
        sums[b, 4] = qwall


def _descriptor(steps, opp_sum, disp_sum, wall_sum, arena: ArenaConfig, body: AgentBodyConfig):
    side = arena.side_length
    d = np.stack(
        [
            steps * arena.timestep / arena.trial_time_limit,
            opp_sum / steps / (side * math.sqrt(2.0)),
            disp_sum / steps / (arena.timestep * body.max_wheel_speed),
            wall_sum / steps / (side / 2.0),
        ],
        axis=-1,
    )
    return np.clip(d, 0.0, 1.0)


# ---------------------------------------------------------------------------
# scalar operations

def step_agent(state: AgentState, left_wheel: float, right_wheel: float,
               body: AgentBodyConfig, arena: ArenaConfig) -> AgentState:
    vmax = body.max_wheel_speed
    vl = min(max(float(left_wheel), -vmax), vmax)
    vr = min(max(float(right_wheel), -vmax), vmax)
    h = float(state.heading)
    x, y, nh = _move(float(state.x), float(state.y), h, math.cos(h), math.sin(h), vl, vr,
                     body.axle, body.body_radius, arena.side_length, arena.timestep)
    return AgentState(x, y, nh)


def read_proximity(agent: AgentState, opponent: AgentState, body: AgentBodyConfig,
                   arena: ArenaConfig) -> tuple[int, ...]:
    out = np.zeros(8)
    h = float(agent.heading)
    _proximity(float(agent.x), float(agent.y), math.cos(h), math.sin(h), float(opponent.x), float(opponent.y),
               body.body_radius, body.proximity_range, arena.side_length, _PROX_COS, _PROX_SIN, out, 0)
    return tuple(int(v) for v in out)


def _vision_geometry(body: AgentBodyConfig) -> tuple[float, float]:
    half = math.radians(body.vision_total_angle) / 2.0
    return half, 2.0 * half / body.vision_count


def read_vision(predator: AgentState, prey: AgentState, body: AgentBodyConfig) -> tuple[int, ...]:
    out = np.zeros(body.vision_count)
    half, width = _vision_geometry(body)
    _vision(float(predator.x), float(predator.y), float(predator.heading), float(prey.x), float(prey.y),
            half, width, body.vision_count, out, 0)
    return tuple(int(v) for v in out)


def check_capture(predator: AgentState, prey: AgentState, body: AgentBodyConfig) -> bool:
    return math.hypot(prey.x - predator.x, prey.y - predator.y) <= 2.0 * body.body_radius


def start_poses(arena: ArenaConfig) -> tuple[AgentState, AgentState]:
    """Midline quarter points, facing away from each other."""
    s = arena.side_length
    return AgentState(s / 4.0, s / 2.0, math.pi), AgentState(3.0 * s / 4.0, s / 2.0, 0.0)


def characterize(trace: TrialTrace, role: str, arena: ArenaConfig, body: AgentBodyConfig) -> np.ndarray:
    """Behavior descriptor of one agent computed from a recorded trace."""
    rows = np.asarray(trace.rows, dtype=np.float64)
    if rows.ndim != 2 or len(rows) == 0:
        raise InvalidInputError("trace must contain at least one step")
    own, other = (slice(0, 3), slice(3, 6)) if role == PREDATOR else (slice(3, 6), slice(0, 3))
    me = rows[:, own]
    opp = rows[:, other]
    path = np.vstack([np.asarray(trace.start, dtype=np.float64)[own], me])
    side = arena.side_length
    opp_dist = np.hypot(opp[:, 0] - me[:, 0], opp[:, 1] - me[:, 1])
    disp = np.hypot(np.diff(path[:, 0]), np.diff(path[:, 1]))
    wall = np.minimum(np.minimum(me[:, 0], side - me[:, 0]), np.minimum(me[:, 1], side - me[:, 1]))
    return _descriptor(np.float64(len(rows)), opp_dist.sum(), disp.sum(), wall.sum(), arena, body)


# ---------------------------------------------------------------------------
# controllers

class NetworkPolicy:
    """Network controllers for one species, stacked as weight tensors."""

    def __init__(self, genes: np.ndarray, species: str):
        self.species = species
        self.spec = NETWORKS[species]
        genes = np.asarray(genes, dtype=np.float64)
        if genes.ndim == 1:
            genes = genes[None]
        w1, w2 = split_weights(genes, self.spec)
        self.w1 = np.ascontiguousarray(w1)
        self.w2 = np.ascontiguousarray(w2)

    @classmethod
    def from_genomes(cls, genomes: Sequence[Genome], species: str) -> "NetworkPolicy":
        for g in genomes:
            if g.species != species:
                raise ConfigurationError(f"expected {species} genome, got {g.species}")
        return cls(np.stack([g.genes for g in genomes]), species)

    @property
    def input_count(self) -> int:
        return self.spec.input_count

    def __len__(self):
        return len(self.w1)


class ConstantPolicy:
    """Emits fixed outputs regardless of its inputs (scripted opponents, tests)."""

    def __init__(self, outputs, input_count: int):
        self.outputs = np.asarray(outputs, dtype=np.float64)
        if self.outputs.shape != (2,) or not np.all((self.outputs >= 0) & (self.outputs <= 1)):
            raise ConfigurationError("constant outputs must be a pair in [0, 1]")
        self.input_count = input_count

    def __len__(self):
        return 1


def _as_policy(ctrl, species: str):
    if isinstance(ctrl, Genome):
        if ctrl.species != species:
            raise ConfigurationError(f"{species} slot got a {ctrl.species} genome")
        return NetworkPolicy(ctrl.genes, species)
    need = NETWORKS[species].input_count
    if getattr(ctrl, "input_count", None) != need:
        raise ConfigurationError(f"{species} controller must take {need} inputs")
    return ctrl


def _kernel_args(policy, species):
    if isinstance(policy, ConstantPolicy):
        spec = NETWORKS[species]
        w1 = np.zeros((1, spec.hidden_count, spec.input_count + 1))
        w2 = np.zeros((1, 2, spec.hidden_count + 1))
        return w1, w2, policy.outputs
    return policy.w1, policy.w2, np.full(2, np.nan)


# ---------------------------------------------------------------------------
# batch engine

@dataclass
class BatchOutcome:
    captured: np.ndarray             # (B,) bool
    steps: np.ndarray                # (B,) int
    predator_descriptor: np.ndarray  # (B, 4)
    prey_descriptor: np.ndarray      # (B, 4)
    trace: np.ndarray | None = None  # (B, max_steps, 6), NaN after the end
    start: np.ndarray | None = None  # (6,)

    def __len__(self):
        return len(self.captured)

    def durations(self, arena: ArenaConfig) -> np.ndarray:
        return self.steps * arena.timestep

    def outcome(self, i: int, arena: ArenaConfig) -> TrialOutcome:
        trace = None
        if self.trace is not None:
            trace = TrialTrace(self.start.copy(), self.trace[i, : self.steps[i]].copy())
        return TrialOutcome(
            captured=bool(self.captured[i]),
            duration=float(self.steps[i] * arena.timestep),
            predator_descriptor=self.predator_descriptor[i].copy(),
            prey_descriptor=self.prey_descriptor[i].copy(),
            trace=trace,
        )

    @staticmethod
    def concat(parts: Sequence["BatchOutcome"]) -> "BatchOutcome":
        return BatchOutcome(
            np.concatenate([p.captured for p in parts]),
            np.concatenate([p.steps for p in parts]),
            np.concatenate([p.predator_descriptor for p in parts]),
            np.concatenate([p.prey_descriptor for p in parts]),
        )


def simulate(predators, preys, pred_idx=None, prey_idx=None, arena: ArenaConfig = ArenaConfig(),
             body: AgentBodyConfig = AgentBodyConfig(), record_trace: bool = False,
             start: Sequence[AgentState] | None = None) -> BatchOutcome:
    """Run trials pairing ``predators[pred_idx[i]]`` with ``preys[prey_idx[i]]``.

    Index arrays default to aligned pairing (or broadcasting a single
    controller against a stack).
    """
    check_bodies(arena, body)
    predators = _as_policy(predators, PREDATOR)
    preys = _as_policy(preys, PREY)
    if pred_idx is None and prey_idx is None:
        n = max(len(predators), len(preys))
        for p in (predators, preys):
            if len(p) not in (1, n):
                raise ConfigurationError("controller stacks must have length 1 or equal length")
        pred_idx = np.arange(n) if len(predators) == n else np.zeros(n, np.int64)
        prey_idx = np.arange(n) if len(preys) == n else np.zeros(n, np.int64)
    pred_idx = np.ascontiguousarray(pred_idx, dtype=np.int64)
    prey_idx = np.ascontiguousarray(prey_idx, dtype=np.int64)
    if pred_idx.shape != prey_idx.shape:
        raise InvalidInputError("pairing index arrays must align")
    n = len(pred_idx)
    if n and (pred_idx.min() < 0 or pred_idx.max() >= len(predators)
              or prey_idx.min() < 0 or prey_idx.max() >= len(preys)):
        raise InvalidInputError("pairing index out of range")

    pw1, pw2, pconst = _kernel_args(predators, PREDATOR)
    qw1, qw2, qconst = _kernel_args(preys, PREY)
    s_pred, s_prey = start if start is not None else start_poses(arena)
    start_arr = np.array([s_pred.x, s_pred.y, s_pred.heading, s_prey.x, s_prey.y, s_prey.heading], dtype=np.float64)
    half, width = _vision_geometry(body)

    captured = np.zeros(n, dtype=np.bool_)
    steps = np.zeros(n, dtype=np.int64)
    sums = np.zeros((n, 5))
    trace = np.full((n, arena.max_steps, 6), np.nan) if record_trace else np.zeros((1, 1, 6))
    _run_trials(pw1, pw2, pred_idx, pconst, qw1, qw2, prey_idx, qconst, start_arr,
                float(body.body_radius), float(body.max_wheel_speed), float(body.proximity_range),
                float(arena.side_length), float(arena.timestep), arena.max_steps, half, width,
                _PROX_COS, _PROX_SIN, captured, steps, sums, trace, record_trace)

    steps_f = steps.astype(np.float64)
    with np.errstate(invalid="ignore", divide="ignore"):
        pred_desc = _descriptor(steps_f, sums[:, 0], sums[:, 1], sums[:, 3], arena, body)
        prey_desc = _descriptor(steps_f, sums[:, 0], sums[:, 2], sums[:, 4], arena, body)
    return BatchOutcome(captured, steps, pred_desc, prey_desc,
                        trace if record_trace else None, start_arr if record_trace else None)


def run_trial(predator_controller, prey_controller, arena: ArenaConfig = ArenaConfig(),
              body: AgentBodyConfig = AgentBodyConfig(), record_trace: bool = False,
              start: Sequence[AgentState] | None = None) -> TrialOutcome:
    res = simulate(predator_controller, prey_controller, np.zeros(1, np.int64), np.zeros(1, np.int64),
                   arena=arena, body=body, record_trace=record_trace, start=start)
    return res.outcome(0, arena)


def run_pairings(predators: Sequence[Genome], preys: Sequence[Genome], pred_idx, prey_idx,
                 arena: ArenaConfig = ArenaConfig(), body: AgentBodyConfig = AgentBodyConfig(),
                 threads: int = 1) -> BatchOutcome:
    """Play indexed genome pairings, split into chunks across ``threads`` workers."""
    pred_idx = np.asarray(pred_idx, dtype=np.int64)
    prey_idx = np.asarray(prey_idx, dtype=np.int64)
    if len(pred_idx) == 0:
        empty = np.zeros((0, 4))
        return BatchOutcome(np.zeros(0, bool), np.zeros(0, np.int64), empty, empty.copy())
    pp = NetworkPolicy.from_genomes(predators, PREDATOR)
    qp = NetworkPolicy.from_genomes(preys, PREY)
    if threads <= 1:
        return simulate(pp, qp, pred_idx, prey_idx, arena=arena, body=body)
    n = len(pred_idx)
    size = -(-n // threads)
    bounds = [(lo, min(lo + size, n)) for lo in range(0, n, size)]
    with ThreadPoolExecutor(max_workers=threads) as ex:
        parts = list(ex.map(lambda b: simulate(pp, qp, pred_idx[b[0]:b[1]], prey_idx[b[0]:b[1]],
                                               arena=arena, body=body), bounds))
    return BatchOutcome.concat(parts)
