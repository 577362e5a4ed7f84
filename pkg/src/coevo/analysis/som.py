"""Kohonen self-organizing map for projecting 4-D behavior descriptors."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ..errors import InvalidInputError


@dataclass
class SomMap:
    weights: np.ndarray  # (height, width, dim)
    learning_rate: float
    radius: float
    iterations: int
    qe_history: list = field(default_factory=list)

    @property
    def width(self) -> int:
        return self.weights.shape[1]

    @property
    def height(self) -> int:
        return self.weights.shape[0]

    def flat(self) -> np.ndarray:
        return self.weights.reshape(-1, self.weights.shape[-1])

    def grid(self) -> np.ndarray:
        """(units, 2) grid coordinates as (x, y), unit index = y * width + x."""
        ys, xs = np.divmod(np.arange(self.width * self.height), self.width)
        return np.stack([xs, ys], axis=1).astype(np.float64)


def best_matching_unit(som: SomMap, v) -> tuple[int, int]:
    """(x, y) of the unit nearest to ``v``; ties go to the lowest unit index."""
    d = ((som.flat() - np.asarray(v, dtype=np.float64)) ** 2).sum(axis=1)
    y, x = divmod(int(np.argmin(d)), som.width)
    return x, y


def quantization_error(som: SomMap, samples) -> float:
    x = np.asarray(samples, dtype=np.float64)
    w = som.flat()
    d = np.sqrt(((x[:, None, :] - w[None, :, :]) ** 2).sum(axis=-1))
    return float(d.min(axis=1).mean())


def train_som(samples, width: int = 7, height: int = 7, iterations: int = 10_000, learning_rate: float = 0.5,
              radius: float | None = None, rng: np.random.Generator | None = None,
              track_every: int = 0) -> SomMap:
    """Online training with a Gaussian neighborhood.

    Learning rate decays as ``lr0 * exp(-t/T)`` and the radius as
    ``r0 * exp(-t * ln(r0) / T)``, shrinking to one grid cell at the end.
    """
    x = np.asarray(samples, dtype=np.float64)
    if x.ndim != 2 or len(x) == 0:
        raise InvalidInputError("SOM training needs a non-empty (n, dim) sample")
    rng = rng if rng is not None else np.random.default_rng(0)
    r0 = float(max(width, height)) / 2.0 if radius is None else float(radius)
    som = SomMap(rng.random((height, width, x.shape[1])), learning_rate, r0, iterations)
    w = som.flat().copy()
    grid = som.grid()
    tau_r = iterations / math.log(r0) if r0 > 1.0 else float(iterations)
    if track_every:
        som.qe_history.append(quantization_error(som, x))
    picks = rng.integers(len(x), size=iterations)
    for t in range(iterations):
        v = x[picks[t]]
        bmu = int(np.argmin(((w - v) ** 2).sum(axis=1)))
        lr = learning_rate * math.exp(-t / iterations)
        r = r0 * math.exp(-t / tau_r)
        g2 = ((grid - grid[bmu]) ** 2).sum(axis=1)
        h = np.exp(-g2 / (2.0 * r * r))
        w += (lr * h)[:, None] * (v - w)
        np.clip(w, 0.0, 1.0, out=w)
        if track_every and (t + 1) % track_every == 0:
            som.weights = w.reshape(height, width, -1).copy()
            som.qe_history.append(quantization_error(som, x))
    som.weights = w.reshape(height, width, -1)
    return som


def map_to_som(som: SomMap, descriptors) -> np.ndarray:
    """Hit counts per unit, shape (height, width)."""
    counts = np.zeros((som.height, som.width), dtype=np.int64)
    for d in descriptors:
        x, y = best_matching_unit(som, d)
        counts[y, x] += 1
    return counts
