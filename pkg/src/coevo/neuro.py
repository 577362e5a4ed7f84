"""Fixed-topology feed-forward controllers with a direct weight encoding.

Genes are laid out row by row: for every hidden unit its input weights
followed by its bias, then for every output unit its hidden weights
followed by its bias.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Iterable

import numpy as np

GENE_LIMIT = 10.0
# Largest/smallest doubles strictly inside (0, 1); the logistic saturates to
# exactly 1.0 in float64 above ~36.7, which would otherwise leak through.
_OUT_LO = np.nextafter(0.0, 1.0)
_OUT_HI = np.nextafter(1.0, 0.0)

PREDATOR = "predator"
PREY = "prey"
SPECIES = (PREDATOR, PREY)


@dataclass(frozen=True)
class NetworkSpec:
    input_count: int
    hidden_count: int
    output_count: int = 2
    bias: bool = True

    def __post_init__(self):
        for name in ("input_count", "hidden_count", "output_count"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        if not self.bias:
            raise ValueError("controllers always carry bias terms")

    @property
    def hidden_slice(self) -> slice:
        return slice(0, (self.input_count + 1) * self.hidden_count)

    @property
    def output_slice(self) -> slice:
        start = (self.input_count + 1) * self.hidden_count
        return slice(start, start + (self.hidden_count + 1) * self.output_count)

    def output_bias_index(self, output: int) -> int:
        return self.output_slice.start + output * (self.hidden_count + 1) + self.hidden_count


PREDATOR_NET = NetworkSpec(13, 7)
PREY_NET = NetworkSpec(8, 5)
NETWORKS = {PREDATOR: PREDATOR_NET, PREY: PREY_NET}


def genome_length(spec: NetworkSpec) -> int:
    return (spec.input_count + 1) * spec.hidden_count + (spec.hidden_count + 1) * spec.output_count


@dataclass(frozen=True, eq=False)
class Genome:
    """Immutable parameter vector for one controller."""

    genes: np.ndarray
    species: str
    id: str = ""
    generation_born: int = 0

    def __post_init__(self):
        if self.species not in SPECIES:
            raise ValueError(f"unknown species {self.species!r}")
        genes = np.array(self.genes, dtype=np.float64)
        if genes.ndim != 1 or genes.size != genome_length(NETWORKS[self.species]):
            raise ValueError(
                f"{self.species} genome needs {genome_length(NETWORKS[self.species])} genes, got {genes.size}"
            )
        genes.setflags(write=False)
        object.__setattr__(self, "genes", genes)

    @property
    def spec(self) -> NetworkSpec:
        return NETWORKS[self.species]

    def __eq__(self, other):
        if not isinstance(other, Genome):
            return NotImplemented
        return (
            self.species == other.species
            and self.id == other.id
            and self.generation_born == other.generation_born
            and np.array_equal(self.genes, other.genes)
        )

    def __hash__(self):
        return hash((self.species, self.id, self.generation_born, self.genes.tobytes()))

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "species": self.species,
            "generation_born": self.generation_born,
            "genes": [float(g) for g in self.genes],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Genome":
        return cls(
            genes=np.asarray(d["genes"], dtype=np.float64),
            species=d["species"],
            id=str(d.get("id", "")),
            generation_born=int(d.get("generation_born", 0)),
        )


def split_weights(genes: np.ndarray, spec: NetworkSpec) -> tuple[np.ndarray, np.ndarray]:
    """Return (hidden, output) weight matrices; the last column holds the bias.

    Works on a single gene vector or on a stack of them (leading batch axes).
    """
    genes = np.asarray(genes)
    lead = genes.shape[:-1]
    w1 = genes[..., spec.hidden_slice].reshape(*lead, spec.hidden_count, spec.input_count + 1)
    w2 = genes[..., spec.output_slice].reshape(*lead, spec.output_count, spec.hidden_count + 1)
    return w1, w2


def forward(w1: np.ndarray, w2: np.ndarray, inputs: np.ndarray) -> np.ndarray:
    """Batched forward pass: tanh hidden layer, logistic outputs.

    ``w1``: (B, H, I+1), ``w2``: (B, O, H+1), ``inputs``: (B, I).
    Row results do not depend on the batch they are computed in.
    """
    hidden = np.tanh((w1[..., :-1] * inputs[..., None, :]).sum(axis=-1) + w1[..., -1])
    pre = (w2[..., :-1] * hidden[..., None, :]).sum(axis=-1) + w2[..., -1]
    out = 1.0 / (1.0 + np.exp(-pre))
    return np.clip(out, _OUT_LO, _OUT_HI)


def activate(genome: Genome, spec: NetworkSpec, inputs) -> tuple[float, float]:
    x = np.asarray(inputs, dtype=np.float64)
    if x.shape != (spec.input_count,):
        raise ValueError(f"expected {spec.input_count} inputs, got shape {x.shape}")
    if genome.genes.size != genome_length(spec):
        raise ValueError("genome does not match network spec")
    w1, w2 = split_weights(genome.genes, spec)
    out = forward(w1[None], w2[None], x[None])[0]
    return tuple(float(o) for o in out)


def random_genome(spec: NetworkSpec, rng: np.random.Generator, species: str,
                  id: str = "", generation_born: int = 0) -> Genome:
    genes = rng.uniform(-1.0, 1.0, size=genome_length(spec))
    return Genome(genes, species, id=id, generation_born=generation_born)


def mutate(genome: Genome, rate: float, sigma: float, rng: np.random.Generator,
           id: str | None = None, generation_born: int | None = None) -> Genome:
    if not 0.0 <= rate <= 1.0:
        raise ValueError("mutation rate must lie in [0, 1]")
    if sigma <= 0:
        raise ValueError("mutation sigma must be positive")
    n = genome.genes.size
    hit = rng.random(n) < rate
    noise = rng.normal(0.0, sigma, size=n)
    genes = np.where(hit, genome.genes + noise, genome.genes)
    genes = np.clip(genes, -GENE_LIMIT, GENE_LIMIT)
    return Genome(
        genes,
        genome.species,
        id=genome.id if id is None else id,
        generation_born=genome.generation_born if generation_born is None else generation_born,
    )


def dump_genomes(genomes: Iterable[Genome], path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for g in genomes:
            fh.write(json.dumps(g.to_dict()) + "\n")


def load_genomes(path) -> list[Genome]:
    """Read genomes from a JSON-lines file.

    Lines holding a champion record (a ``genome`` key) are unwrapped.
    """
    out = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            d = json.loads(line)
            out.append(Genome.from_dict(d["genome"] if "genome" in d else d))
    return out
