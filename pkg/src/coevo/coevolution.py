"""Two-population competitive coevolution with hall-of-fame opponents.

Each generation: every predator plays sampled prey champions and vice versa,
novelty is computed per species, the active method turns fitness/novelty
into selection scores, the fitness champions enter the halls of fame, a few
descriptors enter the archives, and each population is replaced by mutated
tournament winners.

Randomness is drawn from independent substreams keyed on
(master seed, generation, species, individual, purpose), so results do not
depend on evaluation order or the number of worker threads.
"""
from __future__ import annotations

import csv
import json
import logging
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import NamedTuple, Sequence

import numpy as np

from .errors import ConfigurationError, InvalidInputError, InvalidStateError
from .neuro import NETWORKS, PREDATOR, PREY, SPECIES, Genome, dump_genomes, mutate, random_genome
from .novelty import Archive, maybe_archive, parse_method, population_novelty, select_scores
from .sim import AgentBodyConfig, ArenaConfig, run_pairings

log = logging.getLogger(__name__)

_SPECIES_ID = {PREDATOR: 0, PREY: 1}
# substream purposes
INIT, OPPONENTS, ARCHIVE, REPRODUCE = 0, 1, 2, 3

GENERATIONS_COLUMNS = ("generation", "species", "best_fitness", "mean_fitness", "best_novelty", "archive_size")


def opponent_of(species: str) -> str:
    return PREY if species == PREDATOR else PREDATOR


def substream(master_seed: int, generation: int, species: str, index: int, purpose: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(
        [master_seed, generation, _SPECIES_ID[species], index, purpose]))


@dataclass(frozen=True)
class EvolutionConfig:
    method: str = "Fit"
    population_size: int = 200
    generations: int = 250
    tournament_size: int = 5
    opponents_per_evaluation: int = 10
    mutation_rate: float = 0.05
    mutation_sigma: float = 1.0
    novelty_k: int = 15
    archive_add_probability: float = 0.03
    archive_capacity: int = 1000
    pmcns_percentile: float = 0.5
    master_seed: int = 0
    arena: ArenaConfig = field(default_factory=ArenaConfig)
    body: AgentBodyConfig = field(default_factory=AgentBodyConfig)

    def __post_init__(self):
        object.__setattr__(self, "method", parse_method(self.method))
        for name in ("population_size", "tournament_size", "opponents_per_evaluation", "novelty_k",
                     "archive_capacity"):
            if getattr(self, name) < 1:
                raise ConfigurationError(f"{name} must be >= 1")
        if self.generations < 0:
            raise ConfigurationError("generations must be >= 0")
        for name in ("mutation_rate", "archive_add_probability"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ConfigurationError(f"{name} must lie in [0, 1]")
        if self.mutation_sigma <= 0:
            raise ConfigurationError("mutation_sigma must be positive")
        if not 0.0 < self.pmcns_percentile < 1.0:
            raise ConfigurationError("pmcns_percentile must lie in (0, 1)")
        if self.master_seed < 0:
            raise ConfigurationError("master_seed must be non-negative")

    def scalar_fields(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self) if f.name not in ("arena", "body")}


@dataclass
class Individual:
    genome: Genome
    fitness: float
    descriptor: np.ndarray
    novelty: float = 0.0
    score: float = 0.0
    opponents: tuple = ()


class HallOfFame:
    """Append-only list of (generation, champion) for one species."""

    def __init__(self, species: str):
        self.species = species
        self._entries: list[tuple[int, Genome]] = []

    def __len__(self):
        return len(self._entries)

    def __getitem__(self, i) -> Genome:
        return self._entries[i][1]

    @property
    def entries(self) -> tuple[tuple[int, Genome], ...]:
        return tuple(self._entries)

    def append(self, generation: int, genome: Genome) -> None:
        if genome.species != self.species:
            raise InvalidInputError("hall of fame holds a single species")
        if generation != len(self._entries):
            raise InvalidStateError(f"expected champion of generation {len(self._entries)}, got {generation}")
        self._entries.append((generation, genome))

    def copy(self) -> "HallOfFame":
        new = HallOfFame(self.species)
        new._entries = list(self._entries)
        return new


@dataclass
class CoevolutionState:
    generation: int
    populations: dict
    halls: dict
    archives: dict


class GenerationRecord(NamedTuple):
    generation: int
    species: str
    best_fitness: float
    mean_fitness: float
    best_novelty: float
    archive_size: int
    best_genome_id: str
    champion_descriptor: tuple


class GenerationResult(NamedTuple):
    state: CoevolutionState
    records: dict
    individuals: dict


def sample_opponents(hof: HallOfFame, n: int, fallback_population: Sequence[Genome],
                     rng: np.random.Generator) -> list[Genome]:
    """``n`` uniform draws with replacement from the hall of fame, or from the
    opposing population while the hall is still empty."""
    if n < 1:
        raise InvalidInputError("need at least one opponent")
    pool = [g for _, g in hof.entries] if len(hof) else list(fallback_population)
    if not pool:
        raise InvalidStateError("no opponents available")
    return [pool[i] for i in rng.integers(len(pool), size=n)]


def tournament_select(scores, size: int, rng: np.random.Generator) -> int:
    scores = np.asarray(scores, dtype=np.float64)
    if scores.size == 0:
        raise InvalidInputError("empty population")
    if size < 1:
        raise InvalidInputError("tournament size must be >= 1")
    drawn = rng.integers(scores.size, size=size)
    best = scores[drawn].max()
    return int(drawn[scores[drawn] == best].min())


def _trial_results(species, outcome, rows):
    captured = outcome.captured[rows]
    if species == PREDATOR:
        return captured.astype(np.float64), outcome.predator_descriptor[rows]
    return (~captured).astype(np.float64), outcome.prey_descriptor[rows]


def evaluate_individual(genome: Genome, opponents: Sequence[Genome], arena: ArenaConfig = ArenaConfig(),
                        body: AgentBodyConfig = AgentBodyConfig()) -> tuple[float, np.ndarray]:
    """Fitness (fraction of trials won) and mean descriptor against ``opponents``."""
    if not opponents:
        raise InvalidInputError("opponent set is empty")
    if any(o.species == genome.species for o in opponents):
        raise InvalidInputError("opponents must belong to the opposing species")
    n = len(opponents)
    if genome.species == PREDATOR:
        out = run_pairings([genome], list(opponents), np.zeros(n), np.arange(n), arena, body)
    else:
        out = run_pairings(list(opponents), [genome], np.arange(n), np.zeros(n), arena, body)
    wins, desc = _trial_results(genome.species, out, np.arange(n))
    return float(wins.mean()), desc.mean(axis=0)


def evaluate_populations(populations: dict, opponents: dict, config: EvolutionConfig,
                         threads: int = 1) -> dict:
    """Evaluate both populations against their sampled opponents in one batch.

    ``opponents[species][i]`` lists the opponents of individual i.
    Returns species -> (fitness array, descriptor array).
    """
    preds = list(populations[PREDATOR])
    preys = list(populations[PREY])
    pred_idx, prey_idx = [], []
    owners = {PREDATOR: [], PREY: []}
    for i, opps in enumerate(opponents[PREDATOR]):
        for opp in opps:
            owners[PREDATOR].append(len(pred_idx))
            pred_idx.append(i)
            prey_idx.append(len(preys))
            preys.append(opp)
    for i, opps in enumerate(opponents[PREY]):
        for opp in opps:
            owners[PREY].append(len(pred_idx))
            pred_idx.append(len(preds))
            preds.append(opp)
            prey_idx.append(i)
    outcome = run_pairings(preds, preys, pred_idx, prey_idx, config.arena, config.body, threads=threads)
    result = {}
    for species in SPECIES:
        n_ind = len(populations[species])
        rows = np.asarray(owners[species], dtype=np.int64).reshape(n_ind, -1)
        wins, desc = _trial_results(species, outcome, rows.ravel())
        wins = wins.reshape(rows.shape)
        desc = desc.reshape(*rows.shape, 4)
        result[species] = (wins.mean(axis=1), desc.mean(axis=1))
    return result


def initial_state(config: EvolutionConfig) -> CoevolutionState:
    pops = {
        s: [random_genome(NETWORKS[s], substream(config.master_seed, 0, s, i, INIT), s, id=f"{s}-0-{i}")
            for i in range(config.population_size)]
        for s in SPECIES
    }
    return CoevolutionState(
        generation=0,
        populations=pops,
        halls={s: HallOfFame(s) for s in SPECIES},
        archives={s: Archive(config.archive_capacity) for s in SPECIES},
    )


def run_generation(state: CoevolutionState, config: EvolutionConfig, threads: int = 1) -> GenerationResult:
    g = state.generation
    seed = config.master_seed
    for s in SPECIES:
        if len(state.populations[s]) != config.population_size:
            raise InvalidStateError(f"{s} population has wrong size")

    # (1) evaluation against sampled opponents
    opponents = {
        s: [sample_opponents(state.halls[opponent_of(s)], config.opponents_per_evaluation,
                             state.populations[opponent_of(s)], substream(seed, g, s, i, OPPONENTS))
            for i in range(config.population_size)]
        for s in SPECIES
    }
    evaluated = evaluate_populations(state.populations, opponents, config, threads=threads)

    halls = {s: state.halls[s].copy() for s in SPECIES}
    archives = {s: state.archives[s].copy() for s in SPECIES}
    individuals, records, new_pops = {}, {}, {}
    for s in SPECIES:
        fit, desc = evaluated[s]
        # (2) novelty against a frozen snapshot of the archive
        nov = population_novelty(desc, state.archives[s], config.novelty_k)
        # (3) selection scores
        scores = select_scores(config.method, s, fit, nov, config.pmcns_percentile)
        pop = state.populations[s]
        individuals[s] = [
            Individual(pop[i], float(fit[i]), desc[i], float(nov[i]), float(scores[i]),
                       tuple(o.id for o in opponents[s][i]))
            for i in range(len(pop))
        ]
        # (4) hall of fame; argmax takes the lowest index on ties
        champ = int(np.argmax(fit))
        halls[s].append(g, pop[champ])
        # (5) archive
        for i in range(len(pop)):
            maybe_archive(archives[s], desc[i], config.archive_add_probability, substream(seed, g, s, i, ARCHIVE))
        # (6) reproduction
        children = []
        for i in range(len(pop)):
            rng = substream(seed, g, s, i, REPRODUCE)
            parent = pop[tournament_select(scores, config.tournament_size, rng)]
            children.append(mutate(parent, config.mutation_rate, config.mutation_sigma, rng,
                                   id=f"{s}-{g + 1}-{i}", generation_born=g + 1))
        new_pops[s] = children
        records[s] = GenerationRecord(
            generation=g, species=s, best_fitness=float(fit.max()), mean_fitness=float(fit.mean()),
            best_novelty=float(nov.max()), archive_size=len(archives[s]), best_genome_id=pop[champ].id,
            champion_descriptor=tuple(float(v) for v in desc[champ]),
        )
    new_state = CoevolutionState(g + 1, new_pops, halls, archives)
    return GenerationResult(new_state, records, individuals)


@dataclass
class RunArtifacts:
    config: EvolutionConfig
    initial_populations: dict
    records: list = field(default_factory=list)
    champions: list = field(default_factory=list)
    final_state: CoevolutionState | None = None

    def write(self, out_dir) -> None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        with open(out / "generations.csv", "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(GENERATIONS_COLUMNS)
            for r in self.records:
                w.writerow([r.generation, r.species, repr(r.best_fitness), repr(r.mean_fitness),
                            repr(r.best_novelty), r.archive_size])
        with open(out / "champions.jsonl", "w", encoding="utf-8") as fh:
            for c in self.champions:
                fh.write(json.dumps(c) + "\n")
        with open(out / "archive.jsonl", "w", encoding="utf-8") as fh:
            if self.final_state is not None:
                for s in SPECIES:
                    for row in self.final_state.archives[s].entries:
                        fh.write(json.dumps({"species": s, "descriptor": [float(v) for v in row]}) + "\n")
        dump_genomes([g for s in SPECIES for g in self.initial_populations[s]], out / "initial_population.jsonl")


def champion_record(ind: Individual, generation: int, species: str) -> dict:
    return {
        "generation": generation,
        "species": species,
        "fitness": ind.fitness,
        "novelty": ind.novelty,
        "score": ind.score,
        "descriptor": [float(v) for v in ind.descriptor],
        "opponents": list(ind.opponents),
        "genome": ind.genome.to_dict(),
    }


def run_evolution(config: EvolutionConfig, threads: int = 1, log_every: int = 10) -> RunArtifacts:
    state = initial_state(config)
    arts = RunArtifacts(config, {s: list(state.populations[s]) for s in SPECIES})
    for g in range(config.generations):
        res = run_generation(state, config, threads=threads)
        for s in SPECIES:
            rec = res.records[s]
            arts.records.append(rec)
            champ = next(ind for ind in res.individuals[s] if ind.genome.id == rec.best_genome_id)
            arts.champions.append(champion_record(champ, g, s))
        state = res.state
        if log_every and (g % log_every == 0 or g == config.generations - 1):
            log.info("%s gen %d: pred best %.2f mean %.2f | prey best %.2f mean %.2f", config.method, g,
                     res.records[PREDATOR].best_fitness, res.records[PREDATOR].mean_fitness,
                     res.records[PREY].best_fitness, res.records[PREY].mean_fitness)
    arts.final_state = state
    return arts
