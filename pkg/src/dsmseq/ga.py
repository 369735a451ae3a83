"""Permutation GA benchmark: tournament selection, ordered crossover, index shuffling."""

from __future__ import annotations

import enum
import random
from dataclasses import dataclass

from .core import DsmCase, ScoredSolution
from .trace import RunTrace, truncate_trace

__all__ = [
    "GaConfig",
    "GaPreset",
    "GaResult",
    "UniqueCounter",
    "ga_run",
    "truncate_trace",
    "cx_ordered",
    "mut_shuffle_indexes",
]


class GaPreset(enum.Enum):
    # (population, per-index shuffle prob, tournament size, crossover prob, mutation prob)
    EXPLORATION_FOCUSED = (50, 0.05, 5, 0.6, 0.4)
    EXPLOITATION_FOCUSED = (10, 0.01, 20, 0.9, 0.1)
    BALANCED = (20, 0.02, 10, 0.7, 0.3)

    @classmethod
    def parse(cls, name: str) -> "GaPreset":
        key = name.strip().lower().replace("-", "_")
        aliases = {"exploration": "exploration_focused", "exploitation": "exploitation_focused"}
        key = aliases.get(key, key)
        try:
            return cls[key.upper()]
        except KeyError:
            raise ValueError(f"unknown GA preset {name!r}") from None


@dataclass(frozen=True)
class GaConfig:
    population_size: int
    tournament_size: int
    crossover_prob: float
    mutation_prob: float
    per_index_shuffle_prob: float
    generations: int = 2000
    seed: int = 0

    def __post_init__(self):
        for label in ("crossover_prob", "mutation_prob", "per_index_shuffle_prob"):
            value = getattr(self, label)
            if not 0.0 <= value <= 1.0:
                raise ValueError(f"{label} must be in [0, 1], got {value}")
        if self.population_size < 2:
            raise ValueError("population_size must be at least 2")
        if self.tournament_size < 1:
            raise ValueError("tournament_size must be at least 1")
        if self.generations < 0:
            raise ValueError("generations must be non-negative")

    @classmethod
    def from_preset(cls, preset: GaPreset | str, seed: int = 0, generations: int = 2000) -> "GaConfig":
        if isinstance(preset, str):
            preset = GaPreset.parse(preset)
        pop, indpb, tourn, cxpb, mutpb = preset.value
        return cls(
            population_size=pop,
            tournament_size=tourn,
            crossover_prob=cxpb,
            mutation_prob=mutpb,
            per_index_shuffle_prob=indpb,
            generations=generations,
            seed=seed,
        )


class UniqueCounter:
    """Scores every distinct permutation once and counts how many were seen."""

    def __init__(self, score_fn):
        self._score_fn = score_fn
        self.seen: dict[tuple[int, ...], int] = {}

    @property
    def count(self) -> int:
        return len(self.seen)

    def evaluate(self, individual) -> tuple[int, bool]:
        key = tuple(individual)
        score = self.seen.get(key)
        if score is not None:
            return score, False
        score = self._score_fn(key)
        self.seen[key] = score
        return score, True


def cx_ordered(ind1: list[int], ind2: list[int], rng: random.Random) -> tuple[list[int], list[int]]:
    """Ordered crossover (OX) in place; both children stay permutations."""
    size = len(ind1)
    a, b = sorted(rng.sample(range(size), 2))
    holes1, holes2 = [True] * size, [True] * size
    for i in range(size):
        if i < a or i > b:
            holes1[ind2[i]] = False
            holes2[ind1[i]] = False
    temp1, temp2 = ind1[:], ind2[:]
    k1 = k2 = b + 1
    for i in range(size):
        if not holes1[temp1[(i + b + 1) % size]]:
            ind1[k1 % size] = temp1[(i + b + 1) % size]
            k1 += 1
        if not holes2[temp2[(i + b + 1) % size]]:
            ind2[k2 % size] = temp2[(i + b + 1) % size]
            k2 += 1
    for i in range(a, b + 1):
        ind1[i], ind2[i] = ind2[i], ind1[i]
    return ind1, ind2


def mut_shuffle_indexes(ind: list[int], indpb: float, rng: random.Random) -> list[int]:
    size = len(ind)
    for i in range(size):
        if rng.random() < indpb:
            j = rng.randint(0, size - 2)
            if j >= i:
                j += 1
            ind[i], ind[j] = ind[j], ind[i]
    return ind


@dataclass
class GaResult:
    best: ScoredSolution
    trace: RunTrace
    generations_run: int
    evaluations: int

    def __iter__(self):
        return iter((self.best, self.trace))


def _select_tournament(pop, fits, k, tournsize, rng):
    chosen = []
    n = len(pop)
    for _ in range(k):
        best_i = rng.randrange(n)
        for _ in range(tournsize - 1):
            j = rng.randrange(n)
            if fits[j] < fits[best_i]:
                best_i = j
        chosen.append(pop[best_i])
    return chosen


def ga_run(case: DsmCase, config: GaConfig, method: str = "ga") -> GaResult:
    n = case.n
    if n < 2:
        raise ValueError("GA needs at least 2 nodes")
    index = case.index()
    edges = [(index[e.dependent], index[e.predecessor]) for e in case.edges]

    def score(perm: tuple[int, ...]) -> int:
        pos = [0] * n
        for p, v in enumerate(perm):
            pos[v] = p
        return sum(1 for d, p in edges if pos[d] < pos[p])

    rng = random.Random(config.seed)
    counter = UniqueCounter(score)
    trace = RunTrace(method=method, case=case.name, seed=config.seed)
    best_score: int | None = None
    best_perm: tuple[int, ...] | None = None
    best_gen = 0
    evaluations = 0

    def evaluate_all(pop, generation):
        nonlocal best_score, best_perm, best_gen, evaluations
        fits = []
        for ind in pop:
            fit, fresh = counter.evaluate(ind)
            evaluations += 1
            if best_score is None or fit < best_score:
                best_score, best_perm, best_gen = fit, tuple(ind), generation
            if fresh:
                trace.record(counter.count, best_score)
            fits.append(fit)
        return fits

    population = []
    for _ in range(config.population_size):
        perm = list(range(n))
        rng.shuffle(perm)
        population.append(perm)
    fitness = evaluate_all(population, 0)

    for gen in range(1, config.generations + 1):
        elite_i = min(range(len(population)), key=fitness.__getitem__)
        elite = population[elite_i][:]
        offspring = [ind[:] for ind in _select_tournament(population, fitness, len(population), config.tournament_size, rng)]
        for i in range(1, len(offspring), 2):
            if rng.random() < config.crossover_prob:
                cx_ordered(offspring[i - 1], offspring[i], rng)
        for i in range(len(offspring)):
            if rng.random() < config.mutation_prob:
                mut_shuffle_indexes(offspring[i], config.per_index_shuffle_prob, rng)
        off_fit = evaluate_all(offspring, gen)
        worst_i = max(range(len(offspring)), key=off_fit.__getitem__)
        if fitness[elite_i] < min(off_fit):
            offspring[worst_i] = elite
            off_fit[worst_i] = fitness[elite_i]
        population, fitness = offspring, off_fit

    ids = case.node_ids
    best = ScoredSolution(
        sequence=tuple(ids[i] for i in best_perm),
        score=best_score,
        method=method,
        iteration=best_gen,
    )
    return GaResult(best=best, trace=trace, generations_run=config.generations, evaluations=evaluations)
