"""NSGA-II with seeded initialisation and mutation-only variation.

The population starts as N copies of one seed assignment. Each generation the
parents P and their mutated offspring Q are merged, sorted into
non-dominated fronts, and the next N parents are taken front by front, the
last admitted front being cut by descending crowding distance.

Random numbers come from a separate Philox stream per (generation, slot), so
results do not depend on how evaluations are scheduled.
"""

from __future__ import annotations

import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .analysis import Objectives
from .errors import ConstraintError, EvaluationError
from .netlist import Chromosome

MUTATION_MODES = ("bernoulli", "exact")


@dataclass(frozen=True)
class EvolutionConfig:
    N: int = 100
    M: int = 100
    rho: float = 0.005
    rng_seed: int = 0
    parallelism: int = 1
    mutation_mode: str = "bernoulli"

    def __post_init__(self):
        if self.N < 2:
            raise ConstraintError("population size N must be at least 2")
        if self.M < 1:
            raise ConstraintError("generation count M must be at least 1")
        if not 0.0 <= self.rho <= 1.0:
            raise ConstraintError("mutation probability rho must lie in [0, 1]")
        if self.parallelism < 1:
            raise ConstraintError("parallelism must be at least 1")
        if self.mutation_mode not in MUTATION_MODES:
            raise ConstraintError(f"mutation_mode must be one of {MUTATION_MODES}")


@dataclass
class Individual:
    chromosome: Chromosome
    objectives: Objectives | None = None
    rank: int | None = None
    crowding: float = 0.0

    def values(self) -> tuple[float, ...]:
        if self.objectives is None:
            raise EvaluationError(f"individual {self.chromosome.key()} has not been evaluated")
        return self.objectives.as_tuple()


@dataclass(frozen=True)
class GenerationRecord:
    generation: int
    chromosomes: tuple[str, ...]
    objectives: tuple[tuple[float, float, float], ...]
    front1: tuple[bool, ...]

    def to_json(self) -> str:
        return json.dumps({"generation": self.generation,
                           "individuals": [{"chromosome": c, "D_wc": o[0], "P_total": o[1],
                                            "A_gate": o[2], "front1": f}
                                           for c, o, f in zip(self.chromosomes, self.objectives,
                                                              self.front1)]})


@dataclass
class EvolutionResult:
    population: list[Individual]
    history: list[GenerationRecord]
    seed: Individual
    evaluations: int = 0
    config: EvolutionConfig = field(default_factory=EvolutionConfig)

    @property
    def front(self) -> list[Individual]:
        return [ind for ind in self.population if ind.rank == 0]


def rng_stream(seed: int, generation: int, slot: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([seed, generation, slot])))


def mutate(c: Chromosome, rho: float, rng: np.random.Generator, options: int,
           mode: str = "bernoulli") -> Chromosome:
    """Redraw genes uniformly from all ``options`` drive indexes.

    ``bernoulli`` redraws each gene independently with probability ``rho``;
    ``exact`` redraws exactly ``ceil(rho * len(c))`` distinct genes. A redraw may
    return the current value.
    """
    n = len(c.genes)
    if mode == "bernoulli":
        hit = rng.random(n) < rho
    elif mode == "exact":
        hit = np.zeros(n, dtype=bool)
        hit[rng.choice(n, size=min(n, math.ceil(rho * n)), replace=False)] = True
    else:
        raise ConstraintError(f"unknown mutation mode {mode!r}")
    count = int(hit.sum())
    if count == 0:
        return c
    genes = np.array(c.genes, dtype=np.int64)
    genes[hit] = rng.integers(0, options, size=count)
    return Chromosome(tuple(genes.tolist()))


def _matrix(population) -> np.ndarray:
    rows = [p.values() if isinstance(p, Individual) else tuple(p) for p in population]
    return np.asarray(rows, dtype=float).reshape(len(rows), -1)


def dominates(a: Sequence[float], b: Sequence[float]) -> bool:
    """Minimisation: ``a`` no worse everywhere and strictly better somewhere."""
    return all(x <= y for x, y in zip(a, b)) and any(x < y for x, y in zip(a, b))


def non_dominated_sort(population) -> list[list[int]]:
    """Fronts of indexes into ``population`` (Individuals or objective tuples), best first.

    Individuals get their ``rank`` set (0 for the first front).
    """
    if len(population) == 0:
        return []
    f = _matrix(population)
    n = len(f)
    le = (f[:, None, :] <= f[None, :, :]).all(axis=2)
    lt = (f[:, None, :] < f[None, :, :]).any(axis=2)
    dom = le & lt  # dom[i, j]: i dominates j
    count = dom.sum(axis=0)
    remaining = np.ones(n, dtype=bool)
    fronts = []
    while remaining.any():
        current = np.flatnonzero(remaining & (count == 0))
        fronts.append(current.tolist())
        remaining[current] = False
        count = count - dom[current].sum(axis=0)
    for rank, front in enumerate(fronts):
        for i in front:
            if isinstance(population[i], Individual):
                population[i].rank = rank
    return fronts


def crowding_distance(front) -> list[float]:
    """NSGA-II crowding distance of each member of ``front``.

    Objectives with zero spread are skipped; otherwise the two extreme members
    of each objective are infinite and interior ones accumulate the normalised
    gap between their neighbours.
    """
    if len(front) == 0:
        return []
    f = _matrix(front)
    n = len(f)
    distance = np.zeros(n)
    if n <= 2:
        distance[:] = np.inf
    else:
        for m in range(f.shape[1]):
            order = np.argsort(f[:, m], kind="stable")
            col = f[order, m]
            spread = col[-1] - col[0]
            if spread == 0:
                continue
            distance[order[0]] = np.inf
            distance[order[-1]] = np.inf
            distance[order[1:-1]] += (col[2:] - col[:-2]) / spread
    result = distance.tolist()
    for ind, d in zip(front, result):
        if isinstance(ind, Individual):
            ind.crowding = d
    return result


def select(population: list[Individual], n: int) -> list[Individual]:
    """Elitist truncation of ``population`` to ``n`` members; sets rank and crowding."""
    fronts = non_dominated_sort(population)
    chosen: list[Individual] = []
    for front in fronts:
        members = [population[i] for i in front]
        crowding_distance(members)
        if len(chosen) + len(members) <= n:
            chosen += members
            continue
        # stable: equal crowding keeps merge order
        members.sort(key=lambda ind: -ind.crowding)
        chosen += members[:n - len(chosen)]
        break
    return chosen


_worker_evaluator = None


def _init_worker(evaluator):
    global _worker_evaluator
    _worker_evaluator = evaluator


def _evaluate_in_worker(c: Chromosome):
    try:
        return _worker_evaluator(c), None
    except Exception as exc:  # reported in the parent with the chromosome attached
        return None, repr(exc)


class _EvaluationCache:
    def __init__(self, evaluator: Callable[[Chromosome], Objectives], parallelism: int):
        self.evaluator = evaluator
        self.parallelism = parallelism
        self.cache: dict[tuple[int, ...], Objectives] = {}
        self.pool = None
        if parallelism > 1:
            self.pool = ProcessPoolExecutor(max_workers=parallelism, initializer=_init_worker,
                                            initargs=(evaluator,))

    def close(self):
        if self.pool is not None:
            self.pool.shutdown()

    def fill(self, individuals: Sequence[Individual]) -> None:
        todo = []
        for ind in individuals:
            key = ind.chromosome.genes
            if key not in self.cache and key not in {c.genes for c in todo}:
                todo.append(ind.chromosome)
        if self.pool is None:
            for c in todo:
                try:
                    self.cache[c.genes] = self.evaluator(c)
                except Exception as exc:
                    raise EvaluationError(f"evaluation failed for chromosome {c.key()}: "
                                          f"{exc}") from exc
        elif todo:
            chunk = max(1, len(todo) // (4 * self.parallelism))
            for c, (obj, err) in zip(todo, self.pool.map(_evaluate_in_worker, todo,
                                                         chunksize=chunk)):
                if err is not None:
                    raise EvaluationError(f"evaluation failed for chromosome {c.key()}: {err}")
                self.cache[c.genes] = obj
        for ind in individuals:
            ind.objectives = self.cache[ind.chromosome.genes]


def _record(generation: int, population: list[Individual]) -> GenerationRecord:
    fronts = non_dominated_sort([ind.values() for ind in population])
    first = set(fronts[0]) if fronts else set()
    return GenerationRecord(generation, tuple(ind.chromosome.key() for ind in population),
                            tuple(ind.values() for ind in population),
                            tuple(i in first for i in range(len(population))))


def evolve(seed: Chromosome, cfg: EvolutionConfig,
           evaluator: Callable[[Chromosome], Objectives], options: int | None = None,
           callback: Callable[[int, list[Individual]], None] | None = None) -> EvolutionResult:
    """Run ``cfg.M`` generations of seeded NSGA-II.

    ``options`` is the size of the inverter drive set; it defaults to
    ``evaluator.option_count`` when the evaluator provides one.
    """
    if options is None:
        options = getattr(evaluator, "option_count", None)
        if options is None:
            raise ConstraintError("number of drive options is required")
    if any(not 0 <= g < options for g in seed.genes):
        raise ConstraintError("seed chromosome has genes outside the drive set")

    def offspring(parents: list[Individual], generation: int) -> list[Individual]:
        return [Individual(mutate(p.chromosome, cfg.rho, rng_stream(cfg.rng_seed, generation, i),
                                  options, cfg.mutation_mode))
                for i, p in enumerate(parents)]

    cache = _EvaluationCache(evaluator, cfg.parallelism)
    try:
        seed_ind = Individual(seed)
        cache.fill([seed_ind])
        parents = [Individual(seed) for _ in range(cfg.N)]
        cache.fill(parents)
        non_dominated_sort(parents)
        crowding_distance(parents)
        history = [_record(0, parents)]
        children = offspring(parents, 0)
        for t in range(1, cfg.M + 1):
            merged = parents + children
            cache.fill(merged)
            parents = select(merged, cfg.N)
            history.append(_record(t, parents))
            if callback is not None:
                callback(t, parents)
            children = offspring(parents, t)
    finally:
        cache.close()

    final = [Individual(p.chromosome, p.objectives) for p in parents]
    for front in non_dominated_sort(final):
        crowding_distance([final[i] for i in front])
    return EvolutionResult(final, history, seed_ind, len(cache.cache), cfg)


def best_tradeoff(front: Sequence[Individual], seed_objectives: Objectives) -> Individual:
    """Member closest to the origin after dividing each objective by the seed's value."""
    if not front:
        raise ConstraintError("front is empty")
    scale = seed_objectives.as_tuple()
    if any(s <= 0 for s in scale):
        raise ConstraintError(f"cannot normalise by non-positive seed objectives {scale}")
    return min(front, key=lambda ind: (normalized_distance(ind.objectives, seed_objectives),
                                       ind.objectives.D_wc, ind.chromosome.genes))


def normalized_distance(obj: Objectives, seed_objectives: Objectives) -> float:
    return math.sqrt(sum((v / s) ** 2 for v, s in zip(obj.as_tuple(), seed_objectives.as_tuple())))
