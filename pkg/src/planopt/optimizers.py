"""Multi-objective optimizers over a parameter space: random, NSGA-II, novelty search.

Every optimizer talks to the system only through a :class:`FitnessOracle`,
which logs each evaluation; the budget is the number of oracle calls.
The Gaussian-process optimizer lives in :mod:`planopt.bayes` and is reachable
through :func:`optimize` as ``"bogp"``.
"""

from __future__ import annotations

import json
import math
import time
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .pareto import ObjectiveVector, pareto_front
from .space import Configuration, ParameterSpace, crossover, mutate, sample_uniform
from .surrogate import BlackBoxSystem, Context, make_rng

TECHNIQUES = ("random", "nsga2", "novelty", "bogp")


@dataclass(frozen=True)
class Evaluation:
    index: int
    config: Configuration
    objectives: ObjectiveVector
    wall_clock: float  # seconds spent inside the objective function


class FitnessOracle:
    """Wraps an objective function and keeps an append-only evaluation log."""

    def __init__(self, fn: Callable[[Configuration], Sequence[float]],
                 clock: Callable[[], float] = time.perf_counter):
        self.fn = fn
        self.clock = clock
        self.log: list[Evaluation] = []

    def __call__(self, cfg: Configuration) -> ObjectiveVector:
        start = self.clock()
        obj = ObjectiveVector(*(float(v) for v in self.fn(cfg)))
        self.log.append(Evaluation(len(self.log), tuple(cfg), obj, self.clock() - start))
        return obj

    def __len__(self) -> int:
        return len(self.log)


def system_oracle(
    system: BlackBoxSystem,
    ctx: Context,
    samples_per_eval: int = 200,
    aggregation: str = "median",
    seed=0,
) -> FitnessOracle:
    """Oracle that runs ``system`` at ``ctx`` and aggregates the samples.

    The i-th call is seeded with ``(seed, cars, i)``, so a replay of the same
    call sequence sees identical noise.
    """
    if aggregation not in ("median", "mean"):
        raise ValueError(f"unknown aggregation {aggregation!r}")
    agg = np.median if aggregation == "median" else np.mean
    counter = [0]

    def fn(cfg):
        obs = system.evaluate(cfg, ctx, samples_per_eval,
                              seed=(int(seed), ctx.number_of_cars, counter[0]))
        counter[0] += 1
        return float(agg(obs.trip_overheads)), float(agg(obs.routing_costs))

    oracle = FitnessOracle(fn)
    oracle.samples_per_eval = samples_per_eval
    oracle.aggregation = aggregation
    return oracle


@dataclass
class OptimizerConfig:
    budget: int = 100
    population_size: int = 10
    generations: int = 10
    offspring_size: int = 10
    crossover_rate: float = 0.7
    mutation_rate: float = 0.3
    novelty_archive_fraction: float = 0.20
    novelty_weights: tuple[float, float] = (0.5, 0.5)
    init_design_size: int = 10
    candidate_pool_size: int = 1000
    gain: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.budget < 1:
            raise ValueError("budget must be >= 1")
        if self.population_size < 1 or self.offspring_size < 1:
            raise ValueError("population and offspring sizes must be >= 1")
        if not (0 <= self.crossover_rate <= 1 and 0 <= self.mutation_rate <= 1):
            raise ValueError("rates must be in [0, 1]")
        if self.crossover_rate + self.mutation_rate > 1 + 1e-12:
            raise ValueError("crossover_rate + mutation_rate must not exceed 1")
        if not 0 < self.novelty_archive_fraction <= 1:
            raise ValueError("novelty_archive_fraction must be in (0, 1]")
        self.novelty_weights = tuple(self.novelty_weights)


@dataclass
class OptimizationResult:
    front: list  # [(configuration, ObjectiveVector)], non-dominated, sorted
    history: list[Evaluation]
    technique: str
    wall_clock_total: float
    extra: dict = field(default_factory=dict)

    def objectives(self) -> list[ObjectiveVector]:
        return [e.objectives for e in self.history]

    def log_jsonl(self) -> str:
        return evaluation_log_jsonl(self.history, self.technique)


def evaluation_log_jsonl(history: Sequence[Evaluation], technique: str,
                         **extra_fields) -> str:
    lines = []
    for e in history:
        record = {
            "eval_index": e.index,
            "technique": technique,
            "config": list(e.config),
            "trip_overhead": e.objectives.trip_overhead,
            "routing_cost": e.objectives.routing_cost,
            "wall_clock_ms": e.wall_clock * 1000.0,
        }
        record.update(extra_fields)
        lines.append(json.dumps(record))
    return "".join(line + "\n" for line in lines)


def _result(technique, oracle, start_index, t0, **extra) -> OptimizationResult:
    history = [
        Evaluation(e.index - start_index, e.config, e.objectives, e.wall_clock)
        for e in oracle.log[start_index:]
    ]
    front = pareto_front([(e.config, e.objectives) for e in history])
    return OptimizationResult(front, history, technique, time.perf_counter() - t0, extra)


# -- non-dominated sorting --------------------------------------------------------


def fast_nondominated_sort(points: Sequence[Sequence[float]]) -> list[list[int]]:
    """Indices of ``points`` grouped into successive non-dominated fronts."""
    n = len(points)
    if n == 0:
        return []
    objs = np.asarray(points, dtype=float).reshape(n, -1)
    le = (objs[:, None, :] <= objs[None, :, :]).all(axis=-1)
    lt = (objs[:, None, :] < objs[None, :, :]).any(axis=-1)
    dom = le & lt  # dom[i, j]: i dominates j
    counts = dom.sum(axis=0)
    fronts = []
    current = [i for i in range(n) if counts[i] == 0]
    while current:
        fronts.append(current)
        nxt = []
        for i in current:
            for j in np.flatnonzero(dom[i]):
                counts[j] -= 1
                if counts[j] == 0:
                    nxt.append(int(j))
        current = sorted(nxt)
    return fronts


def crowding_distance(front: Sequence[Sequence[float]]) -> np.ndarray:
    """Crowding distance of each member of a mutually non-dominated set.

    Boundary points get infinity; an objective with zero range adds nothing.
    """
    objs = np.asarray(front, dtype=float).reshape(len(front), -1)
    n = len(objs)
    if n <= 2:
        return np.full(n, np.inf)
    dist = np.zeros(n)
    for m in range(objs.shape[1]):
        order = np.argsort(objs[:, m], kind="stable")
        lo, hi = objs[order[0], m], objs[order[-1], m]
        dist[order[0]] = dist[order[-1]] = np.inf
        if hi == lo:
            continue
        gaps = (objs[order[2:], m] - objs[order[:-2], m]) / (hi - lo)
        dist[order[1:-1]] += gaps
    return dist


@dataclass(frozen=True)
class Individual:
    index: int
    config: Configuration
    objectives: ObjectiveVector


def rank_and_crowding(pop: Sequence[Individual]) -> tuple[np.ndarray, np.ndarray]:
    objs = [ind.objectives for ind in pop]
    rank = np.zeros(len(pop), dtype=int)
    crowd = np.zeros(len(pop))
    for r, members in enumerate(fast_nondominated_sort(objs)):
        rank[members] = r
        crowd[members] = crowding_distance([objs[i] for i in members])
    return rank, crowd


def environmental_selection(pool: Sequence[Individual], size: int) -> list[Individual]:
    """Best ``size`` members of ``pool`` by (rank, -crowding), stable on ties."""
    rank, crowd = rank_and_crowding(pool)
    order = sorted(range(len(pool)), key=lambda i: (rank[i], -crowd[i], i))
    return [pool[i] for i in order[:size]]


def _tournament(keys: Sequence, rng: np.random.Generator) -> int:
    """Binary tournament; the smaller key wins, the first drawn on ties."""
    i, j = (int(v) for v in rng.integers(len(keys), size=2))
    return j if keys[j] < keys[i] else i


def _variation(space, parents, keys, cfg: OptimizerConfig, rng) -> Configuration:
    """One offspring: crossover (child 1), else one-gene mutation, else a clone."""
    r = rng.random()
    first = parents[_tournament(keys, rng)].config
    if r < cfg.crossover_rate:
        second = parents[_tournament(keys, rng)].config
        return crossover(space, first, second, rng)[0]
    if r < cfg.crossover_rate + cfg.mutation_rate:
        gene = int(rng.integers(len(space)))
        return mutate(space, first, 1.0, rng, genes=[gene])
    return tuple(first)


def _evaluate(oracle: FitnessOracle, cfg: Configuration, start: int) -> Individual:
    obj = oracle(cfg)
    return Individual(len(oracle.log) - 1 - start, tuple(cfg), obj)


def _initial_population(space, oracle, cfg, rng, start, limit) -> list[Individual]:
    n = min(cfg.population_size, limit)
    return [_evaluate(oracle, sample_uniform(space, rng), start) for _ in range(n)]


# -- techniques -----------------------------------------------------------------


def random_search(space: ParameterSpace, oracle: FitnessOracle,
                  cfg: OptimizerConfig) -> OptimizationResult:
    t0 = time.perf_counter()
    start = len(oracle.log)
    rng = make_rng(cfg.seed)
    for _ in range(cfg.budget):
        oracle(sample_uniform(space, rng))
    return _result("random", oracle, start, t0)


def nsga2_step(space, population: list[Individual], oracle: FitnessOracle,
               cfg: OptimizerConfig, rng, start: int = 0,
               max_offspring: int | None = None) -> list[Individual]:
    """One NSGA-II generation: tournament, variation, elitist survival."""
    rank, crowd = rank_and_crowding(population)
    keys = [(rank[i], -crowd[i]) for i in range(len(population))]
    n_off = cfg.offspring_size if max_offspring is None else min(cfg.offspring_size, max_offspring)
    offspring = []
    for _ in range(n_off):
        child = _variation(space, population, keys, cfg, rng)
        offspring.append(_evaluate(oracle, child, start))
    return environmental_selection(population + offspring, cfg.population_size)


def nsga2(space: ParameterSpace, oracle: FitnessOracle,
          cfg: OptimizerConfig) -> OptimizationResult:
    """NSGA-II until the budget is spent.

    The initial population counts as the first generation, so the default
    configuration (10 x 10) evaluates exactly 100 configurations.
    """
    t0 = time.perf_counter()
    start = len(oracle.log)
    rng = make_rng(cfg.seed)
    population = _initial_population(space, oracle, cfg, rng, start, cfg.budget)
    generations = 1
    while len(oracle.log) - start < cfg.budget:
        remaining = cfg.budget - (len(oracle.log) - start)
        population = nsga2_step(space, population, oracle, cfg, rng, start, remaining)
        generations += 1
    return _result("nsga2", oracle, start, t0, generations=generations)


@dataclass(frozen=True)
class Normalizer:
    """Per-parameter ranges and per-objective observed ranges for novelty scores."""

    lower: np.ndarray
    span: np.ndarray
    obj_min: np.ndarray
    obj_max: np.ndarray

    @classmethod
    def build(cls, space: ParameterSpace, objectives: Sequence[Sequence[float]]) -> "Normalizer":
        objs = np.asarray(objectives, dtype=float).reshape(-1, 2)
        return cls(space.lower, space.upper - space.lower, objs.min(axis=0), objs.max(axis=0))

    def scalarized(self, fitness: Sequence[float]) -> float:
        """Mean of the min-max normalized objectives (0 best, 1 worst)."""
        rng = self.obj_max - self.obj_min
        f = np.asarray(fitness, dtype=float)
        norm = np.where(rng > 0, (f - self.obj_min) / np.where(rng > 0, rng, 1.0), 0.0)
        return float(norm.mean())


def novelty_metric(genome: Sequence[float], others: Sequence[Sequence[float]],
                   fitness: Sequence[float], weights: Sequence[float],
                   normalizer: Normalizer) -> float:
    """Weighted sum of mean normalized Manhattan distance and normalized fitness.

    The distance to each other genome is the sum of per-parameter absolute
    differences divided by the parameter ranges, averaged over parameters;
    it is then averaged over ``others`` (1 when there are none).
    """
    w_d, w_f = weights
    if len(others) == 0:
        diversity = 1.0
    else:
        g = (np.asarray(genome, dtype=float) - normalizer.lower) / normalizer.span
        o = (np.asarray(others, dtype=float) - normalizer.lower) / normalizer.span
        diversity = float(np.abs(o - g).mean(axis=1).mean())
    return w_d * diversity + w_f * (1.0 - normalizer.scalarized(fitness))


@dataclass(frozen=True)
class Scored:
    individual: Individual
    score: float

    @property
    def index(self) -> int:
        return self.individual.index


def novelty_archive_update(archive: Sequence[Scored], population_scored: Sequence[Scored],
                           k_fraction: float, total_evaluated: int) -> list[Scored]:
    """Keep the ``ceil(k_fraction * total_evaluated)`` highest-scoring genomes.

    Candidates are the archive plus the scored population (fresh scores win
    for genomes present in both); ties go to the earlier evaluation.
    """
    if not 0 < k_fraction <= 1:
        raise ValueError("k_fraction must be in (0, 1]")
    pool = {s.index: s for s in archive}
    pool.update({s.index: s for s in population_scored})
    size = math.ceil(k_fraction * total_evaluated - 1e-9)
    ranked = sorted(pool.values(), key=lambda s: (-s.score, s.index))
    return ranked[:size]


def _score_all(individuals: Sequence[Individual], normalizer: Normalizer,
               weights) -> list[Scored]:
    configs = [ind.config for ind in individuals]
    scored = []
    for i, ind in enumerate(individuals):
        others = configs[:i] + configs[i + 1:]
        scored.append(Scored(ind, novelty_metric(ind.config, others, ind.objectives,
                                                 weights, normalizer)))
    return scored


def novelty_search(space: ParameterSpace, oracle: FitnessOracle,
                   cfg: OptimizerConfig) -> OptimizationResult:
    """Novelty search with an archive of the top fraction of all evaluated genomes.

    Parents are drawn by binary tournament on novelty over population and
    archive; the next population is the most novel ``population_size`` of
    population and offspring. The reported front covers everything evaluated.
    """
    t0 = time.perf_counter()
    start = len(oracle.log)
    rng = make_rng(cfg.seed)
    population = _initial_population(space, oracle, cfg, rng, start, cfg.budget)
    evaluated = list(population)
    archive: list[Scored] = []
    weights = cfg.novelty_weights

    def rescore(members):
        normalizer = Normalizer.build(space, [e.objectives for e in evaluated])
        return _score_all(members, normalizer, weights)

    archive = novelty_archive_update([], rescore(population), cfg.novelty_archive_fraction,
                                     len(evaluated))
    while len(evaluated) < cfg.budget:
        in_pop = {ind.index for ind in population}
        pool = population + [s.individual for s in archive if s.index not in in_pop]
        scored = rescore(pool)
        keys = [-s.score for s in scored]
        n_off = min(cfg.offspring_size, cfg.budget - len(evaluated))
        offspring = []
        for _ in range(n_off):
            child = _variation(space, pool, keys, cfg, rng)
            offspring.append(_evaluate(oracle, child, start))
        evaluated.extend(offspring)

        candidates = population + offspring
        in_cand = {ind.index for ind in candidates}
        everyone = candidates + [s.individual for s in archive if s.index not in in_cand]
        scores = {s.index: s for s in rescore(everyone)}
        ranked = sorted(candidates, key=lambda ind: (-scores[ind.index].score, ind.index))
        population = ranked[: cfg.population_size]
        archive = novelty_archive_update(
            [scores[s.index] for s in archive], [scores[i.index] for i in candidates],
            cfg.novelty_archive_fraction, len(evaluated),
        )
    return _result("novelty", oracle, start, t0,
                   archive=[s.index for s in archive])


def optimize(technique: str, space: ParameterSpace, oracle: FitnessOracle,
             cfg: OptimizerConfig | None = None) -> OptimizationResult:
    """Run one of :data:`TECHNIQUES` for exactly ``cfg.budget`` oracle calls."""
    cfg = cfg or OptimizerConfig()
    if technique == "random":
        return random_search(space, oracle, cfg)
    if technique == "nsga2":
        return nsga2(space, oracle, cfg)
    if technique == "novelty":
        return novelty_search(space, oracle, cfg)
    if technique == "bogp":
        from .bayes import bogp_optimize

        return bogp_optimize(space, oracle, cfg.budget, cfg.init_design_size, cfg.seed,
                             candidate_pool_size=cfg.candidate_pool_size, gain=cfg.gain)
    raise ValueError(f"unknown technique {technique!r}; expected one of {TECHNIQUES}")
