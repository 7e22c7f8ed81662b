"""NSGA-II over allocation plans.

The chromosome is an :class:`~containalloc.model.AllocationPlan`. Offspring
are produced by per-list single-point crossover followed, with probability
``mutation_prob``, by one of three mutations (swap, shrink, growth) chosen
uniformly. Parents and offspring are merged and the best half, by front rank
and then crowding distance, survives.

A single :class:`numpy.random.Generator` drives every random decision, so a
seed reproduces a whole run.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from containalloc.model import AllocationPlan, Scenario
from containalloc.objectives import FitnessTuple, evaluate, sov, used_machine_count

# ---------------------------------------------------------------------------
# parameters and records


@dataclass(frozen=True)
class GAParams:
    population_size: int = 200
    generations: int = 300
    mutation_prob: float = 0.25
    crossover_prob: float = 1.0
    max_init_scale: int = 10
    rng_seed: int = 0
    # Longest allowed allocation list; None caps scale at the cluster size.
    max_scale: int | None = None

    def scale_cap(self, scenario: Scenario) -> int:
        return self.max_scale if self.max_scale is not None else max(1, scenario.n_machines)

    def __post_init__(self) -> None:
        if self.population_size < 2 or self.population_size % 2:
            raise ValueError("population_size must be even and >= 2")
        if self.generations < 1:
            raise ValueError("generations must be >= 1")
        for name in ("mutation_prob", "crossover_prob"):
            p = getattr(self, name)
            if not 0.0 <= p <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1]")
        if self.max_init_scale < 1:
            raise ValueError("max_init_scale must be >= 1")
        if self.max_scale is not None and self.max_scale < 1:
            raise ValueError("max_scale must be >= 1")


@dataclass
class Individual:
    plan: AllocationPlan
    fitness: FitnessTuple
    rank: int = -1
    crowding: float = 0.0


@dataclass(frozen=True)
class GenerationRecord:
    generation: int
    mins: tuple[float, float, float, float]
    means: tuple[float, float, float, float]
    min_sov: tuple[float, float, float, float]
    used_machines_min: int
    used_machines_mean: float
    containers_min: int
    containers_mean: float
    front_size: int


@dataclass
class GenerationTrace:
    records: list[GenerationRecord] = field(default_factory=list)

    def append(self, record: GenerationRecord) -> None:
        self.records.append(record)

    def __len__(self) -> int:
        return len(self.records)

    def __getitem__(self, i: int) -> GenerationRecord:
        return self.records[i]

    def series(self, kind: str, objective: int) -> list[float]:
        attr = {"min": "mins", "mean": "means", "minSOV": "min_sov"}[kind]
        return [getattr(r, attr)[objective] for r in self.records]


# ---------------------------------------------------------------------------
# chromosome operators


def random_plan(
    scenario: Scenario,
    max_init_scale: int,
    rng: np.random.Generator,
    max_scale: int | None = None,
) -> AllocationPlan:
    if max_init_scale < 1:
        raise ValueError("max_init_scale must be >= 1")
    hi = max_init_scale if max_scale is None else min(max_init_scale, max_scale)
    scales = rng.integers(1, hi + 1, size=scenario.n_microservices)
    pms = rng.integers(0, scenario.n_machines, size=int(scales.sum())).tolist()
    lists, at = [], 0
    for s in scales.tolist():
        lists.append(tuple(pms[at : at + s]))
        at += s
    return AllocationPlan(tuple(lists))


def crossover(
    parent1: AllocationPlan, parent2: AllocationPlan, rng: np.random.Generator
) -> tuple[AllocationPlan, AllocationPlan]:
    """Single-point crossover applied independently to every allocation list.

    With cut point ``r`` (1-based, at most the shorter list's length) the
    first child takes ``parent1[:r] + parent2[r:]`` and the second
    ``parent2[:r] + parent1[r:]``.
    """
    if len(parent1) != len(parent2):
        raise ValueError("parents have different numbers of allocation lists")
    if not len(parent1):
        return parent1, parent2
    shortest = np.fromiter(
        (min(len(a), len(b)) for a, b in zip(parent1.alloc, parent2.alloc)), dtype=np.int64
    )
    cuts = rng.integers(1, shortest + 1).tolist()
    c1, c2 = [], []
    for a, b, r in zip(parent1.alloc, parent2.alloc, cuts):
        c1.append(a[:r] + b[r:])
        c2.append(b[:r] + a[r:])
    return AllocationPlan(tuple(c1)), AllocationPlan(tuple(c2))


def mutate_swap(plan: AllocationPlan, rng: np.random.Generator) -> AllocationPlan:
    """Shuffle the allocation lists across microservice positions."""
    order = rng.permutation(len(plan))
    return AllocationPlan(tuple(plan.alloc[j] for j in order))


def mutate_shrink(plan: AllocationPlan, rng: np.random.Generator) -> AllocationPlan:
    """Drop between 1 and ``L - 1`` random entries from every list of length ``L >= 2``."""
    out = []
    for lst in plan.alloc:
        n = len(lst)
        if n < 2:
            out.append(lst)
            continue
        k = int(rng.integers(1, n))
        keep = np.sort(rng.choice(n, size=n - k, replace=False))
        out.append(tuple(lst[j] for j in keep))
    return AllocationPlan(tuple(out))


def mutate_growth(
    plan: AllocationPlan,
    rng: np.random.Generator,
    n_machines: int,
    max_scale: int | None = None,
) -> AllocationPlan:
    """Append between 1 and ``L`` random machine ids to every list of length ``L``.

    With ``max_scale`` set, lists stop growing at that length.
    """
    out = []
    for lst in plan.alloc:
        n = len(lst)
        hi = n if max_scale is None else min(n, max_scale - n)
        if hi < 1:
            out.append(lst)
            continue
        k = int(rng.integers(1, hi + 1))
        out.append(lst + tuple(rng.integers(0, n_machines, size=k).tolist()))
    return AllocationPlan(tuple(out))


def mutate(
    plan: AllocationPlan,
    rng: np.random.Generator,
    n_machines: int,
    max_scale: int | None = None,
) -> AllocationPlan:
    op = int(rng.integers(3))
    if op == 0:
        return mutate_swap(plan, rng)
    if op == 1:
        return mutate_shrink(plan, rng)
    return mutate_growth(plan, rng, n_machines, max_scale)


# ---------------------------------------------------------------------------
# ranking


def dominates(f1: FitnessTuple, f2: FitnessTuple) -> bool:
    """Pareto dominance for minimization; two infeasible tuples never dominate."""
    if not f2.feasible:
        return f1.feasible
    if not f1.feasible:
        return False
    strict = False
    for a, b in zip(f1.values, f2.values):
        if a > b:
            return False
        if a < b:
            strict = True
    return strict


def objective_matrix(individuals: Sequence[Individual]) -> np.ndarray:
    if not individuals:
        return np.zeros((0, 4))
    return np.array([ind.fitness.values for ind in individuals], dtype=float)


def fast_non_dominated_sort(population: Sequence[Individual]) -> list[list[int]]:
    """Assign ``rank`` to every individual and return the fronts as index lists.

    Fronts are peeled iteratively: rank 0 is the non-dominated set, rank ``n``
    the non-dominated set once ranks below ``n`` are removed.
    """
    f = objective_matrix(population)
    n = len(f)
    if n == 0:
        return []
    # inf rows (infeasible) compare as equal to each other and worse than any finite row
    le = (f[:, None, :] <= f[None, :, :]).all(axis=2)
    lt = (f[:, None, :] < f[None, :, :]).any(axis=2)
    dom = le & lt
    dominated_by = dom.sum(axis=0)
    fronts: list[list[int]] = []
    current = np.flatnonzero(dominated_by == 0)
    rank = 0
    while current.size:
        fronts.append(current.tolist())
        for i in current:
            population[i].rank = rank
        dominated_by = dominated_by - dom[current].sum(axis=0)
        dominated_by[current] = -1
        current = np.flatnonzero(dominated_by == 0)
        rank += 1
    return fronts


def crowding_distance(front: Sequence[Individual]) -> list[float]:
    """Set and return the crowding distance of each member of one front."""
    n = len(front)
    if n == 0:
        return []
    if n <= 2:
        for ind in front:
            ind.crowding = math.inf
        return [math.inf] * n
    f = objective_matrix(front)
    dist = np.zeros(n)
    for m in range(f.shape[1]):
        order = np.argsort(f[:, m], kind="stable")
        col = f[order, m]
        lo, hi = col[0], col[-1]
        dist[order[0]] = dist[order[-1]] = math.inf
        if hi == lo or not math.isfinite(hi - lo):
            continue
        dist[order[1:-1]] += (col[2:] - col[:-2]) / (hi - lo)
    out = dist.tolist()
    for ind, d in zip(front, out):
        ind.crowding = d
    return out


def rank_and_sort(population: list[Individual]) -> list[Individual]:
    """Rank, crowd and order by (rank, -crowding, insertion order)."""
    for front in fast_non_dominated_sort(population):
        crowding_distance([population[i] for i in front])
    ranks = np.array([ind.rank for ind in population])
    crowd = np.array([ind.crowding for ind in population])
    order = np.lexsort((np.arange(len(population)), -crowd, ranks))
    return [population[i] for i in order]


def binary_tournament(population: Sequence[Individual], rng: np.random.Generator) -> Individual:
    """Draw two positions with replacement and keep the earlier one.

    ``population`` must already be ordered best-first.
    """
    if not population:
        raise ValueError("cannot select from an empty population")
    a, b = rng.integers(0, len(population), size=2)
    return population[min(int(a), int(b))]


# ---------------------------------------------------------------------------
# generational loop


Evaluator = Callable[[Sequence[AllocationPlan]], list[FitnessTuple]]


def _serial_evaluator(scenario: Scenario) -> Evaluator:
    return lambda plans: [evaluate(p, scenario) for p in plans]


def pareto_front(population: Sequence[Individual]) -> list[Individual]:
    return [ind for ind in population if ind.rank == 0]


def select_min_sov(front: Sequence[Individual]) -> Individual:
    """Front member with the smallest SOV, bounds taken over the feasible front."""
    if not front:
        raise ValueError("cannot select from an empty front")
    feasible = [ind for ind in front if ind.fitness.feasible]
    if not feasible:
        raise ValueError("front has no feasible individual")
    f = objective_matrix(feasible)
    mins, maxs = f.min(axis=0), f.max(axis=0)
    best, best_sov = feasible[0], math.inf
    for ind in feasible:
        s = sov(ind.fitness, mins, maxs)
        if s < best_sov:
            best, best_sov = ind, s
    return best


def trace_record(generation: int, population: Sequence[Individual]) -> GenerationRecord:
    front = pareto_front(population)
    f = objective_matrix(front)
    used = [used_machine_count(ind.plan) for ind in front]
    containers = [ind.plan.n_containers for ind in front]
    try:
        rep = select_min_sov(front).fitness.values
    except ValueError:
        rep = (math.inf,) * 4
    return GenerationRecord(
        generation=generation,
        mins=tuple(float(v) for v in f.min(axis=0)),
        means=tuple(float(v) for v in f.mean(axis=0)),
        min_sov=tuple(float(v) for v in rep),
        used_machines_min=min(used),
        used_machines_mean=float(np.mean(used)),
        containers_min=min(containers),
        containers_mean=float(np.mean(containers)),
        front_size=len(front),
    )


def initial_population(
    scenario: Scenario,
    params: GAParams,
    rng: np.random.Generator,
    evaluator: Evaluator | None = None,
) -> list[Individual]:
    evaluator = evaluator or _serial_evaluator(scenario)
    plans = [
        random_plan(scenario, params.max_init_scale, rng, params.scale_cap(scenario))
        for _ in range(params.population_size)
    ]
    pop = [Individual(p, f) for p, f in zip(plans, evaluator(plans))]
    return rank_and_sort(pop)


def make_offspring(
    population: Sequence[Individual],
    scenario: Scenario,
    params: GAParams,
    rng: np.random.Generator,
) -> list[AllocationPlan]:
    children: list[AllocationPlan] = []
    n_pm = scenario.n_machines
    cap = params.scale_cap(scenario)
    for _ in range(params.population_size // 2):
        p1 = binary_tournament(population, rng).plan
        p2 = binary_tournament(population, rng).plan
        if params.crossover_prob >= 1.0 or rng.random() < params.crossover_prob:
            c1, c2 = crossover(p1, p2, rng)
        else:
            c1, c2 = p1, p2
        for child in (c1, c2):
            if rng.random() < params.mutation_prob:
                child = mutate(child, rng, n_pm, cap)
            children.append(child)
    return children


def evolve_generation(
    population: list[Individual],
    scenario: Scenario,
    params: GAParams,
    rng: np.random.Generator,
    generation: int = 1,
    evaluator: Evaluator | None = None,
) -> tuple[list[Individual], GenerationRecord]:
    """One elitist step: N children, merge with the N parents, keep the best N."""
    evaluator = evaluator or _serial_evaluator(scenario)
    plans = make_offspring(population, scenario, params, rng)
    children = [Individual(p, f) for p, f in zip(plans, evaluator(plans))]
    merged = rank_and_sort(list(population) + children)
    survivors = merged[: params.population_size]
    # re-rank so ranks and crowding describe the surviving population
    survivors = rank_and_sort(survivors)
    return survivors, trace_record(generation, survivors)


def run(
    scenario: Scenario,
    params: GAParams,
    evaluator: Evaluator | None = None,
    on_generation: Callable[[int, list[Individual]], None] | None = None,
) -> tuple[list[Individual], GenerationTrace]:
    """Run the full optimization; return the final Pareto front and the trace.

    ``on_generation`` is called after generation 0 (the random population) and
    after every evolution step.
    """
    rng = np.random.default_rng(params.rng_seed)
    population = initial_population(scenario, params, rng, evaluator)
    trace = GenerationTrace()
    trace.append(trace_record(0, population))
    if on_generation:
        on_generation(0, population)
    for g in range(1, params.generations + 1):
        population, record = evolve_generation(population, scenario, params, rng, g, evaluator)
        trace.append(record)
        if on_generation:
            on_generation(g, population)
    return pareto_front(population), trace
