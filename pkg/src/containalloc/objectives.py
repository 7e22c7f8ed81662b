"""The four allocation objectives, the capacity constraint and SOV scalarization.

All objectives are minimized. Infeasible plans get ``inf`` on every objective,
which orders them after any feasible plan under Pareto dominance.
"""

from __future__ import annotations

import math
from typing import NamedTuple, Sequence

import numpy as np

from containalloc.model import AllocationPlan, Scenario, flatten

OBJECTIVES = ("thresholdDistance", "clusterBalance", "systemFailure", "networkDistance")
INF = math.inf


class FitnessTuple(NamedTuple):
    thresholdDistance: float
    clusterBalance: float
    systemFailure: float
    networkDistance: float
    feasible: bool = True

    @property
    def values(self) -> tuple[float, float, float, float]:
        return (self.thresholdDistance, self.clusterBalance, self.systemFailure, self.networkDistance)

    @classmethod
    def infeasible(cls) -> "FitnessTuple":
        return cls(INF, INF, INF, INF, False)


class _Flat:
    """Per-container arrays shared by the objective functions."""

    __slots__ = ("scales", "owner", "machine", "loads")

    def __init__(self, plan: AllocationPlan, scenario: Scenario):
        self.scales, self.owner, self.machine = flatten(plan)
        if self.machine.size:
            per_container = scenario.total_load[self.owner] / self.scales[self.owner]
            self.loads = np.bincount(self.machine, weights=per_container, minlength=scenario.n_machines)
        else:
            self.loads = np.zeros(scenario.n_machines)


def _threshold(flat: _Flat, scenario: Scenario) -> float:
    if not flat.scales.size:
        return 0.0
    return float(np.abs(scenario.total_load / flat.scales - scenario.thresholds).sum())


def _balance(flat: _Flat, scenario: Scenario) -> float:
    used = np.zeros(scenario.n_machines, dtype=bool)
    used[flat.machine] = True
    if used.sum() <= 1:
        return 0.0
    usage = flat.loads[used] / scenario.topology.caps[used]
    return float(np.std(usage))


def _failure(flat: _Flat, scenario: Scenario) -> float:
    if not flat.machine.size:
        return 0.0
    n_pm = scenario.n_machines
    keys, counts = np.unique(flat.owner * n_pm + flat.machine, return_counts=True)
    svc, pm = np.divmod(keys, n_pm)
    terms = scenario.topology.fails[pm] + scenario.ms_fails[svc] ** counts
    # keys are sorted by service, and every service has at least one replica
    starts = np.flatnonzero(np.r_[True, svc[1:] != svc[:-1]])
    return float(np.multiply.reduceat(terms, starts).sum())


def _network(plan: AllocationPlan, scenario: Scenario) -> float:
    dist = scenario.topology.dist
    pairs = sum(
        len(plan.alloc[i]) * sum(len(plan.alloc[p]) for p in providers)
        for i, providers in enumerate(scenario.providers)
    )
    if pairs > _PAIR_GATHER_LIMIT:
        return _network_by_counts(plan, scenario)
    arrays = [np.asarray(lst, dtype=np.int64) for lst in plan.alloc]
    total = 0.0
    for i, providers in enumerate(scenario.providers):
        if not providers:
            continue
        provider_pms = np.concatenate([arrays[p] for p in providers])
        total += float(dist[arrays[i][:, None], provider_pms[None, :]].mean())
    return total


# above this many consumer/provider pairs, per-machine replica counts are cheaper
_PAIR_GATHER_LIMIT = 20_000


def _network_by_counts(plan: AllocationPlan, scenario: Scenario) -> float:
    scales, owner, machine = flatten(plan)
    used, col = np.unique(machine, return_inverse=True)
    counts = np.zeros((len(scales), len(used)))
    np.add.at(counts, (owner, col), 1.0)
    # pair_dist[i, j] = sum of distances over container pairs of services i and j
    pair_dist = counts @ scenario.topology.dist[np.ix_(used, used)] @ counts.T
    total = 0.0
    for i, providers in enumerate(scenario.providers):
        if not providers:
            continue
        p = list(providers)
        total += float(pair_dist[i, p].sum()) / (scales[i] * scales[p].sum())
    return total


def threshold_distance(plan: AllocationPlan, scenario: Scenario) -> float:
    """Sum over microservices of ``|per-container load - thr|``."""
    return _threshold(_Flat(plan, scenario), scenario)


def cluster_balance(plan: AllocationPlan, scenario: Scenario) -> float:
    """Population std of load/cap over machines hosting at least one container."""
    return _balance(_Flat(plan, scenario), scenario)


def system_failure(plan: AllocationPlan, scenario: Scenario) -> float:
    """Sum over microservices of prod over hosting machines of ``fail_pm + fail_ms**replicas``."""
    return _failure(_Flat(plan, scenario), scenario)


def network_distance(plan: AllocationPlan, scenario: Scenario) -> float:
    """Sum over consumers of the mean distance over consumer/provider container pairs."""
    return _network(plan, scenario)


def is_feasible(plan: AllocationPlan, scenario: Scenario) -> bool:
    return bool(np.all(_Flat(plan, scenario).loads < scenario.topology.caps))


def evaluate(plan: AllocationPlan, scenario: Scenario) -> FitnessTuple:
    flat = _Flat(plan, scenario)
    if not np.all(flat.loads < scenario.topology.caps):
        return FitnessTuple.infeasible()
    return FitnessTuple(
        _threshold(flat, scenario),
        _balance(flat, scenario),
        _failure(flat, scenario),
        _network(plan, scenario),
        True,
    )


def used_machine_count(plan: AllocationPlan) -> int:
    return len({m for lst in plan.alloc for m in lst})


def sov(fitness: FitnessTuple, mins: Sequence[float], maxs: Sequence[float]) -> float:
    """Equal-weight mean of min-max normalized objectives.

    An objective whose range is empty (``max == min``) contributes 0.
    """
    if not fitness.feasible:
        raise ValueError("SOV is undefined for an infeasible fitness")
    total = 0.0
    for value, lo, hi in zip(fitness.values, mins, maxs):
        if lo > hi:
            raise ValueError(f"normalization bounds reversed: min {lo} > max {hi}")
        if hi > lo:
            total += 0.25 * (value - lo) / (hi - lo)
    return total
