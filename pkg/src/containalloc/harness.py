"""Experiment catalog and runner.

Builds the Socks Shop scenarios of the experiment grid (4 cluster sizes x 3
workloads x 1 or 2 applications), runs NSGA-II on each, schedules the minSOV
solution's scale levels with the least-requested baseline, and writes
plot-ready CSV files.
"""

from __future__ import annotations

import csv
import itertools
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from containalloc.baseline import InfeasibleScheduleError, schedule_least_requested
from containalloc.model import (
    AllocationPlan,
    ApplicationSpec,
    MicroserviceSpec,
    Scenario,
    build_two_rack_topology,
)
from containalloc.nsga2 import (
    GAParams,
    GenerationRecord,
    GenerationTrace,
    Individual,
    fast_non_dominated_sort,
    run,
    select_min_sov,
)
from containalloc.objectives import OBJECTIVES, FitnessTuple, evaluate, used_machine_count

log = logging.getLogger(__name__)

GRID_MACHINES = (250, 300, 350, 400)
GRID_UREQ = (1.0, 1.5, 2.0)
GRID_APPS = (1, 2)
CAPACITY_CLASSES = (100.0, 200.0, 400.0, 800.0)
MACHINE_FAIL = 0.025
INTRA_RACK_DIST = 1.0
INTER_RACK_DIST = 4.0
SCATTER_GENERATIONS = (0, 10, 20, 30, 40, 50)
BRUTE_FORCE_LIMIT = 10**7

# name, consumes, msreq, res, thr, fail
SOCKS_SHOP = (
    ("worker", (), 3.2, 0.1, 1.0, 0.04),
    ("shipping", ("rabbitmq",), 1.8, 11.7, 25.0, 0.02),
    ("queue-master", ("shipping", "payment"), 3.2, 20.0, 200.0, 0.02),
    ("payment", (), 1.4, 0.1, 10.0, 0.0002),
    ("orders", ("shipping", "payment", "cart", "accounts", "weavedb"), 2.3, 27.1, 80.0, 0.02),
    ("login", (), 0.8, 2.8, 30.0, 0.0001),
    ("front-end", ("orders", "login", "catalogue"), 15.1, 3.8, 50.0, 0.003),
    ("edge-router", ("front-end",), 15.1, 0.5, 10.0, 0.0001),
    ("catalogue", (), 12.0, 0.2, 3.0, 0.0006),
    ("cart", ("weavedb",), 3.2, 41.3, 100.0, 0.02),
    ("accounts", ("weavedb",), 0.1, 45.1, 100.0, 0.003),
    ("weavedb", (), 3.2, 26.3, 80.0, 0.04),
    ("rabbitmq", ("worker", "queue-master"), 3.2, 4.0, 40.0, 0.0006),
    ("consul", (), 3.2, 13.2, 100.0, 0.0003),
)


def stack_from_rows(rows: Iterable[tuple]) -> tuple[MicroserviceSpec, ...]:
    """Build microservices from ``(name, consumes, msreq, res, thr, fail)`` rows.

    ``consumes`` refers to other rows by name.
    """
    rows = list(rows)
    ids = {row[0]: i for i, row in enumerate(rows)}
    if len(ids) != len(rows):
        raise ValueError("duplicate microservice names")
    out = []
    for i, (name, consumes, msreq, res, thr, fail) in enumerate(rows):
        unknown = [c for c in consumes if c not in ids]
        if unknown:
            raise ValueError(f"microservice {name!r} consumes unknown services {unknown}")
        out.append(
            MicroserviceSpec(
                id=i,
                name=name,
                providers=frozenset(ids[c] for c in consumes),
                msreq=float(msreq),
                res=float(res),
                thr=float(thr),
                fail=float(fail),
            )
        )
    return tuple(out)


def build_socks_shop_stack() -> tuple[MicroserviceSpec, ...]:
    return stack_from_rows(SOCKS_SHOP)


@dataclass(frozen=True)
class ExperimentConfig:
    machine_count: int
    ureq: float
    app_count: int
    ga_params: GAParams = field(default_factory=GAParams)
    custom: bool = False

    def __post_init__(self) -> None:
        if self.machine_count < 1 or self.app_count < 1 or not self.ureq > 0:
            raise ValueError(f"invalid experiment config {self.key}")
        if not self.custom and (
            self.machine_count not in GRID_MACHINES
            or self.ureq not in GRID_UREQ
            or self.app_count not in GRID_APPS
        ):
            raise ValueError(f"{self.key} is not on the experiment grid; pass custom=True")

    @property
    def key(self) -> str:
        return f"m{self.machine_count}_u{self.ureq:g}_a{self.app_count}"


def experiment_grid(ga_params: GAParams | None = None) -> list[ExperimentConfig]:
    params = ga_params or GAParams()
    return [
        ExperimentConfig(m, u, a, params)
        for m, u, a in itertools.product(GRID_MACHINES, GRID_UREQ, GRID_APPS)
    ]


def build_experiment_scenario(config: ExperimentConfig) -> Scenario:
    stack = build_socks_shop_stack()
    apps = tuple(ApplicationSpec(id=a, ureq=config.ureq, microservices=stack) for a in range(config.app_count))
    topology = build_two_rack_topology(
        config.machine_count, CAPACITY_CLASSES, MACHINE_FAIL, INTRA_RACK_DIST, INTER_RACK_DIST
    )
    return Scenario(apps, topology)


def config_seed(master_seed: int, config: ExperimentConfig) -> int:
    """Seed for one config, derived from the master seed and the config identity."""
    ss = np.random.SeedSequence(
        [master_seed, config.machine_count, round(config.ureq * 1000), config.app_count]
    )
    return int(ss.generate_state(1, dtype=np.uint64)[0] >> np.uint64(1))


# ---------------------------------------------------------------------------
# brute-force oracle


def enumeration_size(n_microservices: int, n_machines: int, max_scale: int) -> int:
    per_ms = sum(n_machines**s for s in range(1, max_scale + 1))
    return per_ms**n_microservices


def brute_force_pareto(
    scenario: Scenario, max_scale: int, limit: int = BRUTE_FORCE_LIMIT
) -> list[tuple[FitnessTuple, AllocationPlan]]:
    """Exact Pareto set over every plan with scales in ``[1, max_scale]``.

    Returns ``(fitness, plan)`` for every feasible non-dominated plan.
    """
    if max_scale < 1:
        raise ValueError("max_scale must be >= 1")
    size = enumeration_size(scenario.n_microservices, scenario.n_machines, max_scale)
    if size > limit:
        raise ValueError(f"enumeration of {size:.3g} plans exceeds the limit of {limit:.3g}")
    per_ms = [
        tuple(itertools.chain.from_iterable(
            itertools.product(range(scenario.n_machines), repeat=s) for s in range(1, max_scale + 1)
        ))
    ] * scenario.n_microservices
    found: list[Individual] = []
    for lists in itertools.product(*per_ms):
        plan = AllocationPlan(lists)
        fit = evaluate(plan, scenario)
        if fit.feasible:
            found.append(Individual(plan, fit))
    if not found:
        return []
    fronts = fast_non_dominated_sort(found)
    return [(found[i].fitness, found[i].plan) for i in fronts[0]]


# ---------------------------------------------------------------------------
# experiment execution


@dataclass(frozen=True)
class ComparisonRow:
    machine_count: int
    ureq: float
    app_count: int
    nsga2: tuple[float, float, float, float]
    nsga2_used_machines: int
    baseline: tuple[float, float, float, float] | None
    baseline_used_machines: int | None
    scales: tuple[int, ...]
    baseline_error: str = ""

    @property
    def key(self) -> str:
        return f"m{self.machine_count}_u{self.ureq:g}_a{self.app_count}"


@dataclass
class ConfigResult:
    config: ExperimentConfig
    seed: int
    row: ComparisonRow
    trace: GenerationTrace
    front: list[Individual]
    min_sov: Individual
    baseline_plan: AllocationPlan | None
    scatter: dict[int, list[tuple[float, ...]]] = field(default_factory=dict)


def compare(
    scenario: Scenario,
    config: ExperimentConfig,
    front: Sequence[Individual],
) -> tuple[ComparisonRow, Individual, AllocationPlan | None]:
    best = select_min_sov(front)
    scales = best.plan.scales
    baseline_plan, base_fit, base_used, error = None, None, None, ""
    try:
        baseline_plan = schedule_least_requested(scenario, scales)
    except InfeasibleScheduleError as exc:
        error = str(exc)
    else:
        base_fit = evaluate(baseline_plan, scenario).values
        base_used = used_machine_count(baseline_plan)
    row = ComparisonRow(
        machine_count=config.machine_count,
        ureq=config.ureq,
        app_count=config.app_count,
        nsga2=best.fitness.values,
        nsga2_used_machines=used_machine_count(best.plan),
        baseline=base_fit,
        baseline_used_machines=base_used,
        scales=scales,
        baseline_error=error,
    )
    return row, best, baseline_plan


def run_config(
    config: ExperimentConfig,
    seed: int,
    scatter: bool = False,
    scenario: Scenario | None = None,
) -> ConfigResult:
    scenario = scenario or build_experiment_scenario(config)
    derived = config_seed(seed, config)
    params = replace(config.ga_params, rng_seed=derived)
    dumps: dict[int, list[tuple[float, ...]]] = {}

    def grab(gen: int, population: list[Individual]) -> None:
        if gen in SCATTER_GENERATIONS:
            dumps[gen] = [
                ind.fitness.values + (used_machine_count(ind.plan), ind.plan.n_containers)
                for ind in population
                if ind.rank == 0
            ]

    log.info("running %s (seed %d)", config.key, derived)
    front, trace = run(scenario, params, on_generation=grab if scatter else None)
    row, best, baseline_plan = compare(scenario, config, front)
    return ConfigResult(config, derived, row, trace, front, best, baseline_plan, dumps)


def _run_config_args(args: tuple) -> ConfigResult:
    return run_config(*args)


def run_experiment_grid(
    configs: Sequence[ExperimentConfig],
    seed: int = 0,
    workers: int = 1,
    scatter: bool = False,
) -> list[ConfigResult]:
    """Run every config; results come back in ``configs`` order whatever ``workers`` is."""
    jobs = [(c, seed, scatter) for c in configs]
    if workers <= 1 or len(jobs) <= 1:
        return [_run_config_args(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_run_config_args, jobs))


# ---------------------------------------------------------------------------
# CSV output


def generation_header() -> list[str]:
    cols = ["generation"]
    for name in OBJECTIVES:
        cols += [f"{name}_min", f"{name}_mean", f"{name}_minSOV"]
    return cols + [
        "usedMachines_min",
        "usedMachines_mean",
        "containers_min",
        "containers_mean",
        "frontSize",
    ]


def comparison_header() -> list[str]:
    cols = ["machineCount", "ureq", "appCount"]
    for who in ("nsga2", "baseline"):
        cols += [f"{who}_{name}" for name in OBJECTIVES] + [f"{who}_usedMachines"]
    return cols + ["baseline_error"]


def _open_csv(path: str | Path):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    return open(path, "w", newline="", encoding="utf-8")


def write_generation_csv(trace: GenerationTrace, path: str | Path) -> None:
    with _open_csv(path) as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(generation_header())
        for r in trace.records:
            row: list = [r.generation]
            for o in range(len(OBJECTIVES)):
                row += [r.mins[o], r.means[o], r.min_sov[o]]
            row += [r.used_machines_min, r.used_machines_mean, r.containers_min, r.containers_mean, r.front_size]
            w.writerow(row)


def read_generation_csv(path: str | Path) -> GenerationTrace:
    trace = GenerationTrace()
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != generation_header():
            raise ValueError(f"{path}: unexpected header {reader.fieldnames}")
        for rec in reader:
            trace.append(
                GenerationRecord(
                    generation=int(rec["generation"]),
                    mins=tuple(float(rec[f"{n}_min"]) for n in OBJECTIVES),
                    means=tuple(float(rec[f"{n}_mean"]) for n in OBJECTIVES),
                    min_sov=tuple(float(rec[f"{n}_minSOV"]) for n in OBJECTIVES),
                    used_machines_min=int(rec["usedMachines_min"]),
                    used_machines_mean=float(rec["usedMachines_mean"]),
                    containers_min=int(rec["containers_min"]),
                    containers_mean=float(rec["containers_mean"]),
                    front_size=int(rec["frontSize"]),
                )
            )
    return trace


def write_comparison_csv(rows: Sequence[ComparisonRow], path: str | Path) -> None:
    with _open_csv(path) as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(comparison_header())
        for r in rows:
            base = list(r.baseline) if r.baseline is not None else [""] * 4
            w.writerow(
                [r.machine_count, r.ureq, r.app_count, *r.nsga2, r.nsga2_used_machines,
                 *base, "" if r.baseline_used_machines is None else r.baseline_used_machines,
                 r.baseline_error]
            )


def read_comparison_csv(path: str | Path) -> list[dict[str, str]]:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != comparison_header():
            raise ValueError(f"{path}: unexpected header {reader.fieldnames}")
        return list(reader)


def write_front_csv(front: Sequence[Individual], path: str | Path) -> None:
    """One row per front member: objectives, used machines, containers and scale vector."""
    with _open_csv(path) as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([*OBJECTIVES, "usedMachines", "containers", "scales"])
        for ind in front:
            w.writerow(
                [*ind.fitness.values, used_machine_count(ind.plan), ind.plan.n_containers,
                 " ".join(map(str, ind.plan.scales))]
            )


def write_scatter_csv(points: Sequence[tuple[float, ...]], path: str | Path) -> None:
    with _open_csv(path) as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([*OBJECTIVES, "usedMachines", "containers"])
        w.writerows(points)


def write_config_outputs(result: ConfigResult, out_dir: str | Path) -> Path:
    """Write generations.csv, front.csv and any scatter dumps under ``out_dir/<key>``."""
    target = Path(out_dir) / result.config.key
    write_generation_csv(result.trace, target / "generations.csv")
    write_front_csv(result.front, target / "front.csv")
    for gen, points in sorted(result.scatter.items()):
        write_scatter_csv(points, target / f"scatter_g{gen}.csv")
    return target


def scale_summary(result: ConfigResult) -> tuple[float, float]:
    """Final-front (min, mean) containers per microservice of one application stack."""
    last = result.trace.records[-1]
    per_app = len(SOCKS_SHOP) * result.config.app_count
    return last.containers_min / per_app, last.containers_mean / per_app


def is_finite_row(row: ComparisonRow) -> bool:
    return all(math.isfinite(v) for v in row.nsga2)
