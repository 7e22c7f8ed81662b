"""Command-line entry point.

Subcommands::

    containalloc optimize  one config: NSGA-II run, minSOV vs baseline
    containalloc baseline  least-requested schedule for given scale levels
    containalloc grid      the 24-config experiment grid
    containalloc oracle    exhaustive Pareto front of a tiny scenario
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

from containalloc import harness
from containalloc.baseline import InfeasibleScheduleError, schedule_least_requested
from containalloc.model import Scenario
from containalloc.nsga2 import GAParams
from containalloc.objectives import OBJECTIVES, evaluate, used_machine_count
from containalloc.scenario_file import ScenarioParseError, ScenarioValidationError, load_scenario_file

OUT_ENV = "CONTAINALLOC_OUT"
DEFAULT_OUT = "results"
SUBCOMMANDS = ("optimize", "baseline", "grid", "oracle")

log = logging.getLogger("containalloc")


class UsageError(Exception):
    pass


@dataclass
class CliConfig:
    subcommand: str
    scenario_file: Path | None = None
    machines: int | None = None
    ureq: float | None = None
    apps: int | None = None
    ga_params: GAParams = field(default_factory=GAParams)
    seed: int = 0
    workers: int = 1
    out: Path = Path(DEFAULT_OUT)
    scatter: bool = False
    scales: tuple[int, ...] | None = None
    max_scale: int = 2


def _positive_int(flag: str):
    def conv(text: str) -> int:
        try:
            v = int(text)
        except ValueError:
            raise argparse.ArgumentTypeError(f"{flag}: expected an integer, got {text!r}") from None
        if v < 1:
            raise argparse.ArgumentTypeError(f"{flag}: must be >= 1, got {v}")
        return v

    return conv


def _probability(flag: str):
    def conv(text: str) -> float:
        try:
            v = float(text)
        except ValueError:
            raise argparse.ArgumentTypeError(f"{flag}: expected a number, got {text!r}") from None
        if not 0.0 <= v <= 1.0:
            raise argparse.ArgumentTypeError(f"{flag}: must lie in [0, 1], got {v}")
        return v

    return conv


def _positive_float(flag: str):
    def conv(text: str) -> float:
        try:
            v = float(text)
        except ValueError:
            raise argparse.ArgumentTypeError(f"{flag}: expected a number, got {text!r}") from None
        if not v > 0:
            raise argparse.ArgumentTypeError(f"{flag}: must be > 0, got {v}")
        return v

    return conv


def _even_population(text: str) -> int:
    v = _positive_int("--pop")(text)
    if v < 2 or v % 2:
        raise argparse.ArgumentTypeError(f"--pop: must be even and >= 2, got {v}")
    return v


def _scale_list(text: str) -> tuple[int, ...]:
    conv = _positive_int("--scales")
    return tuple(conv(part) for part in text.replace(",", " ").split())


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--scenario", type=Path, help="scenario file (YAML/JSON); default is Socks Shop")
    common.add_argument("--machines", type=_positive_int("--machines"))
    common.add_argument("--ureq", type=_positive_float("--ureq"))
    common.add_argument("--apps", type=_positive_int("--apps"))
    common.add_argument("--pop", type=_even_population, default=200)
    common.add_argument("--generations", type=_positive_int("--generations"), default=300)
    common.add_argument("--mutation-prob", type=_probability("--mutation-prob"), default=0.25)
    common.add_argument("--crossover-prob", type=_probability("--crossover-prob"), default=1.0)
    common.add_argument("--max-init-scale", type=_positive_int("--max-init-scale"), default=10)
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--workers", type=_positive_int("--workers"), default=1)
    common.add_argument("--out", type=Path, help=f"output directory (default ${OUT_ENV} or ./{DEFAULT_OUT})")
    common.add_argument("--scatter", action="store_true", help="dump fronts at generations 0,10,...,50")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="containalloc", description=__doc__.split("\n")[0])
    sub = parser.add_subparsers(dest="subcommand", required=True)
    sub.add_parser("optimize", parents=[common], help="optimize one configuration")
    p = sub.add_parser("baseline", parents=[common], help="schedule fixed scale levels")
    p.add_argument("--scales", type=_scale_list, required=True,
                   help="one scale per microservice, or a single value for all")
    sub.add_parser("grid", parents=[common], help="run the experiment grid")
    p = sub.add_parser("oracle", parents=[common], help="exhaustive Pareto front")
    p.add_argument("--max-scale", type=_positive_int("--max-scale"), default=2)
    return parser


def parse_args(argv: Sequence[str] | None = None, env: dict[str, str] | None = None) -> CliConfig:
    """Parse ``argv``; raises ``SystemExit(2)`` with the flag named on bad input."""
    env = os.environ if env is None else env
    parser = build_parser()
    ns = parser.parse_args(argv)
    if ns.scenario is not None and any(v is not None for v in (ns.machines, ns.ureq, ns.apps)):
        parser.error("--machines/--ureq/--apps cannot be combined with --scenario")
    out = ns.out if ns.out is not None else Path(env.get(OUT_ENV) or DEFAULT_OUT)
    params = GAParams(
        population_size=ns.pop,
        generations=ns.generations,
        mutation_prob=ns.mutation_prob,
        crossover_prob=ns.crossover_prob,
        max_init_scale=ns.max_init_scale,
        rng_seed=ns.seed,
    )
    if ns.verbose:
        logging.basicConfig(level=logging.INFO, format="%(asctime)s %(levelname)s %(message)s")
    return CliConfig(
        subcommand=ns.subcommand,
        scenario_file=ns.scenario,
        machines=ns.machines,
        ureq=ns.ureq,
        apps=ns.apps,
        ga_params=params,
        seed=ns.seed,
        workers=ns.workers,
        out=out,
        scatter=ns.scatter,
        scales=getattr(ns, "scales", None),
        max_scale=getattr(ns, "max_scale", 2),
    )


def _single_config(cfg: CliConfig) -> tuple[harness.ExperimentConfig, Scenario]:
    if cfg.scenario_file is not None:
        scenario = load_scenario_file(cfg.scenario_file)
        config = harness.ExperimentConfig(
            machine_count=scenario.n_machines,
            ureq=scenario.applications[0].ureq if scenario.applications else 1.0,
            app_count=max(1, len(scenario.applications)),
            ga_params=cfg.ga_params,
            custom=True,
        )
        return config, scenario
    machines = cfg.machines or 300
    ureq = cfg.ureq or 1.0
    apps = cfg.apps or 1
    on_grid = (
        machines in harness.GRID_MACHINES and ureq in harness.GRID_UREQ and apps in harness.GRID_APPS
    )
    config = harness.ExperimentConfig(machines, ureq, apps, cfg.ga_params, custom=not on_grid)
    return config, harness.build_experiment_scenario(config)


def cmd_optimize(cfg: CliConfig) -> None:
    config, scenario = _single_config(cfg)
    result = harness.run_config(config, cfg.seed, scatter=cfg.scatter, scenario=scenario)
    target = harness.write_config_outputs(result, cfg.out)
    harness.write_comparison_csv([result.row], target / "comparison.csv")
    _print_row(result.row)
    print(f"wrote {target}")


def cmd_baseline(cfg: CliConfig) -> None:
    _, scenario = _single_config(cfg)
    scales = cfg.scales
    if len(scales) == 1:
        scales = scales * scenario.n_microservices
    if len(scales) != scenario.n_microservices:
        raise UsageError(
            f"--scales: got {len(scales)} values, scenario has {scenario.n_microservices} microservices"
        )
    plan = schedule_least_requested(scenario, scales)
    fit = evaluate(plan, scenario)
    cfg.out.mkdir(parents=True, exist_ok=True)
    path = cfg.out / "baseline.csv"
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(",".join([*OBJECTIVES, "usedMachines", "allocation"]) + "\n")
        alloc = ";".join(" ".join(map(str, lst)) for lst in plan.alloc)
        fh.write(",".join([*(repr(v) for v in fit.values), str(used_machine_count(plan)), alloc]) + "\n")
    for name, v in zip(OBJECTIVES, fit.values):
        print(f"{name:>18}: {v:.6g}")
    print(f"{'usedMachines':>18}: {used_machine_count(plan)}")
    print(f"wrote {path}")


def cmd_grid(cfg: CliConfig) -> None:
    if cfg.scenario_file is not None:
        raise UsageError("--scenario: the grid always uses the built-in Socks Shop scenarios")
    configs = [
        c
        for c in harness.experiment_grid(cfg.ga_params)
        if (cfg.machines is None or c.machine_count == cfg.machines)
        and (cfg.ureq is None or c.ureq == cfg.ureq)
        and (cfg.apps is None or c.app_count == cfg.apps)
    ]
    if not configs:
        raise UsageError("--machines/--ureq/--apps: no grid configuration matches the filters")
    results = harness.run_experiment_grid(configs, cfg.seed, cfg.workers, cfg.scatter)
    for r in results:
        harness.write_config_outputs(r, cfg.out)
    harness.write_comparison_csv([r.row for r in results], cfg.out / "comparison.csv")
    for r in results:
        _print_row(r.row)
    print(f"wrote {cfg.out / 'comparison.csv'}")


def cmd_oracle(cfg: CliConfig) -> None:
    _, scenario = _single_config(cfg)
    front = harness.brute_force_pareto(scenario, cfg.max_scale)
    cfg.out.mkdir(parents=True, exist_ok=True)
    path = cfg.out / "oracle_front.csv"
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(",".join([*OBJECTIVES, "usedMachines", "allocation"]) + "\n")
        for fit, plan in front:
            alloc = ";".join(" ".join(map(str, lst)) for lst in plan.alloc)
            fh.write(",".join([*(repr(v) for v in fit.values), str(used_machine_count(plan)), alloc]) + "\n")
    print(f"{len(front)} non-dominated plans; wrote {path}")


def _print_row(row: harness.ComparisonRow) -> None:
    base = row.baseline if row.baseline is not None else (float("nan"),) * 4
    print(f"{row.key}: nsga2 " + " ".join(f"{v:.4g}" for v in row.nsga2)
          + f" used={row.nsga2_used_machines} | baseline " + " ".join(f"{v:.4g}" for v in base)
          + f" used={row.baseline_used_machines}" + (f" ({row.baseline_error})" if row.baseline_error else ""))


COMMANDS = {"optimize": cmd_optimize, "baseline": cmd_baseline, "grid": cmd_grid, "oracle": cmd_oracle}


def main(argv: Sequence[str] | None = None) -> int:
    cfg = parse_args(argv)
    try:
        COMMANDS[cfg.subcommand](cfg)
    except UsageError as exc:
        print(f"containalloc: error: {exc}", file=sys.stderr)
        return 2
    except (ScenarioParseError, ScenarioValidationError, InfeasibleScheduleError, ValueError, OSError) as exc:
        print(f"containalloc: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
