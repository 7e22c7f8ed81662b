"""Container allocation and elasticity optimization with NSGA-II."""

from containalloc.model import (
    AllocationPlan,
    ApplicationSpec,
    ClusterTopology,
    DeploymentView,
    MachineSpec,
    MicroserviceSpec,
    Scenario,
    build_two_rack_topology,
    container_load,
    derive_deployment,
)
from containalloc.objectives import FitnessTuple, evaluate, sov
from containalloc.nsga2 import GAParams, Individual, run
from containalloc.baseline import InfeasibleScheduleError, schedule_least_requested
from containalloc.harness import (
    ExperimentConfig,
    build_experiment_scenario,
    build_socks_shop_stack,
    run_experiment_grid,
)

__version__ = "0.1.0"

__all__ = [
    "AllocationPlan",
    "ApplicationSpec",
    "ClusterTopology",
    "DeploymentView",
    "ExperimentConfig",
    "FitnessTuple",
    "GAParams",
    "Individual",
    "InfeasibleScheduleError",
    "MachineSpec",
    "MicroserviceSpec",
    "Scenario",
    "build_experiment_scenario",
    "build_socks_shop_stack",
    "build_two_rack_topology",
    "container_load",
    "derive_deployment",
    "evaluate",
    "run",
    "run_experiment_grid",
    "schedule_least_requested",
    "sov",
]
