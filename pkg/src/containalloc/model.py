"""Cluster, application and allocation model.

A scenario is a set of applications, each a stack of microservices, deployed
on a cluster of physical machines. Microservices are replicated as containers;
an :class:`AllocationPlan` lists, per microservice, the machine hosting each
replica.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from itertools import chain
from typing import Sequence

import numpy as np


@dataclass(frozen=True)
class MicroserviceSpec:
    """One microservice of an application stack.

    ``providers`` holds the indices (local to the owning application) of the
    microservices this one consumes.
    """

    id: int
    name: str
    providers: frozenset[int]
    msreq: float
    res: float
    thr: float
    fail: float

    def __post_init__(self) -> None:
        object.__setattr__(self, "providers", frozenset(self.providers))
        if self.id in self.providers:
            raise ValueError(f"microservice {self.name!r} consumes itself")
        if self.msreq < 0 or self.res < 0:
            raise ValueError(f"microservice {self.name!r}: msreq and res must be >= 0")
        if not self.thr > 0:
            raise ValueError(f"microservice {self.name!r}: thr must be > 0")
        if not 0.0 <= self.fail <= 1.0:
            raise ValueError(f"microservice {self.name!r}: fail must lie in [0, 1]")


@dataclass(frozen=True)
class ApplicationSpec:
    id: int
    ureq: float
    microservices: tuple[MicroserviceSpec, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "microservices", tuple(self.microservices))
        if not self.ureq > 0:
            raise ValueError(f"application {self.id}: ureq must be > 0")
        n = len(self.microservices)
        for local, ms in enumerate(self.microservices):
            if ms.id != local:
                raise ValueError(
                    f"application {self.id}: microservice {ms.name!r} has id {ms.id}, expected {local}"
                )
            bad = [p for p in ms.providers if not 0 <= p < n]
            if bad:
                raise ValueError(
                    f"application {self.id}: microservice {ms.name!r} consumes unknown ids {sorted(bad)}"
                )


@dataclass(frozen=True)
class MachineSpec:
    id: int
    cap: float
    fail: float
    rack: int = 0

    def __post_init__(self) -> None:
        if not self.cap > 0:
            raise ValueError(f"machine {self.id}: cap must be > 0")
        if not 0.0 <= self.fail <= 1.0:
            raise ValueError(f"machine {self.id}: fail must lie in [0, 1]")


@dataclass(frozen=True, eq=False)
class ClusterTopology:
    machines: tuple[MachineSpec, ...]
    dist: np.ndarray

    def __post_init__(self) -> None:
        object.__setattr__(self, "machines", tuple(self.machines))
        dist = np.array(self.dist, dtype=float)
        n = len(self.machines)
        if dist.shape != (n, n):
            raise ValueError(f"distance matrix has shape {dist.shape}, expected {(n, n)}")
        if np.any(dist < 0):
            raise ValueError("network distances must be >= 0")
        if not np.array_equal(dist, dist.T):
            raise ValueError("distance matrix must be symmetric")
        if np.any(np.diag(dist) != 0):
            raise ValueError("distance from a machine to itself must be 0")
        dist.setflags(write=False)
        object.__setattr__(self, "dist", dist)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, ClusterTopology):
            return NotImplemented
        return self.machines == other.machines and np.array_equal(self.dist, other.dist)

    def __len__(self) -> int:
        return len(self.machines)

    @cached_property
    def caps(self) -> np.ndarray:
        return np.array([m.cap for m in self.machines], dtype=float)

    @cached_property
    def fails(self) -> np.ndarray:
        return np.array([m.fail for m in self.machines], dtype=float)


@dataclass(frozen=True, eq=True)
class Scenario:
    """Applications deployed on a cluster.

    Microservices are addressed by a global index that flattens the
    applications in declaration order.
    """

    applications: tuple[ApplicationSpec, ...]
    topology: ClusterTopology

    def __post_init__(self) -> None:
        object.__setattr__(self, "applications", tuple(self.applications))

    @cached_property
    def global_index(self) -> tuple[tuple[int, int], ...]:
        """``global id -> (application position, local microservice id)``."""
        return tuple(
            (a, ms.id) for a, app in enumerate(self.applications) for ms in app.microservices
        )

    @cached_property
    def microservices(self) -> tuple[MicroserviceSpec, ...]:
        return tuple(ms for app in self.applications for ms in app.microservices)

    @property
    def n_microservices(self) -> int:
        return len(self.global_index)

    @property
    def n_machines(self) -> int:
        return len(self.topology)

    @cached_property
    def offsets(self) -> tuple[int, ...]:
        out, acc = [], 0
        for app in self.applications:
            out.append(acc)
            acc += len(app.microservices)
        return tuple(out)

    @cached_property
    def total_load(self) -> np.ndarray:
        """ureq * msreq * res per global microservice (load at scale 1)."""
        return np.array(
            [app.ureq * ms.msreq * ms.res for app in self.applications for ms in app.microservices],
            dtype=float,
        )

    @cached_property
    def thresholds(self) -> np.ndarray:
        return np.array([ms.thr for ms in self.microservices], dtype=float)

    @cached_property
    def ms_fails(self) -> np.ndarray:
        return np.array([ms.fail for ms in self.microservices], dtype=float)

    @cached_property
    def providers(self) -> tuple[tuple[int, ...], ...]:
        """Global provider ids per global microservice, sorted."""
        out = []
        for a, app in enumerate(self.applications):
            base = self.offsets[a]
            for ms in app.microservices:
                out.append(tuple(sorted(base + p for p in ms.providers)))
        return tuple(out)

    def application_of(self, ms_id: int) -> ApplicationSpec:
        return self.applications[self.global_index[ms_id][0]]


@dataclass(frozen=True)
class AllocationPlan:
    """Per-microservice allocation lists; ``len(alloc[i])`` is the scale of ``i``."""

    alloc: tuple[tuple[int, ...], ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "alloc", tuple(tuple(int(m) for m in lst) for lst in self.alloc))

    @classmethod
    def of(cls, lists: Sequence[Sequence[int]]) -> "AllocationPlan":
        return cls(tuple(tuple(lst) for lst in lists))

    def __len__(self) -> int:
        return len(self.alloc)

    def __getitem__(self, i: int) -> tuple[int, ...]:
        return self.alloc[i]

    @property
    def scales(self) -> tuple[int, ...]:
        return tuple(len(lst) for lst in self.alloc)

    @property
    def n_containers(self) -> int:
        return sum(len(lst) for lst in self.alloc)

    def validate(self, scenario: Scenario) -> None:
        if len(self.alloc) != scenario.n_microservices:
            raise ValueError(
                f"plan has {len(self.alloc)} allocation lists, scenario has "
                f"{scenario.n_microservices} microservices"
            )
        n = scenario.n_machines
        for i, lst in enumerate(self.alloc):
            if not lst:
                raise ValueError(f"microservice {i} has an empty allocation list")
            for m in lst:
                if not 0 <= m < n:
                    raise ValueError(f"microservice {i} allocated to unknown machine {m}")


@dataclass(frozen=True, eq=False)
class DeploymentView:
    per_machine_load: np.ndarray
    per_machine_replicas: tuple[dict[int, int], ...]
    used_machines: frozenset[int] = field(default_factory=frozenset)


def container_load(scenario: Scenario, ms_id: int, scale: int) -> float:
    """Resource units consumed by one of ``scale`` containers of ``ms_id``."""
    if not 0 <= ms_id < scenario.n_microservices:
        raise ValueError(f"unknown microservice id {ms_id}")
    if scale < 1:
        raise ValueError(f"scale must be >= 1, got {scale}")
    return float(scenario.total_load[ms_id]) / scale


def flatten(plan: AllocationPlan) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Return ``(scales, owner, machine)`` arrays with one entry per container."""
    scales = np.fromiter((len(lst) for lst in plan.alloc), dtype=np.int64, count=len(plan.alloc))
    total = int(scales.sum())
    machine = np.fromiter(chain.from_iterable(plan.alloc), dtype=np.int64, count=total)
    owner = np.repeat(np.arange(len(plan.alloc)), scales)
    return scales, owner, machine


def machine_loads(plan: AllocationPlan, scenario: Scenario) -> np.ndarray:
    scales, owner, machine = flatten(plan)
    if machine.size == 0:
        return np.zeros(scenario.n_machines)
    per_container = scenario.total_load[owner] / scales[owner]
    return np.bincount(machine, weights=per_container, minlength=scenario.n_machines)


def derive_deployment(plan: AllocationPlan, scenario: Scenario) -> DeploymentView:
    plan.validate(scenario)
    replicas: list[dict[int, int]] = [{} for _ in range(scenario.n_machines)]
    for i, lst in enumerate(plan.alloc):
        for m in lst:
            replicas[m][i] = replicas[m].get(i, 0) + 1
    used = frozenset(m for m, r in enumerate(replicas) if r)
    return DeploymentView(
        per_machine_load=machine_loads(plan, scenario),
        per_machine_replicas=tuple(replicas),
        used_machines=used,
    )


def build_two_rack_topology(
    machine_count: int,
    cap_cycle: Sequence[float],
    fail_rate: float,
    intra_dist: float,
    inter_dist: float,
) -> ClusterTopology:
    """Split machines into two racks; capacities cycle through ``cap_cycle``.

    The first ``ceil(n / 2)`` machines go to rack 0.
    """
    if machine_count <= 0:
        raise ValueError("machine_count must be > 0")
    if not cap_cycle:
        raise ValueError("cap_cycle must not be empty")
    if intra_dist <= 0 or inter_dist <= 0:
        raise ValueError("rack distances must be > 0")
    rack0 = (machine_count + 1) // 2
    racks = np.array([0 if l < rack0 else 1 for l in range(machine_count)])
    machines = tuple(
        MachineSpec(id=l, cap=float(cap_cycle[l % len(cap_cycle)]), fail=fail_rate, rack=int(racks[l]))
        for l in range(machine_count)
    )
    dist = np.where(racks[:, None] == racks[None, :], intra_dist, inter_dist).astype(float)
    np.fill_diagonal(dist, 0.0)
    return ClusterTopology(machines=machines, dist=dist)
