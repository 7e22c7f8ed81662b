"""Kubernetes-style reference scheduler.

Containers are placed one at a time. The capacity filter keeps machines whose
load stays strictly below capacity after placement; the least-requested score
then picks the candidate with the lowest resulting load/cap, lowest machine
id on ties. Scale levels are an input: this scheduler never decides them.
"""

from __future__ import annotations

from typing import Sequence

import numpy as np

from containalloc.model import AllocationPlan, Scenario


class InfeasibleScheduleError(RuntimeError):
    def __init__(self, ms_id: int, replica: int, load: float):
        self.ms_id = ms_id
        self.replica = replica
        self.load = load
        super().__init__(
            f"no machine can host replica {replica} of microservice {ms_id} (load {load:g})"
        )


def schedule_least_requested(scenario: Scenario, scales: Sequence[int]) -> AllocationPlan:
    if len(scales) != scenario.n_microservices:
        raise ValueError(
            f"scale vector has {len(scales)} entries, scenario has {scenario.n_microservices} microservices"
        )
    if any(s < 1 for s in scales):
        raise ValueError("every scale must be >= 1")
    caps = scenario.topology.caps
    load = np.zeros(scenario.n_machines)
    alloc = []
    for i, scale in enumerate(scales):
        c = float(scenario.total_load[i]) / scale
        placed = []
        for replica in range(scale):
            after = load + c
            score = np.where(after < caps, after / caps, np.inf)
            best = int(np.argmin(score))
            if not np.isfinite(score[best]):
                raise InfeasibleScheduleError(i, replica, c)
            load[best] = after[best]
            placed.append(best)
        alloc.append(tuple(placed))
    return AllocationPlan(tuple(alloc))
