"""Scenario files.

A scenario file is a YAML (or JSON) document::

    applications:
      - ureq: 1.0
        microservices:
          - {name: worker, consumes: [], msreq: 3.2, res: 0.1, thr: 1.0, fail: 0.04}
          - {name: rabbitmq, consumes: [worker], msreq: 3.2, res: 4.0, thr: 40.0, fail: 0.0006}
    cluster:
      machineCount: 300
      capacities: [100.0, 200.0, 400.0, 800.0]
      failRate: 0.025
      intraRackDistance: 1.0
      interRackDistance: 4.0

``consumes`` names other microservices of the same application.
"""

from __future__ import annotations

from pathlib import Path
from typing import Any

import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError

from containalloc.harness import stack_from_rows
from containalloc.model import ApplicationSpec, Scenario, build_two_rack_topology


class ScenarioParseError(ValueError):
    """The document does not match the schema."""


class ScenarioValidationError(ValueError):
    """The document is well-formed but violates a model invariant."""


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid")


class MicroserviceEntry(_Strict):
    name: str
    consumes: list[str] = Field(default_factory=list)
    msreq: float
    res: float
    thr: float
    fail: float


class ApplicationEntry(_Strict):
    ureq: float
    name: str | None = None
    microservices: list[MicroserviceEntry]


class ClusterEntry(_Strict):
    machineCount: int
    capacities: list[float]
    failRate: float
    intraRackDistance: float = 1.0
    interRackDistance: float = 4.0


class ScenarioDocument(_Strict):
    applications: list[ApplicationEntry]
    cluster: ClusterEntry


def _field_path(loc: tuple, raw: Any) -> str:
    """Render a pydantic location, naming microservices instead of indexing them."""
    parts: list[str] = []
    node = raw
    for key in loc:
        name = None
        if isinstance(key, int) and isinstance(node, list) and 0 <= key < len(node):
            node = node[key]
            if isinstance(node, dict) and "name" in node:
                name = node["name"]
        elif isinstance(node, dict):
            node = node.get(key)
        else:
            node = None
        if isinstance(key, int):
            parts.append(f"[{name!r}]" if name is not None else f"[{key}]")
        else:
            parts.append(f".{key}" if parts else str(key))
    return "".join(parts)


def parse_scenario(raw: Any) -> Scenario:
    try:
        doc = ScenarioDocument.model_validate(raw)
    except ValidationError as exc:
        msgs = [f"{_field_path(err['loc'], raw)}: {err['msg']}" for err in exc.errors()]
        raise ScenarioParseError("; ".join(msgs)) from None
    try:
        apps = []
        for a, entry in enumerate(doc.applications):
            rows = [(m.name, tuple(m.consumes), m.msreq, m.res, m.thr, m.fail) for m in entry.microservices]
            apps.append(ApplicationSpec(id=a, ureq=entry.ureq, microservices=stack_from_rows(rows)))
        c = doc.cluster
        topology = build_two_rack_topology(
            c.machineCount, c.capacities, c.failRate, c.intraRackDistance, c.interRackDistance
        )
    except ValueError as exc:
        raise ScenarioValidationError(str(exc)) from None
    return Scenario(tuple(apps), topology)


def load_scenario_file(path: str | Path) -> Scenario:
    text = Path(path).read_text(encoding="utf-8")
    try:
        raw = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ScenarioParseError(f"{path}: {exc}") from None
    if not isinstance(raw, dict):
        raise ScenarioParseError(f"{path}: expected a mapping at the top level")
    return parse_scenario(raw)
