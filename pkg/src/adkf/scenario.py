"""Scenario files: JSON with system / sensors / topology / delays / run sections."""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path

import jsonschema
import numpy as np

from .graph import Topology, TopologyKind, classify
from .model import SensorModel, SystemModel, constant_acceleration, validate_model
from .network import DelayProfile

ESTIMATORS = ("proposed", "drop_late", "centralized")
FUSION_MODES = ("matrix", "vector", "none")

_matrix = {"type": "array", "items": {"type": "array", "items": {"type": "number"}}}
_vector = {"type": "array", "items": {"type": "number"}}

SCHEMA = {
    "type": "object",
    "required": ["system", "sensors", "topology", "delays", "run"],
    "properties": {
        "name": {"type": "string"},
        "system": {
            "type": "object",
            "properties": {
                "model": {"enum": ["constant_acceleration"]},
                "sampling_period": {"type": "number", "exclusiveMinimum": 0},
                "process_var": {"type": "number", "minimum": 0},
                "transition": _matrix,
                "process_cov": _matrix,
                "init_mean": _vector,
                "init_cov": _matrix,
                "state_names": {"type": "array", "items": {"type": "string"}},
            },
        },
        "sensors": {
            "type": "array",
            "minItems": 1,
            "items": {
                "type": "object",
                "required": ["id", "H", "R"],
                "properties": {
                    "id": {"type": "integer", "minimum": 1},
                    "H": {"oneOf": [_matrix, _vector]},
                    "R": {"oneOf": [_matrix, {"type": "number", "exclusiveMinimum": 0}]},
                },
            },
        },
        "topology": {
            "type": "object",
            "required": ["edges"],
            "properties": {
                "nodes": {"type": "integer", "minimum": 1},
                "directed": {"type": "boolean"},
                "edges": {"type": "array", "items": {"type": "array", "items": {"type": "integer", "minimum": 1}, "minItems": 2, "maxItems": 2}},
                "weights": {"oneOf": [{"enum": ["degree", "unit"]}, _matrix]},
            },
        },
        "delays": {
            "type": "object",
            "required": ["max_delay"],
            "properties": {
                "max_delay": {"type": "integer", "minimum": 0},
                "distribution": {"oneOf": [{"enum": ["uniform"]}, _vector]},
                "buffer_length": {"type": ["integer", "null"], "minimum": 1},
                "seed": {"type": "integer", "minimum": 0},
            },
        },
        "run": {
            "type": "object",
            "required": ["horizon"],
            "properties": {
                "horizon": {"type": "integer", "minimum": 1},
                "monte_carlo_runs": {"type": "integer", "minimum": 1},
                "fusion": {"enum": list(FUSION_MODES)},
                "estimators": {"type": "array", "items": {"enum": list(ESTIMATORS)}, "minItems": 1},
                "seed": {"type": "integer", "minimum": 0},
            },
        },
    },
}


class ScenarioError(ValueError):
    pass


@dataclass(frozen=True)
class Scenario:
    name: str
    system: SystemModel
    sensors: tuple[SensorModel, ...]
    topology: Topology
    delay: DelayProfile
    horizon: int = 500
    runs: int = 200
    fusion: str = "vector"
    estimators: tuple[str, ...] = ESTIMATORS
    seed: int = 0
    delay_seed: int | None = None
    buffer_length: int | None = None
    unit_weights: bool = False
    state_names: tuple[str, ...] = field(default=())

    @property
    def n(self) -> int:
        return len(self.sensors)

    def with_overrides(self, seed=None, runs=None, dt=None, estimators=None, fusion=None, horizon=None,
                       topology=None, unit_weights=None) -> "Scenario":
        kw = {}
        if seed is not None:
            kw["seed"] = int(seed)
        if runs is not None:
            if runs < 1:
                raise ScenarioError("runs must be >= 1")
            kw["runs"] = int(runs)
        if dt is not None:
            if dt < 0:
                raise ScenarioError("max_delay must be nonnegative")
            kw["delay"] = DelayProfile.uniform(int(dt))
        if estimators is not None:
            bad = [e for e in estimators if e not in ESTIMATORS]
            if bad or not estimators:
                raise ScenarioError(f"unknown estimators {bad}; choose from {ESTIMATORS}")
            kw["estimators"] = tuple(estimators)
        if fusion is not None:
            if fusion not in FUSION_MODES:
                raise ScenarioError(f"fusion must be one of {FUSION_MODES}")
            kw["fusion"] = fusion
        if horizon is not None:
            kw["horizon"] = int(horizon)
        if topology is not None:
            kw["topology"] = topology
        if unit_weights is not None:
            kw["unit_weights"] = bool(unit_weights)
        return replace(self, **kw)


def bundled_names() -> list[str]:
    return sorted(p.name[:-5] for p in resources.files("adkf.scenarios").iterdir() if p.name.endswith(".json"))


def _read(source) -> dict:
    if isinstance(source, dict):
        return source
    path = Path(source)
    if not path.exists():
        name = str(source)
        candidate = resources.files("adkf.scenarios").joinpath(name + ".json")
        if not candidate.is_file():
            raise ScenarioError(f"no scenario file or bundled scenario named {name!r}")
        text = candidate.read_text()
    else:
        text = path.read_text()
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise ScenarioError(f"parse error: {exc}") from exc


def _system(spec) -> SystemModel:
    if spec.get("model") == "constant_acceleration":
        base = constant_acceleration(spec.get("sampling_period", 0.01), spec.get("process_var", 1.0))
        phi, q = base.transition, base.process_cov
    else:
        if "transition" not in spec or "process_cov" not in spec:
            raise ScenarioError("system: give either model or both transition and process_cov")
        phi, q = spec["transition"], spec["process_cov"]
    nx = np.atleast_2d(phi).shape[0]
    mean = spec.get("init_mean", [0.0] * nx)
    cov = spec.get("init_cov", np.eye(nx).tolist())
    return SystemModel(phi, q, mean, cov)


def load_scenario(source, validate: bool = True) -> Scenario:
    """Parse, schema-check and resolve a scenario (path, bundled name or dict)."""
    raw = _read(source)
    try:
        jsonschema.validate(raw, SCHEMA)
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ScenarioError(f"schema error at {where}: {exc.message}") from None

    system = _system(raw["system"])
    sensors = []
    for item in sorted(raw["sensors"], key=lambda s: s["id"]):
        R = item["R"]
        sensors.append(SensorModel(item["id"], np.atleast_2d(item["H"]), np.atleast_2d(R)))
    ids = [s.sensor_id for s in sensors]
    if ids != list(range(1, len(sensors) + 1)):
        raise ScenarioError("sensors: ids must be 1..n without gaps")
    n = len(sensors)

    top = raw["topology"]
    if top.get("nodes", n) != n:
        raise ScenarioError(f"topology: nodes = {top['nodes']} but {n} sensors are defined")
    edges = [(a - 1, b - 1) for a, b in top["edges"]]
    if any(a >= n or b >= n for a, b in edges):
        raise ScenarioError("topology: edge references a sensor that does not exist")
    weights = top.get("weights", "degree")
    unit = weights == "unit"
    explicit = None if isinstance(weights, str) else np.asarray(weights, dtype=float)
    build = Topology.directed_graph if top.get("directed", False) else Topology.undirected
    topology = build(n, edges, explicit)
    if classify(topology).kind is TopologyKind.INVALID:
        raise ScenarioError("topology: graph is not (strongly) connected")

    dl = raw["delays"]
    dist = dl.get("distribution", "uniform")
    try:
        profile = DelayProfile.uniform(dl["max_delay"]) if dist == "uniform" else DelayProfile(dl["max_delay"], tuple(dist))
    except ValueError as exc:
        raise ScenarioError(f"delays: {exc}") from None
    buffer_length = dl.get("buffer_length")
    if buffer_length is not None and buffer_length < profile.max_delay + 1:
        raise ScenarioError("delays: buffer_length must be at least max_delay + 1")

    run = raw["run"]
    names = raw["system"].get("state_names") or [f"x{c}" for c in range(system.state_dim)]
    if len(names) != system.state_dim:
        raise ScenarioError("system: state_names must name every state component")
    sc = Scenario(
        name=raw.get("name", "scenario"),
        system=system,
        sensors=tuple(sensors),
        topology=topology,
        delay=profile,
        horizon=run["horizon"],
        runs=run.get("monte_carlo_runs", 200),
        fusion=run.get("fusion", "vector"),
        estimators=tuple(run.get("estimators", ESTIMATORS)),
        seed=run.get("seed", 0),
        delay_seed=dl.get("seed"),
        buffer_length=buffer_length,
        unit_weights=unit,
        state_names=tuple(names),
    )
    if validate:
        report = validate_model(system, sensors)
        if not report.ok:
            raise ScenarioError("model assumptions violated: " + "; ".join(report.violations))
    return sc
