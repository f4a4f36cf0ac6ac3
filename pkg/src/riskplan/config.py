"""Scenario configuration: JSON schema, defaults, parsing, overrides.

Scenario files carry only what differs from the defaults below; parsing
materializes every default so a parsed config serializes back to an
identical, fully explicit document.  Unknown keys anywhere are errors.
"""

from __future__ import annotations

import copy
import json
import math
from dataclasses import dataclass

import jsonschema

from .dynamics import VehicleBounds, VehicleParams
from .geometry import Polygon2
from .occlusion import DISK, SEMICIRCLE, AreaDef, AreaSegment, HiddenClassParams
from .planner import PlannerConfig, SolverSettings
from .riskfield import RiskKernelParams
from .sim import Agent, Polyline, ScenarioRunner, WorldMap


class ConfigError(ValueError):
    pass


# Defaults shared by every scenario (simulation parameter table).
DEFAULTS = {
    "timing": {"t_s": 0.4, "duration": 16.0},
    "sensor": {"radius": 100.0, "angular_resolution_deg": 0.5},
    "planner": {
        "horizon": 10,
        "stage_weights": [0.0, 0.0, 0.0, 0.1, 0.1],
        "input_weights": [0.5, 1000.0],
        "terminal_weights": [20.0, 20.0, 1.0, 0.1, 0.1],
        "bounds": {
            "v": [0.0, 5.0],
            "delta": [-1.5, 1.5],
            "a": [-5.0, 2.0],
            "omega": [-1.5, 1.5],
        },
        "solver": {
            "max_iter": 200,
            "stationarity_tol": 1e-4,
            "step_tol": 1e-8,
            "penalty_init": 1e4,
            "penalty_growth": 100.0,
            "penalty_tol": 1e-6,
            "penalty_max_rounds": 8,
        },
    },
    "risk": {
        "objects": {"amplitude": 1300.0, "sigma": 0.36, "resolution": 0.2, "support_multiplier": 3.0, "inflation": 0.9},
        "infrastructure": {"amplitude": 200.0, "sigma": 0.25, "resolution": 0.2, "support_multiplier": 3.0},
        "hidden": {"amplitude": 110.0, "sigma": 0.2, "resolution": 0.2, "support_multiplier": 3.0},
    },
    "ego_defaults": {"wheelbase": 2.7, "footprint": {"length": 4.5, "width": 1.8}, "v_ref": 5.0},
}

# name -> config path for the run-time parameter overrides (--set)
OVERRIDE_ALIASES = {
    "t_s": ("timing", "t_s"),
    "duration": ("timing", "duration"),
    "N": ("planner", "horizon"),
    "l_u": ("planner", "input_weights"),
    "l_x": ("planner", "stage_weights"),
    "m": ("planner", "terminal_weights"),
    "a_bounds": ("planner", "bounds", "a"),
    "v_bounds": ("planner", "bounds", "v"),
    "delta_bounds": ("planner", "bounds", "delta"),
    "omega_bounds": ("planner", "bounds", "omega"),
    "a_o": ("risk", "objects", "amplitude"),
    "a_i": ("risk", "infrastructure", "amplitude"),
    "a_h": ("risk", "hidden", "amplitude"),
    "sigma_o": ("risk", "objects", "sigma"),
    "sigma_i": ("risk", "infrastructure", "sigma"),
    "sigma_h": ("risk", "hidden", "sigma"),
    "r_o": ("risk", "objects", "resolution"),
    "r_i": ("risk", "infrastructure", "resolution"),
    "r_h": ("risk", "hidden", "resolution"),
    "sensor_radius": ("sensor", "radius"),
    "v_ref": ("ego", "v_ref"),
}


def _number(minimum=None, exclusive_minimum=None):
    s = {"type": "number"}
    if minimum is not None:
        s["minimum"] = minimum
    if exclusive_minimum is not None:
        s["exclusiveMinimum"] = exclusive_minimum
    return s


def _array_of_numbers(n=None):
    s = {"type": "array", "items": {"type": "number"}}
    if n is not None:
        s["minItems"] = n
        s["maxItems"] = n
    return s


_VERTICES = {
    "type": "array",
    "minItems": 3,
    "items": _array_of_numbers(2),
}

_POLYLINE = {
    "type": "array",
    "minItems": 2,
    "items": _array_of_numbers(2),
}

_KERNEL = {
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "amplitude": _number(exclusive_minimum=0),
        "sigma": _number(exclusive_minimum=0),
        "resolution": _number(exclusive_minimum=0),
        "support_multiplier": _number(minimum=1),
    },
}

# objects additionally carry the point-planner inflation margin
_OBJECT_KERNEL = {
    "type": "object",
    "additionalProperties": False,
    "properties": {**_KERNEL["properties"], "inflation": _number(minimum=0)},
}

SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "required": ["name", "window", "ego", "map", "hidden_classes", "areas", "agents"],
    "properties": {
        "name": {"type": "string", "minLength": 1},
        "description": {"type": "string"},
        "window": {
            "type": "object",
            "additionalProperties": False,
            "required": ["x_min", "x_max", "y_min", "y_max"],
            "properties": {
                "x_min": _number(),
                "x_max": _number(),
                "y_min": _number(),
                "y_max": _number(),
            },
        },
        "timing": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "t_s": _number(exclusive_minimum=0),
                "duration": _number(exclusive_minimum=0),
            },
        },
        "sensor": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "radius": _number(exclusive_minimum=0),
                "angular_resolution_deg": _number(exclusive_minimum=0),
            },
        },
        "ego": {
            "type": "object",
            "additionalProperties": False,
            "required": ["start", "route"],
            "properties": {
                "start": {
                    "type": "object",
                    "additionalProperties": False,
                    "required": ["x", "y", "theta"],
                    "properties": {
                        "x": _number(),
                        "y": _number(),
                        "theta": _number(),
                        "v": _number(),
                        "delta": _number(),
                    },
                },
                "wheelbase": _number(exclusive_minimum=0),
                "footprint": {
                    "type": "object",
                    "additionalProperties": False,
                    "properties": {
                        "length": _number(exclusive_minimum=0),
                        "width": _number(exclusive_minimum=0),
                    },
                },
                "route": _POLYLINE,
                "v_ref": _number(exclusive_minimum=0),
            },
        },
        "planner": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "horizon": {"type": "integer", "minimum": 1},
                "stage_weights": _array_of_numbers(5),
                "input_weights": _array_of_numbers(2),
                "terminal_weights": _array_of_numbers(5),
                "bounds": {
                    "type": "object",
                    "additionalProperties": False,
                    "properties": {
                        "v": _array_of_numbers(2),
                        "delta": _array_of_numbers(2),
                        "a": _array_of_numbers(2),
                        "omega": _array_of_numbers(2),
                    },
                },
                "solver": {
                    "type": "object",
                    "additionalProperties": False,
                    "properties": {
                        "max_iter": {"type": "integer", "minimum": 1},
                        "stationarity_tol": _number(exclusive_minimum=0),
                        "step_tol": _number(exclusive_minimum=0),
                        "penalty_init": _number(exclusive_minimum=0),
                        "penalty_growth": _number(exclusive_minimum=1),
                        "penalty_tol": _number(exclusive_minimum=0),
                        "penalty_max_rounds": {"type": "integer", "minimum": 0},
                    },
                },
            },
        },
        "risk": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "objects": _OBJECT_KERNEL,
                "infrastructure": _KERNEL,
                "hidden": _KERNEL,
            },
        },
        "map": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "buildings": {
                    "type": "array",
                    "items": {
                        "type": "object",
                        "additionalProperties": False,
                        "required": ["vertices"],
                        "properties": {"id": {"type": "string"}, "vertices": _VERTICES},
                    },
                },
                "infrastructure": {
                    "type": "array",
                    "items": {
                        "type": "object",
                        "additionalProperties": False,
                        "required": ["vertices"],
                        "properties": {
                            "id": {"type": "string"},
                            "vertices": _VERTICES,
                            # solid markings may carry a stronger, wider kernel
                            "amplitude": _number(exclusive_minimum=0),
                            "sigma": _number(exclusive_minimum=0),
                        },
                    },
                },
            },
        },
        "hidden_classes": {
            "type": "array",
            "items": {
                "type": "object",
                "additionalProperties": False,
                "required": ["id", "name", "v_max", "element"],
                "properties": {
                    "id": {"type": "integer", "minimum": 0},
                    "name": {"type": "string"},
                    "v_max": _number(exclusive_minimum=0),
                    "element": {"enum": [DISK, SEMICIRCLE]},
                },
            },
        },
        "areas": {
            "type": "array",
            "items": {
                "type": "object",
                "additionalProperties": False,
                "required": ["id", "class", "segments"],
                "properties": {
                    "id": {"type": "integer", "minimum": 0},
                    "class": {"type": "integer", "minimum": 0},
                    "segments": {
                        "type": "array",
                        "minItems": 1,
                        "items": {
                            "type": "object",
                            "additionalProperties": False,
                            "required": ["vertices"],
                            "properties": {
                                "vertices": _VERTICES,
                                "heading": {"type": ["number", "null"]},
                            },
                        },
                    },
                },
            },
        },
        "agents": {
            "type": "array",
            "items": {
                "type": "object",
                "additionalProperties": False,
                "required": ["id", "class", "path", "speed"],
                "properties": {
                    "id": {"type": "string", "minLength": 1},
                    "class": {"enum": ["vehicle", "pedestrian", "motorcycle", "truck"]},
                    "footprint": {
                        "type": "object",
                        "additionalProperties": False,
                        "required": ["length", "width"],
                        "properties": {
                            "length": _number(exclusive_minimum=0),
                            "width": _number(exclusive_minimum=0),
                        },
                    },
                    "path": _POLYLINE,
                    "speed": _number(minimum=0),
                    "start_delay": _number(minimum=0),
                },
            },
        },
    },
}

_DEFAULT_FOOTPRINTS = {
    "vehicle": {"length": 4.5, "width": 1.8},
    "truck": {"length": 8.0, "width": 2.5},
    "motorcycle": {"length": 2.2, "width": 0.9},
    "pedestrian": {"length": 0.5, "width": 0.5},
}


def _deep_merge(base: dict, override: dict) -> dict:
    out = copy.deepcopy(base)
    for k, v in override.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _deep_merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


@dataclass(frozen=True)
class ScenarioConfig:
    """Fully materialized scenario document (plain JSON-able values)."""

    data: dict

    def __getitem__(self, key):
        return self.data[key]

    def to_dict(self) -> dict:
        return copy.deepcopy(self.data)

    def to_json(self) -> str:
        return json.dumps(self.data, indent=2, sort_keys=True)

    @property
    def name(self) -> str:
        return self.data["name"]


def _apply_defaults(raw: dict) -> dict:
    data = copy.deepcopy(raw)
    data["timing"] = _deep_merge(DEFAULTS["timing"], data.get("timing", {}))
    data["sensor"] = _deep_merge(DEFAULTS["sensor"], data.get("sensor", {}))
    data["planner"] = _deep_merge(DEFAULTS["planner"], data.get("planner", {}))
    data["risk"] = _deep_merge(DEFAULTS["risk"], data.get("risk", {}))
    ego = data.get("ego", {})
    ego.setdefault("wheelbase", DEFAULTS["ego_defaults"]["wheelbase"])
    ego["footprint"] = _deep_merge(
        DEFAULTS["ego_defaults"]["footprint"], ego.get("footprint", {})
    )
    ego.setdefault("v_ref", DEFAULTS["ego_defaults"]["v_ref"])
    start = ego.get("start", {})
    start.setdefault("v", 0.0)
    start.setdefault("delta", 0.0)
    ego["start"] = start
    data["ego"] = ego
    data.setdefault("description", "")
    m = data.get("map", {})
    m.setdefault("buildings", [])
    m.setdefault("infrastructure", [])
    for i, item in enumerate(m["buildings"]):
        item.setdefault("id", f"building_{i}")
    for i, item in enumerate(m["infrastructure"]):
        item.setdefault("id", f"infra_{i}")
    data["map"] = m
    for ag in data.get("agents", []):
        ag.setdefault("footprint", copy.deepcopy(_DEFAULT_FOOTPRINTS[ag.get("class", "vehicle")]))
        ag.setdefault("start_delay", 0.0)
    return data


def _validate(data: dict):
    validator = jsonschema.Draft202012Validator(SCHEMA)
    errors = sorted(validator.iter_errors(data), key=lambda e: list(e.absolute_path))
    if errors:
        e = errors[0]
        path = "$" + "".join(
            f"[{p!r}]" if isinstance(p, str) else f"[{p}]" for p in e.absolute_path
        )
        raise ConfigError(f"{path}: {e.message}")
    # cross-field checks the schema cannot express
    w = data["window"]
    if w["x_min"] >= w["x_max"] or w["y_min"] >= w["y_max"]:
        raise ConfigError("$['window']: extents must satisfy min < max")
    class_ids = {c["id"] for c in data["hidden_classes"]}
    if len(class_ids) != len(data["hidden_classes"]):
        raise ConfigError("$['hidden_classes']: duplicate class ids")
    by_id = {c["id"]: c for c in data["hidden_classes"]}
    for i, area in enumerate(data["areas"]):
        if area["class"] not in class_ids:
            raise ConfigError(f"$['areas'][{i}]['class']: unknown hidden class {area['class']}")
        needs_heading = by_id[area["class"]]["element"] == SEMICIRCLE
        for j, seg in enumerate(area["segments"]):
            heading = seg.get("heading")
            if needs_heading and heading is None:
                raise ConfigError(
                    f"$['areas'][{i}]['segments'][{j}]: heading required for a "
                    f"direction-constrained class"
                )
    agent_ids = [a["id"] for a in data["agents"]]
    if len(set(agent_ids)) != len(agent_ids):
        raise ConfigError("$['agents']: duplicate agent ids")
    for bname, (lo_i, hi_i) in (("v", (0, 1)), ("delta", (0, 1)), ("a", (0, 1)), ("omega", (0, 1))):
        b = data["planner"]["bounds"][bname]
        if b[lo_i] > b[hi_i]:
            raise ConfigError(f"$['planner']['bounds']['{bname}']: lower bound above upper")


def parse_dict(raw: dict) -> ScenarioConfig:
    if not isinstance(raw, dict):
        raise ConfigError("scenario document must be a JSON object")
    data = _apply_defaults(raw)
    _validate(data)
    return ScenarioConfig(data=data)


def parse_config(path) -> ScenarioConfig:
    with open(path) as f:
        try:
            raw = json.load(f)
        except json.JSONDecodeError as e:
            raise ConfigError(f"{path}: invalid JSON: {e}") from e
    return parse_dict(raw)


def apply_overrides(cfg: ScenarioConfig, overrides: dict[str, str]) -> ScenarioConfig:
    """Apply `--set key=value` pairs; values are parsed as JSON."""
    data = cfg.to_dict()
    for key, raw_value in overrides.items():
        try:
            value = json.loads(raw_value)
        except json.JSONDecodeError as e:
            raise ConfigError(f"--set {key}: value {raw_value!r} is not valid JSON: {e}") from e
        if key in OVERRIDE_ALIASES:
            path = OVERRIDE_ALIASES[key]
        elif "." in key:
            path = tuple(key.split("."))
        else:
            raise ConfigError(
                f"--set {key}: unknown parameter (known: {', '.join(sorted(OVERRIDE_ALIASES))}, "
                f"or a dotted config path)"
            )
        node = data
        for p in path[:-1]:
            if not isinstance(node, dict) or p not in node:
                raise ConfigError(f"--set {key}: no such config path {'.'.join(path)}")
            node = node[p]
        if not isinstance(node, dict) or path[-1] not in node:
            raise ConfigError(f"--set {key}: no such config path {'.'.join(path)}")
        node[path[-1]] = value
    return parse_dict(data)


def parameter_table(cfg: ScenarioConfig) -> str:
    """Run-header dump of every simulation parameter in the config."""
    d = cfg.data
    rows = [
        ("t_s [s]", d["timing"]["t_s"]),
        ("duration [s]", d["timing"]["duration"]),
        ("N (horizon)", d["planner"]["horizon"]),
        ("l_u (input weights)", d["planner"]["input_weights"]),
        ("l_x (stage weights)", d["planner"]["stage_weights"]),
        ("m (terminal weights)", d["planner"]["terminal_weights"]),
        ("a bounds [m/s^2]", d["planner"]["bounds"]["a"]),
        ("delta bounds [rad]", d["planner"]["bounds"]["delta"]),
        ("v bounds [m/s]", d["planner"]["bounds"]["v"]),
        ("omega bounds [rad/s]", d["planner"]["bounds"]["omega"]),
        ("a_o, a_i, a_h", [d["risk"]["objects"]["amplitude"], d["risk"]["infrastructure"]["amplitude"], d["risk"]["hidden"]["amplitude"]]),
        ("sigma_o, sigma_i, sigma_h [m]", [d["risk"]["objects"]["sigma"], d["risk"]["infrastructure"]["sigma"], d["risk"]["hidden"]["sigma"]]),
        ("r_o, r_i, r_h [m/cell]", [d["risk"]["objects"]["resolution"], d["risk"]["infrastructure"]["resolution"], d["risk"]["hidden"]["resolution"]]),
        ("sensor radius [m]", d["sensor"]["radius"]),
        ("v_ref [m/s]", d["ego"]["v_ref"]),
        ("wheelbase [m]", d["ego"]["wheelbase"]),
    ]
    width = max(len(r[0]) for r in rows)
    return "\n".join(f"{name:<{width}}  {value}" for name, value in rows)


def build_runner(cfg: ScenarioConfig, occlusion_enabled: bool, dump_grid_dir=None) -> ScenarioRunner:
    """Instantiate the simulation world described by a config."""
    d = cfg.data
    buildings = [Polygon2(b["vertices"]) for b in d["map"]["buildings"]]
    infra = [Polygon2(i["vertices"]) for i in d["map"]["infrastructure"]]
    infra_ids = [i["id"] for i in d["map"]["infrastructure"]]
    infra_defaults = d["risk"]["infrastructure"]
    infra_kernels = [
        RiskKernelParams(
            a=i.get("amplitude", infra_defaults["amplitude"]),
            sigma=i.get("sigma", infra_defaults["sigma"]),
            support_multiplier=infra_defaults["support_multiplier"],
        )
        for i in d["map"]["infrastructure"]
    ]
    classes = [
        HiddenClassParams(
            class_id=c["id"], v_max=c["v_max"], element_shape=c["element"], name=c["name"]
        )
        for c in d["hidden_classes"]
    ]
    class_names = {c["id"]: c["name"] for c in d["hidden_classes"]}
    areas = []
    for a in d["areas"]:
        segments = tuple(
            AreaSegment(Polygon2(s["vertices"]), heading=s.get("heading")) for s in a["segments"]
        )
        areas.append(AreaDef(area_id=a["id"], class_id=a["class"], segments=segments))
    world = WorldMap(
        buildings=buildings,
        infrastructure=infra,
        infrastructure_ids=infra_ids,
        areas=areas,
        hidden_classes=classes,
        class_names=class_names,
    )
    agents = [
        Agent(
            agent_id=a["id"],
            class_name=a["class"],
            length=a["footprint"]["length"],
            width=a["footprint"]["width"],
            path=Polyline(a["path"]),
            speed=a["speed"],
            start_delay=a["start_delay"],
        )
        for a in d["agents"]
    ]
    p = d["planner"]
    b = p["bounds"]
    planner_cfg = PlannerConfig(
        horizon=p["horizon"],
        stage_weights=p["stage_weights"],
        input_weights=p["input_weights"],
        terminal_weights=p["terminal_weights"],
        vehicle=VehicleParams(
            wheelbase=d["ego"]["wheelbase"],
            t_s=d["timing"]["t_s"],
            bounds=VehicleBounds(
                v_min=b["v"][0],
                v_max=b["v"][1],
                delta_min=b["delta"][0],
                delta_max=b["delta"][1],
                a_min=b["a"][0],
                a_max=b["a"][1],
                omega_min=b["omega"][0],
                omega_max=b["omega"][1],
            ),
        ),
        solver=SolverSettings(**p["solver"]),
    )
    kernels = {
        key: RiskKernelParams(
            a=d["risk"][key]["amplitude"],
            sigma=d["risk"][key]["sigma"],
            support_multiplier=d["risk"][key]["support_multiplier"],
        )
        for key in ("objects", "infrastructure", "hidden")
    }
    object_inflation = d["risk"]["objects"]["inflation"]
    resolutions = {key: d["risk"][key]["resolution"] for key in kernels}
    start = d["ego"]["start"]
    ego_start = [start["x"], start["y"], start["theta"], start["v"], start["delta"]]
    w = d["window"]
    return ScenarioRunner(
        world=world,
        agents=agents,
        planner_cfg=planner_cfg,
        route=Polyline(d["ego"]["route"]),
        ego_start=ego_start,
        ego_footprint=(d["ego"]["footprint"]["length"], d["ego"]["footprint"]["width"]),
        v_ref=d["ego"]["v_ref"],
        sensor_radius=d["sensor"]["radius"],
        sensor_resolution_deg=d["sensor"]["angular_resolution_deg"],
        duration=d["timing"]["duration"],
        kernels=kernels,
        resolutions=resolutions,
        window=(w["x_min"], w["x_max"], w["y_min"], w["y_max"]),
        infra_kernels=infra_kernels,
        occlusion_enabled=occlusion_enabled,
        scenario_name=d["name"],
        dump_grid_dir=dump_grid_dir,
        object_inflation=object_inflation,
    )
