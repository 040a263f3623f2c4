"""Scenario JSON: schema, parsing, serialization and bundled scenarios.

Matrices are nested row-major lists and angles are in radians. The
channel input dimension and the process-noise dimension are taken from
the plant, so they never appear in the file.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import jsonschema
import numpy as np

from . import defaults
from .exceptions import ScenarioError
from .model import OrthBlock, SystemModel
from .noise import (
    BurstBernoulli,
    DiscreteProcess,
    DiscreteSet,
    Gaussian,
    IsotropicUniform,
    PerComponentIID,
    PointMass,
    TwoPoint,
    UniformInterval,
    ZeroNoise,
)
from .policy import POLICY_KINDS
from .reachability import build
from .sim import SimScenario

_num = {"type": "number"}
_vec = {"type": "array", "items": _num}
_mat = {"type": "array", "items": _vec}


def _obj(props: dict, required=()) -> dict:
    return {"type": "object", "properties": props, "required": list(required),
            "additionalProperties": False}


def _variant(name: str, props: dict, required=(), key="variant") -> dict:
    return _obj({key: {"const": name}, **props}, [key, *required])


_bounds = {"C1": {"type": "number", "minimum": 0}, "C4": {"type": "number", "minimum": 0}}
_overrides = _obj({"mu": _vec, "sigma": {"type": "number", "minimum": 0},
                   "diamT": {"type": "number", "minimum": 0}})

SCHEMA = _obj(
    {
        "name": {"type": "string"},
        "description": {"type": "string"},
        "system": _obj(
            {
                "d1": {"type": "integer", "minimum": 0},
                "A1": _mat,
                "blocks": {
                    "type": "array",
                    "items": _obj({"kind": {"enum": ["PlusOne", "MinusOne", "Rotation"]},
                                   "theta": _num}, ["kind"]),
                },
                "B1": _mat,
                "B2": _mat,
                "m": {"type": "integer", "minimum": 1},
            },
            ["d1", "A1", "blocks", "B1", "B2"],
        ),
        "channel": {
            "oneOf": [
                _variant("PerComponentIID", {
                    "components": {"type": "array", "minItems": 1, "items": {"oneOf": [
                        _variant("PointMass", {"v": _num}, ["v"], key="dist"),
                        _variant("TwoPoint", {"v0": _num, "v1": _num, "p1": _num},
                                 ["v0", "v1", "p1"], key="dist"),
                        _variant("UniformInterval", {"lo": _num, "hi": _num}, ["lo", "hi"],
                                 key="dist"),
                        _variant("DiscreteSet", {"values": _vec, "probs": _vec},
                                 ["values", "probs"], key="dist"),
                    ]}},
                    "overrides": _overrides,
                }, ["components"]),
                _variant("BurstBernoulli", {"p": _num, "overrides": _overrides}, ["p"]),
            ]
        },
        "process": {
            "oneOf": [
                _variant("ZeroNoise", _bounds),
                _variant("IsotropicUniform", {"halfwidth": _vec, **_bounds}, ["halfwidth"]),
                _variant("Gaussian", {"std": _vec, **_bounds}, ["std"]),
                _variant("DiscreteSet", {"values": _mat, "probs": _vec, **_bounds},
                         ["values", "probs"]),
            ]
        },
        "policy": _obj({"kind": {"enum": list(POLICY_KINDS)},
                        "Umax": {"type": "number", "exclusiveMinimum": 0}}, ["kind", "Umax"]),
        "sim": _obj(
            {
                "x0": _vec,
                "horizon": {"type": "integer", "minimum": 1},
                "trajectories": {"type": "integer", "minimum": 1},
                "seed": {"type": "integer", "minimum": 0},
                "record": {"enum": ["full", "thinned"]},
            },
            ["x0", "seed"],
        ),
    },
    ["system", "channel", "process", "policy", "sim"],
)

_COMPONENTS = {"PointMass": PointMass, "TwoPoint": TwoPoint,
               "UniformInterval": UniformInterval, "DiscreteSet": DiscreteSet}


@dataclass(frozen=True, eq=False)
class Scenario:
    """A parsed scenario file. ``raw`` keeps the validated document."""

    raw: dict
    model: SystemModel
    channel: object
    channel_overrides: dict | None
    process: object
    policy_kind: str
    Umax: float
    x0: np.ndarray
    horizon: int | None
    trajectories: int | None
    seed: int
    record: str

    @property
    def name(self) -> str:
        return self.raw.get("name", "scenario")

    def sha256(self) -> str:
        return scenario_sha256(self.raw)

    def to_sim(self, *, seed: int | None = None, horizon: int | None = None,
               trajectories: int | None = None) -> SimScenario:
        """Resolve defaults (horizon ``2000 * kappa``, ``M = 2000``)."""
        H = horizon or self.horizon
        if H is None:
            H = defaults.HORIZON_PER_KAPPA * build(self.model).kappa
        return SimScenario(
            model=self.model, channel=self.channel, process=self.process,
            policy_kind=self.policy_kind, Umax=self.Umax, x0=self.x0, horizon=int(H),
            trajectories=int(trajectories or self.trajectories or defaults.TRAJECTORIES),
            master_seed=int(self.seed if seed is None else seed), record=self.record,
            channel_overrides=self.channel_overrides,
        )


def parse(doc: dict) -> Scenario:
    """Validate ``doc`` against :data:`SCHEMA` and build the model objects.

    Raises
    ------
    ScenarioError
        On schema violations or inconsistent dimensions.
    """
    try:
        jsonschema.validate(doc, SCHEMA)
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ScenarioError(f"{where}: {exc.message}") from None

    s = doc["system"]
    blocks = [OrthBlock(b["kind"], b.get("theta")) for b in s["blocks"]]
    model = SystemModel(A1=s["A1"], blocks=blocks, B1=s["B1"], B2=s["B2"], m=s.get("m"))
    if model.d1 != s["d1"]:
        raise ScenarioError(f"d1 = {s['d1']} but A1 is {model.d1}x{model.d1}")

    c = doc["channel"]
    if c["variant"] == "BurstBernoulli":
        channel = BurstBernoulli(c["p"], model.m)
    else:
        comps = []
        for comp in c["components"]:
            args = {k: v for k, v in comp.items() if k != "dist"}
            comps.append(_COMPONENTS[comp["dist"]](**args))
        channel = PerComponentIID(tuple(comps))

    p = doc["process"]
    bounds = {k: p[k] for k in ("C1", "C4") if k in p}
    variant = p["variant"]
    if variant == "ZeroNoise":
        process = ZeroNoise(model.d, **bounds)
    elif variant == "IsotropicUniform":
        process = IsotropicUniform(tuple(p["halfwidth"]), **bounds)
    elif variant == "Gaussian":
        process = Gaussian(tuple(p["std"]), **bounds)
    else:
        process = DiscreteProcess(tuple(map(tuple, p["values"])), tuple(p["probs"]), **bounds)

    sim = doc["sim"]
    scenario = Scenario(
        raw=json.loads(json.dumps(doc)),
        model=model, channel=channel, channel_overrides=c.get("overrides"),
        process=process, policy_kind=doc["policy"]["kind"], Umax=float(doc["policy"]["Umax"]),
        x0=np.asarray(sim["x0"], dtype=float), horizon=sim.get("horizon"),
        trajectories=sim.get("trajectories"), seed=sim["seed"],
        record=sim.get("record", "thinned"),
    )
    # dimension checks live in SimScenario
    scenario.to_sim(horizon=1, trajectories=1)
    return scenario


def serialize(sc: Scenario) -> dict:
    """Rebuild the JSON document from the model objects."""
    model = sc.model
    out = {}
    for key in ("name", "description"):
        if key in sc.raw:
            out[key] = sc.raw[key]
    system = {
        "d1": model.d1,
        "A1": model.A1.tolist(),
        "blocks": [{"kind": b.kind.value, **({"theta": b.theta} if b.theta is not None else {})}
                   for b in model.blocks],
        "B1": model.B1.tolist(),
        "B2": model.B2.tolist(),
    }
    if "m" in sc.raw["system"]:
        system["m"] = model.m
    out["system"] = system

    ch = sc.channel
    if isinstance(ch, BurstBernoulli):
        channel = {"variant": "BurstBernoulli", "p": ch.p}
    else:
        comps = []
        for comp in ch.components:
            d = {"dist": type(comp).__name__, **comp.__dict__}
            if isinstance(comp, DiscreteSet):
                d["values"], d["probs"] = list(comp.values), list(comp.probs)
            comps.append(d)
        channel = {"variant": "PerComponentIID", "components": comps}
    if sc.channel_overrides is not None:
        channel["overrides"] = sc.channel_overrides
    out["channel"] = channel

    pm = sc.process
    if isinstance(pm, ZeroNoise):
        process = {"variant": "ZeroNoise"}
    elif isinstance(pm, IsotropicUniform):
        process = {"variant": "IsotropicUniform", "halfwidth": list(pm.halfwidth)}
    elif isinstance(pm, Gaussian):
        process = {"variant": "Gaussian", "std": list(pm.std)}
    else:
        process = {"variant": "DiscreteSet", "values": [list(v) for v in pm.values],
                   "probs": list(pm.probs)}
    for key in ("C1", "C4"):
        if getattr(pm, key) is not None:
            process[key] = getattr(pm, key)
    out["process"] = process

    out["policy"] = {"kind": sc.policy_kind, "Umax": sc.Umax}
    sim = {"x0": sc.x0.tolist()}
    if sc.horizon is not None:
        sim["horizon"] = sc.horizon
    if sc.trajectories is not None:
        sim["trajectories"] = sc.trajectories
    sim["seed"] = sc.seed
    if "record" in sc.raw["sim"]:
        sim["record"] = sc.record
    out["sim"] = sim
    return out


def scenario_sha256(doc: dict) -> str:
    canonical = json.dumps(doc, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode()).hexdigest()


def load(path) -> Scenario:
    try:
        doc = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ScenarioError(f"{path}: invalid JSON ({exc})") from None
    return parse(doc)


BUNDLED = ("example1", "rotation_general", "rotation_zero_control")


def bundled(name: str) -> dict:
    """The JSON document of a bundled scenario."""
    if name not in BUNDLED:
        raise KeyError(f"unknown bundled scenario {name!r}; choose from {BUNDLED}")
    text = resources.files("msbound").joinpath("scenarios", f"{name}.json").read_text()
    return json.loads(text)
