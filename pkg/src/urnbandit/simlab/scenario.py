"""Scenario files: JSON schema, defaults and expansion into runnable cases."""

from __future__ import annotations

import copy
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import jsonschema
import numpy as np

from ..allocation import PolicyKind
from ..errors import SpecError
from ..inference import Hypothesis, control_average, difference, ratio, threshold
from ..kernel import BudgetSpec, RewardSpec

DEFAULTS: dict[str, Any] = {
    "label": "scenario",
    "distribution": "bernoulli",
    "rho": 0.0,
    "budget": 1,
    "policy": ["UNB"],
    "hypothesis": {"type": "difference", "i": 0, "j": 1},
    "mode": "fixed",
    "alpha": 0.05,
    "power_target": 0.9,
    "looks": 10,
    "spending": {"family": "obf"},
    "reps": 2000,
    "seed": 20240601,
    "n0": 20,
    "floor": 1.0,
    "t_min": 50,
    "naive": False,
    "evaluate": ["size", "power"],
    "lambdas": [2.0, 5.0],
}

_SPENDING = {
    "oneOf": [
        {"type": "string", "enum": ["pocock", "obf", "power", "hsd"]},
        {
            "type": "object",
            "properties": {
                "family": {"type": "string", "enum": ["pocock", "obf", "power", "hsd"]},
                "param": {"type": "number"},
            },
            "required": ["family"],
            "additionalProperties": False,
        },
    ]
}

_HYPOTHESIS = {
    "type": "object",
    "properties": {
        "type": {"type": "string", "enum": ["difference", "threshold", "control_average", "ratio"]},
        "i": {"type": "integer", "minimum": 0},
        "j": {"type": "integer", "minimum": 0},
        "k": {"type": "integer", "minimum": 0},
        "bound": {"type": "number"},
        "null_value": {"type": "number"},
    },
    "required": ["type"],
    "additionalProperties": False,
}

_POLICY = {"type": "string", "enum": ["UNB", "ER", "UCB", "unb", "er", "ucb"]}

SCENARIO_PROPERTIES = {
    "label": {"type": "string"},
    "distribution": {"type": "string", "enum": ["bernoulli", "poisson", "exponential"]},
    "arms": {"type": "array", "items": {"type": "number", "exclusiveMinimum": 0}, "minItems": 2},
    "null_arms": {"type": "array", "items": {"type": "number", "exclusiveMinimum": 0}, "minItems": 2},
    "rho": {"type": "number", "minimum": 0, "exclusiveMaximum": 1},
    "budget": {
        "oneOf": [
            {"type": "integer", "minimum": 1},
            {"type": "array", "items": {"type": "integer", "minimum": 1}, "minItems": 1},
        ]
    },
    "policy": {"oneOf": [_POLICY, {"type": "array", "items": _POLICY, "minItems": 1}]},
    "hypothesis": _HYPOTHESIS,
    "mode": {"type": "string", "enum": ["fixed", "sequential"]},
    "sample_size": {"type": "integer", "minimum": 1},
    "alpha": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 0.5},
    "power_target": {"type": "number", "exclusiveMinimum": 0.5, "exclusiveMaximum": 1},
    "delta_design": {"type": "number", "exclusiveMinimum": 0},
    "looks": {"type": "integer", "minimum": 1},
    "spending": _SPENDING,
    "reps": {"type": "integer", "minimum": 1},
    "seed": {"type": "integer", "minimum": 0},
    "n0": {"type": "integer", "minimum": 1},
    "floor": {"type": "number", "exclusiveMinimum": 0},
    "t_min": {"type": "integer", "minimum": 0},
    "naive": {"type": "boolean"},
    "evaluate": {
        "type": "array",
        "items": {"type": "string", "enum": ["size", "power"]},
        "minItems": 1,
    },
    "deltas": {"type": "array", "items": {"type": "number", "minimum": 0}, "minItems": 1},
    "lambdas": {"type": "array", "items": {"type": "number", "minimum": 0}},
}

SCENARIO_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "properties": SCENARIO_PROPERTIES,
    "additionalProperties": False,
}

FILE_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "oneOf": [
        {**SCENARIO_SCHEMA, "required": ["arms"]},
        {
            "type": "object",
            "properties": {
                "defaults": SCENARIO_SCHEMA,
                "scenarios": {"type": "array", "items": SCENARIO_SCHEMA, "minItems": 1},
            },
            "required": ["scenarios"],
            "additionalProperties": False,
        },
    ],
}


@dataclass(frozen=True)
class Scenario:
    """One fully resolved simulation case."""

    label: str
    family: str
    arms: tuple[float, ...]
    null_arms: tuple[float, ...]
    rho: float
    budget: BudgetSpec
    policies: tuple[PolicyKind, ...]
    hypothesis: dict
    mode: str
    sample_size: int | None
    alpha: float
    power_target: float
    delta_design: float
    looks: int
    spending: dict
    reps: int
    seed: int
    n0: int
    floor: float
    t_min: int
    naive: bool
    evaluate: tuple[str, ...]
    lambdas: tuple[float, ...]
    delta: float | None = None
    raw: dict = field(default_factory=dict, compare=False, repr=False)

    @property
    def d(self) -> int:
        return len(self.arms)

    def reward_spec(self, null: bool) -> RewardSpec:
        return RewardSpec.of(self.family, self.null_arms if null else self.arms, self.rho)

    def build_hypothesis(self) -> Hypothesis:
        return build_hypothesis(self.hypothesis, self.d)

    def inferior_arms(self, null: bool) -> np.ndarray:
        means = np.asarray(self.null_arms if null else self.arms)
        return means < means.max()

    def with_overrides(self, **kw) -> "Scenario":
        return resolve({**self.raw, **kw})


def build_hypothesis(spec: dict, d: int) -> Hypothesis:
    kind = spec.get("type", "difference")
    if kind == "difference":
        return difference(spec.get("i", 0), spec.get("j", 1), d)
    if kind == "threshold":
        if "bound" not in spec:
            raise SpecError("threshold hypothesis needs 'bound'")
        return threshold(spec.get("k", 0), spec["bound"], d)
    if kind == "control_average":
        if d < 3:
            raise SpecError("control_average needs at least three arms")
        return control_average(d)
    if kind == "ratio":
        return ratio(spec.get("i", 0), spec.get("j", 1), d, spec.get("null_value", 1.0))
    raise SpecError(f"unknown hypothesis type {kind!r}")


def resolve(entry: dict, defaults: dict | None = None) -> Scenario:
    """Merge defaults into one scenario entry and check cross-field constraints."""
    cfg = copy.deepcopy(DEFAULTS)
    cfg.update(copy.deepcopy(defaults or {}))
    cfg.update(copy.deepcopy(entry))
    jsonschema.validate({k: v for k, v in cfg.items() if k in SCENARIO_PROPERTIES}, SCENARIO_SCHEMA)
    if "arms" not in cfg:
        raise SpecError("scenario needs 'arms'")
    arms = tuple(float(a) for a in cfg["arms"])
    d = len(arms)
    null_arms = tuple(float(a) for a in cfg.get("null_arms", [arms[0]] * d))
    if len(null_arms) != d:
        raise SpecError("null_arms must have the same length as arms")
    budget = cfg["budget"]
    budget = BudgetSpec((budget,) if isinstance(budget, int) else tuple(budget))
    policies = cfg["policy"]
    policies = tuple(PolicyKind.parse(p) for p in ([policies] if isinstance(policies, str) else policies))
    spending = cfg["spending"]
    spending = {"family": spending} if isinstance(spending, str) else dict(spending)
    hyp = build_hypothesis(cfg["hypothesis"], d)
    if "delta_design" in cfg:
        delta_design = float(cfg["delta_design"])
    else:
        delta_design = float(hyp.value(np.asarray(arms)))
    mode = cfg["mode"]
    sample_size = cfg.get("sample_size")
    if mode == "fixed":
        if sample_size is None:
            raise SpecError("fixed mode needs 'sample_size'")
        if sample_size < cfg["n0"] * d:
            raise SpecError("sample_size must cover the burn-in (n0 pulls per arm)")
    elif not delta_design > 0:
        raise SpecError("sequential mode needs a positive design effect")
    RewardSpec.of(cfg["distribution"], arms, cfg["rho"])
    RewardSpec.of(cfg["distribution"], null_arms, cfg["rho"])
    return Scenario(
        label=cfg["label"], family=cfg["distribution"], arms=arms, null_arms=null_arms,
        rho=float(cfg["rho"]), budget=budget, policies=policies, hypothesis=dict(cfg["hypothesis"]),
        mode=mode, sample_size=sample_size, alpha=float(cfg["alpha"]),
        power_target=float(cfg["power_target"]), delta_design=delta_design, looks=int(cfg["looks"]),
        spending=spending, reps=int(cfg["reps"]), seed=int(cfg["seed"]), n0=int(cfg["n0"]),
        floor=float(cfg["floor"]), t_min=int(cfg["t_min"]), naive=bool(cfg["naive"]),
        evaluate=tuple(cfg["evaluate"]), lambdas=tuple(float(x) for x in cfg["lambdas"]),
        delta=cfg.get("_delta"), raw={k: v for k, v in cfg.items() if not k.startswith("_")},
    )


def _expand_deltas(entry: dict) -> list[dict]:
    """A ``deltas`` sweep becomes one entry per effect size on top of ``null_arms``."""
    deltas = entry.get("deltas")
    if not deltas:
        return [entry]
    base = entry.get("null_arms") or [entry["arms"][-1]] * len(entry["arms"])
    out = []
    for dl in deltas:
        e = {k: v for k, v in entry.items() if k != "deltas"}
        e["null_arms"] = list(base)
        e["arms"] = [base[0] + dl] + list(base[1:])
        e["label"] = f"{entry.get('label', 'scenario')}[delta={dl:g}]"
        e["_delta"] = float(dl)
        if dl == 0:
            e["evaluate"] = ["size"]
        out.append(e)
    return out


def load_scenarios(source: str | Path | dict, overrides: dict | None = None) -> list[Scenario]:
    """Validate a scenario file (or parsed dict) and resolve every entry."""
    if isinstance(source, dict):
        data = source
    else:
        with open(source, encoding="utf-8") as fh:
            data = json.load(fh)
    validate_document(data)
    if "scenarios" in data:
        defaults, entries = data.get("defaults", {}), data["scenarios"]
    else:
        defaults, entries = {}, [data]
    over = {k: v for k, v in (overrides or {}).items() if v is not None}
    out = []
    for entry in entries:
        for e in _expand_deltas({**defaults, **entry}):
            e.update(over)
            out.append(resolve(e))
    return out


def validate_document(data: Any) -> None:
    """Raise ``jsonschema.ValidationError`` when the document breaks the schema."""
    jsonschema.validate(data, FILE_SCHEMA)
