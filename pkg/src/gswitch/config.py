"""Experiment configuration files (YAML) and their schema.

A minimal file only names a preset::

    system: {preset: switch2x2}
    eps_list: [0.1, 0.05]
    sim: {horizon: 1000000, seed: 7}

An inline system spells out channel states and, optionally, facets::

    system:
      name: ad_hoc_inline
      n: 2
      grid: 3                      # schedules are multiples of 1/3
      nu: ["2/3", "2/3"]
      channel_states:
        - id: m0
          psi: 1.0
          schedules: [[1, 0], [0, 1], ["2/3", "2/3"], ["2/3", 0], [0, "2/3"], [0, 0]]
      facets:                      # omit to enumerate them (n <= 3 only)
        - {c: [1, 2], b: 2}
        - {c: [2, 1], b: 2}
    family:
      kind: bernoulli-independent  # or explicit-joint with a support list
    objectives: {total: [1, 1]}
    output: {path: "-", format: csv}

Rates may be written as numbers or as fraction strings such as ``"2/3"``.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field, replace
from fractions import Fraction
from pathlib import Path
from typing import Any

import jsonschema
import numpy as np
import yaml

from .engine import SimConfig
from .geometry import Facet
from .model import ChannelState, HeavyTrafficFamily, SwitchSpec, make_bernoulli_family, make_joint_family
from .presets import PRESETS, get_preset

SEED_ENV = "GSWITCH_SEED"

_rate = {"anyOf": [{"type": "number", "minimum": 0}, {"type": "string", "pattern": r"^\s*\d+(\s*/\s*\d+)?\s*$"}]}
_vector = {"type": "array", "items": _rate, "minItems": 1}

CONFIG_SCHEMA: dict[str, Any] = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "title": "gswitch experiment",
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "system": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "preset": {"enum": sorted(PRESETS)},
                "name": {"type": "string"},
                "n": {"type": "integer", "minimum": 1},
                "grid": {"type": "integer", "minimum": 1},
                "nu": _vector,
                "channel_states": {
                    "type": "array",
                    "minItems": 1,
                    "items": {
                        "type": "object",
                        "additionalProperties": False,
                        "required": ["psi", "schedules"],
                        "properties": {
                            "id": {"type": "string"},
                            "psi": {"type": "number", "minimum": 0, "maximum": 1},
                            "schedules": {"type": "array", "minItems": 1, "items": _vector},
                        },
                    },
                },
                "facets": {
                    "type": "array",
                    "minItems": 1,
                    "items": {
                        "type": "object",
                        "additionalProperties": False,
                        "required": ["c", "b"],
                        "properties": {"c": _vector, "b": _rate},
                    },
                },
            },
            "oneOf": [
                {"required": ["preset"], "not": {"anyOf": [{"required": ["n"]}, {"required": ["channel_states"]}]}},
                {"required": ["n", "channel_states", "nu"], "not": {"required": ["preset"]}},
            ],
        },
        "family": {
            "type": "object",
            "additionalProperties": False,
            "required": ["kind"],
            "properties": {
                "kind": {"enum": ["bernoulli-independent", "explicit-joint"]},
                "nu": _vector,
                "support": {
                    "type": "array",
                    "minItems": 1,
                    "items": {
                        "type": "object",
                        "additionalProperties": False,
                        "required": ["x", "p"],
                        "properties": {
                            "x": {"type": "array", "items": {"type": "integer", "minimum": 0}},
                            "p": {"type": "number", "minimum": 0, "maximum": 1},
                        },
                    },
                },
            },
        },
        "eps_list": {"type": "array", "items": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1}},
        "sim": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "horizon": {"type": "integer", "minimum": 1},
                "burn_in": {"type": "number", "minimum": 0, "exclusiveMaximum": 1},
                "batches": {"type": "integer", "minimum": 2},
                "seed": {"type": "integer", "minimum": 0},
                "estimate_cross_terms": {"type": "boolean"},
                "cone_moments_orders": {"type": "array", "items": {"type": "integer", "minimum": 1}},
                "tie_break": {"enum": ["uniform", "maximal"]},
            },
        },
        "objectives": {"type": "object", "additionalProperties": {"type": "array", "items": {"type": "number"}}},
        "lp": {
            "type": "object",
            "additionalProperties": False,
            "properties": {"mode": {"enum": ["derived", "printed", "as_printed", "both"]}},
        },
        "output": {
            "type": "object",
            "additionalProperties": False,
            "properties": {"path": {"type": "string"}, "format": {"enum": ["csv", "pretty"]}},
        },
    },
    "required": ["system"],
}


class ConfigError(ValueError):
    """The configuration is malformed; ``errors`` lists every problem found."""

    def __init__(self, errors: list[str]):
        super().__init__("; ".join(errors))
        self.errors = errors


def _rate(x) -> float:
    return float(Fraction(x.replace(" ", ""))) if isinstance(x, str) else float(x)


@dataclass(frozen=True)
class ExperimentConfig:
    name: str
    spec: SwitchSpec
    family: HeavyTrafficFamily
    facets: tuple[Facet, ...] | None
    nu: np.ndarray
    eps_list: tuple[float, ...]
    sim: SimConfig
    objectives: dict[str, np.ndarray] = field(default_factory=dict)
    lp_mode: str = "derived"
    output_path: str = "-"
    output_format: str = "csv"


def schema_errors(raw: Any) -> list[str]:
    validator = jsonschema.Draft202012Validator(CONFIG_SCHEMA)
    errs = sorted(validator.iter_errors(raw), key=lambda e: list(e.absolute_path))
    return [f"{'/'.join(str(p) for p in e.absolute_path) or '<root>'}: {e.message}" for e in errs]


def from_dict(raw: dict[str, Any], env: dict[str, str] | None = None) -> ExperimentConfig:
    errors = schema_errors(raw)
    if errors:
        raise ConfigError(errors)
    env = os.environ if env is None else env
    system = raw["system"]
    if "preset" in system:
        preset = get_preset(system["preset"])
        name = system["preset"]
        spec, family, facets, nu = preset.spec, preset.family, preset.facets, preset.nu
        objectives = dict(preset.objectives)
        if "facets" in system:
            facets = tuple(Facet(np.array([_rate(v) for v in f["c"]]), _rate(f["b"])) for f in system["facets"])
        if "nu" in system:
            nu = np.array([_rate(v) for v in system["nu"]])
    else:
        name = system.get("name", "inline")
        states = tuple(
            ChannelState(cs.get("id", f"m{i}"), cs["psi"], tuple(tuple(_rate(v) for v in x) for x in cs["schedules"]))
            for i, cs in enumerate(system["channel_states"])
        )
        spec = SwitchSpec(n=system["n"], channel_states=states, name=name, grid=system.get("grid", 1))
        facets = None
        if "facets" in system:
            facets = tuple(Facet(np.array([_rate(v) for v in f["c"]]), _rate(f["b"])) for f in system["facets"])
        nu = np.array([_rate(v) for v in system["nu"]])
        family = None
        objectives = {"total": np.ones(spec.n)}

    fam_raw = raw.get("family")
    if fam_raw is not None:
        if fam_raw["kind"] == "bernoulli-independent":
            fam_nu = [_rate(v) for v in fam_raw.get("nu", list(nu))]
            family = make_bernoulli_family(fam_nu)
        else:
            if "support" not in fam_raw:
                raise ConfigError(["family: explicit-joint requires a support list"])
            family = make_joint_family([(s["x"], s["p"]) for s in fam_raw["support"]])
    if family is None:
        family = make_bernoulli_family(nu)
    if family.nu.size != spec.n:
        raise ConfigError([f"family: dimension {family.nu.size} does not match n={spec.n}"])

    for key, w in raw.get("objectives", {}).items():
        if len(w) != spec.n:
            raise ConfigError([f"objectives/{key}: expected {spec.n} weights, got {len(w)}"])
        objectives[key] = np.array(w, dtype=float)

    sim_raw = dict(raw.get("sim", {}))
    seed = sim_raw.pop("seed", 0)
    if env.get(SEED_ENV):
        try:
            seed = int(env[SEED_ENV])
        except ValueError:
            raise ConfigError([f"{SEED_ENV}={env[SEED_ENV]!r} is not an integer"]) from None
    eps_list = tuple(raw.get("eps_list", [0.1]))
    if "cone_moments_orders" in sim_raw:
        sim_raw["cone_moments_orders"] = tuple(sim_raw["cone_moments_orders"])
    try:
        sim = SimConfig(epsilon=eps_list[0] if eps_list else 0.1, seed=seed, **sim_raw)
    except ValueError as exc:
        raise ConfigError([f"sim: {exc}"]) from None
    out = raw.get("output", {})
    return ExperimentConfig(
        name=name, spec=spec, family=family, facets=facets, nu=nu, eps_list=eps_list, sim=sim,
        objectives=objectives, lp_mode=raw.get("lp", {}).get("mode", "derived"),
        output_path=out.get("path", "-"), output_format=out.get("format", "csv"),
    )


def load(path: str | Path, env: dict[str, str] | None = None) -> ExperimentConfig:
    try:
        raw = yaml.safe_load(Path(path).read_text())
    except OSError as exc:
        raise ConfigError([f"cannot read {path}: {exc}"]) from None
    except yaml.YAMLError as exc:
        raise ConfigError([f"{path}: invalid YAML: {exc}"]) from None
    if not isinstance(raw, dict):
        raise ConfigError([f"{path}: top level must be a mapping"])
    return from_dict(raw, env)


def with_overrides(cfg: ExperimentConfig, **kw) -> ExperimentConfig:
    """Apply CLI flag values (``None`` means "not given")."""
    sim = cfg.sim
    changes: dict[str, Any] = {}
    if kw.get("epsilon") is not None:
        changes["eps_list"] = tuple(kw["epsilon"])
    sim_changes = {}
    if kw.get("seed") is not None:
        sim_changes["seed"] = kw["seed"]
    if kw.get("horizon") is not None:
        sim_changes["horizon"] = kw["horizon"]
    eps = changes.get("eps_list", cfg.eps_list)
    if eps:
        sim_changes["epsilon"] = eps[0]
    if sim_changes:
        try:
            changes["sim"] = replace(sim, **sim_changes)
        except ValueError as exc:
            raise ConfigError([f"sim: {exc}"]) from None
    if kw.get("mode") is not None:
        changes["lp_mode"] = kw["mode"]
    if kw.get("output") is not None:
        changes["output_path"] = kw["output"]
    if kw.get("format") is not None:
        changes["output_format"] = kw["format"]
    return replace(cfg, **changes)
