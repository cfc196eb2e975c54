"""Flat ``key = value`` experiment configs with a typed schema.

Lines are ``key = value``; ``#`` starts a comment. Lists are comma
separated. Unknown keys, bad values and violated parameter constraints are
reported together in one :class:`ConfigError`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable

U64_MAX = (1 << 64) - 1


class ConfigError(ValueError):
    """Invalid configuration; ``problems`` maps offending keys to messages."""

    def __init__(self, problems: dict[str, str]):
        self.problems = dict(problems)
        lines = "; ".join(f"{k}: {v}" for k, v in sorted(self.problems.items()))
        super().__init__(f"invalid config ({lines})")


@dataclass(frozen=True)
class Param:
    type: str
    default: Any
    unit: str
    doc: str


def _dyadic(lo: int, hi: int) -> list[float]:
    return [2.0**-k for k in range(lo, hi + 1)]


COMMON = {
    "kind": Param("str", None, "-", "experiment kind"),
    "seed": Param("u64", 0, "-", "master seed"),
    "out": Param("str", "", "path", "output directory"),
}

SCHEMAS: dict[str, dict[str, Param]] = {
    "field-check": {
        "d": Param("int", 1, "-", "spatial dimension (1 or 2)"),
        "cells": Param("int", 8, "cells per axis", "grid resolution on the unit box"),
        "epsilon": Param("float", 0.125, "length", "regularization scale"),
        "g": Param("float", 0.0, "-", "constant added to the kernel"),
        "profile": Param("str", "log", "-", "kernel profile: log or log_plus"),
        "replicas": Param("int", 2000, "-", "Monte Carlo replicas"),
    },
    "gmc-mass": {
        "d": Param("int", 1, "-", "spatial dimension"),
        "gamma": Param("float", 0.8, "-", "chaos parameter"),
        "log2_cells": Param("int", 14, "log2(cells per axis)", "grid resolution on the unit box"),
        "replicas": Param("int", 64, "-", "field replicas"),
        "profile": Param("str", "log", "-", "kernel profile"),
        "g": Param("float", 0.0, "-", "constant added to the kernel"),
    },
    "moment-scaling": {
        "gamma": Param("float", 0.7, "-", "chaos parameter"),
        "log2_cells": Param("int", 16, "log2(cells)", "grid resolution on [0, 1]"),
        "replicas": Param("int", 200, "-", "field replicas"),
        "q": Param("floats", [0.5, 1.0, 1.5], "-", "moment orders"),
        "radii": Param("floats", _dyadic(3, 7), "length", "ball radii, decreasing"),
        "tolerance": Param("float", 0.15, "-", "slope tolerance"),
        "q1_tolerance": Param("float", 0.05, "-", "slope tolerance at q = 1"),
    },
    "tau-estimate": {
        "gamma": Param("float", 0.7, "-", "chaos parameter"),
        "log2_cells": Param("int", 16, "log2(cells)", "grid resolution on [0, 1]"),
        "replicas": Param("int", 32, "-", "field replicas"),
        "levels": Param("ints", list(range(8, 15)), "dyadic level", "regression window"),
        "q": Param("floats", [-1.0, -0.5, 0.0, 0.5, 1.0, 1.5, 2.0], "-", "moment orders"),
        "tolerance": Param("float", 0.2, "-", "tolerance for q >= 0"),
        "negative_q_tolerance": Param("float", 0.25, "-", "tolerance for q < 0"),
        "coarse_level": Param("int", 14, "dyadic level", "level of the coarse spectrum"),
        "coarse_delta": Param("float", 0.15, "-", "coarse spectrum bin half-width"),
    },
    "spectrum": {
        "gamma": Param("float", 1.0, "-", "chaos parameter"),
        "d": Param("int", 1, "-", "spatial dimension"),
        "q_points": Param("int", 100001, "-", "q grid size"),
        "q_window": Param("float", 0.0, "-", "half-width of the q window (0 = max(4, 1.5 q+))"),
        "alpha_points": Param("int", 2001, "-", "alpha grid size"),
        "margin": Param("float", 0.05, "-", "distance kept from the support endpoints"),
        "tolerance": Param("float", 1e-6, "-", "Legendre identity tolerance"),
        "dual_tolerance": Param("float", 1e-5, "-", "double transform tolerance"),
    },
    "thick-points": {
        "gamma": Param("float", 1.0, "-", "thickness parameter"),
        "depth": Param("int", 14, "-", "number of layers"),
        "replicas": Param("int", 16, "-", "layered field replicas"),
        "levels": Param("ints", list(range(4, 15)), "dyadic level", "box-count levels"),
        "exponent_samples": Param("int", 100, "-", "size-biased points for the exponent check"),
        "tolerance": Param("float", 0.15, "-", "dimension and exponent tolerance"),
    },
    "local-dim": {
        "gamma": Param("float", 0.8, "-", "chaos parameter of the measured measure"),
        "q": Param("float", 1.0, "-", "points are drawn from the chaos with parameter q gamma"),
        "log2_cells": Param("int", 18, "log2(cells)", "grid resolution on [0, 1]"),
        "replicas": Param("int", 200, "-", "sampled (point, field) pairs"),
        "sampling": Param("str", "quenched", "-", "quenched: x from the sampled field's measure; rooted: size-biased joint law"),
        "radii": Param("floats", _dyadic(4, 9), "length", "ball radii, decreasing"),
        "tolerance": Param("float", 0.1, "-", "tolerance on the median slope"),
    },
    "mrw": {
        "gamma": Param("float", 0.6, "-", "chaos parameter of the clock"),
        "log2_cells": Param("int", 16, "log2(cells)", "time grid on [0, 1]"),
        "replicas": Param("int", 100, "-", "walk replicas"),
        "d_target": Param("int", 1, "-", "dimension of the walk"),
        "q": Param("floats", [2.0, 3.0], "-", "structure function orders"),
        "lags": Param("floats", _dyadic(3, 8), "time", "lags (multiples of the time step)"),
        "tolerance": Param("float", 0.15, "-", "slope tolerance"),
        "spectrum_points": Param("int", 1000, "-", "grid size for the spectrum identity"),
    },
    "lbm-exit": {
        "gamma": Param("float", 1.0, "-", "chaos parameter"),
        "radii": Param("floats", _dyadic(2, 5), "length^2", "exit radii r (balls of radius sqrt r)"),
        "h": Param("float", 0.0, "time", "Euler step (0 = min(r)^2 / 100)"),
        "replicas": Param("int", 300, "-", "field replicas"),
        "q": Param("floats", [0.5, 1.0, 1.5], "-", "moment orders"),
        "tiles": Param("int", 4, "per axis", "independent start tiles per field"),
        "tile_spacing": Param("float", 2.0, "length", "distance between tile centres"),
        "cells_per_unit": Param("int", 128, "cells per length", "field resolution"),
        "profile": Param("str", "log_plus", "-", "kernel profile"),
        "tolerance": Param("float", 0.2, "-", "slope tolerance"),
        "q1_tolerance": Param("float", 0.1, "-", "slope tolerance at q = 1"),
    },
    "lbm-refine": {
        "gamma": Param("float", 1.0, "-", "chaos parameter"),
        "levels": Param("ints", [5, 6, 7, 8], "dyadic level", "regularization scales 2^-m"),
        "replicas": Param("int", 300, "-", "field replicas"),
        "paths": Param("int", 16, "-", "frozen Brownian paths"),
        "h": Param("float", 1e-5, "time", "Euler step"),
        "half_side": Param("float", 0.5, "length", "domain is (-a, a)^2"),
        "g": Param("float", math.log(4.0), "-", "constant added to the kernel"),
        "oversample": Param("int", 2, "-", "grid cells per finest scale"),
    },
}

KINDS = tuple(SCHEMAS)


def _parse_value(kind: str, text: str):
    text = text.strip()
    if kind == "str":
        return text
    if kind == "int":
        return int(text)
    if kind == "u64":
        v = int(text, 0)
        if not 0 <= v <= U64_MAX:
            raise ValueError("must be an unsigned 64-bit integer")
        return v
    if kind == "float":
        return float(text)
    if kind == "bool":
        low = text.lower()
        if low not in ("true", "false", "1", "0", "yes", "no"):
            raise ValueError("must be a boolean")
        return low in ("true", "1", "yes")
    if kind == "floats":
        return [float(t) for t in text.split(",") if t.strip()]
    if kind == "ints":
        return [int(t) for t in text.split(",") if t.strip()]
    raise ValueError(f"unknown type {kind}")


def parse_text(text: str) -> dict[str, str]:
    """Raw ``key -> value`` strings; later keys do not silently override earlier ones."""
    out: dict[str, str] = {}
    problems = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            problems[f"line {lineno}"] = "expected key = value"
            continue
        key, value = (s.strip() for s in line.split("=", 1))
        if key in out:
            problems[key] = "duplicate key"
        out[key] = value
    if problems:
        raise ConfigError(problems)
    return out


@dataclass(frozen=True)
class ExperimentConfig:
    kind: str
    params: dict = field(default_factory=dict)
    seed: int = 0
    out: str = ""

    def to_dict(self) -> dict:
        return {"kind": self.kind, "seed": self.seed, "out": self.out, "params": dict(self.params)}

    def to_text(self) -> str:
        """Canonical config text (schema order, every parameter explicit)."""
        lines = [f"kind = {self.kind}", f"seed = {self.seed}"]
        for key, p in SCHEMAS[self.kind].items():
            lines.append(f"{key} = {_format_value(p.type, self.params[key])}")
        return "\n".join(lines) + "\n"


def _format_value(kind: str, value) -> str:
    if kind == "floats":
        return ", ".join(repr(float(v)) for v in value)
    if kind == "ints":
        return ", ".join(str(int(v)) for v in value)
    if kind == "float":
        return repr(float(value))
    if kind == "bool":
        return "true" if value else "false"
    return str(value)


Validator = Callable[[dict], dict]


def _subcritical(p, d):
    if "gamma" in p and p["gamma"] ** 2 >= 2 * d:
        return {"gamma": f"gamma^2 = {p['gamma'] ** 2:g} must be below 2d = {2 * d}"}
    return {}


def _decreasing(p, key):
    v = p.get(key)
    if v is not None and (len(v) < 2 or any(b >= a for a, b in zip(v, v[1:])) or min(v) <= 0):
        return {key: "must be positive and strictly decreasing with at least two entries"}
    return {}


def _positive(p, *keys):
    return {k: "must be positive" for k in keys if k in p and not p[k] > 0}


def _constraints(kind: str, p: dict) -> dict[str, str]:
    bad: dict[str, str] = {}
    bad.update(_positive(p, "replicas", "cells", "epsilon", "log2_cells", "depth", "paths", "half_side", "tiles", "cells_per_unit", "oversample", "q_points", "alpha_points"))
    if "d" in p and p["d"] not in (1, 2):
        bad["d"] = "must be 1 or 2"
    if "profile" in p and p["profile"] not in ("log", "log_plus"):
        bad["profile"] = "must be log or log_plus"
    if kind in ("gmc-mass", "spectrum"):
        bad.update(_subcritical(p, p.get("d", 1)))
    elif kind in ("moment-scaling", "tau-estimate", "local-dim", "mrw"):
        bad.update(_subcritical(p, 1))
    elif kind in ("lbm-exit", "lbm-refine") and p["gamma"] ** 2 >= 4:
        bad["gamma"] = "gamma^2 must be below 4"
    for key in ("radii", "lags"):
        bad.update(_decreasing(p, key))
    if kind == "moment-scaling" and p["gamma"] and any(q * p["gamma"] ** 2 >= 2 for q in p["q"]):
        bad["q"] = "q must stay below 2d / gamma^2"
    if kind == "local-dim" and p["sampling"] not in ("quenched", "rooted"):
        bad["sampling"] = "must be quenched or rooted"
    if kind == "local-dim" and (p["q"] * p["gamma"]) ** 2 >= 2:
        bad["q"] = "the sampling chaos q gamma must be subcritical"
    if kind == "lbm-exit":
        if max(p["radii"]) > 1:
            bad["radii"] = "radii must not exceed 1"
        h = p["h"]
        if h < 0 or h > min(p["radii"]) ** 2 / 100:
            bad["h"] = "need 0 <= h <= min(r)^2 / 100"
        if p["gamma"] and any(q >= 4 / p["gamma"] ** 2 for q in p["q"]):
            bad["q"] = "q must stay below 4 / gamma^2"
    if kind == "lbm-refine" and len(p["levels"]) < 3:
        bad["levels"] = "need at least three levels"
    if kind == "thick-points" and any(not 1 <= n <= p["depth"] for n in p["levels"]):
        bad["levels"] = "levels must lie in 1..depth"
    if kind == "tau-estimate" and p["coarse_level"] > p["log2_cells"]:
        bad["coarse_level"] = "must not exceed log2_cells"
    return bad


def build_config(raw: dict[str, Any], overrides: dict[str, Any] | None = None) -> ExperimentConfig:
    """Validate raw values (strings or typed) into an :class:`ExperimentConfig`."""
    raw = dict(raw)
    raw.update({k: v for k, v in (overrides or {}).items() if v is not None})
    problems: dict[str, str] = {}
    kind = raw.pop("kind", None)
    if kind not in SCHEMAS:
        raise ConfigError({"kind": f"must be one of {', '.join(KINDS)}, got {kind!r}"})
    schema = SCHEMAS[kind]
    values: dict[str, Any] = {}
    for key, value in raw.items():
        p = schema.get(key) or COMMON.get(key)
        if p is None:
            problems[key] = "unknown key"
            continue
        try:
            values[key] = _parse_value(p.type, value) if isinstance(value, str) else _coerce(p.type, value)
        except (TypeError, ValueError) as exc:
            problems[key] = f"expected {p.type}: {exc}"
    if problems:
        raise ConfigError(problems)
    seed = values.pop("seed", COMMON["seed"].default)
    out = values.pop("out", COMMON["out"].default)
    params = {k: values.get(k, p.default) for k, p in schema.items()}
    problems = _constraints(kind, params)
    if problems:
        raise ConfigError(problems)
    return ExperimentConfig(kind, params, seed, out)


def _coerce(kind: str, value):
    if kind == "int":
        if isinstance(value, bool) or int(value) != value:
            raise ValueError("not an integer")
        return int(value)
    if kind == "u64":
        v = int(value)
        if v != value or not 0 <= v <= U64_MAX:
            raise ValueError("must be an unsigned 64-bit integer")
        return v
    if kind == "float":
        return float(value)
    if kind == "floats":
        return [float(v) for v in value]
    if kind == "ints":
        return [int(v) for v in value]
    if kind == "bool":
        return bool(value)
    return str(value)


def load_config(path: str | Path, overrides: dict[str, Any] | None = None) -> ExperimentConfig:
    return build_config(parse_text(Path(path).read_text(encoding="utf-8")), overrides)


def describe_schema(kind: str) -> str:
    rows = [f"{kind}:"]
    for key, p in {**COMMON, **SCHEMAS[kind]}.items():
        if key == "kind":
            continue
        default = _format_value(p.type, p.default) if p.default is not None else ""
        rows.append(f"  {key} ({p.type}, {p.unit}) = {default}  # {p.doc}")
    return "\n".join(rows)
