"""Experiment configuration: one schema shared by CLI flags and TOML files."""
from __future__ import annotations

import math
import sys
from dataclasses import dataclass, field
from pathlib import Path

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .engine import default_workers
from .errors import ConfigError


def _int(v):
    if isinstance(v, bool):
        raise TypeError("expected an integer")
    if isinstance(v, float):
        if not v.is_integer():
            raise TypeError("expected an integer")
        return int(v)
    if isinstance(v, str):
        v = v.strip().replace("_", "")
        if "e" in v.lower():  # allow 1e8 style budgets
            f = float(v)
            if not f.is_integer():
                raise TypeError("expected an integer")
            return int(f)
    return int(v)


def _float(v):
    if isinstance(v, bool):
        raise TypeError("expected a real number")
    x = float(v)
    if math.isnan(x):
        raise TypeError("expected a real number")
    return x


def _list_of(conv):
    def parse(v):
        if isinstance(v, str):
            v = [p for p in v.split(",") if p.strip()]
        elif not isinstance(v, (list, tuple)):
            v = [v]
        if not v:
            raise TypeError("expected a nonempty list")
        return [conv(p) for p in v]
    parse.__name__ = f"list of {conv.__name__.strip('_')}"
    return parse


def _bool(v):
    if isinstance(v, bool):
        return v
    if isinstance(v, str) and v.lower() in ("true", "1", "yes"):
        return True
    if isinstance(v, str) and v.lower() in ("false", "0", "no"):
        return False
    raise TypeError("expected a boolean")


def _str(v):
    if not isinstance(v, str):
        raise TypeError("expected a string")
    return v


@dataclass(frozen=True)
class Param:
    conv: object
    default: object = None
    check: object = None  # (predicate, description)
    choices: tuple = ()
    help: str = ""


def _pos(x):
    return all(v > 0 for v in (x if isinstance(x, list) else [x]))


def _nonneg(x):
    return all(v >= 0 for v in (x if isinstance(x, list) else [x]))


POS = (_pos, "must be > 0")
NONNEG = (_nonneg, "must be >= 0")
UNIT = (lambda x: 0 <= x < 1, "must lie in [0, 1)")
Y = (lambda x: 0 < x <= 1, "must lie in (0, 1]")
EVEN = (lambda x: all(v > 0 and v % 2 == 0 for v in (x if isinstance(x, list) else [x])),
        "must be positive and even")

_INT, _FLOAT = _int, _float
_INTS, _FLOATS = _list_of(_int), _list_of(_float)

_SHAPE = {"m": Param(_INT, None, POS, help="rows / M"),
          "n": Param(_INT, None, POS, help="cols / N")}
_FIELD = {"rows": Param(_INT, None, POS), "cols": Param(_INT, None, POS),
          "field": Param(_str, None, help="read a saved field instead of sampling")}

SCHEMA: dict[str, dict[str, dict[str, Param]]] = {
    "lpp": {
        "sample": {**_FIELD, "save": Param(_str, None, help="write the field (binary)")},
        "passage": dict(_FIELD),
        "geodesic": dict(_FIELD),
    },
    "rmt": {
        "sample": {**_SHAPE, "trials": Param(_INT, 1, POS),
                   "backend": Param(_str, None, choices=("dense", "bidiagonal")),
                   "scaled": Param(_bool, True)},
        "identity": {**_SHAPE, "trials": Param(_INT, 100_000, POS)},
        "dominance": {**_SHAPE, "trials": Param(_INT, 100_000, POS)},
        "rigidity": {**_SHAPE, "c": Param(_FLOAT, 1.0, POS)},
        "kernel": {**_SHAPE, "points": Param(_INT, 20, POS)},
    },
    "rates": {
        "eval": {"which": Param(_str, None, choices=("I", "Jy", "Iy", "beta", "curvature")),
                 "delta": Param(_FLOAT, None, POS), "y": Param(_FLOAT, 1.0, Y)},
        "mp": {"y": Param(_FLOAT, None, Y),
               "op": Param(_str, None, choices=("density", "cdf", "quantile")),
               "x": Param(_FLOATS, None, help="points (density, cdf) or levels (quantile)")},
        "curvature": {"delta": Param(_FLOAT, 1.0, POS), "n": Param(_INT, 1_000_000, POS),
                      "c": Param(_INTS, list(range(100, 3001, 100)), POS)},
    },
    "ldp": {
        "estimate": {"n": Param(_INT, None, POS), "delta": Param(_FLOAT, None, POS),
                     "trials": Param(_INT, 100_000, (lambda x: x >= 1000, "must be >= 1000")),
                     "theta": Param(_FLOAT, None, UNIT), "strip": Param(_FLOAT, 1.0, NONNEG),
                     "truncated": Param(_bool, False)},
        "reject": {"n": Param(_INT, None, POS), "delta": Param(_FLOAT, None, POS),
                   "budget": Param(_INT, 10_000_000, POS),
                   "max_accepted": Param(_INT, None, POS)},
        "midpoint": {"n": Param(_INTS, None, EVEN), "delta": Param(_FLOAT, None, POS),
                     "method": Param(_str, "exact", choices=("exact", "importance")),
                     "trials": Param(_INT, 100_000, POS), "k": Param(_INT, 0, NONNEG)},
        "tf": {"n": Param(_INTS, None, POS), "delta": Param(_FLOAT, None, POS),
               "budget": Param(_INT, 100_000_000, POS),
               "uncond_trials": Param(_INT, 1000, POS),
               "max_accepted": Param(_INT, 400, POS),
               "resamples": Param(_INT, 10_000, POS),
               "csv": Param(_str, None, help="write the fit table as CSV")},
        "split": {"n": Param(_INT, None, POS), "t1": Param(_INT, None, POS),
                  "delta1": Param(_FLOAT, None, POS), "delta2": Param(_FLOAT, None, POS),
                  "delta": Param(_FLOAT, None, POS), "trials": Param(_INT, 100_000, POS)},
    },
}

REQUIRED = {
    ("lpp", "sample"): ("rows", "cols"),
    ("rmt", "sample"): ("m", "n"), ("rmt", "identity"): ("m", "n"),
    ("rmt", "dominance"): ("m", "n"), ("rmt", "rigidity"): ("m", "n"),
    ("rmt", "kernel"): ("m", "n"),
    ("rates", "eval"): ("which", "delta"), ("rates", "mp"): ("y", "op", "x"),
    ("ldp", "estimate"): ("n", "delta"), ("ldp", "reject"): ("n", "delta"),
    ("ldp", "midpoint"): ("n", "delta"), ("ldp", "tf"): ("n", "delta"),
    ("ldp", "split"): ("n", "t1", "delta1", "delta2"),
}


@dataclass(frozen=True)
class ExperimentConfig:
    command: str
    operation: str
    params: dict = field(default_factory=dict)
    seed: int = 0
    out: str | None = None
    workers: int = 1

    def as_dict(self) -> dict:
        return {"command": self.command, "operation": self.operation,
                "params": dict(self.params), "seed": self.seed, "out": self.out,
                "workers": self.workers}


def validate(raw: dict) -> ExperimentConfig:
    """Build a config from a flat mapping; every failure names its key."""
    raw = dict(raw)
    command = raw.pop("command", None)
    if command not in SCHEMA:
        raise ConfigError("command", f"must be one of {sorted(SCHEMA)}, got {command!r}")
    operation = raw.pop("operation", None)
    if operation not in SCHEMA[command]:
        raise ConfigError("operation", f"{command} supports {sorted(SCHEMA[command])}, "
                                       f"got {operation!r}")
    seed = raw.pop("seed", None)
    if seed is None:
        raise ConfigError("seed", "a seed is required (no random default)")
    try:
        seed = _int(seed)
    except (TypeError, ValueError):
        raise ConfigError("seed", f"expected an integer, got {seed!r}") from None
    if not 0 <= seed < 2 ** 64:
        raise ConfigError("seed", "must be a 64-bit unsigned integer")
    out = raw.pop("out", None)
    if out is not None and not isinstance(out, str):
        raise ConfigError("out", "expected a path string")
    workers = raw.pop("workers", None)
    if workers is None:
        workers = default_workers()
    try:
        workers = _int(workers)
    except (TypeError, ValueError):
        raise ConfigError("workers", f"expected an integer, got {workers!r}") from None
    if workers < 1:
        raise ConfigError("workers", "must be >= 1")

    schema = SCHEMA[command][operation]
    params = {}
    for key, value in raw.items():
        if key not in schema:
            raise ConfigError(key, f"unknown parameter for {command} {operation}")
        p = schema[key]
        if value is None:
            continue
        try:
            value = p.conv(value)
        except (TypeError, ValueError) as exc:
            raise ConfigError(key, f"{exc or 'bad value'} (got {value!r})") from None
        if p.choices and value not in p.choices:
            raise ConfigError(key, f"must be one of {list(p.choices)}, got {value!r}")
        if p.check is not None and not p.check[0](value):
            raise ConfigError(key, f"{p.check[1]} (got {value!r})")
        params[key] = value
    for key in REQUIRED.get((command, operation), ()):
        if key not in params:
            raise ConfigError(key, "is required")
    for key, p in schema.items():
        params.setdefault(key, p.default)
    _cross_checks(command, operation, params)
    return ExperimentConfig(command, operation, params, seed, out, workers)


def _cross_checks(command, operation, p):
    if command == "lpp" and p.get("field") is None and (p["rows"] is None or p["cols"] is None):
        raise ConfigError("rows", "rows and cols are required unless a field file is given")
    if command == "rmt" and p["n"] > p["m"]:
        raise ConfigError("n", f"must be <= m (got m={p['m']}, n={p['n']})")
    if (command, operation) == ("rmt", "dominance") and p["n"] < 2:
        raise ConfigError("n", "dominance compares (m, n) with (m+1, n-1); needs n >= 2")
    if (command, operation) == ("ldp", "split"):
        if not p["t1"] < p["n"]:
            raise ConfigError("t1", f"must be < n (got t1={p['t1']}, n={p['n']})")
        if p["delta"] is not None:
            t2 = p["n"] - p["t1"]
            if p["t1"] * p["delta1"] + t2 * p["delta2"] < p["n"] * p["delta"] * (1 - 1e-12):
                raise ConfigError("delta", "needs t1*delta1 + t2*delta2 >= n*delta")
    if (command, operation) == ("ldp", "tf") and len(p["n"]) < 3:
        raise ConfigError("n", "the n grid needs at least 3 points")
    if (command, operation) == ("rates", "mp") and p["op"] == "quantile":
        if not all(0 <= v <= 1 for v in p["x"]):
            raise ConfigError("x", "quantile levels must lie in [0, 1]")


def load_toml(path) -> dict:
    """Flatten a TOML document ``{command, operation, seed, ..., [params]}``."""
    try:
        with open(path, "rb") as fh:
            doc = tomllib.load(fh)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(str(path), f"invalid TOML: {exc}") from None
    except OSError as exc:
        raise ConfigError(str(path), f"cannot read: {exc.strerror}") from None
    params = doc.pop("params", {})
    if not isinstance(params, dict):
        raise ConfigError("params", "must be a table")
    clash = set(params) & set(doc)
    if clash:
        raise ConfigError(sorted(clash)[0], "given both at top level and in [params]")
    return {**doc, **params}


def parse_config(source) -> ExperimentConfig:
    """Parse a TOML path, an argv list, or an already flat mapping."""
    if isinstance(source, dict):
        return validate(source)
    if isinstance(source, (str, Path)):
        return validate(load_toml(source))
    from .cli import argv_to_mapping
    return validate(argv_to_mapping(list(source)))
