"""Run configuration: JSON (or TOML) documents validated against one schema.

Validation errors carry the line of the offending key in the source text.
"""

import copy
import json
import re

import jsonschema

from .exceptions import ConfigError

try:  # Python >= 3.11
    import tomllib
except ModuleNotFoundError:  # pragma: no cover - depends on interpreter
    import tomli as tomllib

CHECK_NAMES = ["H3", "H4i", "H4ii", "H5", "H5prime", "LemG", "GPL", "Reaction", "IonLemma"]
MODEL_NAMES = [
    "scalar",
    "multiphase",
    "tumor",
    "busenberg_travis",
    "maxwell_stefan",
    "thin_film",
    "ion_channel",
]
COMMANDS = ("check", "simulate", "twin", "sweep")

_number = {"type": "number"}
_positive = {"type": "number", "exclusiveMinimum": 0}

_initial = {
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "profile": {"enum": ["cosine", "step", "constant"]},
        "amplitude": {"type": "number", "minimum": 0},
        "base": {"type": "array", "items": _positive, "minItems": 1},
    },
}

SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "required": ["model"],
    "properties": {
        "model": {
            "type": "object",
            "additionalProperties": False,
            "required": ["name"],
            "properties": {
                "name": {"enum": MODEL_NAMES},
                "params": {"type": "object"},
                "reaction": {
                    "type": "object",
                    "additionalProperties": False,
                    "required": ["kind"],
                    "properties": {
                        "kind": {"enum": ["logistic", "decay"]},
                        "rate": {"type": "number", "minimum": 0},
                    },
                },
            },
        },
        "solver": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "tau": _positive,
                "T": _positive,
                "eps": {"type": "number", "minimum": 0},
                "cells": {"type": "integer", "minimum": 2},
                "length": _positive,
                "newton_tol": _positive,
                "newton_max_iter": {"type": "integer", "minimum": 1},
                "linesearch": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
            },
        },
        "experiment": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "checks": {"type": "array", "items": {"enum": CHECK_NAMES}, "minItems": 1},
                "samples": {"type": "integer", "minimum": 16},
                "seed": {"type": "integer", "minimum": 0, "maximum": 2**64 - 1},
                "gamma": {"type": "number", "exclusiveMinimum": 0, "maximum": 1},
                "delta": {"type": "number", "minimum": 0},
                "identical_reference": {"type": "boolean"},
                "tau_refine": {"type": "integer", "minimum": 4},
                "cells_refine": {"type": "integer", "minimum": 2},
                "initial": _initial,
                "axis": {
                    "type": "object",
                    "additionalProperties": False,
                    "required": ["name", "values"],
                    "properties": {
                        "name": {"type": "string", "minLength": 1},
                        "values": {"type": "array", "items": _number, "minItems": 1},
                    },
                },
            },
        },
        "output": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "directory": {"type": "string", "minLength": 1},
                "formats": {
                    "type": "array",
                    "items": {"enum": ["csv", "json"]},
                    "minItems": 1,
                    "uniqueItems": True,
                },
            },
        },
    },
}

# keys each command needs inside the experiment block
REQUIRED_EXPERIMENT = {
    "check": ["checks"],
    "simulate": [],
    "twin": ["delta"],
    "sweep": ["axis"],
}

DEFAULTS = {
    "model": {"params": {}},
    "solver": {
        "tau": 1e-3,
        "T": 0.5,
        "eps": 1e-6,
        "cells": 64,
        "length": 1.0,
        "newton_tol": 1e-12,
        "newton_max_iter": 30,
        "linesearch": 0.5,
    },
    "experiment": {
        "samples": 10_000,
        "seed": 0,
        "identical_reference": False,
        "tau_refine": 4,
        "cells_refine": 2,
        "delta": 0.0,
        "initial": {"profile": "cosine", "amplitude": 0.1},
    },
    "output": {"directory": "xdiff-out", "formats": ["csv", "json"]},
}


def _locate(text, path, fmt):
    """Best-effort line number of the key at ``path`` in the source text."""
    pos = 0
    line = None
    keys = [p for p in path if isinstance(p, str)]
    for depth, key in enumerate(keys):
        if fmt == "json":
            pat = re.compile(r'"' + re.escape(key) + r'"\s*:')
        else:
            table = r"^\s*\[+\s*" + r"\s*\.\s*".join(map(re.escape, keys[: depth + 1])) + r"\s*\]+"
            pat = re.compile(table + r"|^\s*" + re.escape(key) + r"\s*=", re.M)
        m = pat.search(text, pos)
        if m is None:
            break
        pos = m.end()
        line = text.count("\n", 0, m.start()) + 1
    return line


def parse(text, fmt="json"):
    """Parse config text; ``fmt`` is ``json`` or ``toml``."""
    if fmt == "json":
        try:
            doc = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"invalid JSON: {exc.msg}", exc.lineno) from None
    elif fmt == "toml":
        try:
            doc = tomllib.loads(text)
        except tomllib.TOMLDecodeError as exc:
            m = re.search(r"line (\d+)", str(exc))
            raise ConfigError(f"invalid TOML: {exc}", int(m.group(1)) if m else None) from None
    else:
        raise ConfigError(f"unknown config format {fmt!r}")
    if not isinstance(doc, dict):
        raise ConfigError("config must be a JSON object / TOML table", 1)
    return doc


def validate(doc, command, text=None, fmt="json"):
    """Schema-check ``doc`` for ``command``; raise :class:`ConfigError` with a line."""
    if command not in COMMANDS:
        raise ConfigError(f"unknown command {command!r}")
    validator = jsonschema.Draft202012Validator(SCHEMA)
    errors = sorted(validator.iter_errors(doc), key=lambda e: list(map(str, e.absolute_path)))
    if errors:
        err = errors[0]
        path = list(err.absolute_path)
        m = re.search(r"'([^']+)' was unexpected", err.message)
        if m:
            path = path + [m.group(1)]
        where = ".".join(map(str, path)) or "<root>"
        line = _locate(text, path, fmt) if text is not None else None
        raise ConfigError(f"{where}: {err.message}", line)
    exp = doc.get("experiment", {})
    for key in REQUIRED_EXPERIMENT[command]:
        if key not in exp:
            line = _locate(text, ["experiment"], fmt) if text is not None else None
            raise ConfigError(f"experiment.{key}: required by the {command!r} command", line)


def _merge(base, extra):
    out = copy.deepcopy(base)
    for key, val in extra.items():
        if isinstance(val, dict) and isinstance(out.get(key), dict):
            out[key] = _merge(out[key], val)
        else:
            out[key] = copy.deepcopy(val)
    return out


def resolve(doc):
    """Fill defaults; the result is what gets embedded in outputs."""
    return _merge(DEFAULTS, doc)


def load(path, command):
    """Read, validate and resolve a config file; format chosen by extension."""
    fmt = "toml" if str(path).endswith(".toml") else "json"
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc.strerror}") from None
    doc = parse(text, fmt)
    validate(doc, command, text, fmt)
    return resolve(doc), text, fmt
