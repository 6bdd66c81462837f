"""
Scenario files: YAML documents validated against a JSON Schema before any
computation starts.

Minimal example::

    schema_version: 1
    name: harmonic-period
    mode: coherent
    hamiltonian: {name: harmonic, params: {omega: 1.0}}
    state: {z0: [1.0, 0.0], X: 1.0, Y: 0.0}
    hbar: 0.1
    T: 6.283185307179586
    dt: 1.0e-3
"""

from dataclasses import dataclass, field
from typing import Optional

import jsonschema
import numpy as np
import yaml

from .flows import BUILTINS, builtin

SCHEMA_VERSION = 1
MODES = ("coherent", "general", "phase_space", "hbar_sweep", "wigner", "transform-audit")

_number = {"type": "number"}
_positive = {"type": "number", "exclusiveMinimum": 0}
_matrix_or_scalar = {
    "oneOf": [
        _number,
        {"type": "array", "items": {"type": "array", "items": _number, "minItems": 1}, "minItems": 1},
    ]
}
_gaussian = {
    "type": "object",
    "required": ["z0"],
    "additionalProperties": False,
    "properties": {
        "z0": {"type": "array", "items": _number, "minItems": 2},
        "X": _matrix_or_scalar,
        "Y": _matrix_or_scalar,
        "weight": {"type": "array", "items": _number, "minItems": 2, "maxItems": 2},
    },
}

SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "title": "nearby-orbit scenario",
    "type": "object",
    "required": ["schema_version", "mode", "hamiltonian", "T", "dt"],
    "additionalProperties": False,
    "properties": {
        "schema_version": {"const": SCHEMA_VERSION},
        "name": {"type": "string", "pattern": "^[A-Za-z0-9_.-]+$"},
        "mode": {"enum": list(MODES)},
        "seed": {"type": "integer", "minimum": 0},
        "hamiltonian": {
            "type": "object",
            "required": ["name"],
            "additionalProperties": False,
            "properties": {
                "name": {"enum": sorted(BUILTINS)},
                "params": {"type": "object", "additionalProperties": _number},
            },
        },
        "state": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                **_gaussian["properties"],
                "terms": {"type": "array", "items": _gaussian, "minItems": 1},
            },
        },
        "hbar": _positive,
        "hbar_list": {"type": "array", "items": _positive, "minItems": 3, "uniqueItems": True},
        "T": {"type": "number", "minimum": 0},
        "dt": _positive,
        "samples": {"type": "integer", "minimum": 1},
        "tolerance": _positive,
        "slope_range": {"type": "array", "items": _number, "minItems": 2, "maxItems": 2},
        "reference": {"type": "boolean"},
        "grid": {
            "type": "object",
            "additionalProperties": False,
            "properties": {"half_width": _positive, "count": {"type": "integer", "minimum": 16}},
        },
        "phase_space": {
            "type": "object",
            "additionalProperties": False,
            "properties": {"half_width": _positive, "count": {"type": "integer", "minimum": 16}},
        },
        "pairs": {"type": "integer", "minimum": 1},
        "points": {"type": "integer", "minimum": 1},
        "output": {
            "type": "object",
            "additionalProperties": False,
            "properties": {"dir": {"type": "string", "minLength": 1}},
        },
    },
}


class ScenarioError(ValueError):
    """Config is unreadable or fails validation."""


@dataclass(frozen=True)
class GaussianSpec:
    z0: np.ndarray
    M: np.ndarray
    weight: complex = 1.0


@dataclass(frozen=True)
class Scenario:
    name: str
    mode: str
    hamiltonian: str
    params: dict
    T: float
    dt: float
    hbar: Optional[float] = None
    hbar_list: tuple = ()
    state: tuple = ()
    seed: int = 0
    samples: int = 8
    tolerance: Optional[float] = None
    slope_range: tuple = (0.35, 0.75)
    reference: bool = True
    grid: dict = field(default_factory=dict)
    phase_space: dict = field(default_factory=dict)
    pairs: int = 20
    points: int = 100
    output_dir: str = ""
    raw: dict = field(default_factory=dict, repr=False)

    @property
    def n(self):
        return len(self.state[0].z0) // 2 if self.state else 1


def _as_matrix(v, n):
    a = np.atleast_2d(np.asarray(v, dtype=float))
    if a.shape == (1, 1) and n > 1:
        a = a[0, 0] * np.eye(n)
    if a.shape != (n, n):
        raise ScenarioError(f"matrix entry has shape {a.shape}, expected ({n}, {n})")
    return a


def _gaussian_spec(d):
    z0 = np.asarray(d["z0"], dtype=float)
    if len(z0) % 2:
        raise ScenarioError("z0 must have even length 2n")
    n = len(z0) // 2
    X = _as_matrix(d.get("X", 1.0), n)
    Y = _as_matrix(d.get("Y", 0.0), n)
    if not np.allclose(X, X.T) or not np.allclose(Y, Y.T):
        raise ScenarioError("X and Y must be symmetric")
    if np.min(np.linalg.eigvalsh(X)) <= 0:
        raise ScenarioError("X must be positive definite")
    w = d.get("weight", [1.0, 0.0])
    return GaussianSpec(z0, 1j * X - Y, complex(w[0], w[1]))


def make_hamiltonian(name, params, n=1):
    """Built-in model with its parameters; `n` is passed only when n > 1."""
    return builtin(name, **params, **({"n": n} if n > 1 else {}))


def validate(doc):
    """Schema plus cross-field checks; raises ScenarioError with every problem found."""
    validator = jsonschema.Draft202012Validator(SCHEMA)
    errors = sorted(validator.iter_errors(doc), key=lambda e: list(e.absolute_path))
    problems = [f"{'/'.join(str(p) for p in e.absolute_path) or '<root>'}: {e.message}" for e in errors]
    if not problems:
        mode = doc["mode"]
        if mode == "hbar_sweep" and "hbar_list" not in doc:
            problems.append("hbar_sweep needs hbar_list")
        if mode != "hbar_sweep" and mode not in ("wigner", "transform-audit") and "hbar" not in doc:
            problems.append(f"mode {mode} needs hbar")
        if mode in ("coherent", "general", "phase_space", "hbar_sweep") and "state" not in doc:
            problems.append(f"mode {mode} needs state")
        st = doc.get("state", {})
        if st and "z0" not in st and "terms" not in st:
            problems.append("state needs z0 or terms")
        if "terms" in st and mode != "general":
            problems.append("state.terms is only meaningful in mode general")
        if "slope_range" in doc and doc["slope_range"][0] >= doc["slope_range"][1]:
            problems.append("slope_range must be increasing")
        if "grid" in doc and "count" in doc["grid"] and doc["grid"]["count"] & (doc["grid"]["count"] - 1):
            problems.append("grid.count must be a power of two")
    if problems:
        raise ScenarioError("; ".join(problems))


def scenario_from_dict(doc):
    validate(doc)
    st = doc.get("state", {})
    specs = ()
    if "terms" in st:
        specs = tuple(_gaussian_spec(t) for t in st["terms"])
    elif st:
        specs = (_gaussian_spec(st),)
    if specs and len({len(s.z0) for s in specs}) != 1:
        raise ScenarioError("all state terms must have the same dimension")
    if specs and doc["mode"] in ("general", "phase_space", "hbar_sweep") and len(specs[0].z0) != 2:
        raise ScenarioError(f"mode {doc['mode']} is implemented for n = 1")
    params = dict(doc["hamiltonian"].get("params", {}))
    try:
        make_hamiltonian(doc["hamiltonian"]["name"], params, len(specs[0].z0) // 2 if specs else 1)
    except TypeError as exc:
        raise ScenarioError(f"hamiltonian params: {exc}") from None
    name = doc.get("name", f"{doc['mode']}-{doc['hamiltonian']['name']}")
    return Scenario(
        name=name,
        mode=doc["mode"],
        hamiltonian=doc["hamiltonian"]["name"],
        params=params,
        T=float(doc["T"]),
        dt=float(doc["dt"]),
        hbar=doc.get("hbar"),
        hbar_list=tuple(doc.get("hbar_list", ())),
        state=specs,
        seed=int(doc.get("seed", 0)),
        samples=int(doc.get("samples", 8)),
        tolerance=doc.get("tolerance"),
        slope_range=tuple(doc.get("slope_range", (0.35, 0.75))),
        reference=bool(doc.get("reference", True)),
        grid=dict(doc.get("grid", {})),
        phase_space=dict(doc.get("phase_space", {})),
        pairs=int(doc.get("pairs", 20)),
        points=int(doc.get("points", 100)),
        output_dir=doc.get("output", {}).get("dir", f"nearby-orbit-out/{name}"),
        raw=doc,
    )


def load_scenario(path, mode=None):
    """Read and validate a YAML scenario; `mode` overrides the file's mode."""
    try:
        with open(path) as fh:
            doc = yaml.safe_load(fh)
    except OSError as exc:
        raise ScenarioError(f"cannot read {path}: {exc}") from None
    except yaml.YAMLError as exc:
        raise ScenarioError(f"invalid YAML in {path}: {exc}") from None
    if not isinstance(doc, dict):
        raise ScenarioError("scenario must be a mapping")
    if mode is not None:
        doc = {**doc, "mode": mode}
    return scenario_from_dict(doc)
