"""Scenario configuration: JSON schema, defaults, validation and hashing."""
import copy
import hashlib
import json
import os
from dataclasses import asdict, dataclass
from importlib import resources
from pathlib import Path
from typing import Optional

import jsonschema
import numpy as np

from .errors import ConfigError
from .model import case_study_plant, disk_constraint, scalar_linear_plant

MODES = ("bas-rl", "no-safety")
SEED_ENV = "BASTION_SEED"

_num = {"type": "number"}
_vec = {"type": "array", "items": _num, "minItems": 1}
_mat_or_scalar = {"oneOf": [_num, {"type": "array", "items": _vec, "minItems": 1}]}


def _obj(props, required=()):
    return {"type": "object", "properties": props, "required": list(required), "additionalProperties": False}


SCHEMA = _obj({
    "name": {"type": "string", "minLength": 1},
    "mode": {"enum": list(MODES)},
    "plant": {"oneOf": [
        _obj({"kind": {"const": "case7"}, "theta": _vec, "theta_bound": _num}, ["kind"]),
        _obj({"kind": {"const": "scalar-linear"}, "a": _num, "b": _num, "theta_bound": _num}, ["kind"]),
    ]},
    "constraint": {"oneOf": [
        {"type": "null"},
        _obj({"kind": {"const": "disk"}, "center": _vec, "radius": _num, "K": _num}, ["kind", "center", "radius"]),
    ]},
    "x0": _vec,
    "duration": _num,
    "dt": _num,
    "log_every": {"type": "integer", "minimum": 1},
    "gains": _obj({k: _num for k in ("gamma", "k_theta", "kappa", "beta_theta", "nu", "k_c1", "k_c2",
                                      "k_a1", "k_a2", "beta_c", "delta")}),
    "stack": _obj({"capacity": {"type": "integer", "minimum": 1}, "window": _num, "cadence": _num,
                   "quadrature": {"enum": ["rk4", "trapezoid"]}}),
    "grid": _obj({"count": {"type": "integer", "minimum": 1}, "lower": _vec, "upper": _vec,
                  "seed": {"type": "integer", "minimum": 0}}),
    "basis": {"type": "string"},
    "Q": _mat_or_scalar,
    "R": _mat_or_scalar,
    "initial": _obj({"theta_hat": _vec, "z_hat": _num, "Wc": _vec, "Wa": _vec,
                     "Gamma": _mat_or_scalar, "Upsilon": _mat_or_scalar}),
    "upsilon_bounds": _obj({"floor": _num, "ceiling": _num}),
    "chi": _num,
}, ["name", "mode", "plant", "x0"])

GAIN_DEFAULTS = {"gamma": 3.0, "k_theta": 50.0, "kappa": 1.0, "beta_theta": 1.0, "nu": 2.0, "k_c1": 1.0,
                 "k_c2": 1.0, "k_a1": 2.0, "k_a2": 1.0, "beta_c": 0.1, "delta": 0.05}


@dataclass
class Gains:
    gamma: float
    k_theta: float
    kappa: float
    beta_theta: float
    nu: float
    k_c1: float
    k_c2: float
    k_a1: float
    k_a2: float
    beta_c: float
    delta: float


@dataclass
class ScenarioConfig:
    """Fully resolved scenario; every field is plain JSON data."""

    name: str
    mode: str
    plant: dict
    constraint: Optional[dict]
    x0: list
    duration: float
    dt: float
    log_every: int
    gains: Gains
    stack: dict
    grid: dict
    basis: str
    Q: list
    R: list
    initial: dict
    upsilon_bounds: dict
    chi: float

    @property
    def safe_mode(self):
        return self.mode == "bas-rl"

    def to_dict(self):
        return asdict(self)

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    def digest(self):
        """Git-style blob hash of the canonical resolved config."""
        payload = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":")).encode()
        return hashlib.sha1(b"blob %d\0" % len(payload) + payload).hexdigest()

    def replace(self, **changes):
        d = self.to_dict()
        d.update(changes)
        return resolve(d)

    def build_model(self):
        p = self.plant
        if p["kind"] == "case7":
            return case_study_plant(theta=p["theta"], theta_bound=p["theta_bound"])
        return scalar_linear_plant(a=p["a"], b=p["b"], theta_bound=p["theta_bound"])

    def build_barrier(self):
        c = self.constraint
        if c is None:
            return None
        return disk_constraint(c["center"], c["radius"], c["K"])


def _matrix(value, dim, path):
    M = np.array(value, dtype=float)
    if M.ndim == 0:
        M = float(M) * np.eye(dim)
    if M.shape != (dim, dim):
        raise ConfigError(f"expected a {dim}x{dim} matrix or a scalar", path)
    return M


def _require_pd(M, label, path):
    if not np.allclose(M, M.T, rtol=0.0, atol=1e-12):
        raise ConfigError(f"{label} must be symmetric", path)
    try:
        np.linalg.cholesky(M)
    except np.linalg.LinAlgError:
        raise ConfigError(f"{label} must be positive definite", path) from None


def _vector(value, dim, path):
    v = np.array(value, dtype=float)
    if v.shape != (dim,):
        raise ConfigError(f"expected a vector of length {dim}", path)
    return v


def _ratio(a, b, path):
    k = a / b
    if abs(k - round(k)) > 1e-9 * max(1.0, k) or round(k) < 1:
        raise ConfigError(f"must be a positive integer multiple of dt ({b})", path)
    return int(round(k))


def resolve(raw):
    """Validate a raw config mapping and return a fully resolved ScenarioConfig."""
    raw = copy.deepcopy(raw)
    try:
        jsonschema.validate(raw, SCHEMA)
    except jsonschema.ValidationError as exc:
        path = ".".join(str(p) for p in exc.absolute_path) or None
        raise ConfigError(exc.message, path) from None

    mode = raw["mode"]
    plant = dict(raw["plant"])
    if plant["kind"] == "case7":
        plant.setdefault("theta", [-1.0, -1.0, -0.5, -0.5])
        n, m, p = 2, 1, 4
    else:
        plant.setdefault("a", -1.0)
        plant.setdefault("b", 1.0)
        n, m, p = 1, 1, 1
    plant.setdefault("theta_bound", 2.0)
    constraint = raw.get("constraint")
    if constraint is not None:
        constraint = dict(constraint)
        constraint.setdefault("K", 0.01)
    if mode == "bas-rl" and constraint is None:
        raise ConfigError("bas-rl mode requires a constraint", "constraint")

    try:
        model = case_study_plant(plant["theta"], plant["theta_bound"]) if plant["kind"] == "case7" \
            else scalar_linear_plant(plant["a"], plant["b"], plant["theta_bound"])
    except ValueError as exc:
        raise ConfigError(str(exc), "plant") from None
    d = n + 1 if mode == "bas-rl" else n

    x0 = _vector(raw["x0"], n, "x0")
    if constraint is not None:
        if len(constraint["center"]) != n:
            raise ConfigError(f"constraint center must have length {n}", "constraint.center")
        if not constraint["radius"] > 0 or not constraint["K"] > 0:
            raise ConfigError("radius and K must be positive", "constraint")
        try:
            spec = disk_constraint(constraint["center"], constraint["radius"], constraint["K"])
        except ValueError as exc:
            raise ConfigError(f"origin must be strictly safe ({exc})", "constraint") from None
        if mode == "bas-rl" and not spec.h(x0) > 0.0:
            raise ConfigError("x0 is not strictly safe", "x0")

    duration = float(raw.get("duration", 10.0))
    dt = float(raw.get("dt", 1e-3))
    if not dt > 0:
        raise ConfigError("dt must be positive", "dt")
    gains = dict(GAIN_DEFAULTS)
    gains.update(raw.get("gains", {}))
    for key in ("gamma", "kappa", "nu", "delta"):
        if not gains[key] > 0:
            raise ConfigError("must be positive", f"gains.{key}")
    for key in ("k_theta", "beta_theta", "k_c1", "k_c2", "k_a1", "k_a2", "beta_c"):
        if gains[key] < 0:
            raise ConfigError("must be non-negative", f"gains.{key}")

    stack = {"capacity": 20, "window": 0.5, "cadence": 0.1, "quadrature": "rk4"}
    stack.update(raw.get("stack", {}))
    _ratio(stack["window"], dt, "stack.window")
    _ratio(stack["cadence"], dt, "stack.cadence")
    if duration < stack["window"]:
        raise ConfigError("duration must be at least the integration window", "duration")
    _ratio(duration, dt, "duration")

    if mode == "bas-rl":
        lower, upper = [-2.0] * n + [0.0], [2.0] * n + [0.1]
    else:
        lower, upper = [-2.0] * n, [2.0] * n
    grid = {"count": 100, "lower": lower, "upper": upper, "seed": 0}
    grid.update(raw.get("grid", {}))
    if os.environ.get(SEED_ENV):
        try:
            grid["seed"] = int(os.environ[SEED_ENV])
        except ValueError:
            raise ConfigError(f"{SEED_ENV} must be an integer", SEED_ENV) from None
    _vector(grid["lower"], d, "grid.lower")
    _vector(grid["upper"], d, "grid.upper")

    from .adp import BASES
    basis = raw.get("basis", {1: "quadratic-1", 2: "quadratic-3", 3: "quadratic-6"}.get(d))
    if basis not in BASES:
        raise ConfigError(f"unknown basis '{basis}'", "basis")
    if BASES[basis] != d:
        raise ConfigError(f"basis '{basis}' does not act on a {d}-dimensional state", "basis")
    L = {"quadratic-1": 1, "quadratic-3": 3, "quadratic-6": 6}[basis]

    Q = _matrix(raw.get("Q", 1.0), d, "Q")
    R = _matrix(raw.get("R", 1.0), m, "R")
    _require_pd(Q, "Q", "Q")
    _require_pd(R, "R", "R")

    init = raw.get("initial", {})
    initial = {
        "theta_hat": _vector(init.get("theta_hat", [0.0] * p), p, "initial.theta_hat").tolist(),
        "z_hat": float(init.get("z_hat", 0.0)),
        "Wc": _vector(init.get("Wc", [0.5] * L), L, "initial.Wc").tolist(),
        "Wa": _vector(init.get("Wa", [0.5] * L), L, "initial.Wa").tolist(),
        "Gamma": _matrix(init.get("Gamma", 10.0), p, "initial.Gamma").tolist(),
        "Upsilon": _matrix(init.get("Upsilon", 0.01), L, "initial.Upsilon").tolist(),
    }
    _require_pd(np.array(initial["Gamma"]), "Gamma(0)", "initial.Gamma")
    _require_pd(np.array(initial["Upsilon"]), "Upsilon(0)", "initial.Upsilon")
    if np.linalg.norm(initial["theta_hat"]) > plant["theta_bound"]:
        raise ConfigError("initial estimate lies outside the parameter bound", "initial.theta_hat")

    ub = {"floor": 1e-6, "ceiling": 1000.0}
    ub.update(raw.get("upsilon_bounds", {}))
    if not 0 <= ub["floor"] < ub["ceiling"]:
        raise ConfigError("need 0 <= floor < ceiling", "upsilon_bounds")

    return ScenarioConfig(
        name=raw["name"], mode=mode, plant=plant, constraint=constraint, x0=x0.tolist(),
        duration=duration, dt=dt, log_every=int(raw.get("log_every", 1)), gains=Gains(**gains),
        stack=stack, grid=grid, basis=basis, Q=Q.tolist(), R=R.tolist(), initial=initial,
        upsilon_bounds=ub, chi=float(raw.get("chi", 5.0)),
    )


def parse_config(path):
    """Load a JSON scenario from ``path`` (or a bundled preset name)."""
    path = Path(path)
    if not path.exists():
        bundled = preset_path(path.name)
        if bundled is None:
            raise FileNotFoundError(f"config file not found: {path}")
        path = bundled
    try:
        raw = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"malformed JSON: {exc.msg} (line {exc.lineno})") from None
    return resolve(raw)


def preset_path(name):
    """Path to a bundled preset such as ``case7_bas.json``, or None."""
    ref = resources.files("bastion") / "presets" / name
    return Path(str(ref)) if ref.is_file() else None


def load_preset(name, **overrides):
    raw = json.loads(preset_path(name).read_text())
    raw.update(overrides)
    return resolve(raw)
