"""Scenario files, validation and result persistence.

Scenario files are JSON with three blocks::

    {"vehicles": [{"R0": 7000, "q0_deg": 220, "theta0_deg": 190, "Vs0": 50,
                   "Rf": 1000, "qf_deg": 230}, ...],
     "target": {"Vt": 100, "theta_t_deg": 45, "x_t0": 0, "y_t0": 0},
     "control": {"N1": 6, "N2": 10, "k1": 1, "k2": 2, "lambda2": 1,
                 "h1": 1, "h2": 2, "Td": 20, "Vdf": 0, "dt": 0.001}}

Fields ending in ``_deg`` are degrees on disk and radians in memory.
"""

import csv
import json
import math
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Optional

import numpy as np

TRACE_COLUMNS = ("t", "R", "q", "eta_s", "theta_s", "V_s", "V_d", "R_d", "q_d", "eta_d",
                 "R_e", "q_e", "e_V", "e_eta", "u_V", "u_theta", "x", "y", "x_t", "y_t")

DISTURBANCE_KINDS = ("none", "constant", "sinusoid", "noise")


class ScenarioError(ValueError):
    """A scenario file is malformed or violates an invariant."""


def _wrap(a):
    return math.atan2(math.sin(a), math.cos(a))


def _check(cond, msg):
    if not cond:
        raise ScenarioError(msg)


def _finite(obj, *names):
    for n in names:
        v = getattr(obj, n)
        _check(v is not None and math.isfinite(v), f"{n} must be a finite number (got {v!r})")


@dataclass(frozen=True)
class VehicleScenario:
    R0: float
    q0: float
    theta0: float
    Vs0: float
    Rf: float
    qf: float
    eta_d0: Optional[float] = None
    Vd0: Optional[float] = None
    name: str = ""

    def __post_init__(self):
        _finite(self, "R0", "q0", "theta0", "Vs0", "Rf", "qf")
        _check(self.R0 > self.Rf, f"R0 > Rf violated (R0={self.R0}, Rf={self.Rf})")
        _check(self.Rf >= 0, f"Rf >= 0 violated (Rf={self.Rf})")
        _check(self.Vs0 > 0, f"Vs0 > 0 violated (Vs0={self.Vs0})")
        if self.eta_d0 is not None:
            _check(abs(self.eta_d0) < math.pi / 2,
                   f"|eta_d0| < 90 deg violated (eta_d0={math.degrees(self.eta_d0):.6g} deg)")
        if self.Vd0 is not None:
            _check(self.Vd0 > 0, f"Vd0 > 0 violated (Vd0={self.Vd0})")

    @property
    def eta_d0_effective(self):
        """eta_d0, defaulting to the initial heading q0 - theta0."""
        return _wrap(self.q0 - self.theta0) if self.eta_d0 is None else self.eta_d0

    @property
    def Vd0_effective(self):
        return self.Vs0 if self.Vd0 is None else self.Vd0


@dataclass(frozen=True)
class TargetSpec:
    Vt: float = 0.0
    theta_t: float = 0.0
    x_t0: float = 0.0
    y_t0: float = 0.0

    def __post_init__(self):
        _finite(self, "Vt", "theta_t", "x_t0", "y_t0")
        _check(self.Vt >= 0, f"Vt >= 0 violated (Vt={self.Vt})")

    @property
    def stationary(self):
        return self.Vt == 0


@dataclass(frozen=True)
class DisturbanceSpec:
    kind: str = "none"
    amp_V: float = 0.0
    amp_theta: float = 0.0
    freq: float = 0.0

    def __post_init__(self):
        _check(self.kind in DISTURBANCE_KINDS,
               f"disturbance.kind must be one of {DISTURBANCE_KINDS} (got {self.kind!r})")
        _finite(self, "amp_V", "amp_theta", "freq")
        _check(self.freq >= 0, f"disturbance.freq >= 0 violated (freq={self.freq})")

    @property
    def sigma(self):
        """Bound on the disturbance vector norm."""
        if self.kind == "none":
            return 0.0
        return math.hypot(self.amp_V, self.amp_theta)


@dataclass(frozen=True)
class ControlConfig:
    Td: float
    N1: int = 6
    N2: int = 10
    k1: float = 1.0
    k2: float = 2.0
    lambda2: float = 1.0
    h1: float = 1.0
    h2: float = 2.0
    Vdf: float = 0.0
    dt: float = 1e-3
    eps_clamp: Optional[float] = None
    t_end: Optional[float] = None
    m: int = 3
    tau_kind: str = "log"
    mu_cap: Optional[float] = None
    disturbance: DisturbanceSpec = field(default_factory=DisturbanceSpec)

    def __post_init__(self):
        _finite(self, "Td", "k1", "k2", "lambda2", "h1", "h2", "Vdf", "dt")
        for n in ("N1", "N2", "m"):
            v = getattr(self, n)
            _check(float(v).is_integer() and v > 0, f"{n} must be a positive integer (got {v!r})")
        _check(self.N1 < self.N2, f"N1 < N2 violated (N1={self.N1}, N2={self.N2})")
        _check(self.N1 >= 2, f"N1 >= 2 violated (N1={self.N1}): eta_d(rf) = 0 needs it")
        for n in ("k1", "k2", "lambda2", "h1", "h2", "Td"):
            _check(getattr(self, n) > 0, f"{n} > 0 violated ({n}={getattr(self, n)})")
        _check(self.Vdf >= 0, f"Vdf >= 0 violated (Vdf={self.Vdf})")
        _check(self.dt > 0, f"dt > 0 violated (dt={self.dt})")
        _check(0 < self.eps < self.Td, f"0 < eps_clamp < Td violated (eps_clamp={self.eps})")
        _check(self.dt <= self.eps * (1 + 1e-12),
               f"dt <= eps_clamp violated (dt={self.dt}, eps_clamp={self.eps})")
        _check(self.end >= self.Td, f"t_end >= Td violated (t_end={self.end}, Td={self.Td})")
        _check(self.tau_kind in ("log", "reciprocal"),
               f"tau_kind must be 'log' or 'reciprocal' (got {self.tau_kind!r})")
        if self.mu_cap is not None:
            _check(self.mu_cap >= 1, f"mu_cap >= 1 violated (mu_cap={self.mu_cap})")

    @property
    def eps(self):
        return self.dt if self.eps_clamp is None else self.eps_clamp

    @property
    def end(self):
        return 1.5 * self.Td if self.t_end is None else self.t_end

    def schedule(self):
        from .ptime import GainSchedule

        return GainSchedule(tf=self.Td, h1=self.h1, h2=self.h2, k1=self.k1, k2=self.k2,
                            lambda2=self.lambda2, eps_clamp=self.eps, mu_cap=self.mu_cap,
                            tau_kind=self.tau_kind)


@dataclass(frozen=True)
class Scenario:
    vehicles: tuple
    target: TargetSpec
    control: ControlConfig

    def __getitem__(self, key):
        # integers index vehicles; strings give dict-style access to the blocks
        if isinstance(key, str):
            return getattr(self, key)
        return self.vehicles[key]


# ----------------------------------------------------------------- parsing ---


def _take(block, where, spec):
    """Pull typed values out of a JSON block; ``spec`` maps name -> (kind, required)."""
    if not isinstance(block, dict):
        raise ScenarioError(f"{where} must be a JSON object")
    unknown = set(block) - set(spec)
    if unknown:
        raise ScenarioError(f"{where}: unknown field(s) {sorted(unknown)}")
    out = {}
    for name, (kind, required) in spec.items():
        if name not in block:
            if required:
                raise ScenarioError(f"{where}: missing required field {name!r}")
            continue
        val = block[name]
        if kind == "str":
            if not isinstance(val, str):
                raise ScenarioError(f"{where}.{name} must be a string")
        elif kind == "int":
            if isinstance(val, bool) or not isinstance(val, (int, float)) or not float(val).is_integer():
                raise ScenarioError(f"{where}.{name} must be an integer (got {val!r})")
            val = int(val)
        elif kind == "obj":
            if not isinstance(val, dict):
                raise ScenarioError(f"{where}.{name} must be a JSON object")
        elif val is not None:
            if isinstance(val, bool) or not isinstance(val, (int, float)):
                raise ScenarioError(f"{where}.{name} must be a number (got {val!r})")
            val = float(val)
        key = name[:-4] if name.endswith("_deg") else name
        out[key] = math.radians(val) if name.endswith("_deg") and val is not None else val
    return out


_VEHICLE_FIELDS = {"name": ("str", False), "R0": ("num", True), "q0_deg": ("num", True),
                   "theta0_deg": ("num", True), "Vs0": ("num", True), "Rf": ("num", True),
                   "qf_deg": ("num", True), "eta_d0_deg": ("num", False), "Vd0": ("num", False)}
_TARGET_FIELDS = {"Vt": ("num", False), "theta_t_deg": ("num", False),
                  "x_t0": ("num", False), "y_t0": ("num", False)}
_CONTROL_FIELDS = {"N1": ("int", False), "N2": ("int", False), "k1": ("num", False),
                   "k2": ("num", False), "lambda2": ("num", False), "h1": ("num", False),
                   "h2": ("num", False), "Td": ("num", True), "Vdf": ("num", False),
                   "dt": ("num", False), "eps_clamp": ("num", False), "t_end": ("num", False),
                   "m": ("int", False), "tau_kind": ("str", False), "mu_cap": ("num", False),
                   "disturbance": ("obj", False)}
_DIST_FIELDS = {"kind": ("str", False), "amp_V": ("num", False),
                "amp_theta": ("num", False), "freq": ("num", False)}


def scenario_from_dict(data):
    """Build a validated :class:`Scenario` from the decoded JSON document."""
    if not isinstance(data, dict):
        raise ScenarioError("scenario must be a JSON object")
    unknown = set(data) - {"vehicles", "target", "control"}
    if unknown:
        raise ScenarioError(f"unknown top-level field(s) {sorted(unknown)}")
    for key in ("vehicles", "control"):
        if key not in data:
            raise ScenarioError(f"missing required block {key!r}")
    if not isinstance(data["vehicles"], list) or not data["vehicles"]:
        raise ScenarioError("vehicles must be a non-empty list")
    vehicles = tuple(VehicleScenario(**_take(v, f"vehicles[{i}]", _VEHICLE_FIELDS))
                     for i, v in enumerate(data["vehicles"]))
    target = TargetSpec(**_take(data.get("target", {}), "target", _TARGET_FIELDS))
    ctrl = _take(data["control"], "control", _CONTROL_FIELDS)
    dist = ctrl.pop("disturbance", None)
    if dist is not None:
        ctrl["disturbance"] = DisturbanceSpec(**_take(dist, "control.disturbance", _DIST_FIELDS))
    return Scenario(vehicles, target, ControlConfig(**ctrl))


def load_scenario(path):
    """Read and validate a scenario JSON file."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ScenarioError(f"cannot read scenario {path}: {exc}") from None
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ScenarioError(f"parse error in {path}: {exc}") from None
    try:
        return scenario_from_dict(data)
    except TypeError as exc:
        raise ScenarioError(f"invalid scenario {path}: {exc}") from None


def scenario_to_dict(scn):
    def dump(obj, skip=()):
        out = {}
        for f in fields(obj):
            val = getattr(obj, f.name)
            if f.name in skip or val is None or (f.name == "name" and not val):
                continue
            if isinstance(val, DisturbanceSpec):
                out[f.name] = dump(val)
            elif f.name in _ANGLE_FIELDS:
                out[f.name + "_deg"] = math.degrees(val)
            else:
                out[f.name] = val
        return out

    return {"vehicles": [dump(v) for v in scn.vehicles],
            "target": dump(scn.target),
            "control": dump(scn.control)}


_ANGLE_FIELDS = {"q0", "theta0", "qf", "eta_d0", "theta_t"}


def save_scenario(scn, path):
    Path(path).write_text(json.dumps(scenario_to_dict(scn), indent=2) + "\n")


# ------------------------------------------------------------------ output ---


def write_trace(trace, path):
    """Write the CSV trace (header plus one row per step, 15 significant digits)."""
    data = trace.table() if hasattr(trace, "table") else np.asarray(trace)
    if data.size == 0 or data.shape[0] == 0:
        raise ValueError("empty trace")
    data = data[:, :len(TRACE_COLUMNS)]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(TRACE_COLUMNS)
        for row in data:
            w.writerow([format(v, ".15g") for v in row])


def read_trace(path):
    """Load a trace CSV back into an (n, 20) array."""
    return np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)


def json_safe(obj):
    """Copy of a JSON-able structure with NaN and infinities replaced by None."""
    if isinstance(obj, dict):
        return {k: json_safe(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [json_safe(v) for v in obj]
    if isinstance(obj, (float, np.floating)):
        return float(obj) if math.isfinite(obj) else None
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def write_report(report, path):
    doc = report.to_dict() if hasattr(report, "to_dict") else report
    Path(path).write_text(json.dumps(json_safe(doc), indent=2, allow_nan=False) + "\n")


def with_overrides(scn, dt=None, eps=None, no_disturbance=False):
    """Scenario with command-line overrides applied (validated again)."""
    ctrl = scn.control
    changes = {}
    if dt is not None:
        changes["dt"] = dt
        if eps is None and ctrl.eps_clamp is None:
            changes["eps_clamp"] = None
    if eps is not None:
        changes["eps_clamp"] = eps
    if no_disturbance:
        changes["disturbance"] = DisturbanceSpec()
    if changes:
        ctrl = replace(ctrl, **changes)
    return replace(scn, control=ctrl)
