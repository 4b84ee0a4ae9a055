"""Fixed-step closed-loop simulation of single vehicles and formations.

The plant is the physical polar kinematics plus the speed/path-angle
dynamics, integrated with classical RK4 and a zero-order hold on the control.
The hot loop lives in :func:`stsync._kernels.run_closed_loop`; :func:`step`
is the same update written against the public dataclasses.
"""

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import _kernels as K
from .kinematics import R_MIN, V_MIN, RelativeState
from .ptime import phi_series
from .reference import ReferenceParams, plan_velocity_profile
from .scenario import TRACE_COLUMNS, DisturbanceSpec

R_TOL = 5.0  # m, terminal distance tolerance
Q_TOL_DEG = 0.5  # deg, terminal LOS tolerance

STATUS_NAMES = {
    K.STATUS_OK: "ok",
    K.STATUS_R_FLOOR: "R fell to the floor R_min",
    K.STATUS_V_FLOOR: "V_s fell to the floor V_min",
    K.STATUS_COMMAND_FLOOR: "commanded speed fell to the floor V_min",
    K.STATUS_NONFINITE: "non-finite state",
}

_EXTRA_COLUMNS = ("V_star", "eta_star", "mu1", "mu2", "K1", "K2", "r_d", "q_dot", "mode",
                  "d_V", "d_theta", "eta_e", "V_e")
COLUMNS = TRACE_COLUMNS + _EXTRA_COLUMNS
_INDEX = {name: i for i, name in enumerate(COLUMNS)}

_DIST_CODES = {"none": K.DIST_NONE, "constant": K.DIST_CONSTANT,
               "sinusoid": K.DIST_SINUSOID, "noise": K.DIST_NOISE}


class SimulationError(RuntimeError):
    """A run stopped early (state floor, non-finite state)."""


@dataclass
class SimTrace:
    """Per-step record of one closed-loop run.

    ``data`` has one row per sample and the columns listed in :data:`COLUMNS`;
    the first 20 are the CSV schema. Columns are also attributes
    (``trace.R_e``, ``trace.u_V``, ...).
    """

    data: np.ndarray
    Td: float
    dt: float
    params: ReferenceParams = None
    profile: object = None
    status: int = K.STATUS_OK
    vehicle: int = 0

    def __len__(self):
        return self.data.shape[0]

    def __getattr__(self, name):
        idx = _INDEX.get(name)
        if idx is None:
            raise AttributeError(name)
        return self.data[:, idx]

    def table(self):
        return self.data[:, :len(TRACE_COLUMNS)]

    @property
    def ok(self):
        return self.status == K.STATUS_OK

    @property
    def status_text(self):
        return STATUS_NAMES.get(self.status, f"status {self.status}")

    def index_at(self, t):
        """Index of the sample closest to time t."""
        return int(np.argmin(np.abs(self.data[:, K.C_T] - t)))

    def row(self, i):
        return dict(zip(COLUMNS, self.data[i]))


@dataclass
class VehicleArrival:
    vehicle: int
    R_final: float
    q_final_deg: float
    R_err: float
    q_err_deg: float
    S_d: float
    Vd0: float
    Vdf: float
    profile: list
    radial_rate: float
    max_u_near_Td: float
    first_within_tol: float
    converged: bool
    status: str


@dataclass
class ArrivalReport:
    Td: float
    per_vehicle: list = field(default_factory=list)

    @property
    def all_converged(self):
        return all(v.converged for v in self.per_vehicle)

    @property
    def arrival_spread(self):
        """Largest |first time within R_TOL of Rf - Td| over the vehicles."""
        return max(abs(v.first_within_tol - self.Td) for v in self.per_vehicle)

    def to_dict(self):
        return {"Td": self.Td, "per_vehicle": [vars(v).copy() for v in self.per_vehicle]}


# ---------------------------------------------------------------- building ---


def build_reference(vehicle, control, sd_tol=None):
    """Reference parameters for one vehicle, with a tight travel-range tolerance."""
    if sd_tol is None:
        sd_tol = 1e-10 * (vehicle.R0 - vehicle.Rf)
    return ReferenceParams.build(vehicle.R0, vehicle.Rf, vehicle.q0, vehicle.qf,
                                 vehicle.eta_d0_effective, control.N1, control.N2,
                                 sd_tol=sd_tol)


def plan_vehicle(vehicle, control, params=None):
    params = params or build_reference(vehicle, control)
    return plan_velocity_profile(vehicle.Vd0_effective, control.Vdf, params.Sd,
                                 control.Td, control.m)


def time_grid(control):
    """Uniform grid k*dt on [0, t_end] with Td and t_end placed exactly."""
    dt, Td, end = control.dt, control.Td, control.end
    n = int(math.floor(end / dt + 1e-9))
    times = np.arange(n + 1) * dt
    k = int(round(Td / dt))
    if abs(k * dt - Td) <= 1e-9 * dt + 1e-12 * Td:
        times[k] = Td
    else:
        times = np.sort(np.append(times, Td))
    if end - times[-1] > 1e-9 * dt:
        times = np.append(times, end)
    return times


def _dist_vector(spec):
    return np.array([_DIST_CODES[spec.kind], spec.amp_V, spec.amp_theta, spec.freq])


def _noise(spec, n, seed):
    out = np.zeros((n, 2))
    if spec.kind == "noise":
        rng = np.random.default_rng(seed)
        out[:, 0] = rng.uniform(-1.0, 1.0, n) * spec.amp_V
        out[:, 1] = rng.uniform(-1.0, 1.0, n) * spec.amp_theta
    return out


# ----------------------------------------------------------------- running ---


def run_single(vehicle, target, control, seed=0, params=None, profile=None, index=0):
    """Closed-loop run of one vehicle over [0, t_end].

    Returns a :class:`SimTrace`; if a state floor is hit the trace stops there
    and ``trace.status`` says why.
    """
    params = params or build_reference(vehicle, control)
    profile = profile or plan_velocity_profile(vehicle.Vd0_effective, control.Vdf, params.Sd,
                                               control.Td, control.m)
    sched = control.schedule().as_array()
    times = time_grid(control)
    out = np.zeros((times.size, K.N_COLS))
    plant0 = np.array([vehicle.R0, vehicle.q0, vehicle.Vs0, vehicle.theta0])
    tgt = np.array([target.Vt, target.theta_t, target.x_t0, target.y_t0])
    dist = control.disturbance
    rows, status = K.run_closed_loop(plant0, tgt, params.as_array(), profile.as_array(),
                                     control.Td, sched, _dist_vector(dist),
                                     _noise(dist, times.size, seed), times, out)
    return SimTrace(out[:rows], control.Td, control.dt, params, profile, status, index)


def run_formation(vehicles, target, control, seed=0, workers=None):
    """Run every vehicle against the common terminal time; return (traces, report).

    A failing vehicle is recorded in the report without stopping the others.
    """
    if len(vehicles) < 2:
        raise ValueError("a formation needs at least two vehicles")

    def one(i):
        v = vehicles[i]
        try:
            return run_single(v, target, control, seed=seed + i, index=i)
        except ValueError as exc:
            return exc

    workers = workers or min(len(vehicles), 8)
    with ThreadPoolExecutor(max_workers=workers) as pool:
        results = list(pool.map(one, range(len(vehicles))))
    report = ArrivalReport(control.Td)
    traces = []
    for i, res in enumerate(results):
        if isinstance(res, Exception):
            report.per_vehicle.append(_failed_arrival(i, vehicles[i], control, str(res)))
            traces.append(None)
        else:
            report.per_vehicle.append(arrival_summary(res, vehicles[i], target, control))
            traces.append(res)
    return traces, report


def _failed_arrival(i, vehicle, control, msg):
    nan = float("nan")
    return VehicleArrival(i, nan, nan, nan, nan, nan, vehicle.Vd0_effective, control.Vdf, [],
                          nan, nan, nan, False, msg)


def arrival_summary(trace, vehicle, target, control):
    """Terminal-condition summary of one trace at Td."""
    if len(trace) == 0:
        return _failed_arrival(trace.vehicle, vehicle, control, trace.status_text)
    i = trace.index_at(control.Td)
    reached = abs(trace.t[i] - control.Td) < 0.5 * control.dt
    R, q = trace.R[i], trace.q[i]
    q_err = math.degrees(K.wrap_angle(q - vehicle.qf))
    Rdot, _ = K.relative_rates(R, q, trace.V_s[i], trace.theta_s[i], target.Vt, target.theta_t)
    near = (trace.t >= control.Td - 1.0) & (trace.t <= control.Td)
    u_norm = np.hypot(trace.u_V[near], trace.u_theta[near])
    inside = np.nonzero(trace.R <= vehicle.Rf + R_TOL)[0]
    converged = bool(reached and trace.ok and abs(R - vehicle.Rf) <= R_TOL
                     and abs(q_err) <= Q_TOL_DEG)
    return VehicleArrival(
        vehicle=trace.vehicle,
        R_final=float(R),
        q_final_deg=math.degrees(q),
        R_err=float(abs(R - vehicle.Rf)),
        q_err_deg=abs(q_err),
        S_d=trace.params.Sd,
        Vd0=vehicle.Vd0_effective,
        Vdf=control.Vdf,
        profile=list(trace.profile.coeffs),
        radial_rate=float(Rdot),
        max_u_near_Td=float(u_norm.max()) if u_norm.size else float("nan"),
        first_within_tol=float(trace.t[inside[0]]) if inside.size else float("nan"),
        converged=converged,
        status=trace.status_text if reached or not trace.ok else "run ended before Td",
    )


def step(state, ref, target, controller, t, dt, disturbance=None, noise=(0.0, 0.0)):
    """Advance one vehicle by dt under the controller (zero-order hold).

    ``target`` is the target at time t; ``disturbance`` a DisturbanceSpec.
    Returns (next RelativeState, VirtualControl, ControlOutput).
    """
    if not dt > 0:
        raise ValueError(f"dt must be > 0 (got {dt})")
    vc, out = controller.update(state, ref, target, t)
    dist = _dist_vector(disturbance or DisturbanceSpec())
    R, q, Vs, th = K.plant_step(t, dt, state.R, state.q, state.Vs, state.theta_s, out.uV,
                                out.u_theta, target.Vt, target.theta_t, dist,
                                noise[0], noise[1])
    nxt = RelativeState(R, q, Vs, th)
    if not all(map(math.isfinite, (R, q, Vs, th))):
        raise SimulationError(f"non-finite state after step at t={t}")
    if R <= R_MIN:
        raise SimulationError(f"R={R:.6g} reached the floor at t={t + dt:.6g}")
    if Vs <= V_MIN:
        raise SimulationError(f"V_s={Vs:.6g} reached the floor at t={t + dt:.6g}")
    return nxt, vc, out


def cartesian(R, q, x_t=0.0, y_t=0.0):
    """Vehicle position for LOS angle q of the vehicle-to-target ray.

    The vehicle sits at target - R (cos q, sin q).
    """
    return x_t - R * np.cos(q), y_t - R * np.sin(q)


# --------------------------------------------------------------- envelopes ---


def kinematic_envelope(trace, sched):
    """(lhs, rhs) of mu1 |(R_e, q_e)| <= exp(k1 phi1) |(R_e, q_e)(0)| on t < tf."""
    t = trace.t
    pre = t < sched.tf
    lhs = trace.mu1[pre] * np.hypot(trace.R_e[pre], trace.q_e[pre])
    ph = phi_series(t[pre], sched.h1, sched.tf, sched.eps_clamp, sched.tau_kind)
    rhs = np.exp(sched.k1 * ph) * math.hypot(trace.R_e[0], trace.q_e[0])
    return lhs, rhs


def actuator_envelope(trace, sched, sigma=0.0):
    """(lhs, rhs) of mu2 |(e_V, e_eta)| <= exp(k2 phi2) W2(0)^(1/2) + sigma/(2 sqrt(k2 lambda2))."""
    t = trace.t
    pre = t < sched.tf
    lhs = trace.mu2[pre] * np.hypot(trace.e_V[pre], trace.e_eta[pre])
    ph = phi_series(t[pre], sched.h2, sched.tf, sched.eps_clamp, sched.tau_kind)
    w0 = math.hypot(trace.e_V[0], trace.e_eta[0])
    rhs = np.exp(sched.k2 * ph) * w0 + sigma / (2.0 * math.sqrt(sched.k2 * sched.lambda2))
    return lhs, rhs
