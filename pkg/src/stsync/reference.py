"""Time-free spatial reference trajectories and simultaneous-arrival planning.

The remaining distance is reparameterised as ``r_d = ln(R0 - Rf1) - ln(R_d - Rf1)``
with ``Rf1 = Rf - 1``; in that variable the LOS angle follows a Cauchy-Euler
solution ``q_d = C1 x**N1 + C2 x**N2 + qf`` with ``x = r_f - r_d``. Because
the geometry depends on ``r_d`` only, the path can be flown at any speed
profile, and the travel time is fixed by the velocity plan alone.
"""

import math
import warnings
from dataclasses import dataclass, field, replace

import numpy as np

from . import _kernels as K
from .quadrature import composite_simpson


class ReferenceDomainError(ValueError):
    """Argument outside the range covered by the reference trajectory."""


class ProfileError(ValueError):
    """The velocity plan could not be built or is not strictly positive.

    ``t_violation`` holds the first grid time with ``V_d <= 0`` when the
    failure is a positivity violation, otherwise None.
    """

    def __init__(self, msg, t_violation=None):
        super().__init__(msg)
        self.t_violation = t_violation


class SingularGainWarning(RuntimeWarning):
    """The heading-rate law was evaluated where its gain is close to diverging."""


def boundary_coefficients(R0, Rf, q0, qf, eta_d0, N1=6, N2=10):
    """(C1, C2) matching q_d(0) = q0 and tan eta_d(0) = tan eta_d0.

    The LOS difference ``q0 - qf`` is used as given (no wrapping), so the
    caller decides which way round the target the reference sweeps.
    """
    if not N1 < N2:
        raise ValueError(f"N1 < N2 violated (N1={N1}, N2={N2})")
    Rf1 = Rf - 1.0
    rf = math.log(R0 - Rf1)
    if not rf > 0:
        raise ValueError(f"R0 > Rf violated (R0={R0}, Rf={Rf})")
    slope_term = rf * math.tan(eta_d0) * (R0 - Rf1) / R0
    dq = q0 - qf
    C1 = (N2 * dq + slope_term) / ((N2 - N1) * rf ** N1)
    C2 = -(N1 * dq + slope_term) / ((N2 - N1) * rf ** N2)
    return C1, C2


@dataclass(frozen=True)
class ReferenceParams:
    """Design constants of one reference trajectory.

    Build with :meth:`build`, which also solves the boundary coefficients and
    (optionally) the travel range ``Sd``.
    """

    R0: float
    Rf: float
    q0: float
    qf: float
    eta_d0: float
    N1: int
    N2: int
    C1: float
    C2: float
    Sd: float = float("nan")
    _array: np.ndarray = field(default=None, repr=False, compare=False)

    @classmethod
    def build(cls, R0, Rf, q0, qf, eta_d0=0.0, N1=6, N2=10, compute_sd=True, sd_tol=None):
        if not (float(N1).is_integer() and float(N2).is_integer() and N1 > 0 and N2 > 0):
            raise ValueError(f"N1, N2 must be positive integers (got {N1}, {N2})")
        if N1 < 2:
            raise ValueError(f"N1 >= 2 required so that eta_d(rf) = 0 (got N1={N1})")
        if not R0 > Rf >= 0:
            raise ValueError(f"R0 > Rf >= 0 violated (R0={R0}, Rf={Rf})")
        if not abs(eta_d0) < math.pi / 2:
            raise ValueError(f"|eta_d0| < pi/2 violated (eta_d0={eta_d0})")
        C1, C2 = boundary_coefficients(R0, Rf, q0, qf, eta_d0, int(N1), int(N2))
        p = cls(float(R0), float(Rf), float(q0), float(qf), float(eta_d0),
                int(N1), int(N2), C1, C2)
        if compute_sd:
            p = p.with_travel_range(sd_tol)
        return p

    def with_travel_range(self, tol=None):
        return replace(self, Sd=travel_range(self, tol), _array=None)

    @property
    def Rf1(self):
        return self.Rf - 1.0

    @property
    def rf(self):
        return math.log(self.R0 - self.Rf1)

    @property
    def kd1(self):
        return self.N1 * self.N2

    @property
    def kd2(self):
        return self.N1 + self.N2 - 1

    def as_array(self):
        if self._array is None:
            arr = np.zeros(K.N_REFP)
            arr[K.P_R0] = self.R0
            arr[K.P_RF] = self.Rf
            arr[K.P_RF1] = self.Rf1
            arr[K.P_LNRF] = self.rf
            arr[K.P_Q0] = self.q0
            arr[K.P_QF] = self.qf
            arr[K.P_C1] = self.C1
            arr[K.P_C2] = self.C2
            arr[K.P_N1] = self.N1
            arr[K.P_N2] = self.N2
            arr[K.P_KD1] = self.kd1
            arr[K.P_KD2] = self.kd2
            arr.flags.writeable = False
            object.__setattr__(self, "_array", arr)
        return self._array


@dataclass(frozen=True)
class ReferenceState:
    t: float
    rd: float
    Rd: float
    qd: float
    eta_d: float
    Vd: float
    eta_d_rate: float = 0.0


def _ret(x):
    return float(x) if np.ndim(x) == 0 else x


def distance_scale(Rd, params):
    """r_d for a distance R_d in [Rf, R0] (R_d = Rf maps to r_f exactly)."""
    Rd_arr = np.asarray(Rd, dtype=float)
    if np.any(Rd_arr < params.Rf) or np.any(Rd_arr > params.R0):
        raise ReferenceDomainError(f"R_d must lie in [Rf, R0] = [{params.Rf}, {params.R0}]")
    rd = math.log(params.R0 - params.Rf1) - np.log(Rd_arr - params.Rf1)
    rd = np.where(Rd_arr == params.Rf, params.rf, rd)
    return _ret(rd)


def inverse_distance_scale(rd, params):
    rd_arr = np.asarray(rd, dtype=float)
    if np.any(rd_arr < 0) or np.any(rd_arr > params.rf):
        raise ReferenceDomainError(f"r_d must lie in [0, rf] = [0, {params.rf}]")
    Rd = params.Rf1 + (params.R0 - params.Rf1) * np.exp(-rd_arr)
    Rd = np.where(rd_arr == params.rf, params.Rf, Rd)
    return _ret(Rd)


def reference_los(rd, params):
    x = np.clip(params.rf - np.asarray(rd, dtype=float), 0.0, None)
    return _ret(params.C1 * x ** params.N1 + params.C2 * x ** params.N2 + params.qf)


def los_slope(rd, params):
    """dq_d/dr_d of the closed form."""
    x = np.clip(params.rf - np.asarray(rd, dtype=float), 0.0, None)
    n1, n2 = params.N1, params.N2
    return _ret(-(n1 * params.C1 * x ** (n1 - 1) + n2 * params.C2 * x ** (n2 - 1)))


def reference_heading(rd, Rd=None, params=None):
    """eta_d on the closed-form path; ``Rd`` defaults to the value implied by ``rd``."""
    if params is None:
        raise TypeError("reference_heading() needs params")
    if Rd is None:
        Rd = inverse_distance_scale(rd, params)
    Rd = np.asarray(Rd, dtype=float)
    return _ret(np.arctan(Rd / (Rd - params.Rf1) * los_slope(rd, params)))


def reference_state(rd, params, t=0.0, Vd=0.0):
    """Closed-form reference at scaled distance ``rd`` with speed ``Vd``."""
    rd = float(rd)
    Rd = inverse_distance_scale(rd, params)
    qd = reference_los(rd, params)
    eta = reference_heading(rd, Rd, params)
    rate = heading_rate_law(ReferenceState(t, rd, Rd, qd, eta, Vd), params) \
        if rd < params.rf and Vd > 0 else 0.0
    return ReferenceState(float(t), rd, Rd, qd, eta, float(Vd), rate)


def heading_rate_law(state, params):
    """Feedback heading rate that steers (R_d, q_d, eta_d) onto the closed form.

    Its gain grows like 1/(r_f - r_d)**2; a :class:`SingularGainWarning` is
    issued when ``r_f - r_d < 1e-9``.
    """
    x = params.rf - state.rd
    if not x > 0:
        raise ReferenceDomainError("heading_rate_law needs r_d < r_f")
    if not state.Vd > 0:
        raise ReferenceDomainError(f"heading_rate_law needs V_d > 0 (got {state.Vd})")
    if x < 1e-9:
        warnings.warn(f"heading-rate gain near singular (r_f - r_d = {x:.3g})",
                      SingularGainWarning, stacklevel=2)
    return K.heading_rate(state.Rd, state.qd, state.eta_d, state.Vd, params.as_array())


def travel_range(params, tol=None):
    """Arc length of the reference path from R0 to Rf.

    Composite Simpson in the r_d variable, where dR_d = (R_d - Rf1) dr_d.
    ``tol`` defaults to 1e-6 * (R0 - Rf).
    """
    if tol is None:
        tol = 1e-6 * (params.R0 - params.Rf)
    if params.C1 == 0.0 and params.C2 == 0.0:
        return params.R0 - params.Rf  # radial path, unit integrand

    def integrand(rd):
        Rd = params.Rf1 + (params.R0 - params.Rf1) * np.exp(-rd)
        tan_eta = Rd / (Rd - params.Rf1) * los_slope(rd, params)
        return (Rd - params.Rf1) * np.sqrt(1.0 + tan_eta * tan_eta)

    value, _ = composite_simpson(integrand, 0.0, params.rf, tol)
    return value


@dataclass(frozen=True)
class VelocityProfile:
    """Polynomial speed plan V_d(t) on [0, Td]; coefficients highest power first."""

    coeffs: tuple
    m: int
    Td: float

    def __call__(self, t):
        return _ret(np.polyval(self.coeffs, np.asarray(t, dtype=float)))

    def rate(self, t):
        return _ret(np.polyval(np.polyder(self.coeffs), np.asarray(t, dtype=float)))

    def integral(self, t=None):
        t = self.Td if t is None else t
        return _ret(np.polyval(np.polyint(self.coeffs), np.asarray(t, dtype=float)))

    def as_array(self):
        return np.asarray(self.coeffs, dtype=float)


def plan_velocity_profile(Vd0, Vdf, Sd, Td, m=3, check_positive=True):
    """Degree-m speed plan with V(0)=Vd0, V(Td)=Vdf and integral Sd over [0, Td].

    For m >= 3 the remaining freedom is closed with zero derivatives of orders
    1..m-2 at Td. m = 1 is accepted only when the three conditions are
    consistent (e.g. a constant profile).
    """
    if not (float(m).is_integer() and m >= 1):
        raise ProfileError(f"m must be a positive integer (got {m})")
    if not (Sd > 0 and Td > 0):
        raise ProfileError(f"Sd > 0 and Td > 0 required (got Sd={Sd}, Td={Td})")
    m = int(m)
    n = m + 1
    # unknowns a_j of V = sum a_j s**j, s = t/Td in [0, 1]
    rows = [np.eye(n)[0], np.ones(n), 1.0 / np.arange(1, n + 1)]
    rhs = [Vd0, Vdf, Sd / Td]
    for k in range(1, m - 1):
        j = np.arange(n)
        fall = np.array([math.perm(int(jj), k) for jj in j], dtype=float)
        rows.append(fall)
        rhs.append(0.0)
    A = np.array(rows)
    b = np.array(rhs, dtype=float)
    if A.shape[0] == n:
        try:
            a = np.linalg.solve(A, b)
        except np.linalg.LinAlgError as exc:
            raise ProfileError(f"singular velocity-plan system: {exc}") from None
    else:
        a, *_ = np.linalg.lstsq(A, b, rcond=None)
        resid = A @ a - b
        if np.max(np.abs(resid)) > 1e-9 * max(1.0, np.max(np.abs(b))):
            raise ProfileError(f"degree-{m} profile cannot meet V(0), V(Td) and the range together")
    coeffs = (a / Td ** np.arange(n))[::-1]
    prof = VelocityProfile(tuple(float(c) for c in coeffs), m, float(Td))
    if check_positive:
        grid = np.linspace(0.0, Td, 1001)[:-1]
        bad = np.nonzero(np.polyval(coeffs, grid) <= 0)[0]
        if bad.size:
            t_bad = float(grid[bad[0]])
            raise ProfileError(f"V_d <= 0 at t = {t_bad:.6g} s", t_violation=t_bad)
    return prof


def keep_position(state, params, Vdf=0.0):
    """Frozen terminal reference (Rf, qf, eta_d = 0) once r_d has reached r_f."""
    if state.rd < params.rf:
        raise ReferenceDomainError("keep_position needs an arrived state (r_d >= r_f)")
    return ReferenceState(state.t, params.rf, params.Rf, params.qf, 0.0, float(Vdf), 0.0)


@dataclass
class ReferenceMarch:
    """Time history of the reference integrated with the heading-rate law."""

    t: np.ndarray
    rd: np.ndarray
    Rd: np.ndarray
    qd: np.ndarray
    eta_d: np.ndarray
    closed_form: np.ndarray  # True on the closed-form finish segment
    arrival: float


def march_time(params, Vd, dt=1e-3, stiff_limit=0.5, max_steps=None):
    """Integrate the reference at constant speed Vd with the heading-rate law.

    RK4 runs while ``dt`` times the law's gain stays below ``stiff_limit``;
    the short remainder follows the closed form in r_d. ``arrival`` is the
    interpolated time at which r_d reaches r_f (NaN if not reached).
    """
    if not Vd > 0:
        raise ValueError(f"Vd must be > 0 (got {Vd})")
    if max_steps is None:
        sd = params.Sd if math.isfinite(params.Sd) else travel_range(params)
        max_steps = int(2 * sd / (Vd * dt)) + 1000
    out = np.zeros((max_steps, 6))
    n, arrival = K.reference_time_march(params.as_array(), params.eta_d0, float(Vd),
                                        float(dt), float(stiff_limit), int(max_steps), out)
    out = out[:n]
    return ReferenceMarch(out[:, 0], out[:, 1], out[:, 2], out[:, 3], out[:, 4],
                          out[:, 5] > 0.5, arrival if arrival >= 0 else float("nan"))


def march_scaled(params, x_end=1e-3, dzeta=2e-3):
    """RK4 of (q_d, eta_d) as functions of r_d up to r_f - x_end.

    Steps are uniform in ln(r_f - r_d). Returns arrays (rd, qd, eta_d).
    """
    if not 0 < x_end < params.rf:
        raise ValueError(f"x_end must lie in (0, rf) (got {x_end})")
    n = int(math.ceil((math.log(params.rf) - math.log(x_end)) / dzeta)) + 1
    out = np.zeros((n, 3))
    rows = K.reference_scaled_march(params.as_array(), params.eta_d0, float(x_end),
                                    float(dzeta), out)
    out = out[:rows]
    return out[:, 0], out[:, 1], out[:, 2]
