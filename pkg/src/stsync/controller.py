"""Two-layer prescribed-time tracking controller.

The kinematic layer picks a speed/heading command (V_s*, eta_s*) that makes
the distance and LOS errors decay at the scheduled rate K1; the actuator layer
drives (V_s, eta_s) onto that command at rate K2 through the tangential and
lateral accelerations (u_V, u_theta). From ``tf`` on the gains drop to their
unscaled values and the reference is held, which keeps the formation.
"""

import logging
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import _kernels as K
from .kinematics import V_MIN, ErrorState, KinematicsError, coupling, coupling_matrix

log = logging.getLogger(__name__)

PRESCRIBED = "prescribed"
KEEPING = "keeping"


@dataclass(frozen=True)
class VirtualControl:
    alpha_V: float
    alpha_eta: float
    Vs_star: float
    eta_s_star: float
    Vs_star_rate: float = 0.0
    eta_s_star_rate: float = 0.0
    eta_e_star: float = 0.0  # wrap(eta_s_star - eta_d), the argument of M


@dataclass(frozen=True)
class KeepingGainCheck:
    norm_Mbar_m: float
    k1: float
    k2: float

    @property
    def satisfied(self):
        half = 0.5 * self.norm_Mbar_m
        return self.k1 > half and self.k2 > half


@dataclass(frozen=True)
class ControlOutput:
    uV: float
    u_theta: float
    eV: float
    e_eta: float
    mode: str = PRESCRIBED
    gain_check: Optional[KeepingGainCheck] = None


def f_M(alpha_V, alpha_eta):
    """Speed/heading realising a required relative-velocity pair after tf.

    With the reference held (V_d = 0, eta_d = 0) the kinematic layer needs
    V cos(eta) = -alpha_V and V sin(eta) = alpha_eta, so the map is the polar
    form of (-alpha_V, alpha_eta).
    """
    return math.hypot(alpha_V, alpha_eta), math.atan2(alpha_eta, -alpha_V)


def _virtual(err, state, ref, target, K1):
    Vs_star, eta_s_star = K.speed_heading_command(
        state.R, state.q, state.theta_s, ref.Rd, ref.qd, ref.eta_d, ref.Vd,
        target.Vt, target.theta_t, K1)
    eta_e_star = K.wrap_angle(eta_s_star - ref.eta_d)
    cm = coupling(state, ref, target, err)
    M_star = coupling_matrix(Vs_star, ref.eta_d, eta_e_star)
    alpha = (-K1 * np.array([err.Re, state.R * err.qe]) - cm.G
             + M_star @ np.array([ref.Vd, ref.eta_d]))
    return float(alpha[0]), float(alpha[1]), Vs_star, eta_s_star, eta_e_star


def virtual_control(err, state, ref, target, sched, t, previous=None):
    """Kinematic-layer command at time t.

    Before tf, (V_s*, eta_s*) solve M(V_s*, eta_e*) [V_s*; eta_d + eta_e*] =
    [alpha_V; alpha_eta] with M evaluated at the command itself; from tf on the
    command is ``f_M(alpha)``. The rates are backward differences against
    ``previous`` (a ``(t_prev, VirtualControl)`` pair), zero when it is None.
    """
    K1, _, _, _ = sched.gains(t)
    aV, aE, Vs_star, eta_s_star, eta_e_star = _virtual(err, state, ref, target, K1)
    if t >= sched.tf:
        Vs_star, heading = f_M(aV, aE)
        eta_s_star = state.eta_s - K.wrap_angle(state.eta_s - heading)
        eta_e_star = K.wrap_angle(eta_s_star - ref.eta_d)
    if not Vs_star > V_MIN:
        raise KinematicsError(f"commanded speed {Vs_star:.3g} at or below V_min={V_MIN}")
    v_rate = e_rate = 0.0
    if previous is not None:
        t_prev, vc_prev = previous
        step = t - t_prev
        if step > 0:
            v_rate = (Vs_star - vc_prev.Vs_star) / step
            e_rate = K.wrap_angle(eta_s_star - vc_prev.eta_s_star) / step
    return VirtualControl(aV, aE, Vs_star, eta_s_star, v_rate, e_rate, eta_e_star)


def actuator_control(vc, state, sched, qdot, t):
    """Accelerations that give the command errors the decay rate K2."""
    if not state.Vs > V_MIN:
        raise KinematicsError(f"V_s={state.Vs} at or below the floor V_min={V_MIN}")
    _, K2, _, _ = sched.gains(t)
    eV = state.Vs - vc.Vs_star
    e_eta = K.wrap_angle(state.eta_s - vc.eta_s_star)
    uV = -K2 * eV + vc.Vs_star_rate
    u_theta = state.Vs * (K2 * e_eta - vc.eta_s_star_rate + qdot)
    mode = KEEPING if t >= sched.tf else PRESCRIBED
    return ControlOutput(uV, u_theta, eV, e_eta, mode)


def keeping_gain_check(state, vc, sched):
    """Compare k1, k2 with half the norm of diag(1, 1/R) M(eta_s*, e_eta, V_s)."""
    e_eta = K.wrap_angle(state.eta_s - vc.eta_s_star)
    Mm = coupling_matrix(state.Vs, vc.eta_s_star, e_eta)
    Mbar_m = np.diag([1.0, 1.0 / state.R]) @ Mm
    return KeepingGainCheck(float(np.linalg.norm(Mbar_m, 2)), sched.k1, sched.k2)


def keeping_control(err, state, ref, target, sched, t=None, previous=None):
    """Formation-keeping law (t >= tf, held reference) with its gain check.

    A violated gain condition is logged as a warning and returned in
    ``ControlOutput.gain_check``; it does not stop the controller.
    """
    t = sched.tf if t is None else t
    if t < sched.tf:
        raise ValueError(f"keeping_control needs t >= tf (t={t}, tf={sched.tf})")
    vc = virtual_control(err, state, ref, target, sched, t, previous)
    _, qdot = K.relative_rates(state.R, state.q, state.Vs, state.theta_s,
                               target.Vt, target.theta_t)
    out = actuator_control(vc, state, sched, qdot, t)
    check = keeping_gain_check(state, vc, sched)
    if not check.satisfied:
        log.warning("keeping gain condition violated: k1=%g, k2=%g, 0.5*|Mbar_m|=%g",
                    check.k1, check.k2, 0.5 * check.norm_Mbar_m)
    return ControlOutput(out.uV, out.u_theta, out.eV, out.e_eta, KEEPING, check)


class TrackingController:
    """Stateful per-vehicle controller holding one step of command history.

    Not reentrant: use one instance per vehicle and call :meth:`update` with
    increasing times.
    """

    def __init__(self, sched):
        self.sched = sched
        self._previous = None

    def reset(self):
        self._previous = None

    def update(self, state, ref, target, t):
        """Return (VirtualControl, ControlOutput) for the current sample."""
        err = ErrorState.between(state, ref)
        vc = virtual_control(err, state, ref, target, self.sched, t, self._previous)
        self._previous = (t, vc)
        _, qdot = K.relative_rates(state.R, state.q, state.Vs, state.theta_s,
                                   target.Vt, target.theta_t)
        return vc, actuator_control(vc, state, self.sched, qdot, t)
