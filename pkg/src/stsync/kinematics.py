"""Relative polar kinematics, tracking errors and the coupling matrices."""

from dataclasses import dataclass

import numpy as np

from . import _kernels as K

V_MIN = 1e-2
R_MIN = 1e-3


class KinematicsError(ValueError):
    """A state left the region where the coupling matrices are defined."""


@dataclass(frozen=True)
class RelativeState:
    """Polar relative state of the vehicle with respect to the target."""

    R: float
    q: float
    Vs: float
    theta_s: float

    @property
    def eta_s(self):
        return self.q - self.theta_s


@dataclass(frozen=True)
class TargetState:
    """Constant-velocity target; (x, y) is its position at the sampled time."""

    Vt: float
    theta_t: float
    x: float = 0.0
    y: float = 0.0

    def eta_t(self, q):
        return q - self.theta_t

    def at(self, t, x0=None, y0=None):
        """Target advanced to time t from (x0, y0) (defaults to the stored position)."""
        x0 = self.x if x0 is None else x0
        y0 = self.y if y0 is None else y0
        return TargetState(self.Vt, self.theta_t,
                           x0 + self.Vt * np.cos(self.theta_t) * t,
                           y0 + self.Vt * np.sin(self.theta_t) * t)


@dataclass(frozen=True)
class ErrorState:
    Re: float
    qe: float
    eta_e: float
    Ve: float

    @classmethod
    def between(cls, state, ref):
        """Errors of ``state`` against a reference state (eta_e wrapped)."""
        return cls(state.R - ref.Rd, state.q - ref.qd,
                   K.wrap_angle(state.eta_s - ref.eta_d), state.Vs - ref.Vd)


@dataclass(frozen=True)
class CouplingMatrices:
    M: np.ndarray
    G: np.ndarray
    Mbar: np.ndarray
    Gbar: np.ndarray
    B: np.ndarray
    H: np.ndarray
    F: np.ndarray


def sinc_pair(eta_e):
    """((1 - cos eta_e)/eta_e, sin eta_e/eta_e), Taylor branch for |eta_e| < 1e-6."""
    return K.sinc_pair(float(eta_e))


def relative_rhs(state, target):
    """(R_dot, q_dot) of the relative kinematics."""
    if not state.R > R_MIN:
        raise KinematicsError(f"R={state.R} at or below the floor R_min={R_MIN}")
    return K.relative_rates(state.R, state.q, state.Vs, state.theta_s,
                            target.Vt, target.theta_t)


def coupling_matrix(Vs, eta_d, eta_e):
    """M(eta_d, eta_e, V_s) mapping [V_e; eta_e] into [R_e rate; R q_e rate]."""
    c1, c2 = K.sinc_pair(float(eta_e))
    cd, sd = np.cos(eta_d), np.sin(eta_d)
    return np.array([[-cd, Vs * (cd * c1 + sd * c2)],
                     [sd, Vs * (cd * c2 - sd * c1)]])


def coupling(state, ref, target, err=None, disturbance=(0.0, 0.0)):
    """Coupling/drift blocks of the combined tracking model at one instant.

    ``disturbance`` is (d_V, d_theta); it only fills F.
    """
    if not state.Vs > V_MIN:
        raise KinematicsError(f"V_s={state.Vs} at or below the floor V_min={V_MIN}")
    if not state.R > R_MIN:
        raise KinematicsError(f"R={state.R} at or below the floor R_min={R_MIN}")
    if not ref.Rd > R_MIN:
        raise KinematicsError(f"R_d={ref.Rd} at or below the floor R_min={R_MIN}")
    if err is None:
        err = ErrorState.between(state, ref)
    M = coupling_matrix(state.Vs, ref.eta_d, err.eta_e)
    eta_t = target.eta_t(state.q)
    G = np.array([target.Vt * np.cos(eta_t),
                  -target.Vt * np.sin(eta_t) - ref.Vd * np.sin(ref.eta_d) * err.Re / ref.Rd])
    scale = np.diag([1.0, 1.0 / state.R])
    _, qdot = relative_rhs(state, target)
    return CouplingMatrices(
        M=M,
        G=G,
        Mbar=scale @ M,
        Gbar=scale @ G,
        B=np.diag([1.0, -1.0 / state.Vs]),
        H=np.array([0.0, qdot]),
        F=np.array([disturbance[0], -disturbance[1]]),
    )
