"""Prescribed-time scaling functions and gain schedules.

The time base ``tau(t, tf)`` starts at 1 and diverges at ``tf``. Two forms are
available: ``"log"`` (``1 + ln(tf / (tf - t))``, the default) and
``"reciprocal"`` (``tf / (tf - t)``). The scaling ``mu = tau**h`` is frozen on
``[tf - eps_clamp, tf)`` and equal to 1 from ``tf`` on.
"""

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import _kernels as K
from .quadrature import composite_simpson

TAU_KINDS = {"log": K.TAU_LOG, "reciprocal": K.TAU_RECIPROCAL}


def _kind_code(kind):
    try:
        return TAU_KINDS[kind]
    except KeyError:
        raise ValueError(f"unknown tau kind {kind!r}; expected one of {sorted(TAU_KINDS)}")


@dataclass(frozen=True)
class GainSchedule:
    """Gains and scaling exponents of the two control layers."""

    tf: float
    h1: float = 1.0
    h2: float = 2.0
    k1: float = 1.0
    k2: float = 2.0
    lambda2: float = 1.0
    eps_clamp: float = 0.0
    mu_cap: Optional[float] = None
    tau_kind: str = "log"

    def __post_init__(self):
        if not self.tf > 0:
            raise ValueError(f"tf must be > 0, got {self.tf}")
        for name in ("h1", "h2", "k1", "k2", "lambda2"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be > 0, got {getattr(self, name)}")
        if not 0 <= self.eps_clamp < self.tf:
            raise ValueError(f"eps_clamp must lie in [0, tf), got {self.eps_clamp}")
        _kind_code(self.tau_kind)

    def as_array(self, v_min=1e-2, r_min=1e-3):
        arr = np.zeros(K.N_SCHED)
        arr[K.S_K1] = self.k1
        arr[K.S_K2] = self.k2
        arr[K.S_LAM2] = self.lambda2
        arr[K.S_H1] = self.h1
        arr[K.S_H2] = self.h2
        arr[K.S_TF] = self.tf
        arr[K.S_EPS] = self.eps_clamp
        arr[K.S_KIND] = _kind_code(self.tau_kind)
        arr[K.S_MUCAP] = self.mu_cap or 0.0
        arr[K.S_VMIN] = v_min
        arr[K.S_RMIN] = r_min
        return arr

    def mu1(self, t):
        return mu(t, self.h1, self.tf, self.eps_clamp, self.tau_kind, self.mu_cap)

    def mu2(self, t):
        return mu(t, self.h2, self.tf, self.eps_clamp, self.tau_kind, self.mu_cap)

    def rate_ratio(self, t):
        """tau_dot / tau, zero from tf on."""
        return tau_rate(t, self.tf, self.eps_clamp, self.tau_kind) / tau(
            t, self.tf, self.eps_clamp, self.tau_kind)

    def gains(self, t):
        """(K1, K2, mu1, mu2): the first- and second-layer decay rates at t."""
        return K.gains(float(t), self.as_array())

    def ordering_holds(self, times):
        """Check k2*mu2 > k1*mu1 on the given times (clamped region included)."""
        times = np.asarray(times, dtype=float)
        return bool(np.all(self.k2 * self.mu2(times) > self.k1 * self.mu1(times)))


def _scalar_or_array(fn, t, *args):
    if np.ndim(t) == 0:
        return fn(float(t), *args)
    t = np.asarray(t, dtype=float)
    return np.array([fn(float(x), *args) for x in t.ravel()]).reshape(t.shape)


def tau(t, tf, eps_clamp=0.0, kind="log"):
    code = _kind_code(kind)
    return _scalar_or_array(lambda x: K.tau_eval(x, tf, eps_clamp, code)[0], t)


def tau_rate(t, tf, eps_clamp=0.0, kind="log"):
    code = _kind_code(kind)
    return _scalar_or_array(lambda x: K.tau_eval(x, tf, eps_clamp, code)[1], t)


def mu(t, h, tf, eps_clamp=0.0, kind="log", cap=None):
    if not h > 0:
        raise ValueError(f"h must be > 0, got {h}")
    code = _kind_code(kind)
    cap = cap or 0.0
    return _scalar_or_array(lambda x: K.mu_eval(x, h, tf, eps_clamp, code, cap)[0], t)


def mu_rate(t, h, tf, eps_clamp=0.0, kind="log", cap=None):
    if not h > 0:
        raise ValueError(f"h must be > 0, got {h}")
    code = _kind_code(kind)
    cap = cap or 0.0
    return _scalar_or_array(lambda x: K.mu_eval(x, h, tf, eps_clamp, code, cap)[1], t)


def phi(t, h, tf, eps_clamp=0.0, kind="log", tol=1e-11):
    """phi(t) = -integral of mu over [0, t].

    The integral runs in v = -ln(1 - s/tf), where ds = tf exp(-v) dv and both
    time bases give a smooth integrand (composite Simpson). The clamp interval
    and the unit tail beyond tf are added exactly. Without a clamp the value at
    t >= tf is the improper integral (``-inf`` when it diverges).
    """
    if not h > 0:
        raise ValueError(f"h must be > 0, got {h}")
    code = _kind_code(kind)
    t = float(t)
    if t <= 0:
        return 0.0
    upper = min(t, tf)
    extra = max(t - tf, 0.0)
    if eps_clamp > 0 and upper > tf - eps_clamp:
        split = tf - eps_clamp
        extra += mu(split, h, tf, eps_clamp, kind) * (upper - split)
        upper = split
    if upper < tf:
        v_end = -math.log1p(-upper / tf)
    elif code == K.TAU_RECIPROCAL and h >= 1:
        return -math.inf
    else:
        v_end = _tail_cutoff(h, tf, code, tol)

    val, _ = composite_simpson(_mu_in_v(h, tf, code), 0.0, v_end, tol * max(1.0, tf))
    return -(val + extra)


def _tail_cutoff(h, tf, code, tol):
    # v beyond which the remaining integral is below tol
    v = 1.0
    while True:
        if code == K.TAU_LOG:
            tail = tf * (1.0 + v) ** h * math.exp(-v) * (1.0 + h)
        else:
            tail = tf * math.exp((h - 1.0) * v) / (1.0 - h)
        if tail < 1e-3 * tol:
            return v
        v += 1.0


def phi_closed_form(t, h, tf, kind="reciprocal"):
    """Closed form ``tf/(h-1) * (1 - mu**((h-1)/h))``.

    It is the exact integral only for the reciprocal time base; for the log
    base it is kept as a comparison value. Requires h != 1.
    """
    if h == 1:
        raise ValueError("closed-form phi needs h != 1; use phi() for h = 1")
    m = mu(t, h, tf, 0.0, kind)
    return tf / (h - 1.0) * (1.0 - np.power(m, (h - 1.0) / h))


def _mu_in_v(h, tf, code):
    if code == K.TAU_LOG:
        return lambda v: tf * (1.0 + v) ** h * np.exp(-v)
    return lambda v: tf * np.exp((h - 1.0) * v)


def phi_series(times, h, tf, eps_clamp=0.0, kind="log", panels=4):
    """phi on an increasing time grid, accumulated interval by interval.

    Each interval is split at tf - eps_clamp and tf: the smooth part is
    integrated in v = -ln(1 - s/tf) with ``panels`` Simpson panels (adaptive
    Simpson where the v-span is wide), the clamp part and the part beyond tf
    are exact.
    """
    code = _kind_code(kind)
    times = np.asarray(times, dtype=float)
    split = tf - eps_clamp
    f = _mu_in_v(h, tf, code)
    if eps_clamp > 0:
        v_split = -math.log1p(-split / tf)
    elif code == K.TAU_RECIPROCAL and h >= 1:
        v_split = math.inf
    else:
        v_split = _tail_cutoff(h, tf, code, 1e-14)

    def v_of(t):
        t = np.minimum(t, split)
        with np.errstate(divide="ignore"):
            return np.minimum(-np.log1p(-t / tf), v_split)

    a, b = times[:-1], times[1:]
    va, vb = v_of(a), v_of(b)
    n = panels + panels % 2
    w = np.ones(n + 1)
    w[1:-1:2], w[2:-1:2] = 4.0, 2.0
    span = np.where(vb > va, vb - va, 0.0)
    nodes = va[:, None] + span[:, None] * np.linspace(0.0, 1.0, n + 1)[None, :]
    with np.errstate(invalid="ignore", over="ignore"):
        smooth = np.where(span > 0, span / (3.0 * n) * (f(nodes) @ w), 0.0)
    # wide intervals (only next to tf) get the adaptive rule
    for k in np.nonzero((span > 0.05) & np.isfinite(span))[0]:
        smooth[k] = composite_simpson(f, va[k], vb[k], 1e-12 * max(1.0, tf))[0]
    smooth = np.where(np.isinf(vb) & (b >= tf), np.inf, smooth)
    frozen = mu(split, h, tf, eps_clamp, kind) if eps_clamp > 0 else 0.0
    clamp_len = np.clip(b, split, tf) - np.clip(a, split, tf)
    tail_len = np.maximum(b, tf) - np.maximum(a, tf)
    pieces = smooth + frozen * clamp_len + tail_len
    out = np.empty_like(times)
    out[0] = phi(times[0], h, tf, eps_clamp, kind)
    out[1:] = out[0] - np.cumsum(pieces)
    return out


def divergence_check(h1, h2, tf, kind="log", eps_seq=None, growth=1e3):
    """Probe whether (tf - t) * mu1 * mu2 diverges as t -> tf.

    Evaluates the product at t = tf - eps for a decreasing eps sequence and
    reports divergence when the values increase strictly and the last one
    exceeds ``growth`` times the first.

    Returns:
        (eps values, products, diverges)
    """
    if eps_seq is None:
        eps_seq = tf * 2.0 ** -np.arange(1, 41)
    eps_seq = np.asarray(eps_seq, dtype=float)
    t = tf - eps_seq
    prod = eps_seq * mu(t, h1, tf, 0.0, kind) * mu(t, h2, tf, 0.0, kind)
    diverges = bool(np.all(np.diff(prod) > 0) and prod[-1] > growth * prod[0])
    return eps_seq, prod, diverges
