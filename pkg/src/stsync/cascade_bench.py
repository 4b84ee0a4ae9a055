"""Numerical bench for cascades of prescribed-time subsystems.

A cascade is a chain x_1 <- x_2 <- ... <- x_n where subsystem i is driven by
its own drift, a bounded disturbance and the next state through an
interconnection matrix g_i. Each subsystem carries a Lyapunov function and
comparison functions alpha_i1..alpha_i6 of the time base tau. The bench
checks the assumptions on sampled grids and simulates the cascade up to
tf - eps with a stiff implicit integrator.
"""

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy.integrate import solve_ivp

from . import _kernels as K
from .ptime import _kind_code


class CascadeError(RuntimeError):
    """Integration failed or the state blew up; ``t_last`` is the last good time."""

    def __init__(self, msg, t_last):
        super().__init__(msg)
        self.t_last = t_last


@dataclass
class Subsystem:
    """One link of the cascade.

    ``drift(t, x, delta)`` is the isolated dynamics; ``coupling(t, x, x_next)``
    returns the interconnection matrix multiplying ``x_next`` (None for the
    last link). ``lyapunov(t, x)`` returns V and ``lyapunov_partials(t, x)``
    returns (dV/dt, dV/dx). ``alphas`` maps 1..6 to callables of tau.
    """

    dim: int
    drift: Callable
    disturbance: Optional[Callable] = None
    delta_bound: float = 0.0
    coupling: Optional[Callable] = None
    c_g: float = 0.0
    lyapunov: Optional[Callable] = None
    lyapunov_partials: Optional[Callable] = None
    alphas: dict = field(default_factory=dict)
    b: float = 0.0

    def delta(self, t):
        if self.disturbance is None:
            return np.zeros(self.dim)
        return np.atleast_1d(np.asarray(self.disturbance(t), dtype=float))


@dataclass
class CascadeSpec:
    subsystems: list
    tf: float
    tau: Callable  # t -> tau(t, tf)
    delta: float = 0.5  # the free constant delta_i in (0, 1)

    @property
    def n(self):
        return len(self.subsystems)

    @property
    def gamma(self):
        """0.5 c_g1**2 / delta_1, the weight of the interconnection term."""
        return 0.5 * self.subsystems[0].c_g ** 2 / self.delta

    def check_identity(self, tau_grid, rtol=1e-12):
        """alpha_i3 = alpha_i4 * alpha_i5 on the grid, for every subsystem."""
        ok = []
        for s in self.subsystems:
            a3 = np.array([s.alphas[3](x) for x in tau_grid])
            a45 = np.array([s.alphas[4](x) * s.alphas[5](x) for x in tau_grid])
            ok.append(bool(np.allclose(a3, a45, rtol=rtol, atol=0.0)))
        return all(ok)


@dataclass
class LyapunovTrace:
    t: np.ndarray
    x: list  # per subsystem, shape (len(t), dim)
    V: list
    W: list  # mu_i**2 |x_i|**2
    inside: list  # per subsystem, bool array: inside the absorbing region
    residual: list  # per subsystem, relative dissipation-inequality excess (<= 0 is fine)


@dataclass
class InterconnectionReport:
    t: np.ndarray
    ratios: list  # per link i < n: alpha_i6 / (alpha_i3 * alpha_{i+1,5})
    decays: list
    bound_ok: list  # sampled |dV_i/dx_i g_i| <= alpha_i6 c_g |x_i|

    @property
    def passed(self):
        return all(self.decays) and all(self.bound_ok)


@dataclass
class CascadeVerdict:
    passed: bool
    final_norms: list
    converged: list
    absorbed: list
    max_residual: list


# ------------------------------------------------------------- assumptions ---


def geometric_grid(tf, kmax=40):
    """t_k = tf (1 - 2**-k), k = 1..kmax."""
    k = np.arange(1, kmax + 1)
    return tf * (1.0 - 2.0 ** -k)


def is_increasing(fn, grid):
    """Sampled check that ``fn`` is strictly increasing on an increasing grid."""
    vals = np.array([fn(x) for x in grid])
    return bool(np.all(np.diff(vals) > 0))


def check_interconnection(spec, t_grid=None, samples=16, seed=0):
    """Evaluate the interconnection assumptions on a grid approaching tf.

    For each link the ratio alpha_i6 / (alpha_i3 alpha_{i+1,5}) must decrease
    strictly along the grid; the gradient bound on g_i is checked on random
    states (when the link has a coupling and a Lyapunov gradient).
    """
    t_grid = geometric_grid(spec.tf) if t_grid is None else np.asarray(t_grid, float)
    tau = np.array([spec.tau(t) for t in t_grid])
    rng = np.random.default_rng(seed)
    ratios, decays, bound_ok = [], [], []
    for i in range(spec.n - 1):
        s, nxt = spec.subsystems[i], spec.subsystems[i + 1]
        if s.coupling is None:
            ratios.append(np.zeros_like(t_grid))
            decays.append(True)
            bound_ok.append(True)
            continue
        r = np.array([s.alphas[6](x) / (s.alphas[3](x) * nxt.alphas[5](x)) for x in tau])
        ratios.append(r)
        decays.append(bool(np.all(np.diff(r) < 0)))
        ok = True
        if s.lyapunov_partials is not None:
            for t, tv in zip(t_grid, tau):
                for _ in range(samples):
                    xi = rng.normal(size=s.dim)
                    xn = rng.normal(size=nxt.dim)
                    _, grad = s.lyapunov_partials(t, xi)
                    g = np.atleast_2d(s.coupling(t, xi, xn))
                    lhs = np.linalg.norm(grad @ g)
                    rhs = s.alphas[6](tv) * s.c_g * np.linalg.norm(xi)
                    if lhs > rhs * (1 + 1e-12):
                        ok = False
        bound_ok.append(ok)
    return InterconnectionReport(t_grid, ratios, decays, bound_ok)


# -------------------------------------------------------------- simulation ---


def _split(spec, y):
    out, k = [], 0
    for s in spec.subsystems:
        out.append(y[k:k + s.dim])
        k += s.dim
    return out


def _rhs(spec):
    def f(t, y):
        xs = _split(spec, y)
        parts = []
        for i, s in enumerate(spec.subsystems):
            dx = np.asarray(s.drift(t, xs[i], s.delta(t)), dtype=float)
            if s.coupling is not None and i + 1 < spec.n:
                dx = dx + np.atleast_2d(s.coupling(t, xs[i], xs[i + 1])) @ xs[i + 1]
            parts.append(np.atleast_1d(dx))
        return np.concatenate(parts)

    return f


def _integrate(f, t_eval, y0, cap, rtol, atol):
    def blowup(t, y):
        return cap - np.max(np.abs(y))

    blowup.terminal = True
    sol = solve_ivp(f, (t_eval[0], t_eval[-1]), y0, method="Radau", t_eval=t_eval,
                    rtol=rtol, atol=atol, events=blowup)
    t_last = sol.t[-1] if sol.t.size else t_eval[0]
    if sol.status == 1:
        raise CascadeError(f"state exceeded {cap:g} near t = {t_last:.6g}", t_last)
    if not sol.success:
        raise CascadeError(f"integration failed: {sol.message}", t_last)
    return sol


def approach_grid(t0, tf, eps, n=400):
    """Output times on [t0, tf - eps], clustered geometrically towards tf."""
    u = np.geomspace(tf - t0, eps, n)
    t = tf - u
    t[0] = t0
    return t


def _relative_excess(lhs, rhs):
    scale = np.maximum(np.maximum(np.abs(lhs), np.abs(rhs)), 1e-300)
    return (lhs - rhs) / scale


def simulate_cascade(spec, x0, eps=1e-4, tol=1e-4, cap=1e12, n_out=400, rtol=1e-10, atol=1e-14):
    """Integrate the cascade on [0, tf - eps] and judge convergence.

    The verdict passes when every final |x_i| < tol, every subsystem's
    dissipation inequality holds along the run (relative excess <= 1e-6) and
    the last subsystem never leaves its absorbing region once inside.
    Returns (LyapunovTrace, CascadeVerdict).
    """
    if spec.n < 2:
        raise ValueError("a cascade needs at least two subsystems")
    y0 = np.concatenate([np.atleast_1d(np.asarray(x, dtype=float)) for x in x0])
    t_eval = approach_grid(0.0, spec.tf, eps, n_out)
    sol = _integrate(_rhs(spec), t_eval, y0, cap, rtol, atol)
    t = sol.t
    xs_t = [_split(spec, sol.y[:, j]) for j in range(t.size)]
    xs, Vs, Ws, inside, residual = [], [], [], [], []
    for i, s in enumerate(spec.subsystems):
        xi = np.array([xx[i] for xx in xs_t])
        xs.append(xi)
        tau = np.array([spec.tau(tt) for tt in t])
        a3 = np.array([s.alphas[3](x) for x in tau])
        a4 = np.array([s.alphas[4](x) for x in tau])
        a5 = np.array([s.alphas[5](x) for x in tau])
        nrm2 = np.sum(xi * xi, axis=1)
        V = np.array([s.lyapunov(tt, x) for tt, x in zip(t, xi)]) if s.lyapunov else nrm2
        Vs.append(V)
        Ws.append(a4 ** 2 / 4.0 * nrm2 if s.lyapunov is None else V)
        # Lyapunov rate of the isolated subsystem along the trajectory
        if s.lyapunov_partials is not None:
            vdot = np.empty(t.size)
            for j, (tt, x) in enumerate(zip(t, xi)):
                dt_part, grad = s.lyapunov_partials(tt, x)
                vdot[j] = dt_part + grad @ np.atleast_1d(s.drift(tt, x, s.delta(tt)))
            dd = np.array([np.sum(s.delta(tt) ** 2) for tt in t])
            bound = -a3 * nrm2 + s.b * a4 ** 2 / a3 * dd
            residual.append(_relative_excess(vdot, bound))
        else:
            residual.append(np.full(t.size, -np.inf))
        region = s.b * s.delta_bound ** 2 / (1.0 - spec.delta)
        inside.append(a5 ** 2 * nrm2 <= region * (1 + 1e-9))
    final = [float(np.linalg.norm(x[-1])) for x in xs]
    converged = [f < tol for f in final]
    absorbed = [_never_exits(ins) for ins in inside]
    max_res = [float(np.max(r)) for r in residual]
    passed = all(converged) and absorbed[-1] and all(r <= 1e-6 for r in max_res)
    trace = LyapunovTrace(t, xs, Vs, Ws, inside, residual)
    return trace, CascadeVerdict(passed, final, converged, absorbed, max_res)


def _never_exits(inside):
    idx = np.nonzero(inside)[0]
    return True if idx.size == 0 else bool(np.all(inside[idx[0]:]))


# ----------------------------------------------------------- constructions ---


def _tau_fn(tf, kind, eps_clamp=0.0):
    code = _kind_code(kind)
    return lambda t: K.tau_eval(float(t), tf, eps_clamp, code)[0]


def strict_feedback_cascade(gains=(1.0, 2.0), exps=(1.0, 2.0), g=1.0, tf=1.0, kind="log",
                    disturbance_amp=0.0, freq=1.0, eps_clamp=0.0, rf_zero=False):
    """Strict-feedback cascade x_i' = -k_i(tau) x_i + g_i x_{i+1} + Delta_i (scalars).

    k_i(tau) = k_i mu_i + h_i tau_dot/tau with mu_i = tau**h_i, the same
    structure as the controller gains. With ``rf_zero`` the interconnection
    grows like 1/(tf - t), as for a zero terminal distance.

    Lyapunov functions V_i = mu_i**2 x_i**2 give alpha_i3 = k_i mu_i**3,
    alpha_i4 = 2 mu_i**2, alpha_i5 = k_i mu_i / 2, b_i = 1/4 and
    alpha_i6 = 2 mu_i**2 (times 1/(tf - t) when ``rf_zero``).
    """
    if len(gains) != len(exps) or len(gains) < 2:
        raise ValueError("gains and exps need the same length >= 2")
    code = _kind_code(kind)
    tau = _tau_fn(tf, kind, eps_clamp)

    def ratio(t):
        tv, td = K.tau_eval(float(t), tf, eps_clamp, code)
        return td / tv

    def t_of_tau(tv):
        # invert the time base (used only by alpha_6 in the rf_zero case)
        if kind == "log":
            return tf * (1.0 - math.exp(1.0 - tv))
        return tf * (1.0 - 1.0 / tv)

    subs = []
    n = len(gains)
    for i, (k, h) in enumerate(zip(gains, exps)):
        last = i == n - 1

        def mu(t, h=h):
            return tau(t) ** h

        def drift(t, x, d, k=k, h=h, mu=mu):
            return -(k * mu(t) + h * ratio(t)) * x + d

        def V(t, x, mu=mu):
            return mu(t) ** 2 * float(np.dot(x, x))

        def partials(t, x, h=h, mu=mu):
            m = mu(t)
            return 2.0 * h * ratio(t) * m * m * float(np.dot(x, x)), 2.0 * m * m * np.asarray(x)

        if last:
            coupling = None
            a6 = None
        elif rf_zero:
            def coupling(t, x, xn):
                return np.array([[g / (tf - t)]])

            def a6(tv, h=h):
                return 2.0 * tv ** (2 * h) / (tf - t_of_tau(tv))
        else:
            def coupling(t, x, xn):
                return np.array([[g]])

            def a6(tv, h=h):
                return 2.0 * tv ** (2 * h)

        alphas = {
            1: lambda tv, h=h: tv ** (2 * h),
            2: lambda tv, h=h: tv ** (2 * h),
            3: lambda tv, h=h, k=k: k * tv ** (3 * h),
            4: lambda tv, h=h: 2.0 * tv ** (2 * h),
            5: lambda tv, h=h, k=k: 0.5 * k * tv ** h,
        }
        if a6 is not None:
            alphas[6] = a6
        amp = disturbance_amp
        dist = (lambda t, amp=amp, i=i: np.array([amp * math.sin(2 * math.pi * freq * t + i)]))
        subs.append(Subsystem(1, drift, dist, abs(amp), coupling, abs(g), V, partials, alphas, 0.25))
    return CascadeSpec(subs, tf, tau)


def controller_instantiation_ratio(k1, k2, h1, h2, tf, kind="log", t_grid=None):
    """Interconnection ratio of the tracking controller's two layers.

    With alpha_13 = 2 k1 mu1**3, alpha_25 = k2 mu2 and alpha_16 = mu1**2 the
    ratio is mu1**2 / (2 k1 mu1**3 k2 mu2). Returns (grid, ratio, decays).
    """
    t_grid = geometric_grid(tf) if t_grid is None else np.asarray(t_grid, float)
    tau = _tau_fn(tf, kind)
    tv = np.array([tau(t) for t in t_grid])
    mu1, mu2 = tv ** h1, tv ** h2
    r = mu1 ** 2 / (2.0 * k1 * mu1 ** 3 * k2 * mu2)
    return t_grid, r, bool(np.all(np.diff(r) < 0))


# ---------------------------------------------------------- scalar example ---


def scalar_alphas(k, lam, m):
    """Comparison functions of the scalar example in terms of tau = T/(T + t0 - t).

    With mu = tau**(1 + m): alpha_3 = k mu**3, alpha_4 = mu**2,
    alpha_5 = k mu, alpha_6 = mu and b = 1/(4 lam).
    """
    p = 1 + m
    return ({1: lambda tv: 0.25 * tv ** (2 * p), 2: lambda tv: tv ** (2 * p),
             3: lambda tv: k * tv ** (3 * p), 4: lambda tv: tv ** (2 * p),
             5: lambda tv: k * tv ** p, 6: lambda tv: tv ** p},
            1.0 / (4.0 * lam))


def scalar_example(k, lam, m, T, psi, d, x0, t0=0.0, eps=1e-4, b=1.0, b_low=None, f=None,
                   n_out=400, rtol=1e-10, atol=1e-300):
    """Simulate x' = b u + f with u = -(k + lam psi(x)**2 + (1+m)/T) mu x / b_low.

    mu(t - t0) = T**(1+m) / (T + t0 - t)**(1+m). ``f`` defaults to
    d(t) psi(x), which meets |f| <= d psi. Along the run the Lyapunov
    function V = (mu x)**2 / 2 must satisfy V' <= -2 k mu V + mu d**2 / (4 lam);
    ``residual`` holds the relative excess of V' over that bound.
    Returns a single-subsystem LyapunovTrace.
    """
    if not (k > 0 and lam > 0 and T > 0):
        raise ValueError("k, lam and T must be > 0")
    if not (float(m).is_integer() and m >= 1):
        raise ValueError(f"m must be a positive integer (got {m})")
    b_low = b if b_low is None else b_low
    f = f or (lambda x, t: d(t) * psi(x))
    p = 1 + m

    def mu(t):
        return (T / (T + t0 - t)) ** p

    def u(t, x):
        return -(k + lam * psi(x) ** 2 + p / T) * mu(t) * x / b_low

    def rhs(t, y):
        x = y[0]
        return [b * u(t, x) + f(x, t)]

    t_eval = approach_grid(t0, t0 + T, eps, n_out)
    sol = _integrate(rhs, t_eval, [float(x0)], 1e12, rtol, atol)
    t, x = sol.t, sol.y[0]
    mus = np.array([mu(tt) for tt in t])
    mudot = mus * p / (T + t0 - t)
    xdot = np.array([rhs(tt, [xx])[0] for tt, xx in zip(t, x)])
    omega = mus * x
    V = 0.5 * omega ** 2
    vdot = omega * (mudot * x + mus * xdot)
    dd = np.array([d(tt) for tt in t])
    bound = -2.0 * k * mus * V + mus * dd ** 2 / (4.0 * lam)
    residual = _relative_excess(vdot, bound)
    region = dd ** 2 / (4.0 * lam) / (1.0 - 0.5)
    inside = (k * mus) ** 2 * x ** 2 <= region * (1 + 1e-9)
    return LyapunovTrace(t, [x[:, None]], [V], [mus ** 2 * x ** 2], [inside], [residual])
