"""Scalar numeric kernels shared by the public modules.

Everything here is restricted to the numba-compatible subset (floats, ints,
``math`` and plain numpy arrays) so it can be compiled by :func:`stsync._jit.njit`
or run as-is when numba is disabled. Parameter bundles are passed as flat
float arrays; the index constants below name their slots.
"""

import math

import numpy as np

from ._jit import njit

# reference parameter vector layout
P_R0 = 0
P_RF = 1
P_RF1 = 2
P_LNRF = 3  # r_f
P_Q0 = 4
P_QF = 5
P_C1 = 6
P_C2 = 7
P_N1 = 8
P_N2 = 9
P_KD1 = 10
P_KD2 = 11
N_REFP = 12

# schedule vector layout
S_K1 = 0
S_K2 = 1
S_LAM2 = 2
S_H1 = 3
S_H2 = 4
S_TF = 5
S_EPS = 6
S_KIND = 7
S_MUCAP = 8
S_VMIN = 9
S_RMIN = 10
N_SCHED = 11

TAU_LOG = 0
TAU_RECIPROCAL = 1

DIST_NONE = 0
DIST_CONSTANT = 1
DIST_SINUSOID = 2
DIST_NOISE = 3

STATUS_OK = 0
STATUS_R_FLOOR = 1
STATUS_V_FLOOR = 2
STATUS_COMMAND_FLOOR = 3
STATUS_NONFINITE = 4

# closed-loop trace columns; the first 20 form the CSV schema
C_T = 0
C_R = 1
C_Q = 2
C_ETA_S = 3
C_THETA_S = 4
C_V_S = 5
C_V_D = 6
C_R_D = 7
C_Q_D = 8
C_ETA_D = 9
C_R_E = 10
C_Q_E = 11
C_E_V = 12
C_E_ETA = 13
C_U_V = 14
C_U_THETA = 15
C_X = 16
C_Y = 17
C_X_T = 18
C_Y_T = 19
C_V_STAR = 20
C_ETA_STAR = 21
C_MU1 = 22
C_MU2 = 23
C_K1 = 24
C_K2 = 25
C_RD = 26
C_QDOT = 27
C_MODE = 28
C_D_V = 29
C_D_THETA = 30
C_ETA_E = 31
C_V_E = 32
N_COLS = 33

TWO_PI = 2.0 * math.pi


@njit
def wrap_angle(a):
    """Map an angle to (-pi, pi]."""
    w = math.atan2(math.sin(a), math.cos(a))
    if w == -math.pi:
        w = math.pi
    return w


@njit
def sinc_pair(e):
    """Return ((1 - cos e)/e, sin e / e) with the removable singularity at 0."""
    if abs(e) < 1e-6:
        e2 = e * e
        return e * (0.5 - e2 / 24.0), 1.0 - e2 / 6.0 + e2 * e2 / 120.0
    s = math.sin(0.5 * e)
    return 2.0 * s * s / e, math.sin(e) / e


@njit
def polyval(coef, t):
    acc = 0.0
    for c in coef:
        acc = acc * t + c
    return acc


# ---------------------------------------------------------------- scaling ---


@njit
def tau_eval(t, tf, eps, kind):
    """Return (tau, tau_dot); frozen on [tf - eps, tf), (1, 0) for t >= tf."""
    if t >= tf:
        return 1.0, 0.0
    tc = t
    if eps > 0.0 and t > tf - eps:
        tc = tf - eps
    rem = tf - tc
    if kind == TAU_LOG:
        return 1.0 + math.log(tf / rem), 1.0 / rem
    return tf / rem, tf / (rem * rem)


@njit
def mu_eval(t, h, tf, eps, kind, cap):
    """Return (mu, mu_dot) for mu = tau**h with the post-tf branch mu = 1."""
    if t >= tf:
        return 1.0, 0.0
    tau, tau_dot = tau_eval(t, tf, eps, kind)
    mu = tau ** h
    if cap > 0.0 and mu > cap:
        return cap, 0.0
    return mu, h * mu * tau_dot / tau


@njit
def gains(t, sched):
    """Return (K1, K2, mu1, mu2) of the two control layers at time t."""
    tf = sched[S_TF]
    if t >= tf:
        return sched[S_K1], sched[S_K2] + sched[S_LAM2], 1.0, 1.0
    eps = sched[S_EPS]
    kind = int(sched[S_KIND])
    cap = sched[S_MUCAP]
    tau, tau_dot = tau_eval(t, tf, eps, kind)
    ratio = tau_dot / tau
    mu1 = tau ** sched[S_H1]
    mu2 = tau ** sched[S_H2]
    if cap > 0.0:
        mu1 = min(mu1, cap)
        mu2 = min(mu2, cap)
    k1 = sched[S_K1] * mu1 + sched[S_H1] * ratio
    k2 = (sched[S_K2] + sched[S_LAM2]) * mu2 + sched[S_H2] * ratio
    return k1, k2, mu1, mu2


# -------------------------------------------------------------- reference ---


@njit
def ref_distance(rd, refp):
    """Distance R_d for a scaled distance r_d (exactly R_f at r_d >= r_f)."""
    if rd >= refp[P_LNRF]:
        return refp[P_RF]
    return refp[P_RF1] + (refp[P_R0] - refp[P_RF1]) * math.exp(-rd)


@njit
def ref_scaled(Rd, refp):
    return math.log(refp[P_R0] - refp[P_RF1]) - math.log(Rd - refp[P_RF1])


@njit
def ref_los(rd, refp):
    x = refp[P_LNRF] - rd
    if x <= 0.0:
        return refp[P_QF]
    n1 = int(refp[P_N1])
    n2 = int(refp[P_N2])
    return refp[P_C1] * x ** n1 + refp[P_C2] * x ** n2 + refp[P_QF]


@njit
def ref_slope(rd, refp):
    """dq_d/dr_d of the closed-form LOS profile."""
    x = refp[P_LNRF] - rd
    if x <= 0.0:
        x = 0.0
    n1 = int(refp[P_N1])
    n2 = int(refp[P_N2])
    return -(n1 * refp[P_C1] * x ** (n1 - 1) + n2 * refp[P_C2] * x ** (n2 - 1))


@njit
def ref_tan_heading(rd, Rd, refp):
    return Rd / (Rd - refp[P_RF1]) * ref_slope(rd, refp)


@njit
def ref_heading(rd, refp):
    Rd = ref_distance(rd, refp)
    return math.atan(ref_tan_heading(rd, Rd, refp))


@njit
def heading_rate(Rd, qd, eta, Vd, refp):
    """Feedback law for the reference heading rate evaluated on (R_d, q_d, eta_d)."""
    rf1 = refp[P_RF1]
    rd = ref_scaled(Rd, refp)
    x = refp[P_LNRF] - rd
    dq = (Rd - rf1) / Rd * math.tan(eta)
    c = math.cos(eta)
    shaping = refp[P_KD2] / x * dq + refp[P_KD1] * (qd - refp[P_QF]) / (x * x)
    return (-Rd * Vd * c * c * c / ((Rd - rf1) * (Rd - rf1)) * shaping
            + rf1 * Vd * c * c * math.sin(eta) / ((Rd - rf1) * Rd))


@njit
def rd_rate(t, rd, refp, vcoef):
    """d r_d / dt along the closed-form path for the planned speed V_d(t)."""
    if rd >= refp[P_LNRF]:
        return 0.0
    Rd = ref_distance(rd, refp)
    tan_eta = ref_tan_heading(rd, Rd, refp)
    return polyval(vcoef, t) / math.sqrt(1.0 + tan_eta * tan_eta) / (Rd - refp[P_RF1])


@njit
def rd_step(t, rd, h, refp, vcoef):
    k1 = rd_rate(t, rd, refp, vcoef)
    k2 = rd_rate(t + 0.5 * h, rd + 0.5 * h * k1, refp, vcoef)
    k3 = rd_rate(t + 0.5 * h, rd + 0.5 * h * k2, refp, vcoef)
    k4 = rd_rate(t + h, rd + h * k3, refp, vcoef)
    out = rd + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    if out > refp[P_LNRF]:
        out = refp[P_LNRF]
    return out


@njit
def _ref_time_rhs(Rd, qd, eta, Vd, refp):
    return (-Vd * math.cos(eta), Vd * math.sin(eta) / Rd,
            heading_rate(Rd, qd, eta, Vd, refp))


@njit
def reference_time_march(refp, eta0, Vd, dt, stiff_limit, max_steps, out):
    """Integrate R_d, q_d, eta_d in time at constant speed with the heading law.

    Classical RK4 with step ``dt`` is used while ``dt`` times the heading-law
    gain stays below ``stiff_limit``; the short remainder (the gain diverges at
    r_f) follows the closed-form manifold through r_d until R_d reaches R_f.
    Rows of ``out``: t, r_d, R_d, q_d, eta_d, phase (0 = heading law,
    1 = closed-form finish). Returns (rows written, arrival time).
    """
    rf = refp[P_LNRF]
    rf1 = refp[P_RF1]
    kd2 = refp[P_KD2]
    t = 0.0
    Rd = refp[P_R0]
    qd = refp[P_Q0]
    eta = eta0
    n = 0
    while n < max_steps:
        rd = ref_scaled(Rd, refp)
        out[n, 0] = t
        out[n, 1] = rd
        out[n, 2] = Rd
        out[n, 3] = qd
        out[n, 4] = eta
        out[n, 5] = 0.0
        n += 1
        x = rf - rd
        if x <= 1e-12 or Vd * kd2 / ((Rd - rf1) * x) * dt > stiff_limit:
            break
        a1, b1, c1 = _ref_time_rhs(Rd, qd, eta, Vd, refp)
        a2, b2, c2 = _ref_time_rhs(Rd + 0.5 * dt * a1, qd + 0.5 * dt * b1,
                                   eta + 0.5 * dt * c1, Vd, refp)
        a3, b3, c3 = _ref_time_rhs(Rd + 0.5 * dt * a2, qd + 0.5 * dt * b2,
                                   eta + 0.5 * dt * c2, Vd, refp)
        a4, b4, c4 = _ref_time_rhs(Rd + dt * a3, qd + dt * b3, eta + dt * c3, Vd, refp)
        Rd += dt / 6.0 * (a1 + 2.0 * a2 + 2.0 * a3 + a4)
        qd += dt / 6.0 * (b1 + 2.0 * b2 + 2.0 * b3 + b4)
        eta += dt / 6.0 * (c1 + 2.0 * c2 + 2.0 * c3 + c4)
        t += dt
    # closed-form finish at constant speed
    vcoef = np.array([Vd])
    rd = ref_scaled(Rd, refp)
    arrival = -1.0
    while n < max_steps:
        nxt = rd_step(t, rd, dt, refp, vcoef)
        if nxt >= rf:
            # linear interpolation of the crossing inside the last step
            slope = rd_rate(t, rd, refp, vcoef)
            frac = 1.0
            if slope > 0.0:
                frac = min(1.0, (rf - rd) / (slope * dt))
            arrival = t + frac * dt
            break
        rd = nxt
        t += dt
        out[n, 0] = t
        out[n, 1] = rd
        out[n, 2] = ref_distance(rd, refp)
        out[n, 3] = ref_los(rd, refp)
        out[n, 4] = ref_heading(rd, refp)
        out[n, 5] = 1.0
        n += 1
    return n, arrival


@njit
def _ref_scaled_rhs(rd, qd, eta, refp):
    # derivatives with respect to r_d; the speed cancels
    Rd = ref_distance(rd, refp)
    rf1 = refp[P_RF1]
    dq = (Rd - rf1) / Rd * math.tan(eta)
    deta = heading_rate(Rd, qd, eta, 1.0, refp) * (Rd - rf1) / math.cos(eta)
    return dq, deta


@njit
def reference_scaled_march(refp, eta0, x_end, dzeta, out):
    """RK4 of (q_d, eta_d) over r_d on a grid uniform in ln(r_f - r_d).

    Runs from r_d = 0 to r_d = r_f - x_end. Rows of ``out``: r_d, q_d, eta_d.
    Returns the number of rows written.
    """
    rf = refp[P_LNRF]
    z0 = math.log(rf)
    z1 = math.log(x_end)
    nsteps = int(math.ceil((z0 - z1) / dzeta))
    dz = (z0 - z1) / nsteps
    r = 0.0
    q = refp[P_Q0]
    eta = eta0
    out[0, 0] = r
    out[0, 1] = q
    out[0, 2] = eta
    for k in range(nsteps):
        r_next = rf - math.exp(z0 - (k + 1) * dz)
        if k == nsteps - 1:
            r_next = rf - x_end
        h = r_next - r
        a1, b1 = _ref_scaled_rhs(r, q, eta, refp)
        a2, b2 = _ref_scaled_rhs(r + 0.5 * h, q + 0.5 * h * a1, eta + 0.5 * h * b1, refp)
        a3, b3 = _ref_scaled_rhs(r + 0.5 * h, q + 0.5 * h * a2, eta + 0.5 * h * b2, refp)
        a4, b4 = _ref_scaled_rhs(r + h, q + h * a3, eta + h * b3, refp)
        q += h / 6.0 * (a1 + 2.0 * a2 + 2.0 * a3 + a4)
        eta += h / 6.0 * (b1 + 2.0 * b2 + 2.0 * b3 + b4)
        r = r_next
        out[k + 1, 0] = r
        out[k + 1, 1] = q
        out[k + 1, 2] = eta
    return nsteps + 1


# ------------------------------------------------------------------ plant ---


@njit
def relative_rates(R, q, Vs, theta_s, Vt, theta_t):
    """(R_dot, q_dot) of the planar polar pursuit kinematics."""
    eta_s = q - theta_s
    eta_t = q - theta_t
    Rdot = -Vs * math.cos(eta_s) + Vt * math.cos(eta_t)
    if R == 0.0:
        return Rdot, math.nan  # surfaces as a non-finite state, not an exception
    return Rdot, (Vs * math.sin(eta_s) - Vt * math.sin(eta_t)) / R


@njit
def disturbance(t, dist, held_v, held_theta):
    kind = int(dist[0])
    if kind == DIST_CONSTANT:
        return dist[1], dist[2]
    if kind == DIST_SINUSOID:
        s = math.sin(TWO_PI * dist[3] * t)
        return dist[1] * s, dist[2] * s
    if kind == DIST_NOISE:
        return held_v, held_theta
    return 0.0, 0.0


@njit
def _plant_rhs(t, R, q, Vs, th, uV, uth, Vt, tht, dist, nv, nth):
    Rdot, qdot = relative_rates(R, q, Vs, th, Vt, tht)
    dV, dth = disturbance(t, dist, nv, nth)
    return Rdot, qdot, uV + dV, uth / Vs + dth


@njit
def plant_step(t, h, R, q, Vs, th, uV, uth, Vt, tht, dist, nv, nth):
    """One RK4 step of (R, q, V_s, theta_s) with the control held constant."""
    a1, b1, c1, d1 = _plant_rhs(t, R, q, Vs, th, uV, uth, Vt, tht, dist, nv, nth)
    hh = 0.5 * h
    a2, b2, c2, d2 = _plant_rhs(t + hh, R + hh * a1, q + hh * b1, Vs + hh * c1,
                                th + hh * d1, uV, uth, Vt, tht, dist, nv, nth)
    a3, b3, c3, d3 = _plant_rhs(t + hh, R + hh * a2, q + hh * b2, Vs + hh * c2,
                                th + hh * d2, uV, uth, Vt, tht, dist, nv, nth)
    a4, b4, c4, d4 = _plant_rhs(t + h, R + h * a3, q + h * b3, Vs + h * c3,
                                th + h * d3, uV, uth, Vt, tht, dist, nv, nth)
    w = h / 6.0
    return (R + w * (a1 + 2.0 * a2 + 2.0 * a3 + a4),
            q + w * (b1 + 2.0 * b2 + 2.0 * b3 + b4),
            Vs + w * (c1 + 2.0 * c2 + 2.0 * c3 + c4),
            th + w * (d1 + 2.0 * d2 + 2.0 * d3 + d4))


# ------------------------------------------------------------- controller ---


@njit
def speed_heading_command(R, q, theta_s, Rd, qd, eta_d, Vd, Vt, theta_t, K1):
    """Speed and heading that make the distance/LOS errors decay at rate K1.

    Solves M(V*, eta* - eta_d) [V* - V_d; eta* - eta_d] + G = -K1 [R_e; R q_e]
    in closed form: the left side equals the exact rate difference, so the
    solution is the polar form of the required relative velocity. The heading
    is returned on the branch nearest the current eta_s = q - theta_s.
    """
    Re = R - Rd
    qe = q - qd
    eta_t = q - theta_t
    a = Vd * math.cos(eta_d) + Vt * math.cos(eta_t) + K1 * Re
    b = Vd * math.sin(eta_d) * R / Rd + Vt * math.sin(eta_t) - K1 * R * qe
    eta_s = q - theta_s
    principal = math.atan2(b, a)
    return math.hypot(a, b), eta_s - wrap_angle(eta_s - principal)


@njit
def run_closed_loop(plant0, target, refp, vcoef, Td, sched, dist, noise, times, out):
    """Propagate one vehicle under the two-layer prescribed-time controller.

    The reference advances along its closed-form path through r_d; after the
    terminal time (or once r_d reaches r_f) it is frozen at (R_f, q_f, 0) with
    zero speed. Returns (rows written, status code).
    """
    R = plant0[0]
    q = plant0[1]
    Vs = plant0[2]
    th = plant0[3]
    Vt = target[0]
    tht = target[1]
    xt0 = target[2]
    yt0 = target[3]
    vmin = sched[S_VMIN]
    rmin = sched[S_RMIN]
    rf = refp[P_LNRF]
    rd = 0.0
    prev_v = 0.0
    prev_eta = 0.0
    prev_t = 0.0
    n = times.shape[0]
    status = STATUS_OK
    rows = 0
    for i in range(n):
        t = times[i]
        if t < Td and rd < rf:
            Rd = ref_distance(rd, refp)
            qd = ref_los(rd, refp)
            eta_d = math.atan(ref_tan_heading(rd, Rd, refp))
            Vd = polyval(vcoef, t)
            mode = 0.0
        else:
            Rd = refp[P_RF]
            qd = refp[P_QF]
            eta_d = 0.0
            Vd = 0.0
            mode = 1.0 if t >= Td else 0.0
        K1, K2, mu1, mu2 = gains(t, sched)
        v_star, eta_star = speed_heading_command(R, q, th, Rd, qd, eta_d, Vd, Vt, tht, K1)
        if not (v_star > vmin):
            status = STATUS_COMMAND_FLOOR
            break
        if i == 0:
            v_star_dot = 0.0
            eta_star_dot = 0.0
        else:
            step = t - prev_t
            v_star_dot = (v_star - prev_v) / step
            eta_star_dot = wrap_angle(eta_star - prev_eta) / step
        prev_v = v_star
        prev_eta = eta_star
        prev_t = t
        Rdot, qdot = relative_rates(R, q, Vs, th, Vt, tht)
        eta_s = q - th
        e_v = Vs - v_star
        e_eta = wrap_angle(eta_s - eta_star)
        u_v = -K2 * e_v + v_star_dot
        u_th = Vs * (K2 * e_eta - eta_star_dot + qdot)
        nv = noise[i, 0]
        nth = noise[i, 1]
        d_v, d_th = disturbance(t, dist, nv, nth)
        xt = xt0 + Vt * math.cos(tht) * t
        yt = yt0 + Vt * math.sin(tht) * t
        row = out[i]
        row[C_T] = t
        row[C_R] = R
        row[C_Q] = q
        row[C_ETA_S] = eta_s
        row[C_THETA_S] = th
        row[C_V_S] = Vs
        row[C_V_D] = Vd
        row[C_R_D] = Rd
        row[C_Q_D] = qd
        row[C_ETA_D] = eta_d
        row[C_R_E] = R - Rd
        row[C_Q_E] = q - qd
        row[C_E_V] = e_v
        row[C_E_ETA] = e_eta
        row[C_U_V] = u_v
        row[C_U_THETA] = u_th
        row[C_X] = xt - R * math.cos(q)
        row[C_Y] = yt - R * math.sin(q)
        row[C_X_T] = xt
        row[C_Y_T] = yt
        row[C_V_STAR] = v_star
        row[C_ETA_STAR] = eta_star
        row[C_MU1] = mu1
        row[C_MU2] = mu2
        row[C_K1] = K1
        row[C_K2] = K2
        row[C_RD] = rd
        row[C_QDOT] = qdot
        row[C_MODE] = mode
        row[C_D_V] = d_v
        row[C_D_THETA] = d_th
        row[C_ETA_E] = wrap_angle(eta_s - eta_d)
        row[C_V_E] = Vs - Vd
        rows = i + 1
        if i == n - 1:
            break
        h = times[i + 1] - t
        R, q, Vs, th = plant_step(t, h, R, q, Vs, th, u_v, u_th, Vt, tht, dist, nv, nth)
        if mode == 0.0 and t < Td and rd < rf:
            rd = rd_step(t, rd, h, refp, vcoef)
        if not (math.isfinite(R) and math.isfinite(q) and math.isfinite(Vs)
                and math.isfinite(th)):
            status = STATUS_NONFINITE
            break
        if R <= rmin:
            status = STATUS_R_FLOOR
            break
        if Vs <= vmin:
            status = STATUS_V_FLOOR
            break
    return rows, status
