import math

import numpy as np
import pytest

from stsync.cascade_bench import (CascadeError, CascadeSpec, Subsystem, check_interconnection,
                                  controller_instantiation_ratio, geometric_grid, is_increasing,
                                  strict_feedback_cascade, scalar_alphas, scalar_example, simulate_cascade)

TAU_GRID = np.geomspace(1.0, 1e6, 200)


def test_geometric_grid():
    g = geometric_grid(20.0)
    assert g.size == 40 and g[0] == 10.0 and np.all(np.diff(g) > 0) and g[-1] < 20.0


def test_strict_feedback_alpha_structure():
    spec = strict_feedback_cascade(tf=20.0)
    assert spec.check_identity(TAU_GRID)
    for s in spec.subsystems:
        for j, a in s.alphas.items():
            assert is_increasing(a, TAU_GRID), j
    assert spec.gamma == pytest.approx(0.5 * 1.0 / 0.5)


def test_scalar_alphas_match_listed_functions():
    alphas, b = scalar_alphas(k=1.5, lam=2.0, m=2)
    assert b == 1 / 8
    for tv in (1.0, 3.0, 40.0):
        mu = tv ** 3
        assert alphas[3](tv) == pytest.approx(1.5 * mu ** 3)
        assert alphas[4](tv) == pytest.approx(mu ** 2)
        assert alphas[5](tv) == pytest.approx(1.5 * mu)
        assert alphas[6](tv) == pytest.approx(mu)
        assert alphas[3](tv) == pytest.approx(alphas[4](tv) * alphas[5](tv), rel=1e-14)


def test_interconnection_design_instantiation():
    grid, r, decays = controller_instantiation_ratio(1, 2, 1, 2, 20.0)
    assert decays and r[-1] < r[0] / 10
    tau = 1 + np.log(20.0 / (20.0 - grid))
    np.testing.assert_allclose(r, 1 / (2 * 1 * tau * 2 * tau ** 2), rtol=1e-12)


def test_interconnection_refinement_keeps_pass():
    spec = strict_feedback_cascade(tf=20.0)
    assert check_interconnection(spec, geometric_grid(20.0, 10)).passed
    assert check_interconnection(spec, geometric_grid(20.0, 40)).passed


def test_interconnection_zero_terminal_distance():
    # 1/(tf - t) outgrows mu1 mu2 for the logarithmic time base, not for the reciprocal one
    assert not check_interconnection(strict_feedback_cascade(tf=20.0, rf_zero=True)).passed
    assert check_interconnection(strict_feedback_cascade(tf=20.0, kind="reciprocal", rf_zero=True)).passed


def test_interconnection_absent_link_passes():
    spec = strict_feedback_cascade(tf=20.0)
    spec.subsystems[0].coupling = None
    rep = check_interconnection(spec)
    assert rep.passed and np.all(rep.ratios[0] == 0)


def test_strict_feedback_cascade_converges():
    _, verdict = simulate_cascade(strict_feedback_cascade(tf=20.0), [1.0, 1.0], eps=1e-3)
    assert verdict.passed
    assert max(verdict.final_norms) < 1e-4
    assert max(verdict.max_residual) <= 1e-6


def test_decoupled_pair_converges():
    _, verdict = simulate_cascade(strict_feedback_cascade(g=0.0, tf=20.0), [1.0, -2.0], eps=1e-3)
    assert verdict.passed


def test_three_link_chain_converges():
    spec = strict_feedback_cascade(gains=(1, 2, 3), exps=(1, 2, 3), tf=20.0)
    _, verdict = simulate_cascade(spec, [1.0, 1.0, 1.0], eps=1e-3)
    assert verdict.passed and len(verdict.final_norms) == 3


def test_disturbed_cascade_dissipation_and_absorption():
    spec = strict_feedback_cascade(tf=20.0, disturbance_amp=0.01)
    trace, verdict = simulate_cascade(spec, [1.0, 1.0], eps=1e-3)
    assert max(verdict.max_residual) <= 1e-6
    assert all(verdict.absorbed)
    assert trace.inside[1].any()
    assert all(np.all(w >= 0) for w in trace.W)


def test_blowup_detection():
    def drift(t, x, d):
        return 50.0 * x

    subs = [Subsystem(1, drift), Subsystem(1, drift)]
    spec = CascadeSpec(subs, 1.0, lambda t: 1.0)
    with pytest.raises(CascadeError) as info:
        simulate_cascade(spec, [1.0, 1.0], cap=1e6)
    assert 0 < info.value.t_last < 1.0
    with pytest.raises(ValueError):
        simulate_cascade(CascadeSpec(subs[:1], 1.0, lambda t: 1.0), [1.0])


def _int_mu(t, T, p):
    return T / (p - 1) * ((T / (T - t)) ** (p - 1) - 1.0)


def test_scalar_example_closed_form():
    k, m, T = 1.0, 2, 1.0
    zero = lambda *_: 0.0  # noqa: E731
    tr = scalar_example(k, 1.0, m, T, zero, zero, 1.0, eps=1e-4)
    x = tr.x[0][:, 0]
    expect = np.exp(-(k + (1 + m) / T) * _int_mu(tr.t, T, 1 + m))
    sel = expect > 1e-250
    np.testing.assert_allclose(x[sel], expect[sel], rtol=1e-6)
    assert np.all(np.diff(x[x > 1e-300]) < 0)
    assert abs(x[-1]) < 1e-6


def test_scalar_example_zero_start():
    zero = lambda *_: 0.0  # noqa: E731
    tr = scalar_example(1.0, 1.0, 2, 1.0, zero, zero, 0.0)
    assert np.all(tr.x[0] == 0.0)


def test_scalar_example_disturbed_dissipation():
    d = lambda t: 0.5 * math.cos(3 * t)  # noqa: E731
    psi = lambda x: 1.0 + 0.1 * math.sin(x)  # noqa: E731
    tr = scalar_example(1.0, 1.0, 2, 1.0, psi, d, 2.0, eps=1e-4)
    assert np.max(tr.residual[0]) <= 1e-6
    inside = tr.inside[0]
    first = np.argmax(inside)
    assert inside.any() and np.all(inside[first:])
    assert abs(tr.x[0][-1, 0]) < 1e-6


def test_scalar_example_validation():
    zero = lambda *_: 0.0  # noqa: E731
    with pytest.raises(ValueError):
        scalar_example(0.0, 1.0, 2, 1.0, zero, zero, 1.0)
    with pytest.raises(ValueError):
        scalar_example(1.0, 1.0, 1.5, 1.0, zero, zero, 1.0)
