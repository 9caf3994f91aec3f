import io
import math

import numpy as np
import pytest

from kmiter import operators as ops
from kmiter.errors import ConfigurationError, ContractViolation
from kmiter.iteration import (IterationState, absorb_theta, fejer_excess, residual, run, step,
                              summability_diagnostics, verify_linear_rate)
from kmiter.schedules import ParameterSchedule, PerturbationSchedule, PowerStream


def naive(T, alpha, beta, lam, x0, n, eps=None, rho=None, theta=None):
    """Straight transcription of the update, used as an oracle."""
    xs = [np.array(x0, float), np.array(x0, float)]
    for k in range(1, n + 1):
        xk, xp = xs[-1], xs[-2]
        y = xk + alpha * (xk - xp) + (eps(k) if eps else 0)
        z = xk + beta * (xk - xp) + (rho(k) if rho else 0)
        xs.append((1 - lam) * y + lam * T(z) + (theta(k) if theta else 0))
    return xs[1:]


def test_step_identity_operator_keeps_point():
    fam = ops.OperatorFamily(lambda k, x: x)
    st = IterationState.initial([1.0, 2.0])
    for _ in range(5):
        st = step(st, fam, 0.3, 0.7, 0.5)
    np.testing.assert_array_equal(st.x_curr, [1.0, 2.0])


def test_step_first_iteration_plain_relaxation():
    fam = ops.affine_contraction(np.zeros(2), 0.5)
    st = step(IterationState.initial([1.0, 1.0]), fam, 0.9, 0.9, 0.4)
    np.testing.assert_allclose(st.x_curr, [0.8, 0.8])
    assert st.k == 2


def test_step_shape_mismatch():
    with pytest.raises(ConfigurationError):
        step(IterationState.initial([1.0, 2.0, 3.0]), ops.rotation2d(1.0), 0, 0, 0.5)


def test_run_matches_naive_oracle():
    fam = ops.rotation2d(1.0)
    s = ParameterSchedule.constant(0.2, 0.4, 0.3)
    rep = run(fam, s, None, [1.0, 0.5], 1e-300, 60, record_iterates=True)
    want = naive(lambda z: fam(1, z), 0.2, 0.4, 0.3, [1.0, 0.5], 59)
    for got, exp in zip(rep.iterates, want):
        np.testing.assert_allclose(got, exp, rtol=1e-13, atol=1e-15)


def test_run_contraction_geometric_distance():
    fam = ops.affine_contraction(np.zeros(3), 0.5)
    rep = run(fam, ParameterSchedule.constant(0, 0, 0.5), None, np.ones(3), 1e-300, 40)
    ratio = rep.dist[1:] / rep.dist[:-1]
    np.testing.assert_allclose(ratio, 0.75, rtol=1e-12)


def test_run_tolerance_stop_and_trace_shapes():
    fam = ops.affine_contraction(np.zeros(2), 0.5)
    rep = run(fam, ParameterSchedule.constant(0, 0, 0.5), None, np.ones(2), 1e-8, 1000)
    assert rep.converged and rep.iterations == len(rep.residual)
    assert rep.residual[-1] <= 1e-8 < rep.residual[-2]
    np.testing.assert_array_equal(rep.k_index, np.arange(1, rep.iterations + 1))
    assert rep.step_norm[0] == 0
    np.testing.assert_allclose(rep.step_sq_sum, np.cumsum(rep.step_norm ** 2))


def test_run_identity_operator_zero_residual():
    fam = ops.OperatorFamily(lambda k, x: x)
    rep = run(fam, ParameterSchedule.constant(0.5, 0.5, 0.5), None, [3.0], 1e-12, 10)
    assert rep.converged and rep.iterations == 1
    d = summability_diagnostics(rep)
    assert d.step_sq_total == 0 and np.all(d.km_min_scaled == 0)


def test_run_rejects_bad_arguments():
    fam = ops.affine_contraction(np.zeros(2), 0.5)
    s = ParameterSchedule.constant(0, 0, 0.5)
    with pytest.raises(ConfigurationError):
        run(fam, s, None, np.ones(2), 0.0, 10)
    with pytest.raises(ConfigurationError):
        run(fam, s, None, np.ones(2), 1e-3, 0)
    with pytest.raises(ConfigurationError):
        run(fam, s, None, np.ones(3), 1e-3, 10)


def test_run_divergence_detected():
    fam = ops.rotation2d(math.pi)
    rep = run(fam, ParameterSchedule.constant(0.9, 1.0, 0.99), None, [1.0, 0.0], 1e-8, 10 ** 5)
    assert rep.stop_reason == "diverged"
    assert rep.last_finite_k is not None and np.all(np.isfinite(rep.residual))


def test_rotation_above_threshold_does_not_converge():
    # beta = 1 has threshold 1/2 at phi = pi
    rep = run(ops.rotation2d(math.pi), ParameterSchedule.constant(0, 1, 0.6), None,
              [1.0, 0.0], 1e-8, 300)
    assert not rep.converged and rep.residual[-1] > rep.residual[0]
    rep = run(ops.rotation2d(math.pi), ParameterSchedule.constant(0, 1, 0.4), None,
              [1.0, 0.0], 1e-8, 300)
    assert rep.converged


def test_csv_format_and_determinism():
    fam = ops.affine_contraction(np.zeros(2), 0.5)
    s = ParameterSchedule.constant(0.1, 0.2, 0.5)
    outs = []
    for _ in range(2):
        buf = io.StringIO()
        run(fam, s, None, np.ones(2), 1e-6, 100).to_csv(buf)
        outs.append(buf.getvalue())
    assert outs[0] == outs[1]
    lines = outs[0].splitlines()
    assert lines[0] == "k,residual,km_residual,step_norm,step_sq_sum,dist"
    assert lines[1].startswith("1,")
    no_ref = run(ops.OperatorFamily(lambda k, x: 0.5 * x), s, None, np.ones(2), 1e-6, 5)
    assert no_ref.header() == ["k", "residual", "km_residual", "step_norm", "step_sq_sum"]


def test_theta_absorption_matches_shifted_iterates():
    rng = np.random.default_rng(7)
    thetas = rng.normal(size=(200, 2)) * 0.1
    eps_tab = rng.normal(size=(200, 2)) * 0.05
    theta = lambda k: thetas[k - 1]
    eps = lambda k: eps_tab[k - 1]
    fam = ops.rotation2d(0.8)
    s = ParameterSchedule.constant(0.2, 0.3, 0.4)
    orig = PerturbationSchedule(eps=eps, theta=theta)
    a = run(fam, s, orig, [1.0, -1.0], 1e-300, 100, record_iterates=True)
    b = run(fam, s, absorb_theta(s, orig), [1.0, -1.0], 1e-300, 100, record_iterates=True)
    for k in range(1, 101):
        shift = thetas[k - 2] if k >= 2 else 0.0
        np.testing.assert_allclose(b.iterates[k - 1], a.iterates[k - 1] - shift, atol=1e-9)


def test_absorb_without_theta_is_identity():
    p = PerturbationSchedule(eps=lambda k: np.ones(2))
    assert absorb_theta(ParameterSchedule.constant(0, 0, 0.5), p) is p


def test_linear_rate_example():
    fam = ops.affine_contraction(np.zeros(2), 0.5)
    s = ParameterSchedule.constant(0, 0, 0.5, q=0.5)
    rep = run(fam, s, None, np.ones(2), 1e-300, 200)
    chk = verify_linear_rate(rep, s)
    assert chk.passed and chk.Q == pytest.approx(0.625)


def test_linear_rate_contract():
    fam = ops.affine_contraction(np.zeros(2), 0.5)
    s = ParameterSchedule.constant(0, 0, 0.5, q=0.5)
    p = PerturbationSchedule(eps=PowerStream(np.ones(2), 1.0, 2.0))
    with pytest.raises(ContractViolation):
        verify_linear_rate(run(fam, s, p, np.ones(2), 1e-6, 10), s)
    with pytest.raises(ConfigurationError):
        verify_linear_rate(run(fam, s, None, np.ones(2), 1e-6, 10),
                           ParameterSchedule.constant(0, 0, 0.5))


def test_summability_contraction_tail_vanishes():
    fam = ops.affine_contraction(np.zeros(2), 0.5)
    rep = run(fam, ParameterSchedule.constant(0.2, 0.1, 0.6), None, np.ones(2), 1e-300, 400)
    d = summability_diagnostics(rep)
    assert d.last_quarter_share < 1e-6


def test_summability_km_scaled_decreases_on_rotation():
    rep = run(ops.rotation2d(1.0), ParameterSchedule.constant(0.2, 0.1, 0.3), None,
              [1.0, 0.0], 1e-300, 2000)
    m = summability_diagnostics(rep).km_min_scaled
    quarters = m[[499, 999, 1499, 1999]]
    assert np.all(np.diff(quarters) < 0) and quarters[-1] < 1e-6 * m[0]


def test_fejer_excess_small_for_feasible_run():
    rep = run(ops.rotation2d(math.pi / 3), ParameterSchedule.constant(0.2, 0.1, 0.3), None,
              [1.0, 0.0], 1e-300, 10 ** 4)
    assert fejer_excess(rep) < 1e-6


def test_residual_helper():
    fam = ops.affine_contraction(np.zeros(1), 0.5)
    assert residual(fam, 1, np.array([2.0])) == 1.0


def test_linear_rate_unit_modulus_passes():
    rot = ops.rotation2d(1.0)
    s = ParameterSchedule.constant(0.1, 0.1, 0.3, q=1.0)
    chk = verify_linear_rate(run(rot, s, None, [1.0, 0.0], 1e-300, 300), s)
    assert chk.Q == 1.0 and chk.passed


def test_linear_rate_fails_on_diverging_run():
    rot = ops.rotation2d(math.pi)
    s = ParameterSchedule.constant(0, 1, 0.6, q=0.5)
    chk = verify_linear_rate(run(rot, s, None, [1.0, 0.0], 1e-300, 100), s)
    assert not chk.passed and chk.worst_slack < 0
