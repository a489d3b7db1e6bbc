import math

import numpy as np
import pytest

from memlaw.diagnostics import (
    ConvBoundMonitor,
    EntropyMonitor,
    StepL1Monitor,
    bv_constants,
    check_bv,
    check_conservation,
    check_entropy,
    check_invariant_region,
    continuous_dependence_probe,
    entropy_residuals,
    l1_time_modulus,
    verify,
)
from memlaw.grid import GridSpec, PiecewiseConstant, TimeGrid, cfl_time_grid
from memlaw.kernels import KernelMatrix, ScaledTemporalKernel, poly_bump, poly_decay
from memlaw.models import FLUXES, VELOCITIES, ModelSpec
from memlaw.scheme import SchemeParams, StateField, Trajectory, run

from factories import kk_setup, random_model
from oracles import entropy_residual_scalar


def _const_traj(value, steps=3, n=1):
    arr = np.full((steps + 1, n), value)
    return Trajectory(0.1, 0.01, steps, None, None, [], arr * 4, arr, arr, np.zeros_like(arr), np.zeros_like(arr))


def _advection(initial, velocity="constant"):
    return ModelSpec(
        1, (FLUXES["identity"],), (VELOCITIES[velocity],),
        KernelMatrix.shared(1, poly_bump(0.2), ScaledTemporalKernel(poly_decay(), 0.05)),
        (initial,), h1_waived=True,
    )


def test_constant_state_invariant_region():
    (row,) = check_invariant_region(_const_traj(0.5))
    assert row.passed and row.worst == 0.0
    assert row.detail == "min=0.5 max=0.5"


def test_zero_state_conservation():
    (row,) = check_conservation(_const_traj(0.0))
    assert row.passed and row.worst == 0.0


def test_kk_run_passes_every_check():
    report, traj = verify(*kk_setup())
    assert report.passed, report.table()
    assert {r.check for r in report.rows} >= {"invariant_region", "conservation", "bv_envelope", "entropy",
                                              "conv_range", "conv_first_diff", "conv_second_diff", "time_modulus"}
    assert traj.tv[0].tolist() == [0.5, 2.0]


def test_over_cfl_run_is_flagged():
    model, grid, _, _ = kk_setup(dx=0.05)
    tg = TimeGrid(0.05 * 0.5, 20, 0.05)
    traj = run(model, grid, tg, SchemeParams(0.3333, 0.5), strict=False)
    assert not all(r.passed for r in check_invariant_region(traj))


def test_outflow_accounts_for_boundary_loss():
    model = _advection(PiecewiseConstant.indicator(1.6, 1.9, 1.0))
    grid = GridSpec(0.0, 2.0, 0.05)
    tg = cfl_time_grid(0.05, 0.6, 1 / 3, 1.0, 1.0)
    traj = run(model, grid, tg, SchemeParams(1 / 3, tg.lam), memoryless=True)
    lost = traj.mass[0, 0] - traj.mass[-1, 0]
    assert lost > 0.1
    assert traj.outflow[-1, 0] == pytest.approx(lost, abs=1e-12)
    assert check_conservation(traj)[0].passed


def test_constant_velocity_is_tvd():
    model = _advection(PiecewiseConstant((0.2, 0.5, 0.7, 1.2), (0.3, 0.9, 0.1)))
    c7, c8 = bv_constants(model)
    assert c7[0] == 0.0 and c8[0] == 0.0
    grid = GridSpec(0.0, 2.0, 0.02)
    tg = cfl_time_grid(0.02, 0.4, 1 / 3, 1.0, 1.0)
    traj = run(model, grid, tg, SchemeParams(1 / 3, tg.lam))
    (row,) = check_bv(traj, c7, c8)
    assert row.passed and row.tolerance == pytest.approx(traj.tv[0, 0], rel=1e-15)


def test_bv_envelope_overflow_is_infinite_not_error():
    traj = _const_traj(0.2)
    (row,) = check_bv(traj, np.array([1e6]), np.array([1.0]))
    assert row.passed and math.isinf(row.tolerance)


def test_entropy_alpha_zero_is_exact():
    model, grid, tg, params = kk_setup(dx=0.05)
    traj = run(model, grid, tg, params, hooks=[EntropyMonitor(alphas=(0.0,))])
    for row in check_entropy(traj):
        assert abs(row.worst) <= 1e-15


def test_entropy_three_cell_toy_against_expansion():
    f = FLUXES["identity"]
    u = np.array([0.0, 1.0, 0.0])
    nu = np.ones(4)
    beta, lam = 1 / 3, 1 / 7
    u_new = u - lam * np.diff(np.r_[0.0, [0.5 * (a + b) - beta * (b - a) / (2 * lam) for a, b in zip(np.r_[0, u], np.r_[u, 0])]][1:])
    params = SchemeParams(beta, lam)
    got = entropy_residuals(u, u_new, nu, f, params, [0.5])[0]
    want = entropy_residual_scalar(u, u_new, nu, f, beta, lam, 0.5)
    np.testing.assert_allclose(got, want, rtol=0, atol=1e-15)
    assert np.all(got <= 1e-15)


def test_entropy_monitor_matches_expansion_on_random_model():
    model, grid, tg, params = random_model(3)
    seen = []

    def capture(ctx):
        if ctx.n == 5:
            seen.append(ctx)

    mon = EntropyMonitor()
    run(model, grid, tg, params, hooks=[mon, capture])
    ctx = seen[0]
    f = model.fluxes[0]
    for alpha in (0.0, 0.3, 1.0):
        got = entropy_residuals(ctx.u_prev[0], ctx.u_new[0], ctx.nu_faces[0], f, params, [alpha])[0]
        want = entropy_residual_scalar(ctx.u_prev[0], ctx.u_new[0], ctx.nu_faces[0], f, params.beta, params.lam, alpha)
        np.testing.assert_allclose(got, want, rtol=0, atol=1e-14)
    assert max(mon.result()["worst"]) <= 1e-12


def test_conv_monitor_reports_ratios():
    model, grid, tg, params = kk_setup(dx=0.05)
    mon = ConvBoundMonitor(np.full((2, 2), 1e-9), np.full((2, 2), 1e9), grid.dx)
    run(model, grid, tg, params, hooks=[mon])
    assert mon.result()["ratio1"].max() > 1.0  # a deliberately tiny C5 must be exceeded
    assert mon.result()["ratio2"].max() < 1.0


def test_time_modulus_constant_state():
    model = _advection(PiecewiseConstant.indicator(0.0, 1.0, 0.0))
    grid = GridSpec(0.0, 1.0, 0.1)
    tg = cfl_time_grid(0.1, 0.2, 1 / 3, 1.0, 1.0)
    traj = run(model, grid, tg, SchemeParams(1 / 3, tg.lam), hooks=[StepL1Monitor()])
    assert l1_time_modulus(traj)[0].worst == 0.0


def test_time_modulus_single_step_pair():
    model, grid, tg, params = kk_setup(dx=0.05, T=0.05)
    traj = run(model, grid, tg, params, record_times=[tg.dt, 2 * tg.dt])
    a, b = traj.records
    want = grid.dx * np.abs(b.values - a.values).sum(axis=1) / tg.dt
    got = [r.worst for r in l1_time_modulus(traj)]
    np.testing.assert_allclose(got, want, rtol=1e-14)


def test_time_modulus_needs_data():
    traj = _const_traj(0.1)
    traj.records = [StateField(np.zeros((1, 3)), 0, 0.0)]
    with pytest.raises(ValueError):
        l1_time_modulus(traj)


def test_time_modulus_is_delta_independent():
    moduli = []
    for delta in (0.1, 0.05, 0.025):
        report, _ = verify(*kk_setup(dx=0.0125, delta=delta))
        moduli.append(report.constants["C9"])
    moduli = np.array(moduli)
    spread = (moduli.max(axis=0) - moduli.min(axis=0)) / moduli.min(axis=0)
    assert np.all(spread < 0.2)


def test_linear_advection_dependence_ratio_is_one():
    model = _advection(PiecewiseConstant.indicator(0.5, 1.0, 0.6))
    grid = GridSpec(0.0, 6.0, 0.05)  # wide enough that nothing leaves through the ends
    tg = cfl_time_grid(0.05, 0.5, 1 / 3, 1.0, 1.0)
    rows = continuous_dependence_probe(model, grid, tg, SchemeParams(1 / 3, tg.lam))
    for row in rows:
        assert row.worst == pytest.approx(1.0, abs=1e-12)
        assert row.passed


def test_kk_dependence_ratio_finite():
    model, grid, tg, params = kk_setup(dx=0.05)
    (row,) = continuous_dependence_probe(model, grid, tg, params, eps_list=(1e-3,))
    assert math.isfinite(row.worst) and row.passed


def test_zero_perturbation_reports_zero():
    model, grid, tg, params = kk_setup(dx=0.05, T=0.01)
    (row,) = continuous_dependence_probe(model, grid, tg, params, eps_list=(0.0,))
    assert row.worst == 0.0


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_random_models_pass(seed):
    report, _ = verify(*random_model(seed))
    assert report.passed, report.table()


def test_reports_are_repeatable():
    setup = random_model(5)
    a, _ = verify(*setup)
    b, _ = verify(*setup)
    assert [(r.check, r.worst) for r in a.rows] == [(r.check, r.worst) for r in b.rows]
