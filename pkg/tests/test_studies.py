import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from memlaw.grid import GridSpec, PiecewiseConstant, cfl_time_grid, project_initial
from memlaw.scheme import SchemeParams, run, run_memoryless
from memlaw.studies import (
    RATE_FLOOR,
    ErrorTable,
    RateFloorError,
    StudyError,
    delta_study,
    l1_distance,
    mesh_study,
    observed_rate,
)

from factories import KK_BETA, KK_LAMBDA, kk_setup


def test_identical_fields_distance_zero():
    g = GridSpec(0.0, 1.0, 0.1)
    u = np.random.default_rng(0).random((2, 10))
    assert l1_distance(u, g, u, g) == 0.0


def test_shifted_indicators():
    g = GridSpec(-1.0, 2.0, 0.25)
    a = project_initial(PiecewiseConstant.indicator(0.0, 1.0), g)
    b = project_initial(PiecewiseConstant.indicator(0.5, 1.5), g)
    assert l1_distance(a, g, b, g) == pytest.approx(1.0, abs=1e-15)


def test_constant_offset_two_components():
    g = GridSpec(-5.0, 5.0, 0.5)
    a = np.zeros((2, g.M))
    assert l1_distance(a, g, a + 0.3, g) == pytest.approx(20 * 0.3, rel=1e-14)


def test_nested_grids_either_order():
    coarse, fine = GridSpec(0.0, 1.0, 0.5), GridSpec(0.0, 1.0, 0.125)
    a = np.array([[1.0, 0.0]])
    b = np.zeros((1, 8))
    b[0, :2] = 1.0
    # coarse cell [0, 0.5) holds 1; the fine field covers only [0, 0.25)
    assert l1_distance(a, coarse, b, fine) == pytest.approx(0.25, abs=1e-15)
    assert l1_distance(b, fine, a, coarse) == pytest.approx(0.25, abs=1e-15)


def test_non_nested_rejected():
    with pytest.raises(StudyError):
        l1_distance(np.zeros((1, 4)), GridSpec(0, 1, 0.25), np.zeros((1, 6)), GridSpec(0, 1, 1 / 6))
    with pytest.raises(StudyError):
        l1_distance(np.zeros((1, 4)), GridSpec(0, 1, 0.25), np.zeros((2, 4)), GridSpec(0, 1, 0.25))
    with pytest.raises(StudyError):
        l1_distance(np.zeros((1, 4)), GridSpec(0, 1, 0.25), np.zeros((1, 4)), GridSpec(0, 2, 0.5))


@settings(max_examples=60, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), levels=st.lists(st.integers(0, 3), min_size=3, max_size=3))
def test_distance_is_a_metric(seed, levels):
    rng = np.random.default_rng(seed)
    grids = [GridSpec(0.0, 1.0, 0.25 / 2**k) for k in levels]
    fields = [rng.random((2, g.M)) for g in grids]
    d = lambda i, j: l1_distance(fields[i], grids[i], fields[j], grids[j])  # noqa: E731
    assert d(0, 1) == pytest.approx(d(1, 0), rel=1e-15)
    assert d(0, 2) <= d(0, 1) + d(1, 2) + 1e-14
    assert d(0, 0) == 0.0


def test_observed_rate_values():
    assert observed_rate(0.4, 0.2) == 1.0
    assert round(observed_rate(19.01, 9.63), 2) == 0.98
    assert observed_rate(0.38, 0.19) == pytest.approx(1.0, rel=1e-15)


@pytest.mark.parametrize("pair", [(0.0, 1.0), (1.0, 0.0), (-1.0, 0.5)])
def test_observed_rate_rejects_nonpositive(pair):
    with pytest.raises(StudyError):
        observed_rate(*pair)


def test_table_flags_zero_rows_and_floor():
    table = ErrorTable.from_errors("delta", [0.4, 0.2, 0.1, 0.05], [0.3, 0.15, 0.0, 0.14], [0.1] * 4)
    assert table.rates == [None, 1.0, None, None]
    assert [r.flagged for r in table.rows] == [False, False, True, False]
    slow = ErrorTable.from_errors("mesh", [0.1, 0.05], [0.2, 0.19], [0.1, 0.1])
    assert slow.below_floor() == [slow.rows[1]]
    assert isinstance(RateFloorError(slow, RATE_FLOOR).table, ErrorTable)


def test_memoryless_substitute_gives_zero_errors():
    model, grid, _, _ = kk_setup(dx=0.05)
    table = delta_study(model, grid, 0.2, KK_BETA, KK_LAMBDA, 0.4, 2, solver=run_memoryless)
    assert table.errors.tolist() == [0.0, 0.0, 0.0]
    assert table.rates == [None, None, None]


def test_delta_study_rates_are_internally_consistent():
    model, grid, _, _ = kk_setup(dx=0.025)
    table = delta_study(model, grid, 0.5, KK_BETA, KK_LAMBDA, 0.2, 2)
    e = table.errors
    assert table.rates[1] == pytest.approx(observed_rate(e[0], e[1]), rel=1e-15)
    assert table.rates[2] == pytest.approx(observed_rate(e[1], e[2]), rel=1e-15)
    assert all(r.lambda_used <= KK_LAMBDA for r in table.rows)


def test_delta_study_errors_match_direct_runs():
    model, grid, tg, params = kk_setup(dx=0.05, T=0.3)
    table = delta_study(model, grid, 0.3, KK_BETA, KK_LAMBDA, 0.1, 1, enforce_floor=False)
    ref = run_memoryless(model, grid, tg, params).final
    direct = run(model.with_delta(0.05), grid, tg, params).final
    assert table.errors[1] == pytest.approx(grid.dx * np.abs(direct - ref).sum(), rel=1e-14)


def test_mesh_study_with_collapsed_memory_is_self_convergence():
    model, _, _, _ = kk_setup()
    table = mesh_study(model, -5.0, 5.0, 0.3, KK_BETA, KK_LAMBDA, 0.05, 1, 1e-3, 0.0125, enforce_floor=False)
    fine = GridSpec(-5.0, 5.0, 0.0125)
    tg_f = cfl_time_grid(0.0125, 0.3, KK_BETA, 1, 1, KK_LAMBDA)
    ref = run_memoryless(model, fine, tg_f, SchemeParams(KK_BETA, tg_f.lam)).final
    coarse = GridSpec(-5.0, 5.0, 0.05)
    tg_c = cfl_time_grid(0.05, 0.3, KK_BETA, 1, 1, KK_LAMBDA)
    own = run_memoryless(model, coarse, tg_c, SchemeParams(KK_BETA, tg_c.lam)).final
    assert table.errors[0] == pytest.approx(l1_distance(own, coarse, ref, fine), rel=1e-13)


def test_mesh_study_errors_decrease():
    model, _, _, _ = kk_setup()
    table = mesh_study(model, -5.0, 5.0, 0.5, KK_BETA, KK_LAMBDA, 0.025, 1, 128, 0.00625, enforce_floor=False)
    assert table.errors[1] <= 0.9 * table.errors[0]


def test_mesh_study_rejects_unnested_reference():
    model, _, _, _ = kk_setup()
    with pytest.raises(StudyError):
        mesh_study(model, -5.0, 5.0, 0.1, KK_BETA, KK_LAMBDA, 0.05, 1, 10, 10 / 300, enforce_floor=False)
