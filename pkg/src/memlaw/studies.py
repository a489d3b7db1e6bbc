"""Convergence studies: memory-to-memoryless sweeps and mesh ladders."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .grid import GridSpec, cfl_time_grid
from .models import validate_model
from .scheme import SchemeParams, StateField, run

__all__ = [
    "StudyError",
    "RateFloorError",
    "RATE_FLOOR",
    "ErrorRow",
    "ErrorTable",
    "l1_distance",
    "observed_rate",
    "delta_study",
    "mesh_study",
]

# theoretical square-root floor minus measurement slack
RATE_FLOOR = 0.5 - 0.15


class StudyError(ValueError):
    pass


class RateFloorError(RuntimeError):
    """An observed rate fell below the theoretical floor; carries the full table."""

    def __init__(self, table, floor):
        self.table = table
        self.floor = floor
        bad = ", ".join(f"{r.parameter:g}: {r.rate:.3f}" for r in table.rows if r.rate is not None and r.rate < floor)
        super().__init__(f"observed rates below {floor}: {bad}")


@dataclass
class ErrorRow:
    parameter: float
    error: float
    rate: float | None
    lambda_used: float
    flagged: bool = False  # error is zero: the memory run equals the reference


@dataclass
class ErrorTable:
    kind: str
    rows: list = field(default_factory=list)

    @property
    def parameters(self):
        return np.array([r.parameter for r in self.rows])

    @property
    def errors(self):
        return np.array([r.error for r in self.rows])

    @property
    def rates(self):
        return [r.rate for r in self.rows]

    def below_floor(self, floor=RATE_FLOOR):
        return [r for r in self.rows if r.rate is not None and r.rate < floor]

    @classmethod
    def from_errors(cls, kind, parameters, errors, lambdas):
        table = cls(kind)
        for i, (p, e, lam) in enumerate(zip(parameters, errors, lambdas)):
            flagged = e == 0.0
            rate = None
            if i > 0 and not flagged and not table.rows[-1].flagged:
                rate = observed_rate(table.rows[-1].error, e)
            table.rows.append(ErrorRow(float(p), float(e), rate, float(lam), flagged))
        return table


def observed_rate(e_coarse, e_fine):
    """``log2(e_coarse / e_fine)``."""
    if not (e_coarse > 0.0 and e_fine > 0.0):
        raise StudyError(f"observed rate needs positive errors, got {e_coarse} and {e_fine}")
    return math.log2(e_coarse / e_fine)


def _values(sol):
    return sol.values if isinstance(sol, StateField) else np.asarray(sol, dtype=float)


def l1_distance(sol_a, grid_a, sol_b, grid_b):
    """Exact L1 distance, summed over components, of two cell-average fields.

    One grid must refine the other by an integer factor over the same
    interval; the coarser field is expanded onto the finer grid.
    """
    a, b = _values(sol_a), _values(sol_b)
    if a.ndim == 1:
        a = a[None, :]
    if b.ndim == 1:
        b = b[None, :]
    if a.shape[0] != b.shape[0]:
        raise StudyError(f"component counts differ: {a.shape[0]} vs {b.shape[0]}")
    if not (math.isclose(grid_a.x_min, grid_b.x_min, abs_tol=1e-12) and math.isclose(grid_a.x_max, grid_b.x_max, abs_tol=1e-12)):
        raise StudyError("grids cover different intervals")
    if a.shape[1] != grid_a.M or b.shape[1] != grid_b.M:
        raise StudyError("field sizes do not match their grids")
    if grid_a.M > grid_b.M:
        a, b, grid_a, grid_b = b, a, grid_b, grid_a
    factor, rem = divmod(grid_b.M, grid_a.M)
    if rem:
        raise StudyError(f"grids with {grid_a.M} and {grid_b.M} cells are not nested")
    expanded = np.repeat(a, factor, axis=1)
    return float(grid_b.dx * np.abs(expanded - b).sum())


def _time_grid(model, dx, T, beta, lam, constants):
    return cfl_time_grid(dx, T, beta, constants.lip_f_max, constants.nu_max, lam)


def delta_study(model, grid, T, beta, lam, delta_0, n_halvings, enforce_floor=True, solver=run):
    """Errors of the memory solver against the memoryless solver on one grid.

    Runs ``n_halvings + 1`` values ``delta_0 * 2**-r``.  ``solver`` is the
    run function used for the memory runs (swap in the memoryless runner to
    obtain identically zero errors).
    """
    report = validate_model(model)
    report.raise_if_failed()
    tg = _time_grid(model, grid.dx, T, beta, lam, report.constants)
    params = SchemeParams(beta, tg.lam)
    reference = run(model, grid, tg, params, memoryless=True).final
    deltas = [delta_0 * 2.0**-r for r in range(n_halvings + 1)]
    errors = []
    for d in deltas:
        final = solver(model.with_delta(d), grid, tg, params).final
        errors.append(l1_distance(final, grid, reference, grid))
    table = ErrorTable.from_errors("delta", deltas, errors, [tg.lam] * len(deltas))
    if enforce_floor and table.below_floor():
        raise RateFloorError(table, RATE_FLOOR)
    return table


def mesh_study(model, x_min, x_max, T, beta, lam, dx_0, n_halvings, ratio, dx_fine, enforce_floor=True):
    """Errors at fixed ``delta / dx`` against a memoryless reference at ``dx_fine``."""
    report = validate_model(model)
    report.raise_if_failed()
    consts = report.constants
    fine = GridSpec(x_min, x_max, dx_fine)
    dxs = [dx_0 * 2.0**-r for r in range(n_halvings + 1)]
    grids = [GridSpec(x_min, x_max, dx) for dx in dxs]
    for grid in grids:
        if max(grid.M, fine.M) % min(grid.M, fine.M):
            raise StudyError(f"dx={grid.dx} is not nested with the reference dx_fine={dx_fine}")
    tg_ref = _time_grid(model, dx_fine, T, beta, lam, consts)
    reference = run(model, fine, tg_ref, SchemeParams(beta, tg_ref.lam), memoryless=True).final
    errors, lambdas = [], []
    for dx, grid in zip(dxs, grids):
        tg = _time_grid(model, dx, T, beta, lam, consts)
        final = run(model.with_delta(ratio * dx), grid, tg, SchemeParams(beta, tg.lam)).final
        errors.append(l1_distance(final, grid, reference, fine))
        lambdas.append(tg.lam)
    table = ErrorTable.from_errors("mesh", dxs, errors, lambdas)
    if enforce_floor and table.below_floor():
        raise RateFloorError(table, RATE_FLOOR)
    return table
