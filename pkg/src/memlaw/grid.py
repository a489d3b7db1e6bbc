"""Uniform 1-D grids, CFL-constrained time steps and initial projection."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .kernels import gauss_legendre_integral

__all__ = [
    "GridError",
    "GridSpec",
    "TimeGrid",
    "PiecewiseConstant",
    "cfl_bound",
    "cfl_time_grid",
    "project_initial",
]


class GridError(ValueError):
    """Raised for inconsistent grid or time-step parameters."""


@dataclass(frozen=True)
class GridSpec:
    x_min: float
    x_max: float
    dx: float

    def __post_init__(self):
        if not self.dx > 0.0:
            raise GridError(f"dx must be positive, got {self.dx}")
        if not self.x_max > self.x_min:
            raise GridError("x_max must exceed x_min")
        ratio = (self.x_max - self.x_min) / self.dx
        if abs(ratio - round(ratio)) > 1e-9 * ratio:
            raise GridError(f"domain length {self.x_max - self.x_min} is not a multiple of dx={self.dx}")
        if round(ratio) < 2:
            raise GridError("grid needs at least two cells")

    @property
    def M(self):
        return int(round((self.x_max - self.x_min) / self.dx))

    @property
    def edges(self):
        # scaled by the domain length so that aligned edges are exact
        return self.x_min + (self.x_max - self.x_min) * np.arange(self.M + 1) / self.M

    @property
    def centers(self):
        e = self.edges
        return 0.5 * (e[:-1] + e[1:])


@dataclass(frozen=True)
class TimeGrid:
    dt: float
    n_steps: int
    dx: float

    @property
    def lam(self):
        return self.dt / self.dx

    @property
    def T(self):
        return self.n_steps * self.dt

    def times(self):
        return self.dt * np.arange(self.n_steps + 1)


def cfl_bound(beta, lip_f, nu_max):
    """Largest admissible ``dt/dx`` for the nonlocal Lax-Friedrichs flux."""
    if not 0.0 < beta < 2.0 / 3.0:
        raise GridError(f"beta must lie in (0, 2/3), got {beta}")
    return min(1.0, 4.0 - 6.0 * beta, 6.0 * beta) / (1.0 + 6.0 * lip_f * nu_max)


def cfl_time_grid(dx, T, beta, lip_f, nu_max, lambda_user=None):
    """Pick ``dt = lambda * dx`` under the CFL bound with ``T / dt`` integral.

    The ratio is reduced minimally (``n_steps = ceil(T / (lambda dx))``) so
    that the final time is hit exactly.
    """
    if not dx > 0.0:
        raise GridError(f"dx must be positive, got {dx}")
    if T < 0.0:
        raise GridError(f"final time must be nonnegative, got {T}")
    lam_max = cfl_bound(beta, lip_f, nu_max)
    if lambda_user is not None:
        if not lambda_user > 0.0:
            raise GridError(f"lambda must be positive, got {lambda_user}")
        if lambda_user > lam_max:
            raise GridError(
                f"lambda={lambda_user} violates the CFL bound "
                f"min(1, 4-6beta, 6beta)/(1 + 6 Lip(f) sup|nu|) = {lam_max:.6g}"
            )
        lam = lambda_user
    else:
        lam = lam_max
    if T == 0.0:
        return TimeGrid(lam * dx, 0, dx)
    n_steps = math.ceil(T / (lam * dx) * (1.0 - 1e-12))
    return TimeGrid(T / n_steps, n_steps, dx)


@dataclass(frozen=True)
class PiecewiseConstant:
    """Step function ``values[i]`` on ``[breaks[i], breaks[i+1])``, zero elsewhere."""

    breaks: tuple
    values: tuple

    def __post_init__(self):
        if len(self.breaks) != len(self.values) + 1:
            raise GridError("piecewise-constant data needs len(breaks) == len(values) + 1")
        if any(b >= a for a, b in zip(self.breaks[1:], self.breaks[:-1])):
            raise GridError("breaks must be strictly increasing")

    @classmethod
    def indicator(cls, a, b, height=1.0):
        return cls((float(a), float(b)), (float(height),))

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        idx = np.searchsorted(self.breaks, x, side="right") - 1
        vals = np.concatenate(([0.0], self.values, [0.0]))
        idx = np.where((idx >= 0) & (idx < len(self.values)), idx + 1, 0)
        return vals[idx]

    def l1_norm(self):
        widths = np.diff(self.breaks)
        return float(np.sum(np.abs(self.values) * widths))

    def cell_averages(self, edges):
        """Exact averages over cells ``[edges[i], edges[i+1])``."""
        edges = np.asarray(edges, dtype=float)
        # exact antiderivative of a step function, evaluated at cell edges
        b = np.asarray(self.breaks, dtype=float)
        v = np.asarray(self.values, dtype=float)
        cum = np.concatenate(([0.0], np.cumsum(v * np.diff(b))))

        def antiderivative(x):
            xc = np.clip(x, b[0], b[-1])
            j = np.clip(np.searchsorted(b, xc, side="right") - 1, 0, len(v) - 1)
            return cum[j] + v[j] * (xc - b[j])

        prim = antiderivative(edges)
        # averages lie in the hull of the values; clipping removes cancellation error
        lo, hi = min(0.0, v.min()), max(0.0, v.max())
        return np.clip(np.diff(prim) / np.diff(edges), lo, hi)


def project_initial(u0, grid, check_range=True):
    """Cell averages of the initial profiles ``u0`` (one per component).

    Step-function data (:class:`PiecewiseConstant`) is integrated exactly;
    any other callable uses 5-point Gauss-Legendre per cell.  Returns an
    ``(N, M)`` array.
    """
    profiles = list(u0) if isinstance(u0, (list, tuple)) else [u0]
    edges = grid.edges
    rows = []
    for k, prof in enumerate(profiles):
        if check_range:
            _check_data_range(prof, grid, k)
        if isinstance(prof, PiecewiseConstant):
            rows.append(prof.cell_averages(edges))
        else:
            rows.append(gauss_legendre_integral(prof, edges[:-1], edges[1:]) / grid.dx)
    return np.array(rows)


def _check_data_range(prof, grid, k):
    if isinstance(prof, PiecewiseConstant):
        sample = np.asarray(prof.values, dtype=float)
    else:
        xs = np.linspace(grid.x_min, grid.x_max, 20 * grid.M + 1)
        sample = np.asarray(prof(xs), dtype=float)
    lo, hi = float(np.min(sample)), float(np.max(sample))
    if lo < 0.0 or hi > 1.0:
        raise GridError(
            f"initial data for component {k + 1} leaves [0, 1] (sampled range [{lo:.3g}, {hi:.3g}])"
        )
