"""Spatial and temporal convolution kernels and their cell-averaged weights.

Spatial kernels live on ``[0, eta)`` and temporal kernels on ``[0, 1]``; the
memory radius ``delta`` rescales a temporal kernel onto ``[0, delta]`` with
unit mass preserved.  Cell averages are integrated with 5-point
Gauss-Legendre per cell, clipped to the kernel support so that the built-in
polynomial families are integrated exactly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "KernelError",
    "SpatialKernel",
    "TemporalKernel",
    "ScaledTemporalKernel",
    "KernelMatrix",
    "normalize_spatial",
    "poly_bump",
    "uniform",
    "tabulated_spatial",
    "poly_decay",
    "tabulated_temporal",
    "spatial_cell_averages",
    "temporal_cell_averages",
    "temporal_cell_masses",
    "scaled_first_moment",
    "gauss_legendre_integral",
    "read_kernel_csv",
]

# 5-point Gauss-Legendre on [-1, 1]; exact up to degree 9.
_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(5)

# Relative tolerance used when deciding how many cells a support spans.
_CELL_COUNT_RTOL = 1e-9


class KernelError(ValueError):
    """Raised when a kernel definition violates its invariants."""


def gauss_legendre_integral(func, a, b):
    """Integrate ``func`` over each interval ``[a_i, b_i]`` with 5-point GL.

    ``a`` and ``b`` may be scalars or equal-length arrays; ``func`` must be
    vectorised.
    """
    a = np.atleast_1d(np.asarray(a, dtype=float))
    b = np.atleast_1d(np.asarray(b, dtype=float))
    half = 0.5 * (b - a)
    mid = 0.5 * (b + a)
    x = mid[:, None] + half[:, None] * _GL_NODES[None, :]
    return half * (func(x) @ _GL_WEIGHTS)


def _piecewise_integral(func, a, b, breaks):
    # split each [a_i, b_i] at the breakpoints, GL on each piece
    out = np.zeros(len(a))
    for i, (lo, hi) in enumerate(zip(a, b)):
        inner = breaks[(breaks > lo) & (breaks < hi)]
        pts = np.concatenate(([lo], inner, [hi]))
        out[i] = gauss_legendre_integral(func, pts[:-1], pts[1:]).sum()
    return out


def _cell_count(width, h):
    return max(1, math.ceil(width / h * (1.0 - _CELL_COUNT_RTOL)))


@dataclass(frozen=True, eq=False)
class SpatialKernel:
    """Nonnegative, unit-mass kernel supported on ``[0, eta)``.

    ``family`` is one of ``poly_bump``, ``uniform`` or ``tabulated``.  For the
    tabulated family ``nodes``/``samples`` hold the (already normalised)
    piecewise-linear table.
    """

    family: str
    eta: float
    amplitude: float
    nodes: np.ndarray | None = field(default=None, repr=False)
    samples: np.ndarray | None = field(default=None, repr=False)

    @property
    def support(self):
        return (0.0, self.eta)

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        inside = (x >= 0.0) & (x < self.eta)
        if self.family == "poly_bump":
            val = self.amplitude * x * (self.eta - x) ** 3
        elif self.family == "uniform":
            val = np.full_like(x, self.amplitude)
        else:
            val = np.interp(x, self.nodes, self.samples)
        return np.where(inside, val, 0.0)

    def derivative(self, x, order=1):
        """Derivative of the kernel on its support (one-sided at the ends)."""
        x = np.asarray(x, dtype=float)
        L, eta = self.amplitude, self.eta
        if self.family == "poly_bump":
            if order == 1:
                val = L * (eta - x) ** 2 * (eta - 4.0 * x)
            elif order == 2:
                val = L * (eta - x) * (12.0 * x - 6.0 * eta)
            else:
                raise ValueError("only first and second derivatives are available")
        elif self.family == "uniform":
            val = np.zeros_like(x)
        else:
            val = _finite_difference(self, x, order)
        inside = (x >= 0.0) & (x <= eta)
        return np.where(inside, val, 0.0)

    def breakpoints(self):
        if self.family == "tabulated":
            return np.asarray(self.nodes)
        return np.array([0.0, self.eta])


def _finite_difference(kernel, x, order):
    span = kernel.support[1] - kernel.support[0]
    h = span * 1e-4
    if order == 1:
        return (kernel(x + h) - kernel(x - h)) / (2 * h)
    if order == 2:
        return (kernel(x + h) - 2 * kernel(x) + kernel(x - h)) / (h * h)
    raise ValueError("only first and second derivatives are available")


def _check_nonnegative(values, what):
    if np.any(values < 0.0):
        worst = float(values.min())
        raise KernelError(f"{what} is negative on its support (min sampled value {worst:.3e})")


def normalize_spatial(family, eta, table=None):
    """Build a unit-mass spatial kernel from a family name and its width.

    ``poly_bump`` is ``L x (eta - x)^3`` with the analytic amplitude
    ``L = 20 / eta^5``; ``uniform`` is ``1 / eta``; ``tabulated`` takes
    ``table = (nodes, values)`` with nodes covering ``[0, eta]``.
    """
    eta = float(eta)
    if not eta > 0.0:
        raise KernelError(f"spatial support width eta must be positive, got {eta}")
    if family == "poly_bump":
        amplitude = 20.0 / eta**5
        kernel = SpatialKernel("poly_bump", eta, amplitude)
        mass = gauss_legendre_integral(kernel, 0.0, eta)[0]
        if abs(mass - 1.0) > 1e-12:
            raise KernelError(f"poly_bump normalisation check failed: mass {mass!r}")
        return kernel
    if family == "uniform":
        return SpatialKernel("uniform", eta, 1.0 / eta)
    if family == "tabulated":
        if table is None:
            raise KernelError("tabulated kernel needs a (nodes, values) table")
        nodes, values = (np.asarray(v, dtype=float) for v in table)
        _check_tabulation(nodes, values, 0.0, eta, "spatial kernel")
        mass = np.trapezoid(values, nodes)
        if not mass > 0.0:
            raise KernelError("tabulated spatial kernel has zero mass")
        return SpatialKernel("tabulated", eta, 1.0 / mass, nodes, values / mass)
    raise KernelError(f"unknown spatial kernel family {family!r}")


def poly_bump(eta):
    return normalize_spatial("poly_bump", eta)


def uniform(eta):
    return normalize_spatial("uniform", eta)


def tabulated_spatial(nodes, values):
    nodes = np.asarray(nodes, dtype=float)
    return normalize_spatial("tabulated", nodes[-1], (nodes, values))


def _check_tabulation(nodes, values, lo, hi, what):
    if nodes.ndim != 1 or nodes.shape != values.shape or len(nodes) < 2:
        raise KernelError(f"{what}: table needs matching 1-D columns with at least two rows")
    if np.any(np.diff(nodes) <= 0.0):
        raise KernelError(f"{what}: table coordinates must be strictly increasing")
    if abs(nodes[0] - lo) > 1e-12 or nodes[-1] <= lo or (hi is not None and abs(nodes[-1] - hi) > 1e-12):
        raise KernelError(f"{what}: table must span [{lo}, {hi}]")
    _check_nonnegative(values, what)


@dataclass(frozen=True, eq=False)
class TemporalKernel:
    """Unit-mass memory kernel on ``[0, support_radius]`` (radius <= 1)."""

    family: str
    support_radius: float = 1.0
    first_moment: float = 0.25
    nodes: np.ndarray | None = field(default=None, repr=False)
    samples: np.ndarray | None = field(default=None, repr=False)

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        inside = (t >= 0.0) & (t <= self.support_radius)
        if self.family == "poly_decay":
            val = 3.0 * (1.0 - t) ** 2
        else:
            val = np.interp(t, self.nodes, self.samples)
        return np.where(inside, val, 0.0)

    def sup(self):
        if self.family == "poly_decay":
            return 3.0
        return float(np.max(self.samples))

    def breakpoints(self):
        if self.family == "tabulated":
            return np.asarray(self.nodes)
        return np.array([0.0, self.support_radius])


def poly_decay():
    """The memory kernel ``3 (1 - t)^2`` on ``(0, 1)``; first moment 1/4."""
    return TemporalKernel("poly_decay", 1.0, 0.25)


def tabulated_temporal(nodes, values):
    nodes = np.asarray(nodes, dtype=float)
    values = np.asarray(values, dtype=float)
    _check_tabulation(nodes, values, 0.0, None, "temporal kernel")
    if nodes[-1] > 1.0 + 1e-12:
        raise KernelError("temporal kernel support must lie inside [0, 1]; truncate the table")
    mass = np.trapezoid(values, nodes)
    if not mass > 0.0:
        raise KernelError("tabulated temporal kernel has zero mass")
    values = values / mass
    probe = TemporalKernel("tabulated", float(nodes[-1]), 0.0, nodes, values)
    # first moment of a piecewise-linear function, exact by GL on each piece
    moment = gauss_legendre_integral(lambda t: t * probe(t), nodes[:-1], nodes[1:]).sum()
    return TemporalKernel("tabulated", float(nodes[-1]), float(moment), nodes, values)


@dataclass(frozen=True, eq=False)
class ScaledTemporalKernel:
    """``Gamma_delta(t) = Gamma(t / delta) / delta`` supported on ``[0, delta]``."""

    base: TemporalKernel
    delta: float

    def __post_init__(self):
        if not self.delta > 0.0:
            raise KernelError(f"memory radius delta must be positive, got {self.delta}")

    @property
    def support_radius(self):
        return self.delta * self.base.support_radius

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        return self.base(t / self.delta) / self.delta

    def sup(self):
        return self.base.sup() / self.delta

    def breakpoints(self):
        return self.base.breakpoints() * self.delta


@dataclass(frozen=True)
class KernelMatrix:
    """N x N grid of ``(spatial, temporal)`` kernel pairs; entries may alias."""

    entries: tuple

    def __post_init__(self):
        n = len(self.entries)
        if n == 0 or any(len(row) != n for row in self.entries):
            raise KernelError("kernel matrix must be square and nonempty")
        for row in self.entries:
            for pair in row:
                if len(pair) != 2 or pair[0] is None or pair[1] is None:
                    raise KernelError("every kernel matrix entry needs a spatial and a temporal kernel")

    @classmethod
    def shared(cls, n, spatial, temporal):
        pair = (spatial, temporal)
        return cls(tuple(tuple(pair for _ in range(n)) for _ in range(n)))

    @property
    def n(self):
        return len(self.entries)

    def __getitem__(self, jk):
        j, k = jk
        return self.entries[j][k]

    def with_delta(self, delta):
        """Same matrix with every temporal kernel rescaled to radius ``delta``."""
        cache = {}

        def rescale(g):
            if id(g) not in cache:
                cache[id(g)] = ScaledTemporalKernel(g.base, delta)
            return cache[id(g)]

        return KernelMatrix(tuple(tuple((mu, rescale(g)) for mu, g in row) for row in self.entries))


def spatial_cell_averages(mu, dx):
    """Cell averages ``w_q`` of ``mu`` over ``[q dx, (q+1) dx)``.

    Returns ``ceil(eta / dx)`` weights; ``dx * w.sum()`` equals the kernel
    mass.
    """
    dx = float(dx)
    if not dx > 0.0:
        raise KernelError(f"dx must be positive, got {dx}")
    count = _cell_count(mu.eta, dx)
    left = dx * np.arange(count)
    right = np.minimum(left + dx, mu.eta)
    right[-1] = mu.eta
    if mu.family == "tabulated":
        mass = _piecewise_integral(mu, left, right, mu.breakpoints())
    else:
        mass = gauss_legendre_integral(mu, left, right)
    return mass / dx


def temporal_cell_averages(gamma, dt):
    """Cell averages ``g_s`` of a scaled memory kernel over ``[s dt, (s+1) dt)``.

    Returns ``ceil(delta / dt)`` weights (trailing cells beyond the support
    carry no mass and are dropped).  When the whole support fits in one cell
    its weight is exactly ``1 / dt``.
    """
    dt = float(dt)
    if not dt > 0.0:
        raise KernelError(f"dt must be positive, got {dt}")
    radius = gamma.support_radius
    count = _cell_count(radius, dt)
    if count == 1:
        return np.array([1.0 / dt])
    left = dt * np.arange(count)
    right = np.minimum(left + dt, radius)
    right[-1] = radius
    if gamma.base.family == "tabulated":
        mass = _piecewise_integral(gamma, left, right, gamma.breakpoints())
    else:
        mass = gauss_legendre_integral(gamma, left, right)
    return mass / dt


def temporal_cell_masses(gamma, dt):
    """``dt * g_s``: the kernel mass carried by each time cell.

    The single-cell case is exactly 1 so that a fully collapsed kernel
    reproduces the memoryless convolution bit for bit.
    """
    g = temporal_cell_averages(gamma, dt)
    if len(g) == 1:
        return np.array([1.0])
    return g * dt


def scaled_first_moment(gamma):
    """First moment of the scaled kernel: ``delta * m1(base)``."""
    if isinstance(gamma, ScaledTemporalKernel):
        return gamma.delta * gamma.base.first_moment
    return gamma.first_moment


def read_kernel_csv(path):
    """Read a two-column (coordinate, value) kernel table."""
    data = np.loadtxt(path, delimiter=",", ndmin=2, comments="#")
    if data.shape[1] != 2:
        raise KernelError(f"{path}: expected two columns, found {data.shape[1]}")
    return data[:, 0], data[:, 1]
