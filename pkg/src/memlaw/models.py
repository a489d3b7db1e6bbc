"""Problem definitions: fluxes, velocities, kernel matrices and initial data."""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .grid import PiecewiseConstant
from .kernels import (
    KernelMatrix,
    ScaledTemporalKernel,
    gauss_legendre_integral,
    poly_bump,
    poly_decay,
)

__all__ = [
    "ModelError",
    "ScalarMap",
    "Velocity",
    "ModelSpec",
    "ModelConstants",
    "ValidationReport",
    "FLUXES",
    "VELOCITIES",
    "flux",
    "velocity",
    "keyfitz_kranzer_preset",
    "validate_model",
]


class ModelError(ValueError):
    """Raised when a model violates a structural hypothesis."""


@dataclass(frozen=True)
class ScalarMap:
    """Named scalar flux ``f(u)`` with a certified Lipschitz constant on [0, 1]."""

    name: str
    func: object = field(repr=False)
    lip: float

    def __call__(self, u):
        return self.func(u)


@dataclass(frozen=True)
class Velocity:
    """Velocity ``nu(c)`` of the component's convolution vector ``c`` (shape ``(N, ...)``)."""

    name: str
    func: object = field(repr=False)

    def __call__(self, c):
        return self.func(c)


FLUXES = {
    "identity": ScalarMap("identity", lambda u: np.asarray(u, dtype=float) * 1.0, 1.0),
    "logistic": ScalarMap("logistic", lambda u: np.asarray(u) * (1.0 - np.asarray(u)), 1.0),
    "zero": ScalarMap("zero", lambda u: np.zeros_like(np.asarray(u, dtype=float)), 0.0),
}


def _kk_cubic(c):
    c = np.asarray(c, dtype=float)
    return (1.0 - np.sum(c * c, axis=0)) ** 3


def _linear(c):
    c = np.asarray(c, dtype=float)
    return 1.0 - np.mean(c, axis=0)


def _cubic(c):
    c = np.asarray(c, dtype=float)
    return (1.0 - np.mean(c, axis=0)) ** 3


def _constant(c):
    c = np.asarray(c, dtype=float)
    return np.ones(c.shape[1:])


VELOCITIES = {
    "kk_cubic": Velocity("kk_cubic", _kk_cubic),
    "linear": Velocity("linear", _linear),
    "cubic": Velocity("cubic", _cubic),
    "constant": Velocity("constant", _constant),
}


def flux(name):
    try:
        return FLUXES[name]
    except KeyError:
        raise ModelError(f"unknown flux {name!r}; choose from {sorted(FLUXES)}") from None


def velocity(name):
    try:
        return VELOCITIES[name]
    except KeyError:
        raise ModelError(f"unknown velocity {name!r}; choose from {sorted(VELOCITIES)}") from None


@dataclass(frozen=True)
class ModelSpec:
    """A system of ``n`` nonlocal conservation laws with memory.

    ``velocities[k]`` receives the stacked convolutions ``c^{j,k}`` over ``j``.
    ``h1_waived`` records that the flux is allowed to violate ``f(1) = 0``
    (the Keyfitz-Kranzer experiment uses ``f(u) = u``).
    """

    n: int
    fluxes: tuple
    velocities: tuple
    kernels: KernelMatrix
    initial: tuple
    name: str = "custom"
    h1_waived: bool = False
    orientation: str = "downstream"

    def __post_init__(self):
        if not (len(self.fluxes) == len(self.velocities) == len(self.initial) == self.n == self.kernels.n):
            raise ModelError("fluxes, velocities, initial data and kernels must all have n entries")

    def with_delta(self, delta):
        return replace(self, kernels=self.kernels.with_delta(delta))

    def initial_mass(self):
        """L1 norm of each initial profile."""
        return np.array([_l1_norm(u0) for u0 in self.initial])


def _l1_norm(profile):
    if isinstance(profile, PiecewiseConstant):
        return profile.l1_norm()
    raise ModelError("L1 norm is only available for step-function initial data")


def keyfitz_kranzer_preset(eta=0.25, delta=0.0125):
    """Nonlocal-in-space, nonlocal-in-time Keyfitz-Kranzer system.

    Two components with ``f(u) = u``, common velocity ``(1 - a^2 - b^2)^3``,
    one shared kernel ``mu * Gamma_delta`` in all four entries and data
    ``0.25 * 1_(-2,2)`` and ``1_(-2,2)``.
    """
    if not eta > 0.0 or not delta > 0.0:
        raise ModelError("eta and delta must be positive")
    mu = poly_bump(eta)
    gamma = ScaledTemporalKernel(poly_decay(), delta)
    ident = FLUXES["identity"]
    nu = VELOCITIES["kk_cubic"]
    return ModelSpec(
        n=2,
        fluxes=(ident, ident),
        velocities=(nu, nu),
        kernels=KernelMatrix.shared(2, mu, gamma),
        initial=(PiecewiseConstant.indicator(-2.0, 2.0, 0.25), PiecewiseConstant.indicator(-2.0, 2.0, 1.0)),
        name="keyfitz_kranzer",
        h1_waived=True,
    )


@dataclass(frozen=True)
class ModelConstants:
    """Global constants of a model, certified on ``[0, 1]^N``.

    ``grad_nu`` bounds the l1 norm of each velocity gradient and ``hess_nu``
    the entrywise l1 norm of its Hessian (a Lipschitz bound for the
    gradient).
    """

    lip_f: tuple
    nu_sup: tuple
    grad_nu: tuple
    hess_nu: tuple

    @property
    def lip_f_max(self):
        return max(self.lip_f)

    @property
    def nu_max(self):
        return max(self.nu_sup)


@dataclass
class ValidationReport:
    passed: bool
    constants: ModelConstants | None
    failures: list
    warnings: list

    def raise_if_failed(self):
        if not self.passed:
            raise ModelError("; ".join(f"{h}: {msg}" for h, msg in self.failures))


_SAMPLES = 10_000
_FD_STEP = 1e-5


def _sample_cube(n):
    per_axis = max(2, int(round(_SAMPLES ** (1.0 / n))))
    axis = np.linspace(0.0, 1.0, per_axis)
    pts = np.array(list(itertools.product(axis, repeat=n))).T
    return pts  # (n, P)


def _velocity_constants(nu, n):
    pts = _sample_cube(n)
    h = _FD_STEP
    vals = nu(pts)
    grads = np.empty_like(pts)
    hess = np.zeros((n, n, pts.shape[1]))
    eye = np.eye(n)[:, :, None]
    for j in range(n):
        grads[j] = (nu(pts + h * eye[j]) - nu(pts - h * eye[j])) / (2 * h)
        for i in range(n):
            hess[i, j] = (
                nu(pts + h * eye[i] + h * eye[j])
                - nu(pts + h * eye[i] - h * eye[j])
                - nu(pts - h * eye[i] + h * eye[j])
                + nu(pts - h * eye[i] - h * eye[j])
            ) / (4 * h * h)
    return (
        float(np.max(np.abs(vals))),
        float(np.max(np.sum(np.abs(grads), axis=0))),
        float(np.max(np.sum(np.abs(hess), axis=(0, 1)))),
    )


def _sampled_lip(f):
    u = np.linspace(0.0, 1.0, _SAMPLES)
    fu = np.asarray(f(u), dtype=float)
    return float(np.max(np.abs(np.diff(fu)) / np.diff(u)))


def validate_model(spec):
    """Check the structural hypotheses and certify the model constants.

    Endpoint zeros ``f(0) = 0 = f(1)``, flux Lipschitz bounds, velocity
    sup / gradient / Hessian bounds on a 10^4-point sample of ``[0, 1]^N``,
    kernel nonnegativity and unit mass.  Side-effect free.
    """
    failures, warnings = [], []
    lip_f, nu_sup, grad_nu, hess_nu = [], [], [], []
    for k, (f, nu) in enumerate(zip(spec.fluxes, spec.velocities)):
        f0, f1 = float(f(np.array(0.0))), float(f(np.array(1.0)))
        if abs(f0) > 1e-12:
            failures.append(("H1", f"component {k + 1}: f(0) = {f0:.3g} != 0"))
        if abs(f1) > 1e-12:
            msg = f"component {k + 1}: f(1) = {f1:.3g} != 0"
            if spec.h1_waived:
                warnings.append(("H1", msg + " (waived for this model; invariant region monitored at runtime)"))
            else:
                failures.append(("H1", msg))
        sampled = _sampled_lip(f)
        declared = getattr(f, "lip", None)
        if declared is not None and sampled > declared * (1 + 1e-9) + 1e-12:
            failures.append(("H1", f"component {k + 1}: declared Lip(f)={declared} below sampled {sampled:.6g}"))
        lip_f.append(declared if declared is not None else sampled)
        sup, grad, hess = _velocity_constants(nu, spec.n)
        if not all(math.isfinite(v) for v in (sup, grad, hess)):
            failures.append(("H2", f"component {k + 1}: velocity is not bounded on [0,1]^N"))
        nu_sup.append(sup)
        grad_nu.append(grad)
        hess_nu.append(hess)

    for j in range(spec.n):
        for k in range(spec.n):
            mu, gamma = spec.kernels[j, k]
            failures.extend(_kernel_failures(mu, gamma, j, k))

    constants = ModelConstants(tuple(lip_f), tuple(nu_sup), tuple(grad_nu), tuple(hess_nu))
    return ValidationReport(not failures, constants, failures, warnings)


def _kernel_failures(mu, gamma, j, k):
    out = []
    where = f"kernel ({j + 1},{k + 1})"
    xs = np.linspace(0.0, mu.eta, 2001)
    if np.any(mu(xs) < 0.0):
        out.append(("H3", f"{where}: spatial kernel is negative"))
    edges = np.union1d(np.linspace(0.0, mu.eta, 65), mu.breakpoints())
    m_mu = gauss_legendre_integral(mu, edges[:-1], edges[1:]).sum()
    if abs(m_mu - 1.0) > 1e-10:
        out.append(("H3", f"{where}: spatial kernel mass {m_mu:.12g} != 1"))
    radius = gamma.support_radius
    ts = np.linspace(0.0, radius, 2001)
    if np.any(gamma(ts) < 0.0):
        out.append(("H3", f"{where}: temporal kernel is negative"))
    tb = np.union1d(np.linspace(0.0, radius, 65), gamma.breakpoints())
    m_g = gauss_legendre_integral(gamma, tb[:-1], tb[1:]).sum()
    if abs(m_g - 1.0) > 1e-10:
        out.append(("H3", f"{where}: temporal kernel mass {m_g:.12g} != 1"))
    return out
