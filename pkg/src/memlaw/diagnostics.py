"""Per-run certification of the scheme's stability properties.

Each ``check_*`` function reads a :class:`~memlaw.scheme.Trajectory` and
returns :class:`CheckResult` rows; nothing here raises on a failed check.
Properties that need the full per-step state (entropy inequality,
convolution bounds) are accumulated by hooks passed to ``run``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .convolution import conv_constants
from .grid import project_initial
from .models import validate_model
from .scheme import INVARIANT_TOL, lf_flux, run

__all__ = [
    "CheckResult",
    "DiagnosticsReport",
    "EntropyMonitor",
    "ConvBoundMonitor",
    "DEFAULT_ALPHAS",
    "bv_constants",
    "check_invariant_region",
    "check_conservation",
    "check_bv",
    "check_entropy",
    "check_conv_bounds",
    "l1_time_modulus",
    "continuous_dependence_probe",
    "entropy_residuals",
    "verify",
]

DEFAULT_ALPHAS = tuple(np.round(np.linspace(0.0, 1.0, 11), 12))
ENTROPY_TOL = 1e-12
CONSERVATION_RTOL = 1e-12
BOUND_RTOL = 1e-9


@dataclass
class CheckResult:
    check: str
    component: int  # 1-based; 0 when the row covers all components
    worst: float
    tolerance: float
    passed: bool
    location: tuple = ()
    detail: str = ""


@dataclass
class DiagnosticsReport:
    rows: list = field(default_factory=list)
    constants: dict = field(default_factory=dict)

    @property
    def passed(self):
        return all(r.passed for r in self.rows)

    def extend(self, rows):
        self.rows.extend(rows)
        return self

    def failures(self):
        return [r for r in self.rows if not r.passed]

    def table(self):
        lines = [f"{'check':<22}{'comp':>5}{'worst':>16}{'tolerance':>14}  result"]
        for r in self.rows:
            lines.append(
                f"{r.check:<22}{r.component:>5}{r.worst:>16.6e}{r.tolerance:>14.3e}  "
                f"{'pass' if r.passed else 'FAIL'}{'  ' + r.detail if r.detail else ''}"
            )
        return "\n".join(lines)


def check_invariant_region(traj, tol=INVARIANT_TOL):
    """Worst excursion of any cell below 0 or above 1 over all steps."""
    rows = []
    for k in range(traj.minimum.shape[1]):
        below = -traj.minimum[:, k]
        above = traj.maximum[:, k] - 1.0
        n_lo, n_hi = int(np.argmax(below)), int(np.argmax(above))
        worst = float(max(below[n_lo], above[n_hi], 0.0)) + 0.0
        where = n_lo if below[n_lo] >= above[n_hi] else n_hi
        rows.append(
            CheckResult(
                "invariant_region", k + 1, float(worst), tol, worst <= tol, (where,),
                f"min={traj.minimum[:, k].min():.6g} max={traj.maximum[:, k].max():.6g}",
            )
        )
    return rows


def check_conservation(traj, rtol=CONSERVATION_RTOL):
    """Mass drift after accounting for boundary outflow, relative to the initial mass."""
    rows = []
    for k in range(traj.mass.shape[1]):
        m0 = traj.mass[0, k]
        drift = np.abs(traj.mass[:, k] - m0 + traj.outflow[:, k])
        n = int(np.argmax(drift))
        tol = rtol * max(m0, np.finfo(float).tiny)
        rows.append(
            CheckResult(
                "conservation", k + 1, float(drift[n]), tol, drift[n] <= tol, (n,),
                f"outflow={traj.outflow[-1, k]:.3e}",
            )
        )
    return rows


def bv_constants(model, constants=None):
    """Growth constants ``(C7, C8)`` per component for the total-variation envelope."""
    if constants is None:
        constants = validate_model(model).constants
    c5, c6 = conv_constants(model)
    mass = model.initial_mass()
    c7 = np.zeros(model.n)
    c8 = np.zeros(model.n)
    for k in range(model.n):
        lip = constants.lip_f[k]
        grad = constants.grad_nu[k]
        hess = constants.hess_nu[k]
        c5k = c5[:, k].max()
        c6k = c6[:, k].max()
        c7[k] = c5k * lip * grad
        c8[k] = c6k * lip * grad * mass[k] + 2.0 * c5k**2 * lip * hess * mass[k]
    return c7, c8


def _bv_envelope(tv0, c7, c8, t):
    if c7 == 0.0:
        return tv0 + c8 * t
    if c7 * t >= 700.0:  # exp overflows; the envelope is vacuous
        return math.inf
    return math.exp(c7 * t) * tv0 + math.expm1(c7 * t) / c7 * c8


def check_bv(traj, c7, c8):
    rows = []
    times = traj.times
    for k in range(traj.tv.shape[1]):
        tv0 = traj.tv[0, k]
        env = np.array([_bv_envelope(tv0, c7[k], c8[k], t) for t in times])
        excess = traj.tv[:, k] - env
        n = int(np.argmax(excess))
        ok = bool(np.all(traj.tv[:, k] <= env * (1 + BOUND_RTOL) + 1e-12))
        rows.append(
            CheckResult(
                "bv_envelope", k + 1, float(traj.tv[:, k].max()), float(env[-1]), ok, (n,),
                f"C7={c7[k]:.4g} C8={c8[k]:.4g} TV0={tv0:.6g}",
            )
        )
    return rows


def entropy_residuals(u, u_new, nu_faces, f, params, alphas):
    """Left-hand side of the discrete cell entropy inequality, shape ``(len(alphas), M)``.

    ``u``/``u_new`` are one component at levels ``n``/``n+1``; ``nu_faces``
    are its face velocities at level ``n``.
    """
    lam, beta = params.lam, params.beta
    a = np.asarray(alphas, dtype=float)[:, None]
    padded = np.pad(u, 1)
    left, right = padded[None, :-1], padded[None, 1:]
    v = nu_faces[None, :]

    def flux(ul, ur):
        return lf_flux(v, ul, ur, f, beta, lam)

    g = flux(np.maximum(left, a), np.maximum(right, a)) - flux(np.minimum(left, a), np.minimum(right, a))
    return (
        np.abs(u_new[None, :] - a)
        - np.abs(u[None, :] - a)
        + lam * (g[:, 1:] - g[:, :-1])
        + lam * np.sign(u_new[None, :] - a) * f(a) * (nu_faces[None, 1:] - nu_faces[None, :-1])
    )


class EntropyMonitor:
    """Step hook tracking the worst entropy residual per component."""

    name = "entropy"

    def __init__(self, alphas=DEFAULT_ALPHAS):
        self.alphas = tuple(alphas)
        self.worst = None
        self.where = None

    def __call__(self, ctx):
        n = ctx.u_prev.shape[0]
        if self.worst is None:
            self.worst = np.full(n, -np.inf)
            self.where = [()] * n
        for k in range(n):
            res = entropy_residuals(
                ctx.u_prev[k], ctx.u_new[k], ctx.nu_faces[k], ctx.model.fluxes[k], ctx.params, self.alphas
            )
            ia, i = np.unravel_index(np.argmax(res), res.shape)
            if res[ia, i] > self.worst[k]:
                self.worst[k] = res[ia, i]
                self.where[k] = (ctx.n, int(i), self.alphas[ia])

    def result(self):
        return {"worst": self.worst, "where": self.where, "alphas": self.alphas}


def check_entropy(traj, tol=ENTROPY_TOL):
    """Read the entropy monitor results stored on the trajectory."""
    data = traj.extras.get("entropy")
    if data is None:
        raise KeyError("trajectory carries no entropy data; run with an EntropyMonitor hook")
    rows = []
    for k, worst in enumerate(data["worst"]):
        rows.append(
            CheckResult(
                "entropy", k + 1, float(worst), tol, worst <= tol, data["where"][k],
                f"alphas={len(data['alphas'])}",
            )
        )
    return rows


class ConvBoundMonitor:
    """Step hook for ``0 <= c <= 1`` and the first/second interface-difference bounds."""

    name = "conv_bounds"

    def __init__(self, c5, c6, dx):
        self.c5 = np.asarray(c5)
        self.c6 = np.asarray(c6)
        self.dx = dx
        n = self.c5.shape[0]
        self.range_excess = np.full((n, n), -np.inf)
        self.ratio1 = np.zeros((n, n))
        self.ratio2 = np.zeros((n, n))

    def __call__(self, ctx):
        c = ctx.conv.values
        lo = c.min(axis=2)
        hi = c.max(axis=2)
        self.range_excess = np.maximum(self.range_excess, np.maximum(-lo, hi - 1.0))
        d1 = np.abs(np.diff(c, axis=2)).max(axis=2)
        d2 = np.abs(np.diff(c, n=2, axis=2)).max(axis=2)
        with np.errstate(divide="ignore", invalid="ignore"):
            r1 = np.where(self.c5 > 0, d1 / (self.c5 * self.dx), np.where(d1 > 0, np.inf, 0.0))
            r2 = np.where(self.c6 > 0, d2 / (self.c6 * self.dx**2), np.where(d2 > 0, np.inf, 0.0))
        self.ratio1 = np.maximum(self.ratio1, r1)
        self.ratio2 = np.maximum(self.ratio2, r2)

    def result(self):
        return {"range_excess": self.range_excess, "ratio1": self.ratio1, "ratio2": self.ratio2}


def check_conv_bounds(traj, tol=INVARIANT_TOL):
    data = traj.extras.get("conv_bounds")
    if data is None:
        raise KeyError("trajectory carries no convolution data; run with a ConvBoundMonitor hook")
    rows = []
    n = data["ratio1"].shape[0]
    for k in range(n):
        rng = float(max(data["range_excess"][:, k].max(), 0.0))
        r1 = float(data["ratio1"][:, k].max())
        r2 = float(data["ratio2"][:, k].max())
        rows.append(CheckResult("conv_range", k + 1, rng, tol, rng <= tol))
        rows.append(CheckResult("conv_first_diff", k + 1, r1, 1.0 + BOUND_RTOL, r1 <= 1.0 + BOUND_RTOL,
                                detail="max |dc| / (C5 dx)"))
        rows.append(CheckResult("conv_second_diff", k + 1, r2, 1.0 + BOUND_RTOL, r2 <= 1.0 + BOUND_RTOL,
                                detail="max |d2c| / (C6 dx^2)"))
    return rows


class StepL1Monitor:
    """Step hook recording ``dx sum |U^{n} - U^{n-1}|`` per component."""

    name = "step_l1"

    def __init__(self):
        self.values = []

    def __call__(self, ctx):
        self.values.append(ctx.dx * np.abs(ctx.u_new - ctx.u_prev).sum(axis=1))

    def result(self):
        return np.array(self.values)


def l1_time_modulus(traj):
    """Empirical time-continuity constant per component.

    Uses per-step increments when a :class:`StepL1Monitor` ran (their maximum
    over ``dt`` bounds every pair by the triangle inequality); otherwise the
    recorded states are compared pairwise.
    """
    steps = traj.extras.get("step_l1")
    if steps is not None and len(steps):
        value = steps.max(axis=0) / traj.dt
    else:
        recs = traj.records
        if len(recs) < 2:
            raise ValueError("need at least two recorded states or a StepL1Monitor")
        value = np.zeros(recs[0].values.shape[0])
        for a in range(len(recs)):
            for b in range(a + 1, len(recs)):
                gap = abs(recs[b].time - recs[a].time)
                if gap > 0:
                    diff = traj.dx * np.abs(recs[b].values - recs[a].values).sum(axis=1)
                    value = np.maximum(value, diff / gap)
    rows = []
    for k, v in enumerate(value):
        rows.append(CheckResult("time_modulus", k + 1, float(v), math.inf, bool(np.isfinite(v)),
                                detail="empirical C9"))
    return rows


def _dependence_constant(model, constants, traj_u, traj_v, T):
    n = model.n
    lip_f = max(constants.lip_f)
    lip_nu = max(constants.grad_nu)
    grad_nu = max(constants.grad_nu)
    hess_nu = max(constants.hess_nu)
    mu_sup = gamma_sup = dmu_sup = 0.0
    for j in range(n):
        for k in range(n):
            mu, gamma = model.kernels[j, k]
            xs = np.linspace(0.0, mu.eta, 20001)
            mu_sup = max(mu_sup, float(np.max(mu(xs))))
            dmu_sup = max(dmu_sup, float(np.max(np.abs(mu.derivative(xs, 1)))))
            gamma_sup = max(gamma_sup, gamma.sup())
    theta_sup = mu_sup * gamma_sup
    u0_l1 = float(traj_u.mass[0].sum())
    u_bv = float(traj_u.tv.sum(axis=1).max())
    v_l1 = float(traj_v.dt * traj_v.mass.sum(axis=1)[1:].sum())
    return (
        n * T * lip_f * lip_nu * theta_sup * u_bv
        + n * T * lip_f * u0_l1 * grad_nu * gamma_sup * dmu_sup
        + n * T * lip_f * u0_l1 * v_l1 * gamma_sup * dmu_sup * hess_nu * theta_sup
    )


def continuous_dependence_probe(model, grid, time_grid, params, eps_list=(1e-2, 1e-3, 1e-4), bump=None,
                                constants=None):
    """L1 amplification of an initial perturbation, compared with ``exp(C T)``.

    The perturbation ``eps * bump`` (default: indicator of the third fifth
    of the domain) is added to the projected data and clamped to ``[0, 1]``.
    """
    if constants is None:
        constants = validate_model(model).constants
    u0 = project_initial(model.initial, grid)
    if bump is None:
        x = grid.centers
        a = grid.x_min + 0.4 * (grid.x_max - grid.x_min)
        b = grid.x_min + 0.6 * (grid.x_max - grid.x_min)
        bump = np.where((x >= a) & (x < b), 1.0, 0.0)
    base = run(model, grid, time_grid, params, strict=False)
    T = time_grid.T
    rows = []
    for eps in eps_list:
        v0 = np.clip(u0 + eps * bump[None, :], 0.0, 1.0)
        dist0 = grid.dx * np.abs(v0 - u0).sum()
        if dist0 == 0.0:
            rows.append(CheckResult("continuous_dependence", 0, 0.0, math.inf, True, (), f"eps={eps:g}: no perturbation"))
            continue
        pert = run(model, grid, time_grid, params, strict=False, u0=v0)
        dist = grid.dx * np.abs(pert.final - base.final).sum()
        ratio = dist / dist0
        C = _dependence_constant(model, constants, base, pert, T)
        bound = math.exp(C * T) if C * T < 700 else math.inf
        rows.append(
            CheckResult("continuous_dependence", 0, float(ratio), bound,
                        bool(np.isfinite(ratio) and ratio <= bound * (1 + BOUND_RTOL)),
                        (), f"eps={eps:g} C={C:.4g}")
        )
    return rows


def verify(model, grid, time_grid, params, alphas=DEFAULT_ALPHAS, record_times=(), memoryless=False):
    """Run once with every monitor attached and assemble the full report."""
    validation = validate_model(model)
    constants = validation.constants
    c5, c6 = conv_constants(model)
    c7, c8 = bv_constants(model, constants)
    hooks = [EntropyMonitor(alphas), ConvBoundMonitor(c5, c6, grid.dx), StepL1Monitor()]
    traj = run(model, grid, time_grid, params, record_times=record_times, hooks=hooks,
               memoryless=memoryless, strict=False)
    report = DiagnosticsReport(constants={
        "C5": c5, "C6": c6, "C7": c7, "C8": c8,
        "lip_f": constants.lip_f, "nu_sup": constants.nu_sup,
        "grad_nu": constants.grad_nu, "hess_nu": constants.hess_nu,
        "warnings": validation.warnings, "failures": validation.failures,
    })
    report.extend(check_invariant_region(traj))
    report.extend(check_conservation(traj))
    report.extend(check_bv(traj, c7, c8))
    report.extend(check_entropy(traj))
    report.extend(check_conv_bounds(traj))
    report.extend(l1_time_modulus(traj))
    report.constants["C9"] = np.array([r.worst for r in report.rows if r.check == "time_modulus"])
    return report, traj
