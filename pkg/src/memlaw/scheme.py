"""Explicit monotone marching scheme with the nonlocal Lax-Friedrichs flux.

One step updates every component from level ``n-1`` to ``n``::

    U_i^n = U_i^{n-1} - lam [F(nu(c_{i+1/2}), U_i, U_{i+1}) - F(nu(c_{i-1/2}), U_{i-1}, U_i)]

with every right-hand quantity (states and convolutions) taken at level
``n-1``.  Ghost cells on both sides are zero.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .convolution import ConvPlan
from .grid import project_initial

__all__ = [
    "SchemeError",
    "InvariantRegionError",
    "SchemeParams",
    "StateField",
    "StepContext",
    "Trajectory",
    "Solver",
    "lf_flux",
    "interface_fluxes",
    "step",
    "run",
    "run_memoryless",
]

log = logging.getLogger(__name__)

INVARIANT_TOL = 1e-12


class SchemeError(ValueError):
    pass


class InvariantRegionError(RuntimeError):
    """A state left ``[0, 1]`` by more than the tolerance."""

    def __init__(self, step_index, component, value):
        self.step_index = step_index
        self.component = component
        self.value = value
        super().__init__(
            f"invariant region violated at step {step_index}, component {component + 1}: "
            f"value {value:.15g} (check CFL and kernel configuration)"
        )


@dataclass(frozen=True)
class SchemeParams:
    beta: float
    lam: float

    def __post_init__(self):
        if not 0.0 < self.beta < 2.0 / 3.0:
            raise SchemeError(f"beta must lie in (0, 2/3), got {self.beta}")
        if not self.lam > 0.0:
            raise SchemeError(f"lambda must be positive, got {self.lam}")


@dataclass
class StateField:
    values: np.ndarray  # (N, M)
    time_index: int
    time: float


def lf_flux(v, u_left, u_right, f, beta, lam):
    """``v (f(u_l) + f(u_r)) / 2 - beta (u_r - u_l) / (2 lam)``."""
    return 0.5 * v * (f(u_left) + f(u_right)) - beta * (u_right - u_left) / (2.0 * lam)


def interface_fluxes(u, nu_faces, model, params):
    """Numerical fluxes at all ``M + 1`` interfaces for every component."""
    padded = np.pad(u, ((0, 0), (1, 1)))
    out = np.empty_like(nu_faces)
    for k in range(model.n):
        out[k] = lf_flux(nu_faces[k], padded[k, :-1], padded[k, 1:], model.fluxes[k], params.beta, params.lam)
    return out


def face_velocities(conv, model):
    return np.stack([model.velocities[k](conv.for_component(k)) for k in range(model.n)])


def step(u, conv, model, params):
    """One explicit update of the state ``u`` (shape ``(N, M)``) given ``c`` at the same level.

    Returns the new state, the face velocities and the interface fluxes.
    """
    nu_faces = face_velocities(conv, model)
    fluxes = interface_fluxes(u, nu_faces, model, params)
    u_new = u - params.lam * (fluxes[:, 1:] - fluxes[:, :-1])
    return u_new, nu_faces, fluxes


@dataclass
class StepContext:
    """Everything a per-step hook may inspect; ``conv`` is at level ``n - 1``."""

    n: int
    u_prev: np.ndarray
    u_new: np.ndarray
    conv: object
    nu_faces: np.ndarray
    fluxes: np.ndarray
    model: object
    params: SchemeParams
    dx: float
    dt: float


def total_variation(u):
    """Sum of absolute jumps including the jumps to the zero ghost cells."""
    padded = np.pad(u, ((0, 0), (1, 1)))
    return np.sum(np.abs(np.diff(padded, axis=1)), axis=1)


@dataclass
class Trajectory:
    dx: float
    dt: float
    n_steps: int
    initial: np.ndarray
    final: np.ndarray
    records: list = field(default_factory=list)
    mass: np.ndarray | None = None  # (n_steps + 1, N)
    minimum: np.ndarray | None = None
    maximum: np.ndarray | None = None
    tv: np.ndarray | None = None
    outflow: np.ndarray | None = None  # cumulative mass leaving through the ends
    extras: dict = field(default_factory=dict)

    @property
    def times(self):
        return self.dt * np.arange(self.n_steps + 1)

    def record_at(self, t):
        for rec in self.records:
            if abs(rec.time - t) <= 0.5 * self.dt:
                return rec
        raise KeyError(f"no recorded state near t={t}")


class Solver:
    """Stateful driver holding the current level and the snapshot history."""

    def __init__(self, model, grid, time_grid, params, memoryless=False, u0=None, strict=True):
        self.model = model
        self.grid = grid
        self.time_grid = time_grid
        self.params = params
        self.strict = strict
        if abs(params.lam - time_grid.lam) > 1e-12 * time_grid.lam:
            raise SchemeError(f"params.lam={params.lam} disagrees with the time grid ratio {time_grid.lam}")
        self.plan = ConvPlan(model, grid, time_grid, memoryless=memoryless)
        self.ring = self.plan.new_ring()
        self.u = project_initial(model.initial, grid) if u0 is None else np.array(u0, dtype=float)
        self.n = 0
        self.ring.push(self.plan.spatial(self.u), 0)

    def conv(self):
        return self.plan.memory(self.ring)

    def advance(self):
        conv = self.conv()
        u_prev = self.u
        u_new, nu_faces, fluxes = step(u_prev, conv, self.model, self.params)
        self.n += 1
        if self.strict:
            _check_invariant(u_new, self.n)
        self.u = u_new
        self.ring.push(self.plan.spatial(u_new), self.n)
        return StepContext(self.n, u_prev, u_new, conv, nu_faces, fluxes, self.model, self.params,
                           self.grid.dx, self.time_grid.dt)


def _check_invariant(u, n):
    lo = u.min(axis=1)
    hi = u.max(axis=1)
    for k in range(u.shape[0]):
        if lo[k] < -INVARIANT_TOL:
            raise InvariantRegionError(n, k, float(lo[k]))
        if hi[k] > 1.0 + INVARIANT_TOL:
            raise InvariantRegionError(n, k, float(hi[k]))


def _record_indices(record_times, time_grid):
    idx = {}
    for t in record_times:
        n = int(round(t / time_grid.dt))
        if not 0 <= n <= time_grid.n_steps:
            raise SchemeError(f"record time {t} outside [0, {time_grid.T}]")
        idx.setdefault(n, t)
    return idx


def run(model, grid, time_grid, params, record_times=(), hooks=(), memoryless=False, strict=True, u0=None):
    """Advance ``time_grid.n_steps`` steps and collect per-step diagnostics.

    ``record_times`` are snapped to the nearest time level.  Each hook is
    called with a :class:`StepContext` after every step; hooks exposing
    ``name`` and ``result()`` have their results stored in ``extras``.
    """
    solver = Solver(model, grid, time_grid, params, memoryless=memoryless, u0=u0, strict=strict)
    wanted = _record_indices(record_times, time_grid)
    n_steps, N = time_grid.n_steps, model.n
    mass = np.empty((n_steps + 1, N))
    lo = np.empty_like(mass)
    hi = np.empty_like(mass)
    tv = np.empty_like(mass)
    outflow = np.zeros_like(mass)
    dx, dt = grid.dx, time_grid.dt

    def observe(n, u):
        mass[n] = dx * u.sum(axis=1)
        lo[n] = u.min(axis=1)
        hi[n] = u.max(axis=1)
        tv[n] = total_variation(u)

    traj = Trajectory(dx, dt, n_steps, solver.u.copy(), solver.u)
    observe(0, solver.u)
    if 0 in wanted:
        traj.records.append(StateField(solver.u.copy(), 0, 0.0))
    for _ in range(n_steps):
        ctx = solver.advance()
        n = ctx.n
        observe(n, ctx.u_new)
        outflow[n] = outflow[n - 1] + dt * (ctx.fluxes[:, -1] - ctx.fluxes[:, 0])
        for hook in hooks:
            hook(ctx)
        if n in wanted:
            traj.records.append(StateField(ctx.u_new.copy(), n, n * dt))
    traj.final = solver.u
    traj.mass, traj.minimum, traj.maximum, traj.tv, traj.outflow = mass, lo, hi, tv, outflow
    for hook in hooks:
        name = getattr(hook, "name", None)
        if name is not None and hasattr(hook, "result"):
            traj.extras[name] = hook.result()
    log.debug("ran %d steps (memoryless=%s, depth=%d)", n_steps, memoryless, solver.plan.depth)
    return traj


def run_memoryless(model, grid, time_grid, params, record_times=(), hooks=(), strict=True, u0=None):
    """Reference solver: ``c`` is the spatial convolution of the current level only."""
    return run(model, grid, time_grid, params, record_times, hooks, memoryless=True, strict=strict, u0=u0)
