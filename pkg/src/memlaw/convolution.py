"""Discrete space-time convolution terms at cell interfaces.

The double sum over past time levels and cells factorises into a time
convolution of spatial-convolution snapshots::

    c^{j,k,n}_{i+1/2} = sum_m (dt g_m) S^{j,k,n-m}_{i+1/2},
    S^{j,k}_{i+1/2}   = dx sum_q w_q U^j_{i+1+q}.

The window looks ahead of the interface by default; the trailing window
``dx sum_q w_q U^j_{i-q}`` is available as ``orientation="upstream"``.

Only the last ``len(g)`` snapshots carry weight, so they are kept in a ring.
Interfaces are indexed ``r = 0..M`` for ``x_{r - 1/2}`` measured from the
left domain edge; state outside the grid is zero.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .kernels import spatial_cell_averages, temporal_cell_masses

__all__ = [
    "ConvolutionError",
    "ConvPlan",
    "ConvField",
    "HistoryRing",
    "spatial_conv",
    "memory_conv",
    "conv_constants",
]

# tolerance of the 0 <= c <= 1 sanity check (values are reported, not clamped)
C_RANGE_TOL = 1e-12


class ConvolutionError(ValueError):
    pass


def spatial_conv(u, w, dx, orientation="downstream"):
    """Spatial convolution of one component at all ``M + 1`` interfaces.

    ``downstream``: ``S_{i+1/2} = dx sum_q w_q U_{i+1+q}`` (look-ahead);
    ``upstream``: ``S_{i+1/2} = dx sum_q w_q U_{i-q}``.
    """
    u = np.asarray(u, dtype=float)
    w = np.asarray(w, dtype=float)
    if u.ndim != 1 or w.ndim != 1 or len(w) == 0:
        raise ConvolutionError("spatial_conv expects 1-D state and nonempty weight vector")
    M, K = len(u), len(w)
    out = np.zeros(M + 1)
    # np.convolve is direct summation: full[s] = sum_t v_t u[s - t]
    if orientation == "downstream":
        out[:M] = dx * np.convolve(u, w[::-1])[K - 1 : K - 1 + M]
    elif orientation == "upstream":
        out[1:] = dx * np.convolve(u, w)[:M]
    else:
        raise ConvolutionError(f"unknown kernel orientation {orientation!r}")
    return out


@dataclass
class ConvField:
    """``values[j, k, r]`` = ``c^{j,k}`` at interface ``r`` for time level ``time_index``."""

    values: np.ndarray
    time_index: int

    def for_component(self, k):
        """Stacked arguments ``(c^{1,k}, ..., c^{N,k})`` of the velocity ``nu^k``."""
        return self.values[:, k, :]


class HistoryRing:
    """Fixed-depth ring of spatial-convolution snapshots.

    Storage is ``(channels, depth, M + 1)`` so each channel's history is a
    contiguous block for the weighted reduction.
    """

    def __init__(self, depth, channels, n_interfaces):
        if depth < 1:
            raise ConvolutionError("ring depth must be at least 1")
        self.depth = depth
        self._buf = np.zeros((channels, depth, n_interfaces))
        self.head = -1  # time index of the newest snapshot

    def __len__(self):
        return min(self.head + 1, self.depth)

    def push(self, snapshot, time_index):
        if time_index != self.head + 1:
            raise ConvolutionError(f"snapshots must arrive in order: expected {self.head + 1}, got {time_index}")
        self._buf[:, time_index % self.depth, :] = snapshot
        self.head = time_index

    def snapshot(self, time_index):
        if not (self.head - len(self) < time_index <= self.head):
            raise ConvolutionError(f"time level {time_index} is not held in the ring")
        return self._buf[:, time_index % self.depth, :]

    def weighted_sum(self, masses):
        """``sum_m masses[ch, m] * S^{head - m}[ch]`` for every channel."""
        channels, depth = masses.shape
        if depth != self.depth or channels != self._buf.shape[0]:
            raise ConvolutionError("temporal weights do not match the ring layout")
        if self.head < 0:
            raise ConvolutionError("ring is empty")
        used = len(self)
        slots = (self.head - np.arange(used)) % self.depth
        out = np.empty((channels, self._buf.shape[2]))
        for ch in range(channels):
            if used == 1:
                out[ch] = masses[ch, 0] * self._buf[ch, slots[0]]
            else:
                rolled = np.zeros(self.depth)
                rolled[slots] = masses[ch, :used]
                out[ch] = rolled @ self._buf[ch]
        return out


def memory_conv(ring, g, dt):
    """Memory convolution of a single-channel ring with temporal averages ``g``.

    ``c = dt * sum_{m <= min(n, depth-1)} g_m S^{n-m}``.  A one-cell kernel
    carries its unit mass exactly, so the result equals the newest snapshot.
    """
    g = np.asarray(g, dtype=float)
    if len(g) != ring.depth:
        raise ConvolutionError(f"{len(g)} temporal weights for a ring of depth {ring.depth}")
    masses = np.array([1.0]) if len(g) == 1 else g * dt
    return ring.weighted_sum(masses[None, :])[0]


class ConvPlan:
    """Precomputed weights and channel layout for a model on a grid.

    Entries of the kernel matrix that alias the same ``(j, mu, Gamma)``
    share one channel; the ring stores one snapshot row per channel.
    """

    def __init__(self, model, grid, time_grid, memoryless=False):
        self.n = model.n
        self.dx = grid.dx
        self.dt = time_grid.dt
        self.M = grid.M
        self.memoryless = memoryless
        self.orientation = getattr(model, "orientation", "downstream")
        channel_of = {}
        spatial = {}
        self.channel_index = np.zeros((self.n, self.n), dtype=int)
        self.channel_comp = []
        self.channel_weights = []
        temporal = []
        for j in range(self.n):
            for k in range(self.n):
                mu, gamma = model.kernels[j, k]
                key = (j, id(mu), None if memoryless else id(gamma))
                if key not in channel_of:
                    channel_of[key] = len(self.channel_comp)
                    if id(mu) not in spatial:
                        spatial[id(mu)] = spatial_cell_averages(mu, grid.dx)
                    self.channel_comp.append(j)
                    self.channel_weights.append(spatial[id(mu)])
                    temporal.append(np.array([1.0]) if memoryless else temporal_cell_masses(gamma, self.dt))
                self.channel_index[j, k] = channel_of[key]
        self.channels = len(self.channel_comp)
        self.depth = max(len(t) for t in temporal)
        self.masses = np.zeros((self.channels, self.depth))
        for ch, t in enumerate(temporal):
            self.masses[ch, : len(t)] = t

    def new_ring(self):
        return HistoryRing(self.depth, self.channels, self.M + 1)

    def spatial(self, state):
        """Snapshot rows ``S`` (one per channel) for a state of shape ``(N, M)``."""
        return np.stack(
            [spatial_conv(state[j], w, self.dx, self.orientation) for j, w in zip(self.channel_comp, self.channel_weights)]
        )

    def memory(self, ring):
        chans = ring.weighted_sum(self.masses)
        return ConvField(chans[self.channel_index], ring.head)


def conv_constants(model, samples=100_000):
    """Bounds on first and second interface differences of ``c``.

    Returns arrays ``C5[j, k]`` and ``C6[j, k]`` built from the L1 mass of the
    convolved component ``U^j``, sampled sup norms of the spatial kernel's
    derivatives, and ``||Gamma_delta||_L1 = 1``.
    """
    mass = model.initial_mass()
    n = model.n
    c5 = np.zeros((n, n))
    c6 = np.zeros((n, n))
    cache = {}
    for j in range(n):
        for k in range(n):
            mu, _ = model.kernels[j, k]
            if id(mu) not in cache:
                xs = np.linspace(0.0, mu.eta, samples)
                cache[id(mu)] = (
                    float(np.max(np.abs(mu.derivative(xs, 1)))),
                    float(np.max(np.abs(mu.derivative(xs, 2)))),
                )
            d1, d2 = cache[id(mu)]
            gamma_l1 = 1.0
            c5[j, k] = mass[j] * d1 * gamma_l1
            c6[j, k] = 2.0 * mass[j] * d2 * gamma_l1
    return c5, c6
