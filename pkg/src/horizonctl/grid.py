"""Structured spatial grids, time grids, and the discrete norms shared by all solvers.

Spatial domains are intervals (dim 1) or axis-aligned rectangles (dim 2) with
cell-centered nodes; cell volumes double as the quadrature weights of every
spatial integral. Time integrals use the trapezoidal rule, windowed variants
included, so that squared norms are additive across adjacent windows.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


class AlignmentError(ValueError):
    """A time window or grid pairing does not line up with existing nodes."""


@dataclass(frozen=True)
class Grid:
    """Cell-centered structured grid on an interval or rectangle.

    Attributes
    ----------
    dim : int
        Spatial dimension, 1 or 2.
    shape : tuple of int
        Node count per axis, each at least 3.
    extents : tuple of float
        Domain edge lengths per axis; the domain is (0, L1) x (0, L2).
    coords : tuple of ndarray
        1D node coordinate arrays per axis (cell centers).
    x : ndarray, shape (nnodes, dim)
        Flattened node coordinates, C order over ``shape``.
    vol : ndarray, shape (nnodes,)
        Cell volumes; strictly positive, summing to the domain measure.
    boundary : ndarray
        Flat indices of nodes on the boundary of the index lattice.
    """

    dim: int
    shape: tuple
    extents: tuple
    coords: tuple = field(repr=False)
    x: np.ndarray = field(repr=False)
    vol: np.ndarray = field(repr=False)
    boundary: np.ndarray = field(repr=False)

    def __post_init__(self):
        if self.dim not in (1, 2):
            raise ValueError(f"dim must be 1 or 2, got {self.dim}")
        if any(n < 3 for n in self.shape):
            raise ValueError(f"need at least 3 nodes per axis, got {self.shape}")
        if np.any(self.vol <= 0.0):
            raise ValueError("cell volumes must be strictly positive")
        measure = float(np.prod(self.extents))
        if abs(float(self.vol.sum()) - measure) > 1e-12 * max(1.0, measure):
            raise ValueError("cell volumes do not sum to the domain measure")

    @property
    def nnodes(self) -> int:
        return int(np.prod(self.shape))

    @property
    def spacing(self) -> tuple:
        return tuple(L / n for L, n in zip(self.extents, self.shape))

    @staticmethod
    def interval(length: float, nx: int) -> "Grid":
        """Uniform 1D grid of ``nx`` cells on (0, length)."""
        h = length / nx
        xs = (np.arange(nx) + 0.5) * h
        vol = np.full(nx, h)
        boundary = np.array([0, nx - 1])
        return Grid(1, (nx,), (float(length),), (xs,), xs[:, None].copy(),
                    vol, boundary)

    @staticmethod
    def rectangle(lx: float, ly: float, nx: int, ny: int) -> "Grid":
        """Uniform 2D grid of ``nx`` x ``ny`` cells on (0, lx) x (0, ly)."""
        hx, hy = lx / nx, ly / ny
        xs = (np.arange(nx) + 0.5) * hx
        ys = (np.arange(ny) + 0.5) * hy
        ix, iy = np.meshgrid(np.arange(nx), np.arange(ny), indexing="ij")
        pts = np.column_stack([xs[ix.ravel()], ys[iy.ravel()]])
        vol = np.full(nx * ny, hx * hy)
        on_edge = (ix == 0) | (ix == nx - 1) | (iy == 0) | (iy == ny - 1)
        boundary = np.flatnonzero(on_edge.ravel())
        return Grid(2, (nx, ny), (float(lx), float(ly)), (xs, ys), pts,
                    vol, boundary)

    def box_mask(self, lo, hi) -> np.ndarray:
        """Boolean node mask of the closed axis-aligned box [lo, hi]."""
        lo = np.atleast_1d(np.asarray(lo, dtype=float))
        hi = np.atleast_1d(np.asarray(hi, dtype=float))
        mask = np.ones(self.nnodes, dtype=bool)
        for d in range(self.dim):
            mask &= (self.x[:, d] >= lo[d]) & (self.x[:, d] <= hi[d])
        return mask


@dataclass(frozen=True)
class TimeGrid:
    """Strictly increasing time nodes 0 = t_0 < ... < t_M = T."""

    nodes: np.ndarray

    def __post_init__(self):
        t = np.asarray(self.nodes, dtype=float)
        object.__setattr__(self, "nodes", t)
        if t.ndim != 1 or t.size < 2:
            raise ValueError("need at least two time nodes")
        if abs(t[0]) > 0.0:
            raise ValueError("time grid must start at 0")
        if np.any(np.diff(t) <= 0.0):
            raise ValueError("time nodes must be strictly increasing")

    @property
    def T(self) -> float:
        return float(self.nodes[-1])

    @property
    def M(self) -> int:
        return self.nodes.size - 1

    @property
    def dt(self) -> np.ndarray:
        """Step sizes, length M."""
        return np.diff(self.nodes)

    @staticmethod
    def uniform(T: float, M: int) -> "TimeGrid":
        return TimeGrid(np.linspace(0.0, float(T), M + 1))

    @staticmethod
    def geometric(T: float, M: int, ratio: float) -> "TimeGrid":
        """Grid whose step sizes grow by a constant ratio in [1, 1.2]."""
        if not 1.0 <= ratio <= 1.2:
            raise ValueError(f"grading ratio must lie in [1, 1.2], got {ratio}")
        if ratio == 1.0:
            return TimeGrid.uniform(T, M)
        weights = ratio ** np.arange(M)
        dts = float(T) * weights / weights.sum()
        nodes = np.concatenate([[0.0], np.cumsum(dts)])
        nodes[-1] = float(T)  # kill cumulative-sum roundoff at the endpoint
        return TimeGrid(nodes)

    def extended_uniform(self, T_new: float) -> "TimeGrid":
        """Append uniform steps of the trailing step size up to ``T_new``.

        The current grid remains a prefix of the result; ``T_new`` must be a
        whole number of trailing steps away.
        """
        if T_new < self.T:
            raise ValueError("extension target is shorter than the grid")
        dt = float(self.dt[-1])
        n_extra = (T_new - self.T) / dt
        n = int(round(n_extra))
        if abs(n_extra - n) > 1e-9:
            raise AlignmentError(
                f"T={T_new} is not a whole number of steps {dt} past T={self.T}")
        extra = self.nodes[-1] + dt * np.arange(1, n + 1)
        return TimeGrid(np.concatenate([self.nodes, extra]))

    def is_prefix_of(self, other: "TimeGrid") -> bool:
        if other.M < self.M:
            return False
        scale = max(1.0, self.T)
        return bool(np.all(np.abs(other.nodes[: self.M + 1] - self.nodes)
                           <= 1e-12 * scale))

    def window_index(self, t: float) -> int:
        """Index of the node equal to ``t``; AlignmentError otherwise."""
        idx = int(np.searchsorted(self.nodes, t))
        for k in (idx - 1, idx, idx + 1):
            if 0 <= k <= self.M and abs(self.nodes[k] - t) <= 1e-12 * max(1.0, self.T):
                return k
        raise AlignmentError(f"t={t} does not align with any time node")


def trap_weights(tg: TimeGrid, window=None) -> np.ndarray:
    """Trapezoidal time-quadrature weights over [0, T] or a node-aligned window.

    Windowed weights satisfy exact additivity: the weights of [0, a] and
    [a, T] sum nodewise to the weights of [0, T]. Used for nodal state
    trajectories.
    """
    dt = tg.dt
    w = np.zeros(tg.M + 1)
    if window is None:
        i0, i1 = 0, tg.M
    else:
        a, b = window
        i0, i1 = tg.window_index(a), tg.window_index(b)
        if i1 < i0:
            raise AlignmentError("window endpoints are out of order")
    if i1 > i0:
        w[i0:i1] += 0.5 * dt[i0:i1]
        w[i0 + 1:i1 + 1] += 0.5 * dt[i0:i1]
    return w


def step_weights(tg: TimeGrid, window=None) -> np.ndarray:
    """Right-endpoint step weights: slice m carries its step size, slice 0
    carries nothing.

    This is the quadrature dual to implicit Euler, used for control-side
    integrals: a control value at slice m acts on the step ending there, so
    extension by zero preserves these norms exactly and the discrete
    gradient pairing is exact.
    """
    dt = tg.dt
    w = np.zeros(tg.M + 1)
    if window is None:
        i0, i1 = 0, tg.M
    else:
        a, b = window
        i0, i1 = tg.window_index(a), tg.window_index(b)
        if i1 < i0:
            raise AlignmentError("window endpoints are out of order")
    w[i0 + 1:i1 + 1] = dt[i0:i1]
    return w


# ---------------------------------------------------------------------------
# Discrete norms. ``vols`` is the cell-volume vector of whichever node set the
# values live on (all of the domain, or the control region only).

def norm_l2_space(field: np.ndarray, vols: np.ndarray) -> float:
    """Spatial L2 norm of a single field."""
    return float(np.sqrt(np.sum(vols * np.asarray(field) ** 2)))


def norm_l2_spacetime(values, vols, tg: TimeGrid, window=None) -> float:
    """Space-time L2 norm, trapezoidal in time, over [0,T] or a window."""
    w = trap_weights(tg, window)
    sq = np.sum(np.asarray(values) ** 2 * vols[None, :], axis=1)
    return float(np.sqrt(np.dot(w, sq)))


def norm_l1_spacetime(values, vols, tg: TimeGrid, window=None) -> float:
    w = trap_weights(tg, window)
    s = np.sum(np.abs(np.asarray(values)) * vols[None, :], axis=1)
    return float(np.dot(w, s))


def norm_linf(values) -> float:
    """Max absolute value over all nodes of a field or trajectory."""
    return float(np.max(np.abs(values)))


def norm_lp_of_l2(values, vols, tg: TimeGrid, p: float, window=None) -> float:
    """Mixed norm: L^p in time of the spatial L2 norm, p >= 2."""
    if p < 2:
        raise ValueError(f"exponent must satisfy p >= 2, got {p}")
    w = trap_weights(tg, window)
    slice_norms = np.sqrt(np.sum(np.asarray(values) ** 2 * vols[None, :], axis=1))
    if np.isinf(p):
        return float(np.max(slice_norms[w > 0])) if np.any(w > 0) else 0.0
    return float(np.dot(w, slice_norms ** p) ** (1.0 / p))


def inner_spacetime(a, b, vols, tg: TimeGrid, window=None) -> float:
    """Trapezoidal space-time inner product of two state trajectories."""
    w = trap_weights(tg, window)
    s = np.sum(np.asarray(a) * np.asarray(b) * vols[None, :], axis=1)
    return float(np.dot(w, s))


# ---------------------------------------------------------------------------
# Control-side norms (step weights in time).

def norm_l2_control(values, vols, tg: TimeGrid, window=None) -> float:
    w = step_weights(tg, window)
    sq = np.sum(np.asarray(values) ** 2 * vols[None, :], axis=1)
    return float(np.sqrt(np.dot(w, sq)))


def norm_l1_control(values, vols, tg: TimeGrid, window=None) -> float:
    w = step_weights(tg, window)
    s = np.sum(np.abs(np.asarray(values)) * vols[None, :], axis=1)
    return float(np.dot(w, s))


def inner_control(a, b, vols, tg: TimeGrid, window=None) -> float:
    w = step_weights(tg, window)
    s = np.sum(np.asarray(a) * np.asarray(b) * vols[None, :], axis=1)
    return float(np.dot(w, s))


def norm_l2_weighted(values, vols, tg: TimeGrid, gamma_nodes) -> float:
    """Control norm weighted by 1/gamma(t) in time (constraint-weighted space)."""
    g = np.asarray(gamma_nodes, dtype=float)
    if np.any(g <= 0.0):
        raise ValueError("time weight must be strictly positive at all nodes")
    w = step_weights(tg)
    sq = np.sum(np.asarray(values) ** 2 * vols[None, :], axis=1)
    return float(np.sqrt(np.dot(w / g, sq)))
