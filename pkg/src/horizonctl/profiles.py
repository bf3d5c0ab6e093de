"""Closed-form time profiles and separable space-time data.

Problem data (source, target, constraint radii and bounds) is supplied as
spatial shapes multiplied by one of a small family of time profiles whose
integral tails over (T, infinity) have closed forms. That keeps horizon-
truncation error terms computable without resolving the infinite tail on a
grid.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.integrate import quad


class TailError(ValueError):
    """Requested tail integral does not exist (non-integrable profile)."""


@dataclass(frozen=True)
class TimeProfile:
    """Scalar profile theta(t) on [0, infinity).

    kind:
      - "zero":        theta = 0
      - "const":       theta = c on [0, inf); tails are non-integrable
      - "const_until": theta = c on [0, t1], 0 afterwards
      - "exp":         theta = c * exp(-sigma t), sigma > 0
    """

    kind: str
    c: float = 1.0
    sigma: float = 0.0
    t1: float = 0.0

    def __post_init__(self):
        if self.kind not in ("zero", "const", "const_until", "exp"):
            raise ValueError(f"unknown time profile kind {self.kind!r}")
        if self.kind == "exp" and self.sigma <= 0.0:
            raise ValueError("exp profile needs sigma > 0")
        if self.kind == "const_until" and self.t1 < 0.0:
            raise ValueError("const_until profile needs t1 >= 0")

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        if self.kind == "zero":
            return np.zeros_like(t)
        if self.kind == "const":
            return np.full_like(t, self.c)
        if self.kind == "const_until":
            return np.where(t <= self.t1, self.c, 0.0)
        return self.c * np.exp(-self.sigma * t)

    @property
    def integrable(self) -> bool:
        return self.kind != "const" or self.c == 0.0

    def tail_lp(self, T: float, p: float) -> float:
        """(integral_T^inf |theta|^p dt)^(1/p)."""
        if not self.integrable:
            raise TailError("constant profile has no integrable tail")
        if self.kind == "zero":
            return 0.0
        if self.kind == "const_until":
            if T >= self.t1:
                return 0.0
            return abs(self.c) * (self.t1 - T) ** (1.0 / p)
        # exp: integral_T^inf |c|^p e^{-p sigma t} dt = |c|^p e^{-p sigma T}/(p sigma)
        return abs(self.c) * math.exp(-self.sigma * T) / (p * self.sigma) ** (1.0 / p)

    def tail_l2(self, T: float) -> float:
        return self.tail_lp(T, 2.0)

    def tail_l1(self, T: float) -> float:
        return self.tail_lp(T, 1.0)

    @property
    def sup(self) -> float:
        """Supremum of |theta| over [0, infinity)."""
        if self.kind == "zero":
            return 0.0
        return abs(self.c)


ZERO_PROFILE = TimeProfile("zero", 0.0)


def make_profile(kind: str, c: float = 1.0, sigma: float = 0.0,
                 t1: float = 0.0) -> TimeProfile:
    return TimeProfile(kind, float(c), float(sigma), float(t1))


class EnvelopeProfile:
    """Pointwise maximum of two nonnegative profiles, scaled by a constant.

    Used for the per-slice control bound of box constraints. Tails fall back
    to adaptive quadrature unless both parts share a kind, where the max is
    again a pure profile.
    """

    def __init__(self, p1: TimeProfile, p2: TimeProfile, scale: float = 1.0):
        self.p1 = p1
        self.p2 = p2
        self.scale = float(scale)

    def __call__(self, t):
        return self.scale * np.maximum(np.abs(self.p1(t)), np.abs(self.p2(t)))

    @property
    def integrable(self) -> bool:
        return self.p1.integrable and self.p2.integrable

    @property
    def sup(self) -> float:
        return self.scale * max(self.p1.sup, self.p2.sup)

    def tail_lp(self, T: float, p: float) -> float:
        if not self.integrable:
            raise TailError("envelope tail is non-integrable")
        same_exp = (self.p1.kind == self.p2.kind == "exp"
                    and self.p1.sigma == self.p2.sigma)
        if same_exp:
            merged = TimeProfile("exp", max(abs(self.p1.c), abs(self.p2.c)),
                                 self.p1.sigma)
            return self.scale * merged.tail_lp(T, p)
        if self.p1.kind == self.p2.kind == "const_until":
            merged = TimeProfile("const_until", max(abs(self.p1.c), abs(self.p2.c)),
                                 t1=max(self.p1.t1, self.p2.t1))
            return self.scale * merged.tail_lp(T, p)
        val, _ = quad(lambda t: self(t) ** p, T, np.inf, limit=200)
        return float(val) ** (1.0 / p)

    def tail_l2(self, T: float) -> float:
        return self.tail_lp(T, 2.0)


@dataclass(frozen=True)
class SeparableData:
    """Space-time field G(x) * theta(t) with a closed-form spatial shape.

    ``space`` is a callable of node coordinates (n, dim) -> (n,), a plain
    array over nodes, or a scalar.
    """

    space: object
    time: TimeProfile

    def space_values(self, grid) -> np.ndarray:
        if callable(self.space):
            return np.asarray(self.space(grid.x), dtype=float)
        arr = np.asarray(self.space, dtype=float)
        if arr.ndim == 0:
            return np.full(grid.nnodes, float(arr))
        if arr.shape != (grid.nnodes,):
            raise ValueError("spatial shape does not match the grid")
        return arr

    def sample(self, grid, tg) -> np.ndarray:
        """Evaluate on the full space-time grid, shape (M+1, nnodes)."""
        return np.outer(self.time(tg.nodes), self.space_values(grid))

    def tail_l2(self, grid, T: float) -> float:
        """L2 norm over Omega x (T, infinity), using the grid's spatial norm."""
        gx = self.space_values(grid)
        sn = float(np.sqrt(np.sum(grid.vol * gx ** 2)))
        return sn * self.time.tail_l2(T)
