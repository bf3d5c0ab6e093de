"""Admissible control sets, projections, horizon extension, and critical cones.

Two constraint families are supported: per-slice L2 balls whose radius is a
positive decaying time profile, and pointwise box bounds alpha <= u <= beta
with alpha <= 0 <= beta. Both admit cheap exact metric projections, which the
optimizer and the first-order verification rows rely on.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .grid import Grid, TimeGrid, step_weights, trap_weights
from .profiles import EnvelopeProfile, TimeProfile


class SamplingExhaustedWarning(UserWarning):
    """The cone sampler ran out of retry budget before filling the request."""


@dataclass(frozen=True)
class BallSet:
    """Per-slice L2 ball of radius gamma(t) on the control region."""

    gamma: TimeProfile

    kind = "ball"

    def __post_init__(self):
        if not self.gamma.integrable:
            raise ValueError("ball radius must have integrable tails")

    def radius(self, tg: TimeGrid) -> np.ndarray:
        r = self.gamma(tg.nodes)
        if np.any(r <= 0.0):
            raise ValueError("ball radius must be positive at every time node")
        return r

    def envelope(self):
        return self.gamma


@dataclass(frozen=True)
class BoxSet:
    """Pointwise bounds alpha <= u <= beta on the region, alpha <= 0 <= beta.

    Bounds are spatial constants times a time profile; ``alpha_c`` must be
    <= 0 and ``beta_c`` >= 0 so that zero stays feasible at all times.
    """

    alpha_c: float
    alpha_profile: TimeProfile
    beta_c: float
    beta_profile: TimeProfile

    kind = "box"

    def __post_init__(self):
        if self.alpha_c > 0.0 or self.beta_c < 0.0:
            raise ValueError("box bounds must satisfy alpha <= 0 <= beta")

    def bounds(self, tg: TimeGrid, n_omega: int):
        """Lower and upper bound arrays, each (M+1, n_omega)."""
        lo = np.outer(self.alpha_c * self.alpha_profile(tg.nodes), np.ones(n_omega))
        hi = np.outer(self.beta_c * self.beta_profile(tg.nodes), np.ones(n_omega))
        if np.any(lo >= hi):
            raise ValueError("box bounds must satisfy alpha < beta at every node")
        return lo, hi

    def envelope(self):
        return EnvelopeProfile(
            TimeProfile(self.alpha_profile.kind, abs(self.alpha_c),
                        self.alpha_profile.sigma, self.alpha_profile.t1),
            TimeProfile(self.beta_profile.kind, abs(self.beta_c),
                        self.beta_profile.sigma, self.beta_profile.t1))


@dataclass
class ControlTrajectory:
    """Control values on region nodes per time slice, with its feasible set."""

    values: np.ndarray
    aset: object = None

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)

    def copy(self) -> "ControlTrajectory":
        return ControlTrajectory(self.values.copy(), self.aset)


def slice_norms(values: np.ndarray, omega_vol: np.ndarray) -> np.ndarray:
    """Spatial L2 norm of every time slice."""
    return np.sqrt(np.sum(values ** 2 * omega_vol[None, :], axis=1))


def project_values(aset, values: np.ndarray, omega_vol: np.ndarray,
                   tg: TimeGrid) -> np.ndarray:
    """Metric projection onto the admissible set, slice by slice."""
    values = np.asarray(values, dtype=float)
    if aset.kind == "ball":
        r = aset.radius(tg)
        norms = slice_norms(values, omega_vol)
        scale = np.ones_like(norms)
        hit = norms > r
        scale[hit] = r[hit] / norms[hit]
        return values * scale[:, None]
    lo, hi = aset.bounds(tg, values.shape[1])
    return np.clip(values, lo, hi)


def project(aset, u: ControlTrajectory, omega_vol: np.ndarray,
            tg: TimeGrid) -> ControlTrajectory:
    return ControlTrajectory(project_values(aset, u.values, omega_vol, tg), aset)


def envelope(aset):
    """Per-slice L2 bound valid for every feasible control.

    For balls this is the radius profile itself; for boxes it is the slice
    norm of the dominating bound, which is the scalar envelope times the
    square root of the region measure once the region is known.
    """
    return aset.envelope()


def envelope_values(aset, tg: TimeGrid, omega_vol: np.ndarray) -> np.ndarray:
    """Evaluate the envelope h(t) at the time nodes for a concrete region."""
    prof = aset.envelope()
    h = np.asarray(prof(tg.nodes), dtype=float)
    if aset.kind == "box":
        h = h * np.sqrt(float(omega_vol.sum()))
    return h


def is_feasible(aset, values: np.ndarray, omega_vol: np.ndarray, tg: TimeGrid,
                rtol: float = 1e-10) -> bool:
    values = np.asarray(values, dtype=float)
    if aset.kind == "ball":
        r = aset.radius(tg)
        return bool(np.all(slice_norms(values, omega_vol) <= r * (1.0 + rtol)))
    lo, hi = aset.bounds(tg, values.shape[1])
    span = np.max(hi - lo)
    return bool(np.all(values >= lo - rtol * span)
                and np.all(values <= hi + rtol * span))


def sample_feasible(aset, omega_vol: np.ndarray, tg: TimeGrid, n_omega: int,
                    rng: np.random.Generator) -> np.ndarray:
    """Draw one random feasible control trajectory."""
    if aset.kind == "ball":
        r = aset.radius(tg)
        v = rng.standard_normal((tg.M + 1, n_omega))
        norms = slice_norms(v, omega_vol)
        norms[norms == 0.0] = 1.0
        frac = rng.uniform(0.0, 1.0, size=tg.M + 1)
        return v * (frac * r / norms)[:, None]
    lo, hi = aset.bounds(tg, n_omega)
    return lo + (hi - lo) * rng.uniform(0.0, 1.0, size=(tg.M + 1, n_omega))


def extend_by_zero(u: ControlTrajectory, tg_short: TimeGrid,
                   tg_long: TimeGrid) -> ControlTrajectory:
    """Extend a control to a longer grid by zero past the short horizon.

    The short grid must be a prefix of the long one; zero is feasible for
    both constraint families, so feasibility is preserved slice-wise.
    """
    if not tg_short.is_prefix_of(tg_long):
        from .grid import AlignmentError
        raise AlignmentError("short time grid is not a prefix of the long one")
    values = np.zeros((tg_long.M + 1, u.values.shape[1]))
    values[: tg_short.M + 1] = u.values
    return ControlTrajectory(values, u.aset)


def restrict(values: np.ndarray, tg_long: TimeGrid, tg_short: TimeGrid) -> np.ndarray:
    """Restrict a trajectory on the long grid to a prefix grid."""
    if not tg_short.is_prefix_of(tg_long):
        from .grid import AlignmentError
        raise AlignmentError("target grid is not a prefix of the source grid")
    return np.asarray(values)[: tg_short.M + 1].copy()


@dataclass(frozen=True)
class ConeSpec:
    """Parameters of the relaxed critical cones.

    ``tau`` is the relaxation level; ``active_tol`` detects active bounds or
    active radius slices relative to their local scale; ``multiplier_tol``
    detects slices whose adjoint slice norm counts as positive.
    """

    tau: float
    active_tol: float = 1e-8
    multiplier_tol: float = 1e-8

    def __post_init__(self):
        if self.tau <= 0.0:
            raise ValueError("cone relaxation must be positive")


def box_active_sets(aset: BoxSet, u_bar: np.ndarray, tg: TimeGrid,
                    active_tol: float):
    lo, hi = aset.bounds(tg, u_bar.shape[1])
    span = hi - lo
    at_lower = (u_bar - lo) <= active_tol * span
    at_upper = (hi - u_bar) <= active_tol * span
    return at_lower, at_upper


def ball_active_slices(aset: BallSet, u_bar: np.ndarray, omega_vol, tg: TimeGrid,
                       active_tol: float) -> np.ndarray:
    r = aset.radius(tg)
    return (r - slice_norms(u_bar, omega_vol)) <= active_tol * r


def critical_cone_membership(cone: ConeSpec, aset, u_bar, phi_omega, v, z_v,
                             grid: Grid, omega_mask, tg: TimeGrid,
                             slack: float = 1e-10) -> dict:
    """Slice and integral membership conditions of the critical cones.

    Returns one boolean per cone family. ``phi_omega`` is the adjoint
    restricted to the region, ``z_v`` the linearized state driven by ``v``.
    """
    omega_vol = grid.vol[omega_mask]
    w = step_weights(tg)
    jpv = float(np.dot(w, np.sum(phi_omega * v * omega_vol[None, :], axis=1)))
    z_l1 = float(np.dot(trap_weights(tg),
                        np.sum(np.abs(z_v) * grid.vol[None, :], axis=1)))
    vscale = max(1.0, float(np.max(np.abs(v))) if v.size else 1.0)

    if aset.kind == "box":
        at_lower, at_upper = box_active_sets(aset, u_bar, tg, cone.active_tol)
        sign_ok = bool(np.all(v[at_lower] >= -slack * vscale)
                       and np.all(v[at_upper] <= slack * vscale))
        vanish_ok = sign_ok and bool(
            np.all(np.abs(v[np.abs(phi_omega) > cone.tau]) <= slack * vscale))
        growth_ok = sign_ok and (jpv <= cone.tau * z_l1 + slack)
        return {"sign": sign_ok, "vanish": vanish_ok, "growth": growth_ok,
                "critical": vanish_ok and growth_ok}

    active = ball_active_slices(aset, u_bar, omega_vol, tg, cone.active_tol)
    inner_t = np.sum(u_bar * v * omega_vol[None, :], axis=1)
    uscale = np.maximum(1.0, slice_norms(u_bar, omega_vol) * slice_norms(v, omega_vol))
    slice_ok = bool(np.all(inner_t[active] <= slack * uscale[active]))
    lam = slice_norms(phi_omega, omega_vol)
    r = aset.radius(tg)
    integral = float(np.dot(w, lam / r * inner_t))
    integral_ok = integral >= -cone.tau * z_l1 - slack
    return {"slice": slice_ok, "integral": integral_ok,
            "critical": slice_ok and integral_ok}


def sample_critical_directions(cone: ConeSpec, spec, aset, u_bar, phi_omega,
                               count: int, rng: np.random.Generator,
                               tg: TimeGrid, retry_factor: int = 20):
    """Draw random directions and repair them into the critical cone.

    Returns a list of (direction, linearized state) pairs; each returned
    direction passes ``critical_cone_membership``. Emits a warning and a
    partial list when the retry budget runs out.
    """
    from .pde import solve_forward, solve_linearized

    omega_vol = spec.omega_vol
    n_omega = spec.n_omega
    y_bar = solve_forward(spec, u_bar, tg)
    out = []
    budget = max(count * retry_factor, count)
    attempts = 0
    eta = 1.0  # support restriction level for the box growth condition
    while len(out) < count and attempts < budget:
        attempts += 1
        v = rng.standard_normal((tg.M + 1, n_omega))
        if aset.kind == "box":
            at_lower, at_upper = box_active_sets(aset, u_bar, tg, cone.active_tol)
            v[at_lower] = np.abs(v[at_lower])
            v[at_upper] = -np.abs(v[at_upper])
            # restrict support to nodes where the adjoint is small enough for
            # the growth condition to have room; widen again after successes
            v[np.abs(phi_omega) > eta * cone.tau] = 0.0
        else:
            active = ball_active_slices(aset, u_bar, omega_vol, tg, cone.active_tol)
            lam = slice_norms(phi_omega, omega_vol)
            strict = lam > cone.multiplier_tol * max(float(np.max(lam)), 1e-300)
            norms2 = np.sum(u_bar ** 2 * omega_vol[None, :], axis=1)
            inner_t = np.sum(u_bar * v * omega_vol[None, :], axis=1)
            safe = np.where(norms2 > 0.0, norms2, 1.0)
            # radially orthogonal where the multiplier is positive, inward-
            # pointing on the remaining active slices
            coef = np.where(active & strict, inner_t / safe,
                            np.where(active, np.maximum(inner_t, 0.0) / safe,
                                     0.0))
            v = v - coef[:, None] * u_bar
        if not np.any(v):
            eta = max(0.5 * eta, 1e-9)
            continue
        z_v = solve_linearized(spec, y_bar, v, tg)
        member = critical_cone_membership(cone, aset, u_bar, phi_omega, v, z_v,
                                          spec.grid, spec.omega, tg)
        if member["critical"]:
            out.append((v, z_v))
            eta = min(1.0, 1.5 * eta)
        else:
            eta = max(0.5 * eta, 1e-9)
    if len(out) < count:
        warnings.warn(
            f"cone sampler produced {len(out)} of {count} requested directions",
            SamplingExhaustedWarning)
    return out
