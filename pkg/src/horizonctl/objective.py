"""Tracking cost, adjoint gradient, Hessian forms, and the ball-constraint Lagrangian.

All derivatives are exact for the discrete cost (the adjoint stepping is the
transpose of the linearized stepping), so finite-difference checks hold to
machine-dominated tolerance rather than discretization order.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .controls import slice_norms
from .grid import TimeGrid, inner_control, inner_spacetime, step_weights, trap_weights
from .pde import ProblemSpec, solve_adjoint, solve_forward, solve_linearized


@dataclass
class ObjectiveEval:
    """Cost value with its gradient representative and the trajectories behind it.

    The gradient representative is the adjoint restricted to the control
    region, nodewise.
    """

    value: float
    gradient: np.ndarray
    state: np.ndarray
    adjoint: np.ndarray


def eval_cost(spec: ProblemSpec, u_values, tg: TimeGrid, state=None) -> float:
    """Half the squared space-time misfit of the tracked state."""
    y = solve_forward(spec, u_values, tg) if state is None else state
    r = y - spec.sample_data(spec.y_d, tg)
    return 0.5 * inner_spacetime(r, r, spec.grid.vol, tg)


def eval_gradient(spec: ProblemSpec, u_values, tg: TimeGrid) -> ObjectiveEval:
    """Cost, gradient representative, and the state/adjoint pair."""
    y = solve_forward(spec, u_values, tg)
    phi = solve_adjoint(spec, y, tg)
    r = y - spec.sample_data(spec.y_d, tg)
    value = 0.5 * inner_spacetime(r, r, spec.grid.vol, tg)
    return ObjectiveEval(value, phi[:, spec.omega], y, phi)


def directional_derivative(spec: ProblemSpec, grad_omega: np.ndarray, v_values,
                           tg: TimeGrid) -> float:
    """Pair a gradient representative with a direction on the region."""
    return inner_control(grad_omega, v_values, spec.omega_vol, tg)


def eval_hessian_form(spec: ProblemSpec, u_values, v1, v2, tg: TimeGrid,
                      state=None, adjoint=None) -> float:
    """Second-derivative bilinear form via two sensitivity solves.

    Symmetric in the two directions; equals the exact Hessian of the
    discrete cost: the tracking part pairs sensitivities with the state
    quadrature, the curvature part enters through the adjoint and therefore
    carries the step-weighted pairing.
    """
    y = solve_forward(spec, u_values, tg) if state is None else state
    phi = solve_adjoint(spec, y, tg) if adjoint is None else adjoint
    z1 = solve_linearized(spec, y, np.asarray(v1, dtype=float), tg)
    z2 = solve_linearized(spec, y, np.asarray(v2, dtype=float), tg)
    return hessian_form_from_states(spec, y, phi, z1, z2, tg)


def hessian_form_from_states(spec: ProblemSpec, y, phi, z1, z2,
                             tg: TimeGrid) -> float:
    """Hessian form when the state, adjoint and sensitivities are in hand."""
    vol = spec.grid.vol
    track = np.sum(z1 * z2 * vol[None, :], axis=1)
    curv = np.sum(phi * spec.nonlinearity.fpp(y) * z1 * z2 * vol[None, :],
                  axis=1)
    return float(np.dot(trap_weights(tg), track)
                 - np.dot(step_weights(tg), curv))


# ---------------------------------------------------------------------------
# Lagrangian of the ball-constrained problem.

def _gamma_nodes(gamma, tg: TimeGrid) -> np.ndarray:
    g = np.asarray(gamma(tg.nodes) if callable(gamma) else gamma, dtype=float)
    if np.any(g <= 0.0):
        raise ValueError("radius must be positive at every time node")
    return g


def eval_lagrangian(spec: ProblemSpec, u_values, lam, gamma, tg: TimeGrid,
                    state=None) -> float:
    """Cost plus the radius-weighted quadratic penalty of the ball constraint."""
    g = _gamma_nodes(gamma, tg)
    lam = np.asarray(lam, dtype=float)
    value = eval_cost(spec, u_values, tg, state=state)
    w = step_weights(tg)
    sq = np.sum(np.asarray(u_values) ** 2 * spec.omega_vol[None, :], axis=1)
    return value + 0.5 * float(np.dot(w * lam / g, sq))


def lagrangian_gradient_rep(spec: ProblemSpec, u_values, lam, gamma,
                            tg: TimeGrid, adjoint_omega=None) -> np.ndarray:
    """Region representative of the Lagrangian's first derivative form."""
    g = _gamma_nodes(gamma, tg)
    lam = np.asarray(lam, dtype=float)
    if adjoint_omega is None:
        adjoint_omega = eval_gradient(spec, u_values, tg).gradient
    return adjoint_omega + (lam / g)[:, None] * np.asarray(u_values)


def lagrangian_hessian_form(spec: ProblemSpec, u_values, lam, gamma, v1, v2,
                            tg: TimeGrid, state=None, adjoint=None) -> float:
    """Second derivative form of the Lagrangian in directions v1, v2."""
    g = _gamma_nodes(gamma, tg)
    lam = np.asarray(lam, dtype=float)
    base = eval_hessian_form(spec, u_values, v1, v2, tg, state=state,
                             adjoint=adjoint)
    w = step_weights(tg)
    s = np.sum(np.asarray(v1) * np.asarray(v2) * spec.omega_vol[None, :], axis=1)
    return base + float(np.dot(w * lam / g, s))


@dataclass
class LagrangeData:
    """Slice multiplier with the active and strictly-active slice sets.

    The multiplier is the slice norm of the adjoint over the control region;
    it vanishes wherever the radius constraint is inactive (complementarity).
    """

    lam: np.ndarray
    active: np.ndarray
    strictly_active: np.ndarray


def compute_multiplier(phi_omega: np.ndarray, u_bar: np.ndarray, gamma,
                       omega_vol: np.ndarray, tg: TimeGrid,
                       active_tol: float = 1e-8,
                       multiplier_tol: float = 1e-8) -> LagrangeData:
    g = _gamma_nodes(gamma, tg)
    lam = slice_norms(np.asarray(phi_omega, dtype=float), omega_vol)
    u_norms = slice_norms(np.asarray(u_bar, dtype=float), omega_vol)
    active = (g - u_norms) <= active_tol * g
    lam_scale = float(np.max(np.abs(phi_omega))) if phi_omega.size else 0.0
    strictly_active = active & (lam > multiplier_tol * max(lam_scale, 1e-300))
    return LagrangeData(lam, active, strictly_active)
