"""Projected gradient with Armijo backtracking for the finite-horizon problem.

The first-order optimality system is exactly the fixed-point condition of the
projected gradient map for both constraint families, and both projections are
exact, so the stationarity residual uses a fixed unit probe step independent
of the line-search state.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .controls import ControlTrajectory, is_feasible, project_values
from .grid import TimeGrid, inner_control, norm_l2_control, norm_linf
from .objective import eval_cost
from .pde import ProblemSpec, solve_adjoint, solve_forward


class LineSearchStallError(RuntimeError):
    """Backtracking reduced the step below the minimal admissible size."""


@dataclass(frozen=True)
class OptimizerConfig:
    """Projected-gradient parameters.

    ``tol`` scales with 1 + the gradient norm; ``initial`` may be None
    (zero control), an array, or a ControlTrajectory; infeasible starts are
    projected.
    """

    step0: float = 1.0
    backtrack: float = 0.5
    armijo: float = 1e-4
    tol: float = 1e-8
    max_iters: int = 500
    min_step: float = 1e-14
    initial: object = None

    def __post_init__(self):
        if self.step0 <= 0.0:
            raise ValueError("initial step must be positive")
        if not 0.0 < self.backtrack < 1.0:
            raise ValueError("backtracking factor must lie in (0, 1)")
        if not 0.0 < self.armijo < 1.0:
            raise ValueError("sufficient-decrease parameter must lie in (0, 1)")
        if self.tol <= 0.0 or self.max_iters < 0:
            raise ValueError("tolerance must be positive and iteration cap >= 0")


@dataclass
class SolveReport:
    """Outcome of one finite-horizon minimization."""

    converged: bool
    iterations: int
    cost: float
    residual: float
    cost_history: list = field(default_factory=list)
    residual_history: list = field(default_factory=list)
    control: ControlTrajectory = None
    state: np.ndarray = None
    adjoint: np.ndarray = None


def stationarity_residual(spec: ProblemSpec, aset, u_values, grad_omega,
                          tg: TimeGrid) -> float:
    """Distance to the unit-probe-step projected-gradient fixed point."""
    probe = project_values(aset, u_values - grad_omega, spec.omega_vol, tg)
    return norm_l2_control(u_values - probe, spec.omega_vol, tg)


def _initial_control(spec: ProblemSpec, aset, tg: TimeGrid, cfg: OptimizerConfig):
    init = cfg.initial
    if init is None:
        vals = np.zeros((tg.M + 1, spec.n_omega))
    elif isinstance(init, ControlTrajectory):
        vals = init.values.copy()
    else:
        vals = np.asarray(init, dtype=float).copy()
    return project_values(aset, vals, spec.omega_vol, tg)


def minimize_tracking(spec: ProblemSpec, aset, tg: TimeGrid,
                      cfg: OptimizerConfig) -> SolveReport:
    """Minimize the tracking cost over the admissible set on one horizon.

    Iterates u+ = project(u - s * gradient) with Armijo backtracking along
    the projection arc; the cost sequence is nonincreasing by construction.
    Hitting the iteration cap returns a non-converged report; a stalled line
    search raises.
    """
    return _minimize(spec, aset, tg, cfg, rho=np.inf, y_ref=None)


def minimize_tracking_localized(spec: ProblemSpec, aset, tg: TimeGrid,
                                cfg: OptimizerConfig, rho: float,
                                y_ref: np.ndarray) -> SolveReport:
    """Same iteration, but reject steps whose state leaves the sup-norm tube
    of radius ``rho`` around ``y_ref`` (used to track one designated local
    solution across horizons)."""
    if not np.isinf(rho) and y_ref is None:
        raise ValueError("a reference state is required for a finite tube")
    return _minimize(spec, aset, tg, cfg, rho=rho, y_ref=y_ref)


def _in_tube(y, y_ref, rho) -> bool:
    if np.isinf(rho):
        return True
    return norm_linf(y - y_ref) <= rho


def _minimize(spec, aset, tg, cfg, rho, y_ref) -> SolveReport:
    vols = spec.omega_vol
    u = _initial_control(spec, aset, tg, cfg)
    y = solve_forward(spec, u, tg)
    if not _in_tube(y, y_ref, rho):
        raise ValueError("initial state lies outside the localization tube")
    phi = solve_adjoint(spec, y, tg)
    grad = phi[:, spec.omega]
    cost = eval_cost(spec, u, tg, state=y)

    report = SolveReport(False, 0, cost, np.inf)
    step = cfg.step0
    u_prev = grad_prev = None
    for it in range(cfg.max_iters + 1):
        res = stationarity_residual(spec, aset, u, grad, tg)
        tol_eff = cfg.tol * (1.0 + norm_l2_control(grad, vols, tg))
        report.cost_history.append(cost)
        report.residual_history.append(res)
        report.iterations = it
        report.cost = cost
        report.residual = res
        if res <= tol_eff:
            report.converged = True
            break
        if it == cfg.max_iters:
            break

        # spectral (secant-based) trial step, safeguarded around step0
        if u_prev is not None:
            du = u - u_prev
            dg = grad - grad_prev
            num = inner_control(du, du, vols, tg)
            den = inner_control(du, dg, vols, tg)
            if den > 0.0:
                step = min(max(num / den, 1e-8 * cfg.step0), 1e8 * cfg.step0)
        u_prev, grad_prev = u, grad

        # monotone Armijo backtracking along the projection arc; the roundoff
        # slack keeps the search alive once decrements drop below what the
        # floating-point cost can resolve
        accepted = False
        slack = 4.0 * np.finfo(float).eps * (1.0 + abs(cost))
        while step >= cfg.min_step:
            cand = project_values(aset, u - step * grad, vols, tg)
            d = cand - u
            slope = inner_control(grad, d, vols, tg)
            y_cand = solve_forward(spec, cand, tg)
            cost_cand = eval_cost(spec, cand, tg, state=y_cand)
            if cost_cand <= cost + cfg.armijo * slope + slack \
                    and _in_tube(y_cand, y_ref, rho):
                accepted = True
                break
            step *= cfg.backtrack
        if not accepted:
            raise LineSearchStallError(
                f"line search stalled below {cfg.min_step:.1e} at iteration {it}")

        u, y, cost = cand, y_cand, cost_cand
        phi = solve_adjoint(spec, y, tg)
        grad = phi[:, spec.omega]

    report.control = ControlTrajectory(u, aset)
    report.state = y
    report.adjoint = phi
    assert is_feasible(aset, u, vols, tg)
    return report
