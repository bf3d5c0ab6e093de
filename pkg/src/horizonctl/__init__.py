"""Tracking control of semilinear parabolic equations without control-cost
regularization: finite-horizon solves under ball or box control constraints,
horizon continuation toward the infinite-horizon problem, and executable
verification of the first- and second-order optimality theory.
"""

from .controls import (BallSet, BoxSet, ConeSpec, ControlTrajectory,
                       extend_by_zero, project)
from .grid import Grid, TimeGrid
from .horizon import HorizonPlan, HorizonReport, run_ladder, tail_norms
from .objective import (ObjectiveEval, eval_cost, eval_gradient,
                        eval_hessian_form, eval_lagrangian)
from .optimizer import (OptimizerConfig, SolveReport, minimize_tracking,
                        minimize_tracking_localized)
from .pde import (EllipticOperator, NONLINEARITIES, ProblemSpec, make_problem,
                  solve_adjoint, solve_forward, solve_linearized,
                  solve_second_order, solve_steady_unit)
from .profiles import SeparableData, TimeProfile
from .scenarios import SCENARIOS, build_scenario
from .verify import VerifyReport, oracle_dense, run_all

__version__ = "0.1.0"

__all__ = [
    "BallSet", "BoxSet", "ConeSpec", "ControlTrajectory", "EllipticOperator",
    "Grid", "HorizonPlan", "HorizonReport", "NONLINEARITIES", "ObjectiveEval",
    "OptimizerConfig", "ProblemSpec", "SCENARIOS", "SeparableData",
    "SolveReport", "TimeGrid", "TimeProfile", "VerifyReport",
    "build_scenario", "eval_cost", "eval_gradient", "eval_hessian_form",
    "eval_lagrangian", "extend_by_zero", "make_problem", "minimize_tracking",
    "minimize_tracking_localized", "oracle_dense", "project", "run_all",
    "run_ladder", "solve_adjoint", "solve_forward", "solve_linearized",
    "solve_second_order", "solve_steady_unit", "tail_norms",
]
