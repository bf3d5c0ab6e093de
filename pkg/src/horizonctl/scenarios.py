"""Bundled desk-scale scenarios and their configurable parameters.

Each scenario builds a problem, an admissible set, a time grid (or horizon
ladder), and optimizer settings from a flat key-value configuration. Every
key has a default recorded here; configs override by dotted key.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .controls import BallSet, BoxSet
from .grid import Grid, TimeGrid
from .horizon import HorizonPlan
from .optimizer import OptimizerConfig
from .pde import ProblemSpec, make_problem
from .profiles import SeparableData, TimeProfile


@dataclass
class Scenario:
    name: str
    spec: ProblemSpec
    aset: object
    tg: TimeGrid
    plan: HorizonPlan
    opt: OptimizerConfig
    config: dict


def _base_defaults() -> dict:
    return {
        "seed": 1234,
        "grid.nx": 48,
        "grid.ny": 0,
        "domain.lx": 1.0,
        "domain.ly": 1.0,
        "time.T": 8.0,
        "time.steps": 128,
        "time.grading": 1.0,
        "region.lo": 0.3,
        "region.hi": 0.7,
        "problem.p": 2.0,
        "problem.nonlinearity": "cubic",
        "problem.diffusion": 0.08,
        "problem.reaction": 1.0,
        "problem.source_amp": 0.0,
        "problem.source_sigma": 0.3,
        "problem.y0_amp": 0.0,
        "problem.target_shape": "bump",
        "problem.target_amp": 1.0,
        "problem.target_sigma": 0.3,
        "problem.target_kind": "exp",
        "problem.target_t1": 0.0,
        "set.kind": "ball",
        "set.gamma0": 0.5,
        "set.gamma_sigma": 0.2,
        "set.alpha0": -0.6,
        "set.beta0": 0.4,
        "set.bound_kind": "exp",
        "set.bound_sigma": 0.15,
        "set.bound_t1": 0.0,
        "optimizer.tol": 1e-9,
        "optimizer.max_iters": 600,
        "optimizer.step0": 2.0,
        "optimizer.backtrack": 0.5,
        "optimizer.armijo": 1e-4,
        "optimizer.initial": "zeros",
        "optimizer.initial_t1": 0.0,
        "horizon.levels": "4,8,16,32",
        "horizon.reference": 64.0,
        "horizon.dt": 0.0625,
        "verify.solve": True,
        "verify.structure": True,
        "verify.equations": True,
        "verify.first_order": True,
        "verify.ssc": True,
        "verify.growth": True,
        "verify.appendix": True,
        "verify.tau": "0.1",
        "verify.first_order_tol": 1e-6,
        "verify.ssc_samples": 20,
        "verify.growth_samples": 25,
        "verify.growth_eps": 0.25,
        "verify.perturb": 0.0,
        "report.plots": True,
        "output.dir": "",
    }


def _bump(center, width):
    def shape(x):
        r = (x[:, 0] - center) / width
        return np.exp(-0.5 * r ** 2)
    return shape


def _build(name: str, cfg: dict) -> Scenario:
    nx = int(cfg["grid.nx"])
    ny = int(cfg["grid.ny"])
    if ny > 0:
        grid = Grid.rectangle(cfg["domain.lx"], cfg["domain.ly"], nx, ny)
        lo = (cfg["region.lo"] * cfg["domain.lx"],
              cfg["region.lo"] * cfg["domain.ly"])
        hi = (cfg["region.hi"] * cfg["domain.lx"],
              cfg["region.hi"] * cfg["domain.ly"])
    else:
        grid = Grid.interval(cfg["domain.lx"], nx)
        lo = cfg["region.lo"] * cfg["domain.lx"]
        hi = cfg["region.hi"] * cfg["domain.lx"]
    omega = grid.box_mask(lo, hi)

    lx = cfg["domain.lx"]
    a = cfg["problem.diffusion"]
    a0_base = cfg["problem.reaction"]

    def a0(x):
        return a0_base * (1.0 + 0.25 * x[:, 0] / lx)

    if cfg["problem.target_shape"] == "wave":
        def target_shape(x):
            return np.sin(2.0 * np.pi * x[:, 0] / lx)
    else:
        target_shape = _bump(0.5 * lx, 0.18 * lx)
    g_prof = None
    if cfg["problem.source_amp"] != 0.0:
        g_prof = SeparableData(
            _bump(0.3 * lx, 0.15 * lx),
            TimeProfile("exp", cfg["problem.source_amp"],
                        cfg["problem.source_sigma"]))
    target_kind = cfg["problem.target_kind"]
    if target_kind == "exp":
        tprof = TimeProfile("exp", cfg["problem.target_amp"],
                            cfg["problem.target_sigma"])
    elif target_kind == "const_until":
        tprof = TimeProfile("const_until", cfg["problem.target_amp"],
                            t1=cfg["problem.target_t1"])
    else:
        raise ValueError(f"unsupported target kind {target_kind!r}")
    y_d = SeparableData(target_shape, tprof)

    if cfg["problem.y0_amp"] != 0.0:
        amp0 = cfg["problem.y0_amp"]
        shape0 = _bump(0.5 * lx, 0.18 * lx)

        def y0(x):
            return amp0 * shape0(x)
    else:
        y0 = 0.0
    spec = make_problem(grid, a, a0, cfg["problem.nonlinearity"], g_prof,
                        y0, y_d, omega, p=cfg["problem.p"])

    if cfg["set.kind"] == "ball":
        aset = BallSet(TimeProfile("exp", cfg["set.gamma0"],
                                   cfg["set.gamma_sigma"]))
    elif cfg["set.kind"] == "box":
        bk = cfg["set.bound_kind"]
        if bk == "exp":
            ap = TimeProfile("exp", 1.0, cfg["set.bound_sigma"])
            bp = TimeProfile("exp", 1.0, cfg["set.bound_sigma"])
        elif bk == "const":
            ap = bp = TimeProfile("const", 1.0)
        else:
            raise ValueError(f"unsupported bound kind {bk!r}")
        aset = BoxSet(cfg["set.alpha0"], ap, cfg["set.beta0"], bp)
    else:
        raise ValueError(f"unknown constraint family {cfg['set.kind']!r}")

    grading = cfg["time.grading"]
    steps = int(cfg["time.steps"])
    tg = TimeGrid.uniform(cfg["time.T"], steps) if grading == 1.0 \
        else TimeGrid.geometric(cfg["time.T"], steps, grading)

    levels = tuple(float(s) for s in str(cfg["horizon.levels"]).split(","))
    plan = HorizonPlan(levels + (float(cfg["horizon.reference"]),),
                       cfg["horizon.dt"])

    initial = None
    if cfg["optimizer.initial"] == "pulse":
        # feasible control supported on [0, t1]: ball-radius-sized positive
        # pulse, or the upper bound scaled down for boxes
        t1 = float(cfg["optimizer.initial_t1"])
        gate = (tg.nodes <= t1).astype(float)
        shape = np.ones(spec.n_omega) / np.sqrt(float(spec.omega_vol.sum()))
        if aset.kind == "ball":
            amp = 0.9 * aset.radius(tg) * gate
        else:
            amp = 0.5 * cfg["set.beta0"] * np.sqrt(float(spec.omega_vol.sum())) \
                * aset.beta_profile(tg.nodes) * gate
        initial = np.outer(amp, shape)
    opt = OptimizerConfig(step0=cfg["optimizer.step0"],
                          backtrack=cfg["optimizer.backtrack"],
                          armijo=cfg["optimizer.armijo"],
                          tol=cfg["optimizer.tol"],
                          max_iters=int(cfg["optimizer.max_iters"]),
                          initial=initial)
    return Scenario(name, spec, aset, tg, plan, opt, cfg)


def _desk1d_ball() -> dict:
    return {"optimizer.tol": 1e-10}


def _desk1d_box() -> dict:
    return {
        "set.kind": "box",
        "problem.target_shape": "wave",
        "problem.target_amp": 0.3,
        "problem.target_sigma": 0.25,
        "set.alpha0": -0.6,
        "set.beta0": 0.6,
        "optimizer.tol": 1e-8,
    }


def _desk2d_ball() -> dict:
    # reaction of order 2.5 puts the short 2D horizon inside the
    # tail-stable regime of the gain-doubling check
    return {
        "grid.nx": 16,
        "grid.ny": 16,
        "time.T": 4.0,
        "time.steps": 64,
        "problem.p": 3.0,
        "problem.reaction": 2.5,
        "optimizer.max_iters": 300,
    }


def _desk1d_tail() -> dict:
    return {
        "time.T": 32.0,
        "time.steps": 512,
        "problem.target_kind": "const_until",
        "problem.target_t1": 12.0,
        "problem.target_amp": 1.2,
        "problem.y0_amp": 0.4,
        "set.gamma0": 0.35,
        "set.gamma_sigma": 0.05,
        "optimizer.initial": "pulse",
        "optimizer.initial_t1": 12.0,
        # the decay estimates hold at any fixed feasible control; skip the
        # optimality-dependent batteries on this scenario
        "verify.solve": False,
        "verify.first_order": False,
        "verify.ssc": False,
        "verify.growth": False,
    }


def _desk1d_ladder() -> dict:
    # radius and target share one decay rate so the constraint stays active
    # at every level and the truncation-error ratio is horizon-stable
    return {
        "grid.nx": 32,
        "time.T": 4.0,
        "time.steps": 64,
        "set.gamma0": 0.35,
        "set.gamma_sigma": 0.3,
        "problem.target_sigma": 0.3,
        "horizon.levels": "4,8,16,32",
        "horizon.reference": 64.0,
        "horizon.dt": 0.0625,
        "optimizer.tol": 1e-8,
    }


SCENARIOS = {
    "desk1d-ball": _desk1d_ball,
    "desk1d-box": _desk1d_box,
    "desk2d-ball": _desk2d_ball,
    "desk1d-tail": _desk1d_tail,
    "desk1d-ladder": _desk1d_ladder,
}


def build_scenario(name: str, overrides: dict = None) -> Scenario:
    if name not in SCENARIOS:
        raise KeyError(f"unknown scenario {name!r}; "
                       f"known: {', '.join(sorted(SCENARIOS))}")
    cfg = _base_defaults()
    cfg.update(SCENARIOS[name]())
    bad = [k for k in (overrides or {}) if k not in cfg and k != "scenario"]
    if bad:
        raise KeyError(f"unknown configuration key {bad[0]!r}")
    cfg.update({k: v for k, v in (overrides or {}).items() if k != "scenario"})
    return _build(name, cfg)
