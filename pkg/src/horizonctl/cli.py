"""Command line: solve, sweep-horizon, verify, and oracle subcommands.

Configuration files are flat ``key = value`` text with dotted keys; every
run is fully determined by the config plus its seed. Exit codes: 0 success,
2 configuration error, 3 solver non-convergence, 4 failed verification rows.
"""

from __future__ import annotations

import argparse
import os
import sys

import numpy as np

from . import report as rpt
from .controls import sample_feasible
from .grid import TimeGrid
from .horizon import run_ladder
from .optimizer import OptimizerConfig, minimize_tracking
from .scenarios import build_scenario
from .verify import (CheckRow, horizon_rows, oracle_dense, run_all,
                     REQUIRED_CONDITIONS)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NOCONV = 3
EXIT_VERIFY = 4


class ConfigError(ValueError):
    pass


def _parse_value(raw: str):
    raw = raw.strip()
    low = raw.lower()
    if low in ("true", "false"):
        return low == "true"
    try:
        return int(raw)
    except ValueError:
        pass
    try:
        return float(raw)
    except ValueError:
        pass
    return raw


def parse_config(path: str) -> dict:
    """Read a flat dotted-key config file."""
    if not os.path.exists(path):
        raise ConfigError(f"config file not found: {path}")
    cfg = {}
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            stripped = line.split("#", 1)[0].strip()
            if not stripped:
                continue
            if "=" not in stripped:
                raise ConfigError(f"{path}:{lineno}: expected 'key = value'")
            key, raw = stripped.split("=", 1)
            cfg[key.strip()] = _parse_value(raw)
    if "scenario" not in cfg:
        raise ConfigError("missing required config key: scenario")
    return cfg


def _scenario_from_config(cfg: dict):
    try:
        return build_scenario(cfg["scenario"], cfg)
    except KeyError as exc:
        raise ConfigError(str(exc.args[0]))
    except ValueError as exc:
        raise ConfigError(f"invalid configuration value: {exc}")


def _run_id(scenario) -> str:
    return f"{scenario.name}-s{int(scenario.config['seed'])}"


def _outdir(cfg, args) -> str:
    out = args.output_dir or cfg.get("output.dir") or "runs"
    return rpt.ensure_dir(str(out))


def _maybe_plots(cfg) -> bool:
    return bool(cfg.get("report.plots", True))


def cmd_solve(args) -> int:
    cfg = parse_config(args.config)
    scenario = _scenario_from_config(cfg)
    tg = scenario.tg
    if args.dry_run:
        print(f"scenario {scenario.name}: grid {scenario.spec.grid.shape}, "
              f"T={tg.T:g}, steps={tg.M}, set={scenario.aset.kind}, "
              f"region nodes={scenario.spec.n_omega}, "
              f"tol={scenario.opt.tol:g}, max_iters={scenario.opt.max_iters}")
        return EXIT_OK
    outdir = _outdir(cfg, args)
    sol = minimize_tracking(scenario.spec, scenario.aset, tg, scenario.opt)

    run_id = _run_id(scenario)
    rows = rpt.metrics_to_rows(
        [("solve.cost", sol.cost),
         ("solve.residual", sol.residual),
         ("solve.iterations", sol.iterations)], "finite-horizon-problem")
    rows.append(CheckRow("solve.converged", 1.0 if sol.converged else 0.0,
                         1.0, "pass" if sol.converged else "fail",
                         "finite-horizon-problem"))
    rpt.write_csv(os.path.join(outdir, "solve.csv"), run_id, rows)
    grid = scenario.spec.grid
    rpt.write_field_dump(os.path.join(outdir, "control.txt"), grid, tg,
                         "control", sol.control.values)
    rpt.write_field_dump(os.path.join(outdir, "state.txt"), grid, tg,
                         "state", sol.state)
    rpt.write_field_dump(os.path.join(outdir, "adjoint.txt"), grid, tg,
                         "adjoint", sol.adjoint)
    if _maybe_plots(cfg):
        from .plots import render_solve_figures
        render_solve_figures(outdir, scenario, sol, tg)
    if not sol.converged:
        print(f"solve did not converge after {sol.iterations} iterations "
              f"(residual {sol.residual:.3e})", file=sys.stderr)
        return EXIT_NOCONV
    print(f"solve: cost={sol.cost:.12g} residual={sol.residual:.3e} "
          f"iterations={sol.iterations} -> {outdir}")
    return EXIT_OK


def cmd_sweep_horizon(args) -> int:
    cfg = parse_config(args.config)
    scenario = _scenario_from_config(cfg)
    plan = scenario.plan
    outdir = _outdir(cfg, args)
    grids = plan.grids()

    resume = args.resume_from_level
    initial_controls = []
    if resume:
        for k in range(resume):
            path = os.path.join(outdir, f"level{k + 1}_control.txt")
            if not os.path.exists(path):
                raise ConfigError(f"cannot resume: missing {path}")
            initial_controls.append(rpt.read_field_dump(path))

    hrep = _run_ladder_resumable(scenario, plan, initial_controls)
    run_id = _run_id(scenario)
    for k, ctrl in enumerate(hrep.controls):
        rpt.write_field_dump(os.path.join(outdir, f"level{k + 1}_control.txt"),
                             scenario.spec.grid, grids[k], "control",
                             ctrl.values)
    rows = horizon_rows(hrep).rows
    rpt.write_csv(os.path.join(outdir, "sweep.csv"), run_id, rows)
    if _maybe_plots(cfg):
        from .plots import render_sweep_figures
        render_sweep_figures(outdir, scenario, hrep)
    if not hrep.all_converged:
        print("ladder halted on a non-converged level", file=sys.stderr)
        return EXIT_NOCONV
    print(f"sweep-horizon: {len(hrep.levels)} levels, "
          f"ratio spread={hrep.ratio_spread:.3g} -> {outdir}")
    return EXIT_OK


def _run_ladder_resumable(scenario, plan, initial_controls):
    """Replay stored levels as final, then continue the ladder.

    The continuation warm-starts exactly like a fresh run (zero extension of
    the last stored control, projected inside the optimizer), so a resumed
    sweep reproduces the fresh sweep byte for byte.
    """
    from .controls import ControlTrajectory, extend_by_zero
    from .horizon import HorizonPlan

    if not initial_controls:
        return run_ladder(scenario.spec, scenario.aset, plan, scenario.opt)

    grids = plan.grids()
    k0 = len(initial_controls)
    if k0 >= len(grids):
        raise ConfigError("resume level must leave at least one level to solve")
    last = ControlTrajectory(np.asarray(initial_controls[-1]), scenario.aset)
    warm = extend_by_zero(last, grids[k0 - 1], grids[k0])
    remaining = HorizonPlan(plan.horizons[k0:], plan.dt)
    opt = scenario.opt
    warm_cfg = OptimizerConfig(opt.step0, opt.backtrack, opt.armijo, opt.tol,
                               opt.max_iters, opt.min_step, warm.values)
    sub = run_ladder(scenario.spec, scenario.aset, remaining, warm_cfg)
    return run_ladder_report_merge(scenario, plan, initial_controls, sub)


def run_ladder_report_merge(scenario, plan, initial_controls, sub):
    """Recompute reported metrics of replayed levels from stored controls."""
    from .controls import ControlTrajectory, extend_by_zero, restrict
    from .grid import norm_l2_space, norm_l2_spacetime, norm_linf
    from .horizon import HorizonReport, LevelResult, tail_norms
    from .objective import eval_cost
    from .optimizer import stationarity_residual
    from .pde import solve_adjoint, solve_forward

    spec, aset = scenario.spec, scenario.aset
    grids = plan.grids()
    k0 = len(initial_controls)
    ref = sub.reference
    ref_grid = grids[-1]
    full = HorizonReport()
    full.reference = ref
    for k in range(k0):
        tg = grids[k]
        u = np.asarray(initial_controls[k])
        y = solve_forward(spec, u, tg)
        phi = solve_adjoint(spec, y, tg)
        lv = LevelResult(tg.T, eval_cost(spec, u, tg, state=y),
                         stationarity_residual(spec, aset, u, phi[:, spec.omega], tg),
                         0, True)
        y_ref_prefix = restrict(ref.state, ref_grid, tg)
        lv.err_to_ref = norm_l2_spacetime(y - y_ref_prefix, spec.grid.vol, tg)
        u_ext = extend_by_zero(ControlTrajectory(u, aset), tg, ref_grid)
        y_ext = solve_forward(spec, u_ext.values, ref_grid)
        lv.err_linf_to_ref = norm_linf(y_ext - ref.state)
        lv.state_terminal_norm = norm_l2_space(y[-1], spec.grid.vol)
        lv.g_tail, lv.yd_tail, _, _ = tail_norms(spec, aset, tg.T)
        lv.bound_rhs = lv.state_terminal_norm + lv.g_tail + lv.yd_tail
        lv.bound_ratio = lv.err_to_ref / lv.bound_rhs if lv.bound_rhs > 0 else np.inf
        u_ref_restricted = restrict(ref.control.values, ref_grid, tg)
        lv.cost_ref_restricted = eval_cost(spec, u_ref_restricted, tg)
        full.levels.append(lv)
        full.controls.append(ControlTrajectory(u, aset))
    full.levels.extend(sub.levels)
    full.controls.extend(sub.controls)
    ratios = np.array([lv.bound_ratio for lv in full.levels[:-1]])
    finite = ratios[np.isfinite(ratios)]
    if finite.size:
        full.ratio_spread = float(finite.max() / finite.min()) \
            if finite.min() > 0 else np.inf
        full.ratio_median_factor = float(finite.max() / np.median(finite))
    errs = [lv.err_to_ref for lv in full.levels[:-1]]
    full.errors_nonincreasing = all(
        b <= a * (1.0 + 1e-9) for a, b in zip(errs, errs[1:]))
    linf = [lv.err_linf_to_ref for lv in full.levels[:-1]]
    full.linf_nonincreasing = all(
        b <= a * (1.0 + 1e-9) for a, b in zip(linf, linf[1:]))
    from .horizon import weak_limit_stats
    full.weak_gaps, full.extension_equivalence_gap = weak_limit_stats(
        spec, grids, full.controls)
    return full


def cmd_verify(args) -> int:
    cfg = parse_config(args.config)
    scenario = _scenario_from_config(cfg)
    c = scenario.config
    toggles = {k: bool(c[f"verify.{k}"]) for k in
               ("solve", "structure", "equations", "first_order", "ssc",
                "growth", "appendix")}
    taus = tuple(float(s) for s in str(c["verify.tau"]).split(","))
    rep = run_all(scenario.spec, scenario.aset, scenario.tg, scenario.opt,
                  toggles=toggles, seed=int(c["seed"]), taus=taus,
                  growth_eps=float(c["verify.growth_eps"]),
                  ssc_samples=int(c["verify.ssc_samples"]),
                  growth_samples=int(c["verify.growth_samples"]),
                  perturb=float(c["verify.perturb"]),
                  first_order_tol=float(c["verify.first_order_tol"]))
    outdir = _outdir(cfg, args)
    rpt.write_csv(os.path.join(outdir, "verify.csv"), _run_id(scenario),
                  rep.rows)
    if _maybe_plots(cfg):
        from .plots import render_verify_figures
        render_verify_figures(outdir, scenario, rep.rows)
    failures = rep.failures
    if failures:
        print("failing checks: " + ", ".join(r.name for r in failures),
              file=sys.stderr)
        return EXIT_VERIFY
    print(f"verify: {len(rep.rows)} rows, all enabled checks pass -> {outdir}")
    return EXIT_OK


def cmd_oracle(args) -> int:
    cfg = parse_config(args.config)
    scenario = _scenario_from_config(cfg)
    spec = scenario.spec
    rng = np.random.default_rng(int(scenario.config["seed"]))
    m_cap = min(scenario.tg.M, 12)
    tg = TimeGrid(scenario.tg.nodes[: m_cap + 1].copy())
    u = sample_feasible(scenario.aset, spec.omega_vol, tg, spec.n_omega, rng)
    try:
        orc = oracle_dense(spec, u, tg)
    except ValueError as exc:
        print(str(exc), file=sys.stderr)
        return EXIT_CONFIG
    outdir = _outdir(cfg, args)
    grid = spec.grid
    rpt.write_field_dump(os.path.join(outdir, "oracle_control.txt"), grid, tg,
                         "control", u)
    rpt.write_field_dump(os.path.join(outdir, "oracle_state.txt"), grid, tg,
                         "state", orc.y)
    rpt.write_field_dump(os.path.join(outdir, "oracle_adjoint.txt"), grid, tg,
                         "adjoint", orc.phi)
    rpt.write_field_dump(os.path.join(outdir, "oracle_gradient.txt"), grid, tg,
                         "gradient", orc.gradient_sensitivity)
    gap = float(np.max(np.abs(orc.gradient_sensitivity - orc.gradient_adjoint)))
    rows = rpt.metrics_to_rows(
        [("oracle.cost", orc.cost), ("oracle.gradient-route-gap", gap)],
        "gradient-formula")
    rpt.write_csv(os.path.join(outdir, "oracle.csv"), _run_id(scenario), rows)
    print(f"oracle: reference values for {tg.M} steps -> {outdir}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="horizonctl",
        description="Tracking control of semilinear parabolic equations: "
                    "finite-horizon solves, horizon continuation, and "
                    "optimality verification.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("solve", help="solve one finite-horizon problem")
    p.add_argument("--config", required=True)
    p.add_argument("--output-dir", default=None)
    p.add_argument("--dry-run", action="store_true",
                   help="validate the config and print the resolved plan")
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("sweep-horizon", help="run the horizon ladder")
    p.add_argument("--config", required=True)
    p.add_argument("--output-dir", default=None)
    p.add_argument("--resume-from-level", type=int, default=0,
                   help="reload stored controls for levels below this index")
    p.set_defaults(func=cmd_sweep_horizon)

    p = sub.add_parser("verify", help="run the verification batteries")
    p.add_argument("--config", required=True)
    p.add_argument("--output-dir", default=None)
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("oracle", help="dump dense reference values")
    p.add_argument("--config", required=True)
    p.add_argument("--output-dir", default=None)
    p.set_defaults(func=cmd_oracle)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
