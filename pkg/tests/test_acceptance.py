"""Acceptance suite: every exit criterion at its stated tolerance.

Run with ``pytest tests/test_acceptance.py -v -s`` to see one line per
criterion. Desk scale throughout; the bundled scenarios are solved once per
session and shared.
"""

import os

import numpy as np
import pytest

from conftest import random_problem
from horizonctl.cli import main
from horizonctl.controls import ConeSpec, box_active_sets, slice_norms
from horizonctl.grid import (inner_control, inner_spacetime,
                             norm_l1_control, norm_l1_spacetime,
                             norm_l2_control, norm_linf)
from horizonctl.horizon import run_ladder
from horizonctl.objective import eval_cost, eval_gradient, eval_hessian_form
from horizonctl.optimizer import minimize_tracking, stationarity_residual
from horizonctl.pde import (solve_adjoint, solve_forward, solve_linearized,
                            solve_steady_unit)
from horizonctl.scenarios import build_scenario
from horizonctl.verify import (check_adjoint_tail, check_appendix,
                               check_quadratic_growth, check_ssc,
                               oracle_dense)

GOLDEN = os.path.join(os.path.dirname(__file__), "golden")


def report(criterion, passed, detail):
    line = f"ACCEPTANCE {criterion} [{'pass' if passed else 'FAIL'}]: {detail}"
    print(line)
    assert passed, line


@pytest.fixture(scope="module")
def ball_run():
    sc = build_scenario("desk1d-ball")
    sol = minimize_tracking(sc.spec, sc.aset, sc.tg, sc.opt)
    assert sol.converged
    return sc, sol


@pytest.fixture(scope="module")
def box_run():
    sc = build_scenario("desk1d-box")
    sol = minimize_tracking(sc.spec, sc.aset, sc.tg, sc.opt)
    assert sol.converged
    return sc, sol


def test_criterion_1_oracle_equivalence():
    rng = np.random.default_rng(2024)
    worst = 0.0
    for k in range(10):
        spec, tg, u = random_problem(rng)
        orc = oracle_dense(spec, u, tg)
        y = solve_forward(spec, u, tg)
        phi = solve_adjoint(spec, y, tg)
        v1 = rng.standard_normal((tg.M + 1, spec.n_omega))
        v2 = rng.standard_normal((tg.M + 1, spec.n_omega))
        z = solve_linearized(spec, y, v1, tg)

        def rel(a, b):
            return float(np.max(np.abs(a - b))
                         / max(np.max(np.abs(a)), np.max(np.abs(b)), 1e-12))

        worst = max(worst,
                    rel(y, orc.y),
                    rel(z, orc.linearized(v1)),
                    rel(phi, orc.phi),
                    rel(phi[:, spec.omega], orc.gradient_sensitivity))
        h = eval_hessian_form(spec, u, v1, v2, tg, state=y, adjoint=phi)
        h_o = orc.hessian_form(v1, v2)
        worst = max(worst, abs(h - h_o) / max(abs(h), abs(h_o), 1e-12))
    report(1, worst <= 1e-10,
           f"10 seeded instances, worst oracle deviation {worst:.2e} <= 1e-10")


def test_criterion_2_fd_orders_and_symmetry():
    rng = np.random.default_rng(7)
    overrides = {"grid.nx": 16, "time.T": 1.0, "time.steps": 16,
                 "grid.ny": 0}
    scen = [("desk1d-ball", overrides),
            ("desk1d-box", overrides),
            ("desk2d-ball", {"grid.nx": 8, "grid.ny": 8, "time.T": 1.0,
                             "time.steps": 16})]
    ratios = []
    sym_worst = 0.0
    for name, ov in scen:
        sc = build_scenario(name, ov)
        spec, tg = sc.spec, sc.tg
        u = 0.2 * rng.standard_normal((tg.M + 1, spec.n_omega))
        ev = eval_gradient(spec, u, tg)
        for _ in range(5):
            v = rng.standard_normal((tg.M + 1, spec.n_omega))
            deriv = inner_control(ev.gradient, v, spec.omega_vol, tg)
            defects = []
            for eps in (1e-2, 5e-3, 2.5e-3):
                jp = eval_cost(spec, u + eps * v, tg)
                jm = eval_cost(spec, u - eps * v, tg)
                defects.append(abs((jp - jm) / (2 * eps) - deriv))
            ratios.extend(d1 / d2 for d1, d2 in zip(defects, defects[1:]))
        v1 = rng.standard_normal((tg.M + 1, spec.n_omega))
        v2 = rng.standard_normal((tg.M + 1, spec.n_omega))
        h = eval_hessian_form(spec, u, v1, v2, tg, state=ev.state,
                              adjoint=ev.adjoint)
        defects = []
        for eps in (1e-2, 5e-3, 2.5e-3):
            gp = eval_gradient(spec, u + eps * v2, tg).gradient
            gm = eval_gradient(spec, u - eps * v2, tg).gradient
            fd = (inner_control(gp, v1, spec.omega_vol, tg)
                  - inner_control(gm, v1, spec.omega_vol, tg)) / (2 * eps)
            defects.append(abs(fd - h))
        ratios.extend(d1 / d2 for d1, d2 in zip(defects, defects[1:]))
        h21 = eval_hessian_form(spec, u, v2, v1, tg, state=ev.state,
                                adjoint=ev.adjoint)
        sym_worst = max(sym_worst, abs(h - h21) / (1 + abs(h)))
    ok = all(3.5 <= r <= 4.5 for r in ratios) and sym_worst <= 1e-11
    report(2, ok, f"defect ratios in [{min(ratios):.2f}, {max(ratios):.2f}] "
                  f"(target [3.5, 4.5]); Hessian symmetry {sym_worst:.1e}")


def test_criterion_3_duality_identity():
    rng = np.random.default_rng(31)
    worst = 0.0
    for name in ("desk1d-ball", "desk1d-box"):
        sc = build_scenario(name, {"grid.nx": 24, "time.T": 2.0,
                                   "time.steps": 32})
        spec, tg = sc.spec, sc.tg
        u = 0.2 * rng.standard_normal((tg.M + 1, spec.n_omega))
        ev = eval_gradient(spec, u, tg)
        misfit = ev.state - spec.sample_data(spec.y_d, tg)
        for _ in range(10):
            v = rng.standard_normal((tg.M + 1, spec.n_omega))
            z = solve_linearized(spec, ev.state, v, tg)
            lhs = inner_spacetime(misfit, z, spec.grid.vol, tg)
            rhs = inner_control(ev.gradient, v, spec.omega_vol, tg)
            worst = max(worst, abs(lhs - rhs) / max(abs(lhs), abs(rhs)))
    report(3, worst <= 1e-11,
           f"duality identity relative gap {worst:.2e} <= 1e-11")


def test_criterion_4_first_order_system(ball_run, box_run):
    sc, sol = ball_run
    spec, tg, aset = sc.spec, sc.tg, sc.aset
    phi_o = sol.adjoint[:, spec.omega]
    res = stationarity_residual(spec, aset, sol.control.values, phi_o, tg)
    tol_eff = sc.opt.tol * (1 + norm_l2_control(phi_o, spec.omega_vol, tg))
    ok = res <= tol_eff

    gam = aset.radius(tg)
    lam = slice_norms(phi_o, spec.omega_vol)
    u_norms = slice_norms(sol.control.values, spec.omega_vol)
    active = ((lam > 1e-8 * norm_linf(phi_o))
              & ((gam - u_norms) <= 1e-8 * gam))
    coll = 0.0
    for m in np.flatnonzero(active):
        c = sol.control.values[m] + gam[m] / lam[m] * phi_o[m]
        coll = max(coll, float(np.sqrt(np.sum(c ** 2 * spec.omega_vol))))
    ok = ok and active.sum() >= 10 and coll <= 1e-6

    scb, solb = box_run
    lo, hi = box_active_sets(scb.aset, solb.control.values, scb.tg, 1e-8)
    phib = solb.adjoint[:, scb.spec.omega]
    interior = ~(lo | hi)
    sign_worst = max(
        float(np.max(-phib[lo])) if lo.any() else 0.0,
        float(np.max(phib[hi])) if hi.any() else 0.0,
        float(np.max(np.abs(phib[interior]))) if interior.any() else 0.0)
    ok = ok and lo.any() and hi.any() and sign_worst <= 1e-6
    report(4, ok, f"residual {res:.1e} <= {tol_eff:.1e}; collinearity "
                  f"{coll:.1e} <= 1e-6 on {active.sum()} active slices; "
                  f"box sign structure worst {sign_worst:.1e} <= 1e-6")


def test_criterion_5_exact_l1_bound(ball_run, box_run):
    rng = np.random.default_rng(55)
    failures = 0
    worst = -np.inf
    for sc, sol in (ball_run, box_run):
        spec, tg = sc.spec, sc.tg
        psi, kmax = solve_steady_unit(spec.op)
        y = sol.state
        for _ in range(100):
            v = rng.standard_normal((tg.M + 1, spec.n_omega))
            z = solve_linearized(spec, y, v, tg)
            lhs = norm_l1_spacetime(z, spec.grid.vol, tg)
            rhs = kmax * norm_l1_control(v, spec.omega_vol, tg)
            excess = (lhs - rhs) / rhs
            worst = max(worst, excess)
            failures += excess > 1e-12
    report(5, failures == 0,
           f"source-to-solution L1 bound: 0 of 200 samples exceed the "
           f"computed constant (worst excess {worst:.1e})")


def test_criterion_6_horizon_ratio_stability():
    sc = build_scenario("desk1d-ladder")
    assert sc.plan.horizons == (4.0, 8.0, 16.0, 32.0, 64.0)
    hrep = run_ladder(sc.spec, sc.aset, sc.plan, sc.opt)
    ok = (hrep.all_converged and hrep.ratio_spread <= 10.0
          and hrep.errors_nonincreasing)
    report(6, ok, f"4-level ladder (ref T=64): ratio spread "
                  f"{hrep.ratio_spread:.3g} <= 10, errors nonincreasing: "
                  f"{hrep.errors_nonincreasing}")


def test_criterion_7_ssc_and_quadratic_growth(ball_run, box_run):
    details = []
    ok = True
    for (sc, sol), label in ((ball_run, "ball"), (box_run, "box")):
        spec, tg, aset = sc.spec, sc.tg, sc.aset
        rep = check_ssc(spec, aset, ConeSpec(0.1), sol.control.values,
                        sol.adjoint, tg, 50, np.random.default_rng(71))
        margin = [r for r in rep.rows if r.name.startswith("ssc.margin")][0]
        count = [r for r in rep.rows if r.name == "ssc.samples"][0]
        ok = ok and count.value >= 50 and margin.value > 0
        grep = check_quadratic_growth(spec, aset, sol.control.values, tg,
                                      eps=0.25, cal_count=100, held_count=100,
                                      rng=np.random.default_rng(72))
        ok = ok and grep.passed
        kappa = [r for r in grep.rows if r.name == "growth.kappa-calibrated"][0]
        details.append(f"{label}: margin {margin.value:.3g} over "
                       f"{int(count.value)} directions, kappa {kappa.value:.3g}"
                       f" honored on 100 held-out")
    report(7, ok, "; ".join(details))


def test_criterion_8_appendix_batch(ball_run):
    sc, sol = ball_run
    rep = check_appendix(sc.spec, sc.aset, sol.control.values, sol.adjoint,
                         sc.tg, np.random.default_rng(81), batch=10,
                         l1_samples=20)
    wanted = ("lin.cross-bound.heldout", "lin.vs-state-l2.heldout",
              "lin.vs-state-linf.heldout", "lin.state-two-sided",
              "hessian.bound", "state.segment-tube.heldout")
    rows = {r.name: r for r in rep.rows}
    ok = all(rows[n].status == "pass" for n in wanted)

    tail_sc = build_scenario("desk1d-tail")
    from horizonctl.controls import project_values
    u = project_values(tail_sc.aset, np.asarray(tail_sc.opt.initial),
                       tail_sc.spec.omega_vol, tail_sc.tg)
    y = solve_forward(tail_sc.spec, u, tail_sc.tg)
    phi = solve_adjoint(tail_sc.spec, y, tail_sc.tg)
    trep = check_adjoint_tail(tail_sc.spec, y, phi, tail_sc.tg, 12.0)
    ok = ok and trep.passed
    cross = [r for r in trep.rows if r.name == "adjoint.tail-below-threshold"]
    report(8, ok, f"calibrated perturbation bounds honored on held-out "
                  f"batches; adjoint tail under 1e-6 at t={cross[0].value:g} "
                  f"< T={tail_sc.tg.T:g}")


def test_criterion_9_determinism_and_goldens(tmp_path):
    ok = True
    details = []
    for name in ("desk1d-ball", "desk1d-box"):
        cfg = os.path.join(GOLDEN, f"{name}.cfg")
        o1, o2 = tmp_path / f"{name}-a", tmp_path / f"{name}-b"
        assert main(["solve", "--config", cfg, "--output-dir", str(o1)]) == 0
        assert main(["solve", "--config", cfg, "--output-dir", str(o2)]) == 0
        a = (o1 / "solve.csv").read_bytes()
        same = a == (o2 / "solve.csv").read_bytes()
        golden = open(os.path.join(GOLDEN, f"{name}.solve.csv"), "rb").read()
        ok = ok and same and a == golden
        details.append(f"{name}: rerun identical={same}, golden match="
                       f"{a == golden}")
    report(9, ok, "; ".join(details))
