import numpy as np
import pytest

from conftest import tiny_problem
from horizonctl.grid import (Grid, TimeGrid, inner_control, inner_spacetime,
                             norm_l2_control, norm_l2_spacetime, norm_linf,
                             trap_weights)
from horizonctl.pde import (EllipticOperator, NONLINEARITIES, make_problem,
                            solve_adjoint, solve_forward, solve_linearized,
                            solve_second_order, solve_steady_unit,
                            step_residual_norm, SolverDivergenceError)
from horizonctl.profiles import SeparableData, TimeProfile


def test_operator_assembly_invariants():
    rng = np.random.default_rng(0)
    for dim in (1, 2):
        if dim == 1:
            grid = Grid.interval(1.4, 9)
        else:
            grid = Grid.rectangle(1.0, 0.8, 5, 4)
        a = rng.uniform(0.2, 1.0, grid.nnodes)
        a0 = rng.uniform(0.1, 0.9, grid.nnodes)
        op = EllipticOperator.assemble(grid, a, a0)
        dense = op.mat.toarray()
        assert np.allclose(dense, dense.T)
        off = dense - np.diag(np.diag(dense))
        assert np.all(off <= 1e-15)
        assert np.all(np.diag(dense) > 0)
        # zero-flux consistency: row sums are the reaction-weighted volumes
        np.testing.assert_allclose(dense.sum(axis=1), grid.vol * a0,
                                   rtol=0, atol=1e-13)
        eigs = np.linalg.eigvalsh(dense)
        assert eigs.min() > 0


def test_nonlinearity_registry():
    for name, nl in NONLINEARITIES.items():
        nl.probe()
        assert nl.f(0.0) == 0.0
    s = np.linspace(-2, 2, 11)
    np.testing.assert_allclose(NONLINEARITIES["cubic"].f(s), s ** 3)
    np.testing.assert_allclose(NONLINEARITIES["expm1"].fp(s), np.exp(s))


def test_problem_spec_validation():
    grid = Grid.interval(1.0, 5)
    with pytest.raises(ValueError):
        make_problem(grid, 0.1, 1.0, "zero", None, 0.0, None,
                     np.zeros(5, dtype=bool), p=2.0)
    grid2 = Grid.rectangle(1.0, 1.0, 3, 3)
    with pytest.raises(ValueError):
        make_problem(grid2, 0.1, 1.0, "zero", None, 0.0, None,
                     grid2.box_mask((0, 0), (1, 1)), p=2.0)  # needs p > 2 in 2D


def test_forward_zero_fixed_point():
    spec, tg = tiny_problem(y0=0.0)
    spec = make_problem(spec.grid, spec.op.a, spec.op.a0, "cubic", None, 0.0,
                        None, spec.omega, p=2.0)
    y = solve_forward(spec, None, tg)
    assert norm_linf(y) == 0.0


def test_forward_one_step_matches_dense_formula():
    # zero reaction nonlinearity: one implicit step is a single linear solve
    spec, _ = tiny_problem(nx=5, nonlinearity="zero", y0=0.3)
    tg = TimeGrid.uniform(0.2, 1)
    rng = np.random.default_rng(1)
    u = rng.standard_normal((2, spec.n_omega))
    y = solve_forward(spec, u, tg)
    dt = 0.2
    vol = spec.grid.vol
    b = np.zeros(5)
    b[spec.omega] = u[1]
    dense = np.diag(vol) + dt * spec.op.mat.toarray()
    expected = np.linalg.solve(dense, vol * (spec.y0 + dt * b))
    np.testing.assert_allclose(y[1], expected, rtol=1e-13)


def test_forward_newton_residual_recomputed():
    spec, tg = tiny_problem(nx=7, nonlinearity="cubic", y0=0.4)
    rng = np.random.default_rng(2)
    u = 0.5 * rng.standard_normal((tg.M + 1, spec.n_omega))
    y = solve_forward(spec, u, tg)
    gtraj = spec.sample_data(spec.g, tg)
    for m in range(1, tg.M + 1):
        b = gtraj[m].copy()
        b[spec.omega] += u[m]
        res = step_residual_norm(spec, y[m], y[m - 1], tg.dt[m - 1], b)
        assert res <= 1e-11


def test_forward_divergence_error_carries_step():
    spec, tg = tiny_problem(nx=5, nonlinearity="expm1", y0=0.0)
    u = np.full((tg.M + 1, spec.n_omega), 1e5)  # blow-up source
    with pytest.raises(SolverDivergenceError) as err, \
            np.errstate(over="ignore", invalid="ignore"):
        solve_forward(spec, u, tg, max_iter=3)
    assert err.value.step >= 1
    assert err.value.residual > 0


def test_linearized_zero_direction():
    spec, tg = tiny_problem()
    y = solve_forward(spec, None, tg)
    z = solve_linearized(spec, y, np.zeros((tg.M + 1, spec.n_omega)), tg)
    assert norm_linf(z) == 0.0


def test_linearized_exact_for_linear_dynamics():
    spec, tg = tiny_problem(nx=9, nonlinearity="zero", y0=0.2)
    rng = np.random.default_rng(3)
    u = rng.standard_normal((tg.M + 1, spec.n_omega))
    v = rng.standard_normal((tg.M + 1, spec.n_omega))
    y_u = solve_forward(spec, u, tg)
    y_uv = solve_forward(spec, u + v, tg)
    z = solve_linearized(spec, y_u, v, tg)
    np.testing.assert_allclose(y_uv - y_u, z, atol=1e-10)


def test_linearized_first_order_in_epsilon():
    spec, tg = tiny_problem(nx=9, nonlinearity="cubic", y0=0.3)
    rng = np.random.default_rng(4)
    u = 0.3 * rng.standard_normal((tg.M + 1, spec.n_omega))
    v = rng.standard_normal((tg.M + 1, spec.n_omega))
    y_u = solve_forward(spec, u, tg)
    z = solve_linearized(spec, y_u, v, tg)
    defects = []
    for eps in (1e-2, 5e-3, 2.5e-3):
        y_eps = solve_forward(spec, u + eps * v, tg)
        defects.append(norm_l2_spacetime(y_eps - y_u - eps * z,
                                         spec.grid.vol, tg))
    # halving epsilon quarters the defect, within factor 1.5
    for d1, d2 in zip(defects, defects[1:]):
        assert 4.0 / 1.5 <= d1 / d2 <= 4.0 * 1.5


def test_second_order_zero_cases():
    spec, tg = tiny_problem(nonlinearity="zero")
    rng = np.random.default_rng(5)
    y = solve_forward(spec, None, tg)
    v = rng.standard_normal((tg.M + 1, spec.n_omega))
    z1 = solve_linearized(spec, y, v, tg)
    out = solve_second_order(spec, y, z1, z1, tg)
    assert norm_linf(out) == 0.0  # no curvature in the reaction term

    spec2, tg2 = tiny_problem(nonlinearity="cubic")
    y2 = solve_forward(spec2, None, tg2)
    zeros = np.zeros_like(y2)
    out2 = solve_second_order(spec2, y2, zeros, y2, tg2)
    assert norm_linf(out2) == 0.0


def test_second_order_matches_dense_stepping():
    spec, tg = tiny_problem(nx=6, nonlinearity="cubic", y0=0.3)
    rng = np.random.default_rng(6)
    u = 0.2 * rng.standard_normal((tg.M + 1, spec.n_omega))
    y = solve_forward(spec, u, tg)
    v1 = rng.standard_normal((tg.M + 1, spec.n_omega))
    v2 = rng.standard_normal((tg.M + 1, spec.n_omega))
    z1 = solve_linearized(spec, y, v1, tg)
    z2 = solve_linearized(spec, y, v2, tg)
    zz = solve_second_order(spec, y, z1, z2, tg)

    # dense re-solve of the same linear recursion
    vol = spec.grid.vol
    fpp = spec.nonlinearity.fpp
    fp = spec.nonlinearity.fp
    A = spec.op.mat.toarray()
    z = np.zeros(spec.grid.nnodes)
    for m in range(1, tg.M + 1):
        dt = tg.dt[m - 1]
        L = np.diag(vol) + dt * (A + np.diag(vol * fp(y[m])))
        src = -fpp(y[m]) * z1[m] * z2[m]
        z = np.linalg.solve(L, vol * z + dt * vol * src)
        np.testing.assert_allclose(zz[m], z, atol=1e-12)


def test_adjoint_zero_for_perfect_tracking():
    spec, tg = tiny_problem(nonlinearity="cubic", y0=0.3)
    y = solve_forward(spec, None, tg)
    phi = solve_adjoint(spec, y, tg, source=np.zeros_like(y))
    assert norm_linf(phi) == 0.0


def test_adjoint_one_step_dense_transpose():
    spec, _ = tiny_problem(nx=5, nonlinearity="zero", y0=0.1)
    tg = TimeGrid.uniform(0.3, 1)
    y = solve_forward(spec, None, tg)
    rng = np.random.default_rng(7)
    w = rng.standard_normal((2, 5))
    phi = solve_adjoint(spec, y, tg, source=w)
    vol = spec.grid.vol
    dt, wM = 0.3, trap_weights(tg)[1]
    L = np.diag(vol) + dt * spec.op.mat.toarray()
    psi = np.linalg.solve(L.T, wM * vol * w[1])
    np.testing.assert_allclose(phi[1], psi, rtol=1e-13)
    assert np.all(phi[0] == 0.0)


def test_transpose_exactness():
    rng = np.random.default_rng(8)
    for nl in ("zero", "cubic", "expm1"):
        spec, tg = tiny_problem(nx=6, nonlinearity=nl, y0=0.2)
        u = 0.2 * rng.standard_normal((tg.M + 1, spec.n_omega))
        y = solve_forward(spec, u, tg)
        v = rng.standard_normal((tg.M + 1, spec.n_omega))
        w = rng.standard_normal((tg.M + 1, spec.grid.nnodes))
        z = solve_linearized(spec, y, v, tg)
        phi_w = solve_adjoint(spec, y, tg, source=w)
        lhs = inner_spacetime(z, w, spec.grid.vol, tg)
        rhs = inner_control(v, phi_w[:, spec.omega], spec.omega_vol, tg)
        assert lhs == pytest.approx(rhs, rel=1e-12)


def test_forward_comparison_principle():
    # nonnegative data keeps the solution nonnegative (sign-structured steps)
    rng = np.random.default_rng(9)
    for trial in range(5):
        grid = Grid.interval(1.0, 8)
        omega = grid.box_mask(0.2, 0.8)
        tg = TimeGrid.uniform(0.6, 6)
        g = np.abs(rng.standard_normal((7, 8)))
        y0 = np.abs(rng.standard_normal(8))
        spec = make_problem(grid, rng.uniform(0.05, 0.3), 1.0, "cubic", g, y0,
                            None, omega, p=2.0)
        u = np.abs(rng.standard_normal((7, spec.n_omega)))
        y = solve_forward(spec, u, tg)
        assert y.min() >= -1e-12


def test_linearized_gain_stable_under_horizon_doubling():
    spec, tg = tiny_problem(nx=10, nonlinearity="cubic", T=4.0, M=32, y0=0.2)
    rng = np.random.default_rng(10)
    u = 0.2 * rng.standard_normal((tg.M + 1, spec.n_omega))
    y = solve_forward(spec, u, tg)
    tg2 = tg.extended_uniform(8.0)
    u2 = np.zeros((tg2.M + 1, spec.n_omega))
    u2[: tg.M + 1] = u
    y2 = solve_forward(spec, u2, tg2)

    def max_ratio(tgrid, ytraj, n=50):
        worst = 0.0
        for _ in range(n):
            v = rng.standard_normal((tgrid.M + 1, spec.n_omega))
            z = solve_linearized(spec, ytraj, v, tgrid)
            worst = max(worst, norm_l2_spacetime(z, spec.grid.vol, tgrid)
                        / norm_l2_control(v, spec.omega_vol, tgrid))
        return worst

    c1 = max_ratio(tg, y)
    c2 = max_ratio(tg2, y2)
    assert c2 <= 1.05 * c1


def test_taylor_remainder_constant_honored():
    # calibrate the quadratic-remainder constant, honor on held-out samples
    spec, tg = tiny_problem(nx=10, nonlinearity="cubic", T=1.0, M=10, y0=0.3)
    rng = np.random.default_rng(11)
    u_bar = 0.2 * rng.standard_normal((tg.M + 1, spec.n_omega))
    y_bar = solve_forward(spec, u_bar, tg)

    def ratio():
        du = 0.3 * rng.standard_normal((tg.M + 1, spec.n_omega))
        y = solve_forward(spec, u_bar + du, tg)
        z = solve_linearized(spec, y_bar, du, tg)
        rem = norm_l2_spacetime(y - y_bar - z, spec.grid.vol, tg)
        den = (norm_linf(y - y_bar)
               * norm_l2_spacetime(y - y_bar, spec.grid.vol, tg))
        return rem / den

    cal = [ratio() for _ in range(10)]
    held = [ratio() for _ in range(10)]
    assert max(held) <= 2.0 * max(cal)


def test_adjoint_tail_decay_past_support():
    grid = Grid.interval(1.0, 12)
    omega = grid.box_mask(0.25, 0.75)
    tg = TimeGrid.uniform(20.0, 160)
    y_d = SeparableData(lambda x: np.sin(np.pi * x[:, 0]),
                        TimeProfile("const_until", 1.0, t1=6.0))
    spec = make_problem(grid, 0.1, 1.0, "cubic", None, 0.3, y_d, omega, p=2.0)
    u = np.zeros((tg.M + 1, spec.n_omega))
    u[tg.nodes <= 6.0] = 0.4
    y = solve_forward(spec, u, tg)
    phi = solve_adjoint(spec, y, tg)
    sup = np.array([norm_linf(phi[m]) for m in range(tg.M + 1)])
    tail = sup[tg.nodes > 6.0 + 1e-12]
    assert np.all(np.diff(tail) <= 1e-12 * sup.max())
    assert np.any(tail[:-1] <= 1e-6)


def test_steady_unit_solution():
    # constant reaction: the steady profile is its reciprocal
    grid = Grid.interval(1.0, 6)
    op = EllipticOperator.assemble(grid, 0.2, 2.5)
    psi, kmax = solve_steady_unit(op)
    np.testing.assert_allclose(psi, 1.0 / 2.5, rtol=1e-12)
    assert kmax == pytest.approx(0.4, rel=1e-12)

    # variable reaction on a 3-node grid versus a dense direct solve
    grid3 = Grid.interval(1.0, 3)
    a0 = np.array([0.5, 1.0, 2.0])
    op3 = EllipticOperator.assemble(grid3, 0.3, a0)
    psi3, _ = solve_steady_unit(op3)
    expected = np.linalg.solve(op3.mat.toarray(), grid3.vol)
    np.testing.assert_allclose(psi3, expected, rtol=1e-12)

    # randomized coefficients: inverse positivity keeps the profile >= 0
    rng = np.random.default_rng(12)
    for _ in range(10):
        g = Grid.interval(1.0, 7)
        op_r = EllipticOperator.assemble(g, rng.uniform(0.05, 1.0, 7),
                                         rng.uniform(0.0, 1.0, 7) + 1e-3)
        psi_r, _ = solve_steady_unit(op_r)
        assert psi_r.min() >= -1e-13
