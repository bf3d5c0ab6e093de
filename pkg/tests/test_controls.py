import numpy as np
import pytest

from conftest import small_ball_set, small_box_set, tiny_problem
from horizonctl.controls import (BallSet, BoxSet, ConeSpec, ControlTrajectory,
                                 SamplingExhaustedWarning,
                                 critical_cone_membership, envelope,
                                 envelope_values, extend_by_zero, is_feasible,
                                 project_values, sample_critical_directions,
                                 sample_feasible, slice_norms)
from horizonctl.grid import (AlignmentError, Grid, TimeGrid,
                             norm_l2_control, step_weights)
from horizonctl.pde import solve_adjoint, solve_forward
from horizonctl.profiles import TimeProfile

GRID = Grid.interval(1.0, 8)
TG = TimeGrid.uniform(2.0, 10)
OMEGA = GRID.box_mask(0.25, 0.75)
OVOL = GRID.vol[OMEGA]
NO = int(OMEGA.sum())


def test_ball_projection_radial_scaling():
    aset = BallSet(TimeProfile("const_until", 1.0, t1=100.0))
    v = np.zeros((TG.M + 1, NO))
    v[3] = 2.0 / np.sqrt(OVOL.sum())  # slice norm exactly 2
    pv = project_values(aset, v, OVOL, TG)
    assert slice_norms(pv, OVOL)[3] == pytest.approx(1.0, rel=1e-13)
    np.testing.assert_allclose(pv[3], 0.5 * v[3], rtol=1e-13)


def test_box_projection_clamps():
    aset = BoxSet(-1.0, TimeProfile("const", 1.0), 1.0, TimeProfile("const", 1.0))
    v = np.zeros((TG.M + 1, NO))
    v[1, 0] = 3.0
    v[2, 1] = -4.0
    pv = project_values(aset, v, OVOL, TG)
    assert pv[1, 0] == 1.0
    assert pv[2, 1] == -1.0


def test_projection_idempotent_on_feasible():
    rng = np.random.default_rng(0)
    for aset in (small_ball_set(), small_box_set()):
        u = sample_feasible(aset, OVOL, TG, NO, rng)
        pu = project_values(aset, u, OVOL, TG)
        np.testing.assert_allclose(pu, u, atol=1e-14)


def test_projection_variational_characterization():
    rng = np.random.default_rng(1)
    w = step_weights(TG)
    for aset in (small_ball_set(), small_box_set()):
        for _ in range(10):
            v = 3.0 * rng.standard_normal((TG.M + 1, NO))
            pv = project_values(aset, v, OVOL, TG)
            for _ in range(10):
                k = sample_feasible(aset, OVOL, TG, NO, rng)
                val = float(np.dot(w, np.sum((v - pv) * (k - pv)
                                             * OVOL[None, :], axis=1)))
                assert val <= 1e-10


def test_projection_nonexpansive():
    rng = np.random.default_rng(2)
    for aset in (small_ball_set(), small_box_set()):
        for _ in range(25):
            a = 2.0 * rng.standard_normal((TG.M + 1, NO))
            b = 2.0 * rng.standard_normal((TG.M + 1, NO))
            pa = project_values(aset, a, OVOL, TG)
            pb = project_values(aset, b, OVOL, TG)
            assert (norm_l2_control(pa - pb, OVOL, TG)
                    <= norm_l2_control(a - b, OVOL, TG) + 1e-12)


def test_envelope_values():
    ball = BallSet(TimeProfile("exp", 1.0, 1.0))
    np.testing.assert_allclose(envelope(ball)(TG.nodes),
                               np.exp(-TG.nodes), rtol=1e-14)

    box = BoxSet(-1.0, TimeProfile("const", 1.0), 2.0, TimeProfile("const", 1.0))
    h = envelope_values(box, TG, OVOL)
    np.testing.assert_allclose(h, 2.0 * np.sqrt(OVOL.sum()), rtol=1e-14)

    # random bounds against a direct slice-norm computation
    rng = np.random.default_rng(3)
    a0, b0 = -float(rng.uniform(0.5, 2)), float(rng.uniform(0.5, 2))
    box2 = BoxSet(a0, TimeProfile("exp", 1.0, 0.3), b0,
                  TimeProfile("exp", 1.0, 0.7))
    h2 = envelope_values(box2, TG, OVOL)
    lo, hi = box2.bounds(TG, NO)
    direct = np.sqrt(np.sum(np.maximum(np.abs(lo), hi) ** 2 * OVOL[None, :],
                            axis=1))
    np.testing.assert_allclose(h2, direct, rtol=1e-12)


def test_envelope_dominates_feasible_samples():
    rng = np.random.default_rng(4)
    for aset in (small_ball_set(), small_box_set()):
        h = envelope_values(aset, TG, OVOL)
        for _ in range(25):
            u = sample_feasible(aset, OVOL, TG, NO, rng)
            assert np.all(slice_norms(u, OVOL) <= h * (1 + 1e-12))


def test_extend_by_zero():
    rng = np.random.default_rng(5)
    aset = small_ball_set()
    u = ControlTrajectory(sample_feasible(aset, OVOL, TG, NO, rng), aset)

    same = extend_by_zero(u, TG, TG)
    np.testing.assert_allclose(same.values, u.values)

    tg_long = TG.extended_uniform(5.0)
    ext = extend_by_zero(u, TG, tg_long)
    assert np.all(ext.values[TG.M + 1:] == 0.0)
    assert is_feasible(aset, ext.values, OVOL, tg_long)
    # step weights make the zero-tail extension's norm exactly the original
    assert norm_l2_control(ext.values, OVOL, tg_long) == pytest.approx(
        norm_l2_control(u.values, OVOL, TG), rel=1e-14)

    with pytest.raises(AlignmentError):
        extend_by_zero(u, TG, TimeGrid.uniform(5.0, 17))


def test_zero_direction_in_every_cone(ball_solution):
    spec, tg, aset, sol = ball_solution
    cone = ConeSpec(0.1)
    v = np.zeros((tg.M + 1, spec.n_omega))
    z = np.zeros((tg.M + 1, spec.grid.nnodes))
    member = critical_cone_membership(cone, aset, sol.control.values,
                                      sol.adjoint[:, spec.omega], v, z,
                                      spec.grid, spec.omega, tg)
    assert all(member.values())


def test_box_sign_violation_detected(box_solution):
    spec, tg, aset, sol = box_solution
    cone = ConeSpec(1e6)  # no vanishing constraint, isolate the sign check
    u_bar = sol.control.values
    phi_o = sol.adjoint[:, spec.omega]
    from horizonctl.controls import box_active_sets
    at_lower, at_upper = box_active_sets(aset, u_bar, tg, 1e-8)
    assert at_upper.any()
    v = np.zeros_like(u_bar)
    m, i = np.argwhere(at_upper)[0]
    v[m, i] = 1.0  # outward at an upper-active node
    z = np.zeros((tg.M + 1, spec.grid.nnodes))
    member = critical_cone_membership(cone, aset, u_bar, phi_o, v, z,
                                      spec.grid, spec.omega, tg)
    assert not member["sign"]


def test_sampler_count_zero(ball_solution):
    spec, tg, aset, sol = ball_solution
    out = sample_critical_directions(ConeSpec(0.1), spec, aset,
                                     sol.control.values,
                                     sol.adjoint[:, spec.omega], 0,
                                     np.random.default_rng(0), tg)
    assert out == []


def test_sampler_members_recheck(ball_solution):
    spec, tg, aset, sol = ball_solution
    cone = ConeSpec(0.1)
    phi_o = sol.adjoint[:, spec.omega]
    pairs = sample_critical_directions(cone, spec, aset, sol.control.values,
                                       phi_o, 5, np.random.default_rng(1), tg)
    assert len(pairs) == 5
    for v, z in pairs:
        member = critical_cone_membership(cone, aset, sol.control.values,
                                          phi_o, v, z, spec.grid, spec.omega,
                                          tg)
        assert member["critical"]


def test_sampler_unconstrained_interior_passes_everything():
    # huge radius and huge relaxation: every direction is critical
    spec, tg = tiny_problem(nx=8, T=0.5, M=4, y0=0.2)
    aset = BallSet(TimeProfile("const_until", 1e6, t1=100.0))
    u_bar = np.zeros((tg.M + 1, spec.n_omega))
    y = solve_forward(spec, u_bar, tg)
    phi = solve_adjoint(spec, y, tg)
    cone = ConeSpec(tau=1e6)
    pairs = sample_critical_directions(cone, spec, aset, u_bar,
                                       phi[:, spec.omega], 4,
                                       np.random.default_rng(2), tg)
    assert len(pairs) == 4


def test_sampler_exhaustion_warns(box_solution):
    spec, tg, aset, sol = box_solution
    # impossible integral condition: tiny tau with an adversarial adjoint
    fake_phi = np.full((tg.M + 1, spec.n_omega), 1e-3)
    cone = ConeSpec(tau=1e-12)
    with pytest.warns(SamplingExhaustedWarning):
        pairs = sample_critical_directions(cone, aset=aset, spec=spec,
                                           u_bar=sol.control.values,
                                           phi_omega=fake_phi, count=3,
                                           rng=np.random.default_rng(3),
                                           tg=tg, retry_factor=2)
    assert len(pairs) < 3
