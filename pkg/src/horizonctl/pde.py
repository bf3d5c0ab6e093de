"""Elliptic operator assembly and the parabolic solves.

The second-order operator -div(a grad .) + a0 with zero-flux boundary
conditions is assembled in integrated (weak) form: row i of the sparse matrix
is the flux balance of cell i plus the a0-weighted cell volume on the
diagonal. The matrix is symmetric, has the M-matrix sign pattern, and applied
to the constant-one field returns the a0-weighted cell volumes.

Time stepping is implicit Euler with a full Newton solve per step. The
linearized, second-order and adjoint solves reuse the same stepping with the
first-derivative coefficient frozen at the already-computed state; the adjoint
stepping is the exact transpose of the linearized stepping, so the discrete
gradient identities hold to roundoff.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.linalg import solve_banded

from .grid import Grid, TimeGrid, trap_weights
from .profiles import SeparableData


class SolverDivergenceError(RuntimeError):
    """Newton failed to reduce the step residual below tolerance."""

    def __init__(self, step: int, residual: float):
        super().__init__(
            f"Newton did not converge at time step {step}: residual {residual:.3e}")
        self.step = step
        self.residual = residual


NEWTON_TOL = 1e-11
NEWTON_MAX_ITER = 25


@dataclass(frozen=True)
class Nonlinearity:
    """Scalar reaction term with its first two derivatives.

    Registry entries satisfy f(0) = 0 and f'(s) >= 0 everywhere.
    """

    name: str
    f: object
    fp: object
    fpp: object

    def probe(self, samples=None) -> None:
        """Sanity-check f(0)=0 and monotonicity on probe points."""
        if samples is None:
            samples = np.linspace(-5.0, 5.0, 41)
        if abs(float(self.f(0.0))) > 0.0:
            raise ValueError(f"nonlinearity {self.name!r} has f(0) != 0")
        if np.any(np.asarray(self.fp(np.asarray(samples))) < 0.0):
            raise ValueError(f"nonlinearity {self.name!r} has f' < 0 on probes")


NONLINEARITIES = {
    "zero": Nonlinearity("zero",
                         lambda s: np.zeros_like(np.asarray(s, dtype=float)),
                         lambda s: np.zeros_like(np.asarray(s, dtype=float)),
                         lambda s: np.zeros_like(np.asarray(s, dtype=float))),
    "cubic": Nonlinearity("cubic",
                          lambda s: np.asarray(s, dtype=float) ** 3,
                          lambda s: 3.0 * np.asarray(s, dtype=float) ** 2,
                          lambda s: 6.0 * np.asarray(s, dtype=float)),
    "expm1": Nonlinearity("expm1",
                          lambda s: np.expm1(np.asarray(s, dtype=float)),
                          lambda s: np.exp(np.asarray(s, dtype=float)),
                          lambda s: np.exp(np.asarray(s, dtype=float))),
}


def _coef_values(grid: Grid, coef) -> np.ndarray:
    if callable(coef):
        return np.asarray(coef(grid.x), dtype=float)
    arr = np.asarray(coef, dtype=float)
    if arr.ndim == 0:
        return np.full(grid.nnodes, float(arr))
    if arr.shape != (grid.nnodes,):
        raise ValueError("coefficient array does not match the grid")
    return arr


@dataclass(frozen=True)
class EllipticOperator:
    """Integrated diffusion-reaction operator on a structured grid."""

    grid: Grid
    a: np.ndarray = field(repr=False)
    a0: np.ndarray = field(repr=False)
    mat: sp.csr_array = field(repr=False)
    banded: np.ndarray = field(repr=False, default=None)

    @staticmethod
    def assemble(grid: Grid, a, a0) -> "EllipticOperator":
        av = _coef_values(grid, a)
        a0v = _coef_values(grid, a0)
        if np.any(av <= 0.0):
            raise ValueError("diffusion coefficient must be strictly positive")
        if np.any(a0v < 0.0) or not np.any(a0v > 0.0):
            raise ValueError("reaction coefficient must be >= 0 and not identically 0")

        n = grid.nnodes
        rows, cols, vals = [], [], []
        diag = grid.vol * a0v

        def add_face(i, j, coef):
            # flux coupling between adjacent cells i, j
            rows.extend((i, j))
            cols.extend((j, i))
            vals.extend((-coef, -coef))
            diag[i] += coef
            diag[j] += coef

        if grid.dim == 1:
            (nx,) = grid.shape
            (hx,) = grid.spacing
            for i in range(nx - 1):
                aface = 0.5 * (av[i] + av[i + 1])
                add_face(i, i + 1, aface / hx)
        else:
            nx, ny = grid.shape
            hx, hy = grid.spacing

            def idx(ix, iy):
                return ix * ny + iy

            for ix in range(nx):
                for iy in range(ny):
                    i = idx(ix, iy)
                    if ix + 1 < nx:
                        j = idx(ix + 1, iy)
                        aface = 0.5 * (av[i] + av[j])
                        add_face(i, j, aface * hy / hx)
                    if iy + 1 < ny:
                        j = idx(ix, iy + 1)
                        aface = 0.5 * (av[i] + av[j])
                        add_face(i, j, aface * hx / hy)

        rows.extend(range(n))
        cols.extend(range(n))
        vals.extend(diag)
        mat = sp.csr_array((vals, (rows, cols)), shape=(n, n))

        banded = None
        if grid.dim == 1:
            banded = np.zeros((3, n))
            banded[1] = mat.diagonal()
            off = mat.diagonal(1)
            banded[0, 1:] = off   # superdiagonal
            banded[2, :-1] = off  # subdiagonal
        return EllipticOperator(grid, av, a0v, mat, banded)

    def apply(self, y: np.ndarray) -> np.ndarray:
        return self.mat @ y

    def step_solve(self, dt: float, c: np.ndarray, rhs: np.ndarray) -> np.ndarray:
        """Solve (diag(vol) + dt*(A + diag(vol*c))) x = rhs.

        ``c`` is the frozen reaction derivative on the step; must be >= 0 to
        keep the step matrix an M-matrix.
        """
        vol = self.grid.vol
        shift = vol * (1.0 + dt * c)
        if self.banded is not None:
            ab = self.banded * dt
            ab[1] += shift
            return solve_banded((1, 1), ab, rhs)
        n = self.grid.nnodes
        mat = (self.mat * dt + sp.diags_array(shift)).tocsc()
        return spla.splu(mat).solve(rhs)


def solve_steady_unit(op: EllipticOperator):
    """Steady profile with unit volumetric source and zero boundary flux.

    Returns the field and its max value. The max is the exact source-to-
    solution L1 gain of the linearized parabolic solver on this grid, which
    is why the verification module treats it as a computed (not calibrated)
    constant. Inverse positivity of the M-matrix makes the field nonnegative.
    """
    if op.banded is not None:
        psi = solve_banded((1, 1), op.banded, op.grid.vol)
    else:
        psi = spla.splu(op.mat.tocsc()).solve(op.grid.vol)
    return psi, float(np.max(psi))


@dataclass(frozen=True)
class ProblemSpec:
    """Continuous problem data sampled onto one spatial grid.

    ``g`` and ``y_d`` may be separable closed forms (preferred: horizon
    truncation needs their tails) or explicit trajectories on a fixed time
    grid. ``omega`` is the boolean control-region mask over grid nodes.
    """

    grid: Grid
    op: EllipticOperator
    nonlinearity: Nonlinearity
    g: object
    y0: np.ndarray
    y_d: object
    omega: np.ndarray
    p: float

    def __post_init__(self):
        if not np.any(self.omega):
            raise ValueError("control region is empty")
        if self.grid.dim == 1:
            if self.p < 2:
                raise ValueError("exponent must satisfy p >= 2 in 1D")
        elif self.p <= 2:
            raise ValueError("exponent must satisfy p > 2 in 2D")

    @property
    def n_omega(self) -> int:
        return int(np.count_nonzero(self.omega))

    @property
    def omega_vol(self) -> np.ndarray:
        return self.grid.vol[self.omega]

    def sample_data(self, data, tg: TimeGrid) -> np.ndarray:
        """Sample g or y_d onto (M+1, nnodes); zeros when data is None."""
        if data is None:
            return np.zeros((tg.M + 1, self.grid.nnodes))
        if isinstance(data, SeparableData):
            return data.sample(self.grid, tg)
        arr = np.asarray(data, dtype=float)
        if arr.shape != (tg.M + 1, self.grid.nnodes):
            raise ValueError("data trajectory does not match grid and time grid")
        return arr


def make_problem(grid: Grid, a, a0, nonlinearity, g, y0, y_d, omega,
                 p: float = 2.0) -> ProblemSpec:
    """Assemble the operator and bundle validated problem data."""
    op = EllipticOperator.assemble(grid, a, a0)
    if isinstance(nonlinearity, str):
        nonlinearity = NONLINEARITIES[nonlinearity]
    nonlinearity.probe()
    y0v = _coef_values(grid, y0)
    omega = np.asarray(omega, dtype=bool)
    return ProblemSpec(grid, op, nonlinearity, g, y0v, y_d, omega, float(p))


def _full_source(spec: ProblemSpec, g_slice: np.ndarray,
                 u_slice: np.ndarray) -> np.ndarray:
    b = g_slice.copy()
    b[spec.omega] += u_slice
    return b


def step_residual_norm(spec: ProblemSpec, y_new, y_old, dt, b) -> float:
    """Discrete L2 norm of the strong-form implicit-Euler step residual."""
    op = spec.op
    vol = spec.grid.vol
    f = spec.nonlinearity.f
    r = (y_new - y_old) / dt + (op.apply(y_new) / vol) + f(y_new) - b
    return float(np.sqrt(np.sum(vol * r ** 2)))


def solve_forward(spec: ProblemSpec, u_values, tg: TimeGrid,
                  newton_tol: float = NEWTON_TOL,
                  max_iter: int = NEWTON_MAX_ITER) -> np.ndarray:
    """March the semilinear state equation with Newton per implicit step.

    ``u_values`` holds control values on the region nodes per time slice,
    shape (M+1, n_omega); the slice at t=0 does not enter the dynamics.
    """
    grid, op, nl = spec.grid, spec.op, spec.nonlinearity
    vol = grid.vol
    u = np.zeros((tg.M + 1, spec.n_omega)) if u_values is None \
        else np.asarray(u_values, dtype=float)
    if u.shape != (tg.M + 1, spec.n_omega):
        raise ValueError(f"control shape {u.shape} != {(tg.M + 1, spec.n_omega)}")
    gtraj = spec.sample_data(spec.g, tg)

    y = np.empty((tg.M + 1, grid.nnodes))
    y[0] = spec.y0
    dts = tg.dt
    for m in range(1, tg.M + 1):
        dt = dts[m - 1]
        b = _full_source(spec, gtraj[m], u[m])
        y_old = y[m - 1]
        rhs_fixed = vol * y_old + dt * vol * b
        yk = y_old.copy()
        res = np.inf
        for _ in range(max_iter):
            res = step_residual_norm(spec, yk, y_old, dt, b)
            if not np.isfinite(res):
                raise SolverDivergenceError(m, res)
            if res <= newton_tol:
                break
            # F(y) = vol*(y - y_old) + dt*(A y + vol*f(y) - vol*b)
            F = vol * yk + dt * (op.apply(yk) + vol * nl.f(yk)) - rhs_fixed
            delta = op.step_solve(dt, nl.fp(yk), -F)
            yk = yk + delta
        else:
            raise SolverDivergenceError(m, res)
        y[m] = yk
    return y


def solve_linearized(spec: ProblemSpec, y: np.ndarray, v_values,
                     tg: TimeGrid) -> np.ndarray:
    """Sensitivity solve with the reaction derivative frozen at ``y``.

    ``v_values`` may live on the control region (n_omega columns, injected
    through the region mask) or on the whole domain (a trajectory-shaped
    source).
    """
    grid, op, nl = spec.grid, spec.op, spec.nonlinearity
    vol = grid.vol
    v = np.asarray(v_values, dtype=float)
    on_omega = v.shape == (tg.M + 1, spec.n_omega)
    if not on_omega and v.shape != (tg.M + 1, grid.nnodes):
        raise ValueError(f"source shape {v.shape} matches neither region nor domain")

    z = np.zeros((tg.M + 1, grid.nnodes))
    dts = tg.dt
    for m in range(1, tg.M + 1):
        dt = dts[m - 1]
        if on_omega:
            src = np.zeros(grid.nnodes)
            src[spec.omega] = v[m]
        else:
            src = v[m]
        rhs = vol * z[m - 1] + dt * vol * src
        z[m] = op.step_solve(dt, nl.fp(y[m]), rhs)
    return z


def solve_second_order(spec: ProblemSpec, y: np.ndarray, z1: np.ndarray,
                       z2: np.ndarray, tg: TimeGrid) -> np.ndarray:
    """Second-order sensitivity: same stepping, source -f''(y) z1 z2."""
    src = -spec.nonlinearity.fpp(y) * z1 * z2
    return solve_linearized(spec, y, src, tg)


def solve_adjoint(spec: ProblemSpec, y: np.ndarray, tg: TimeGrid,
                  source=None) -> np.ndarray:
    """Backward solve whose restriction to the region is the cost gradient.

    The stepping is the exact transpose of the linearized stepping: pairing
    the output against a direction with the step-weighted control inner
    product reproduces the trapezoidal space-time pairing of the source with
    the linearized state, to roundoff. The slice at t=0 is identically zero
    (that control slice is inert under implicit Euler) and the terminal
    slice is O(dt), realizing the vanishing terminal condition on the
    truncated horizon.

    ``source`` defaults to the tracking misfit y - y_d; passing another
    trajectory gives the transpose applied to that source.
    """
    grid, op, nl = spec.grid, spec.op, spec.nonlinearity
    vol = grid.vol
    if source is None:
        source = y - spec.sample_data(spec.y_d, tg)
    r = np.asarray(source, dtype=float)
    w = trap_weights(tg)
    dts = tg.dt

    phi = np.zeros((tg.M + 1, grid.nnodes))
    psi_next = np.zeros(grid.nnodes)
    for m in range(tg.M, 0, -1):
        dt = dts[m - 1]
        rhs = vol * psi_next + w[m] * vol * r[m]
        psi = op.step_solve(dt, nl.fp(y[m]), rhs)
        phi[m] = psi
        psi_next = psi
    return phi
