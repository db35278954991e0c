"""Linear solvers: CG contracts, cached factorizations, Stokes solves."""

import numpy as np
import pytest

from enslab.errors import CompatibilityError, SolverError
from enslab.grid import (
    BoundaryTrace,
    Grid,
    ScalarField,
    VectorField,
    divergence,
    gradient,
    integral,
    laplacian_dirichlet,
    laplacian_neumann,
    mean,
    scalar_norm,
    vector_laplacian,
)
from enslab.linsolve import (
    NeumannPoisson,
    SolveReport,
    SparseOperator,
    cg_solve,
    dense_stokes_solve,
    flatten_interior,
    heat_solver,
    htilde_solver,
    laplacian_dirichlet_matrix,
    laplacian_neumann_matrix,
    neumann_poisson,
    noslip_helmholtz,
    noslip_viscous_matrix,
    stokes_solve,
    unflatten_interior,
)


class TestConjugateGradient:
    def test_identity_converges_in_one_iteration(self):
        A = SparseOperator.from_matrix(np.eye(12))
        b = np.arange(12, dtype=float)
        x, rep = cg_solve(A, b, tol=1e-12)
        assert rep.converged and rep.iterations == 1
        assert np.allclose(x, b)

    def test_zero_rhs_returns_zero_without_iterating(self):
        A = SparseOperator.from_matrix(np.eye(5))
        x, rep = cg_solve(A, np.zeros(5))
        assert rep.iterations == 0 and rep.converged
        assert np.all(x == 0.0)

    def test_monotone_energy_error_and_final_agreement(self):
        rng = np.random.default_rng(1)
        n = 40
        Q, _ = np.linalg.qr(rng.standard_normal((n, n)))
        lam = np.linspace(1.0, 50.0, n)
        A = Q @ np.diag(lam) @ Q.T
        A = 0.5 * (A + A.T)
        b = rng.standard_normal(n)
        xstar = np.linalg.solve(A, b)
        energies = []
        op = SparseOperator.from_matrix(A)
        x, rep = cg_solve(op, b, tol=1e-14,
                          callback=lambda xk: energies.append(
                              float((xk - xstar) @ A @ (xk - xstar))))
        assert rep.converged
        diffs = np.diff(energies)
        assert np.all(diffs <= 1e-12 * max(energies))
        assert np.linalg.norm(x - xstar) <= 1e-8 * np.linalg.norm(xstar)

    def test_deflated_singular_system(self):
        g = Grid(16)
        L = laplacian_neumann_matrix(g).toarray()
        op = SparseOperator.from_matrix(-L, nullspace=[np.ones(g.nx * g.ny)])
        rng = np.random.default_rng(2)
        b = rng.standard_normal(g.nx * g.ny)
        b -= b.mean()
        x, rep = cg_solve(op, b, tol=1e-11)
        assert rep.converged
        assert abs(x.mean()) <= 1e-12
        assert np.linalg.norm(-L @ x - b) <= 1e-9 * np.linalg.norm(b)

    def test_pure_nullspace_rhs_yields_zero(self):
        g = Grid(8)
        L = laplacian_neumann_matrix(g).toarray()
        op = SparseOperator.from_matrix(-L, nullspace=[np.ones(g.nx * g.ny)])
        x, rep = cg_solve(op, np.full(g.nx * g.ny, 3.0))
        assert rep.iterations == 0 and np.all(x == 0.0)

    def test_breakdown_is_reported_not_ignored(self):
        A = SparseOperator.from_matrix(-np.eye(4))
        x, rep = cg_solve(A, np.ones(4))
        assert rep.breakdown and not rep.converged

    def test_nonfinite_rhs_raises(self):
        A = SparseOperator.from_matrix(np.eye(3))
        with pytest.raises(SolverError):
            cg_solve(A, np.array([1.0, np.nan, 0.0]))

    def test_operator_verify_contract(self):
        A = SparseOperator.from_matrix(np.diag([1.0, 2.0, 3.0]))
        A.verify(np.random.default_rng(0))
        B = SparseOperator.from_matrix(np.triu(np.ones((4, 4))))
        with pytest.raises(SolverError):
            B.verify(np.random.default_rng(0))


class TestMatrixAssemblies:
    @pytest.mark.parametrize("n", [8, 16])
    def test_neumann_matrix_matches_grid_operator(self, n):
        g = Grid(n)
        rng = np.random.default_rng(n)
        vals = rng.standard_normal(g.shape_cell)
        ref = laplacian_neumann(ScalarField(g, vals)).values
        got = (laplacian_neumann_matrix(g) @ vals.ravel()).reshape(g.shape_cell)
        assert np.allclose(got, ref, rtol=0, atol=1e-11 * max(1.0, np.abs(ref).max()))

    @pytest.mark.parametrize("n", [8, 16])
    def test_dirichlet_matrix_matches_grid_operator(self, n):
        g = Grid(n)
        rng = np.random.default_rng(n + 1)
        vals = rng.standard_normal(g.shape_cell)
        ref = laplacian_dirichlet(ScalarField(g, vals)).values
        got = (laplacian_dirichlet_matrix(g) @ vals.ravel()).reshape(g.shape_cell)
        assert np.allclose(got, ref, rtol=0, atol=1e-11 * max(1.0, np.abs(ref).max()))

    def test_viscous_matrix_matches_grid_operator_on_interior(self):
        g = Grid(8)
        rng = np.random.default_rng(4)
        u = rng.standard_normal(g.shape_u)
        v = rng.standard_normal(g.shape_v)
        u[0, :] = u[-1, :] = 0.0
        v[:, 0] = v[:, -1] = 0.0
        w = VectorField(g, u, v)
        ref = -flatten_interior(vector_laplacian(w, "noslip"))
        got = noslip_viscous_matrix(g) @ flatten_interior(w)
        assert np.allclose(got, ref, rtol=0, atol=1e-11 * max(1.0, np.abs(ref).max()))

    def test_viscous_matrix_is_spd(self):
        g = Grid(8)
        K = noslip_viscous_matrix(g).toarray()
        assert np.abs(K - K.T).max() == 0.0
        assert np.linalg.eigvalsh(K).min() > 0.0

    def test_flatten_unflatten_roundtrip(self):
        g = Grid(8)
        rng = np.random.default_rng(6)
        x = rng.standard_normal((g.nx - 1) * g.ny + g.nx * (g.ny - 1))
        assert np.array_equal(flatten_interior(unflatten_interior(g, x)), x)
        tr = BoundaryTrace.constant(g, 2.5)
        w = unflatten_interior(g, x, tr)
        assert np.all(w.u[0, :] == -2.5) and np.all(w.u[-1, :] == 2.5)


class TestNeumannPoisson:
    def test_compatible_solve_is_exact(self):
        g = Grid(16)
        rng = np.random.default_rng(8)
        rhs = rng.standard_normal(g.shape_cell)
        rhs -= rhs.mean()
        sol = neumann_poisson(g).solve(ScalarField(g, rhs))
        assert abs(mean(sol)) <= 1e-13
        res = laplacian_neumann(sol).values - rhs
        assert np.abs(res).max() <= 1e-10 * np.abs(rhs).max()

    def test_incompatible_rhs_answers_mean_zero_part(self):
        g = Grid(8)
        rng = np.random.default_rng(9)
        rhs = rng.standard_normal(g.shape_cell) + 5.0
        sol = NeumannPoisson(g).solve(ScalarField(g, rhs))
        res = laplacian_neumann(sol).values - (rhs - rhs.mean())
        assert np.abs(res).max() <= 1e-10 * np.abs(rhs).max()

    def test_cache_returns_same_instance(self):
        g = Grid(8)
        assert neumann_poisson(g) is neumann_poisson(Grid(8))

    def test_htilde_solver_roundtrip(self):
        g = Grid(16)
        rng = np.random.default_rng(10)
        b = rng.standard_normal(g.nx * g.ny)
        x = htilde_solver(g)(b)
        field = ScalarField(g, x.reshape(g.shape_cell))
        back = x - laplacian_neumann(field).values.ravel()
        assert np.linalg.norm(back - b) <= 1e-10 * np.linalg.norm(b)


class TestHeatSolvers:
    def test_cn_neumann_conserves_mass(self):
        g = Grid(32)
        rng = np.random.default_rng(12)
        vals = rng.standard_normal(g.shape_cell)
        step = heat_solver(g, a=0.1 * 1e-3, bc="neumann", theta="cn")
        out = step(vals)
        m0 = integral(ScalarField(g, vals))
        m1 = integral(ScalarField(g, out))
        assert abs(m1 - m0) <= 1e-12

    def test_be_dirichlet_contracts(self):
        g = Grid(16)
        rng = np.random.default_rng(13)
        vals = rng.standard_normal(g.shape_cell)
        step = heat_solver(g, a=0.05, bc="dirichlet", theta="be")
        out = step(vals)
        assert scalar_norm(ScalarField(g, out)) < scalar_norm(ScalarField(g, vals))

    def test_unknown_bc_rejected(self):
        with pytest.raises(ValueError):
            heat_solver(Grid(8), a=0.1, bc="robin")


class TestNoslipHelmholtz:
    def test_homogeneous_solve_satisfies_equation(self):
        g = Grid(16)
        rng = np.random.default_rng(14)
        c = 0.01
        u = rng.standard_normal(g.shape_u)
        v = rng.standard_normal(g.shape_v)
        u[0, :] = u[-1, :] = 0.0
        v[:, 0] = v[:, -1] = 0.0
        rhs = VectorField(g, u, v)
        x = noslip_helmholtz(g, c).solve(rhs)
        lap = vector_laplacian(x, "noslip")
        res = flatten_interior(x) - c * flatten_interior(lap) - flatten_interior(rhs)
        assert np.abs(res).max() <= 1e-10 * max(1.0, np.abs(flatten_interior(rhs)).max())
        assert np.all(x.u[0, :] == 0.0) and np.all(x.v[:, 0] == 0.0)

    def test_wall_data_solve_recovers_manufactured_field(self):
        g = Grid(8)
        rng = np.random.default_rng(15)
        c = 0.02
        tr = BoundaryTrace(g, rng.standard_normal(g.ny), rng.standard_normal(g.ny),
                           rng.standard_normal(g.nx), rng.standard_normal(g.nx))
        y = rng.standard_normal((g.nx - 1) * g.ny + g.nx * (g.ny - 1))
        K = noslip_viscous_matrix(g)
        h2 = g.h * g.h
        bu = np.zeros((g.nx - 1, g.ny))
        bv = np.zeros((g.nx, g.ny - 1))
        bu[0, :] = -tr.left / h2
        bu[-1, :] = tr.right / h2
        bv[:, 0] = -tr.bottom / h2
        bv[:, -1] = tr.top / h2
        fold = np.concatenate([bu.ravel(), bv.ravel()])
        rhs_flat = y + c * (K @ y) - c * fold
        rhs = unflatten_interior(g, rhs_flat)
        x = noslip_helmholtz(g, c).solve(rhs, tr)
        assert np.allclose(flatten_interior(x), y, atol=1e-10)
        assert np.allclose(x.u[0, :], -tr.left)
        assert np.allclose(x.v[:, -1], tr.top)


def coscos(grid, k=1, m=1):
    x = grid.cell_x()[:, None]
    y = grid.cell_y()[None, :]
    return ScalarField(grid, np.cos(k * np.pi * x) * np.cos(m * np.pi * y))


class TestStokesSolve:
    def test_zero_data_returns_zero(self):
        g = Grid(16)
        z, q, rep = stokes_solve(ScalarField(g, np.zeros(g.shape_cell)))
        assert np.all(z.u == 0.0) and np.all(z.v == 0.0) and np.all(q.values == 0.0)
        assert rep.converged

    def test_prescribed_divergence_residual(self):
        g = Grid(32)
        gsrc = coscos(g)
        z, q, rep = stokes_solve(gsrc, tol=1e-9)
        res = scalar_norm(divergence(z) - gsrc) / scalar_norm(gsrc)
        assert res <= 1e-9
        assert np.all(z.u[0, :] == 0.0) and np.all(z.v[:, -1] == 0.0)
        assert abs(mean(q)) <= 1e-12
        assert rep.converged

    def test_momentum_residual_at_factorization_precision(self):
        g = Grid(16)
        gsrc = coscos(g)
        z, q, rep = stokes_solve(gsrc, tol=1e-10)
        K = noslip_viscous_matrix(g)
        mom = K @ flatten_interior(z) + flatten_interior(gradient(q))
        assert np.abs(mom).max() <= 1e-8 * max(1.0, np.abs(flatten_interior(z)).max() / g.h ** 2)

    def test_matches_dense_oracle(self):
        g = Grid(16)
        rng = np.random.default_rng(16)
        vals = rng.standard_normal(g.shape_cell)
        vals -= vals.mean()
        gsrc = ScalarField(g, vals)
        z1, q1, _ = stokes_solve(gsrc, tol=1e-12)
        z2, q2 = dense_stokes_solve(gsrc)
        assert np.abs(z1.u - z2.u).max() <= 1e-8 * max(1.0, np.abs(z2.u).max())
        assert np.abs(z1.v - z2.v).max() <= 1e-8 * max(1.0, np.abs(z2.v).max())
        assert np.abs(q1.values - q2.values).max() <= 1e-7 * max(1.0, np.abs(q2.values).max())

    def test_wall_data_flux_balance_solvable(self):
        # uniform source 4 balanced by unit outward boundary velocity
        g = Grid(16)
        gsrc = ScalarField(g, np.full(g.shape_cell, 4.0))
        tr = BoundaryTrace.constant(g, 1.0)
        z, q, rep = stokes_solve(gsrc, tr, tol=1e-9)
        assert rep.converged
        assert np.allclose(z.u[-1, :], 1.0) and np.allclose(z.u[0, :], -1.0)
        res = scalar_norm(divergence(z) - gsrc) / scalar_norm(gsrc)
        assert res <= 1e-9

    def test_incompatible_data_raises(self):
        g = Grid(16)
        gsrc = ScalarField(g, np.zeros(g.shape_cell))
        with pytest.raises(CompatibilityError):
            stokes_solve(gsrc, BoundaryTrace.constant(g, 1.0))

    def test_wall_data_matches_dense_oracle(self):
        g = Grid(8)
        rng = np.random.default_rng(17)
        tr = BoundaryTrace(g, rng.standard_normal(g.ny), rng.standard_normal(g.ny),
                           rng.standard_normal(g.nx), rng.standard_normal(g.nx))
        flux = g.h * (tr.left.sum() + tr.right.sum() + tr.bottom.sum() + tr.top.sum())
        vals = rng.standard_normal(g.shape_cell)
        vals = vals - vals.mean() + flux  # cell volume integral = boundary flux
        gsrc = ScalarField(g, vals)
        z1, q1, _ = stokes_solve(gsrc, tr, tol=1e-12)
        z2, q2 = dense_stokes_solve(gsrc, tr)
        assert np.abs(z1.u - z2.u).max() <= 1e-8 * max(1.0, np.abs(z2.u).max())
        assert np.abs(q1.values - q2.values).max() <= 1e-7 * max(1.0, np.abs(q2.values).max())

    def test_dense_oracle_self_consistency(self):
        g = Grid(8)
        gsrc = coscos(g, 2, 1)
        z, q = dense_stokes_solve(gsrc)
        assert scalar_norm(divergence(z) - gsrc) <= 1e-10 * max(1.0, scalar_norm(gsrc))
        assert abs(mean(q)) <= 1e-12
