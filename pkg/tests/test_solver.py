import json

import numpy as np
import pytest

from qmalab import fields, hypalg, solver
from qmalab.errors import StageFailure, ValidationError
from qmalab.suites import random_admissible_phi

TWO_PI = 2 * np.pi


@pytest.fixture(scope="module")
def grid():
    return fields.TorusGrid(1, 8)


@pytest.fixture(scope="module")
def manufactured_run(grid):
    star = solver.manufactured_phi(grid)
    F = solver.manufactured_F(star)
    phi, b, rep, states = solver.solve_qma(F, solver.SolverConfig(N=8, steps=3))
    return star, F, phi, b, rep, states


class TestConfig:
    @pytest.mark.parametrize("kw", [{"tol": 0}, {"steps": 0}, {"backtrack": 1.0}, {"initial_step": 0.0}])
    def test_invalid(self, kw):
        with pytest.raises(ValidationError):
            solver.SolverConfig(**kw)

    def test_t_values(self):
        np.testing.assert_allclose(solver.SolverConfig(steps=4).t_values, [0, 0.25, 0.5, 0.75, 1.0])


class TestLinearization:
    def test_matches_frechet_quotient(self, grid, rng):
        g, J = solver.background(1)
        phi = random_admissible_phi(grid, rng)
        u = random_admissible_phi(grid, rng, amplitude=1.0)
        L = solver.linearized_operator(fields.omega_phi(g, J, phi), J, grid)

        def R(p):
            return 0.5 * fields.log_det_ratio(g, J, p)

        h = 1e-5
        fd = (R(phi + u * h) - R(phi - u * h)) / (2 * h)
        np.testing.assert_allclose(L(u).values, fd, atol=1e-8)

    def test_symbol_at_zero(self, grid, rng):
        g, J = solver.background(1)
        u = random_admissible_phi(grid, rng, amplitude=1.0)
        L = solver.linearized_operator(np.broadcast_to(g, grid.shape + (2, 2)), J, grid)
        sym = solver.preconditioner_symbol(grid, g, J)
        via_symbol = fields.ScalarField.from_coeffs(grid, sym * u.coeffs)
        np.testing.assert_allclose(L(u).values, via_symbol.values, atol=1e-12)

    def test_symbol_for_flat_n1(self, grid):
        # the J-twist copies u_{11-bar} into the 22-bar slot and back, so L0 = (u_{11-bar} + u_{22-bar}) / 2
        g, J = solver.background(1)
        sym = solver.preconditioner_symbol(grid, g, J)
        lap = sum(grid.multiplier((k,), (k,)) for k in range(2)).real
        np.testing.assert_allclose(sym, 0.5 * lap, atol=1e-12)


class TestSolve:
    def test_zero_rhs(self, grid):
        F = fields.ScalarField(grid, np.zeros(grid.shape))
        phi, b, rep, _ = solver.solve_qma(F, solver.SolverConfig(N=8, steps=1))
        assert np.abs(phi.values).max() == 0.0 and b == 0.0

    def test_constant_rhs(self, grid):
        F = fields.ScalarField(grid, np.full(grid.shape, 0.3))
        phi, b, rep, _ = solver.solve_qma(F, solver.SolverConfig(N=8, steps=2))
        assert np.abs(phi.values).max() < 1e-14
        assert b == pytest.approx(-0.3, abs=1e-14)

    def test_manufactured_recovery(self, manufactured_run):
        star, F, phi, b, rep, _ = manufactured_run
        assert np.abs(phi.values - (star.values - star.values.max())).max() < 1e-8
        assert abs(b) < 1e-9
        assert phi.values.max() == 0.0
        assert rep.converged and abs(rep.volume_check) < 1e-10

    def test_final_residual(self, manufactured_run):
        _, F, phi, b, _, _ = manufactured_run
        g, J = solver.background(1)
        assert np.abs(fields.residual_11(g, J, phi, F, b).values).max() < 1e-10

    def test_stage_history(self, manufactured_run):
        *_, rep, states = manufactured_run
        assert [s.t for s in states] == pytest.approx([1 / 3, 2 / 3, 1.0])
        for s in states:
            assert s.converged and s.residual_history[-1] <= 1e-10
            assert min(s.min_eig_history) > 0
        # Newton converges quadratically once close
        hist = states[-1].residual_history
        assert len(hist) <= 8

    def test_b_closed_form(self, manufactured_run):
        _, F, _, b, rep, _ = manufactured_run
        assert abs(solver.b_closed_form_residual(F, b)) < 1e-9
        assert rep.b_closed_form_residual == pytest.approx(solver.b_closed_form_residual(F, b))

    def test_random_rhs(self, grid):
        F = solver.random_F(grid, 0.3, seed=5)
        assert np.abs(F.values).max() == pytest.approx(0.3)
        phi, b, rep, _ = solver.solve_qma(F, solver.SolverConfig(N=8, steps=3))
        g, J = solver.background(1)
        assert np.abs(fields.residual_11(g, J, phi, F, b).values).max() < 1e-10
        assert abs(solver.b_closed_form_residual(F, b)) < 1e-9

    def test_schedule_independence(self, grid):
        F = solver.random_F(grid, 0.3, seed=9)
        a = solver.solve_qma(F, solver.SolverConfig(N=8, steps=5))
        b = solver.solve_qma(F, solver.SolverConfig(N=8, steps=2, initial_step=0.5))
        assert np.abs(a[0].values - b[0].values).max() < 1e-8
        assert abs(a[1] - b[1]) < 1e-8

    def test_callback_and_report_json(self, grid):
        seen = []
        F = solver.random_F(grid, 0.1, seed=1)
        _, _, rep, states = solver.solve_qma(F, solver.SolverConfig(N=8, steps=2), callback=seen.append)
        assert seen == states
        d = json.loads(rep.to_json())
        assert "elapsed" not in d and len(d["stages"]) == 2

    def test_grid_mismatch(self, grid):
        F = fields.ScalarField(grid, np.zeros(grid.shape))
        with pytest.raises(ValidationError):
            solver.solve_qma(F, solver.SolverConfig(N=16))

    def test_stage_failure_keeps_last_good_state(self, grid):
        F = solver.random_F(grid, 0.3, seed=2)
        cfg = solver.SolverConfig(N=8, steps=1, max_iter=1, max_halvings=1)
        with pytest.raises(StageFailure) as exc:
            solver.solve_qma(F, cfg)
        st = exc.value.state
        assert st is not None and st.t == 0.0
        assert exc.value.diagnostics["report"].failure

    @pytest.mark.slow
    def test_quaternionic_dimension_two(self):
        grid = fields.TorusGrid(2, 4)
        F = fields.field_from_function(grid, lambda x: 0.05 * np.cos(TWO_PI * x[0]) + 0.05 * np.sin(TWO_PI * x[5]))
        phi, b, rep, _ = solver.solve_qma(F, solver.SolverConfig(n=2, N=4, steps=1))
        g, J = solver.background(2)
        assert np.abs(fields.residual_11(g, J, phi, F, b).values).max() < 1e-10
        assert hypalg.check_quaternionic(J).max == 0.0
