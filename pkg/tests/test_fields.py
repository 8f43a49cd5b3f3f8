import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import oracles
from qmalab import fields, hypalg
from qmalab.errors import ConeExitError, StructureError, ValidationError
from qmalab.suites import random_admissible_phi

TWO_PI = 2 * np.pi


@pytest.fixture(scope="module")
def grid():
    return fields.TorusGrid(1, 8)


def trig_phi(grid, a=0.02):
    return fields.field_from_function(
        grid, lambda x: a * (np.cos(TWO_PI * x[0]) * np.sin(TWO_PI * x[3]) + np.sin(TWO_PI * (x[1] + x[2]))))


class TestGrid:
    def test_shape(self, grid):
        assert grid.shape == (8,) * 4 and grid.size == 8 ** 4 and grid.m == 2

    @pytest.mark.parametrize("N", [3, 2, 7])
    def test_bad_N(self, N):
        with pytest.raises(StructureError):
            fields.TorusGrid(1, N)

    def test_field_is_read_only(self, grid):
        f = fields.ScalarField(grid, np.zeros(grid.shape))
        with pytest.raises(ValueError):
            f.values[0, 0, 0, 0] = 1.0

    def test_complex_values_rejected(self, grid):
        with pytest.raises(ValidationError):
            fields.ScalarField(grid, 1j * np.ones(grid.shape))


class TestDerivatives:
    def test_wirtinger_of_exponential(self, grid):
        # f = cos(2 pi x1), d/dz^1 = (d_x1 - i d_y1)/2
        f = fields.field_from_function(grid, lambda x: np.cos(TWO_PI * x[0]))
        x0 = grid.coords()[0]
        expected = np.broadcast_to(-np.pi * np.sin(TWO_PI * x0), grid.shape)
        np.testing.assert_allclose(fields.spectral_derivative(f, (0,)), expected, atol=1e-13)
        np.testing.assert_allclose(fields.spectral_derivative(f, (), (0,)), expected, atol=1e-13)
        lap = fields.spectral_derivative(f, (0,), (0,))
        np.testing.assert_allclose(lap, -np.pi ** 2 * f.values, atol=1e-12)

    def test_order_limit(self, grid):
        f = trig_phi(grid)
        with pytest.raises(ValidationError):
            fields.spectral_derivative(f, (0, 0, 0), (1, 1))

    def test_fourth_order(self, grid):
        f = fields.field_from_function(grid, lambda x: np.sin(TWO_PI * x[2]))
        d4 = fields.spectral_derivative(f, (1, 1), (1, 1))
        np.testing.assert_allclose(d4, (np.pi ** 4) * f.values, atol=1e-10)

    def test_hessian_is_hermitian(self, grid):
        H = fields.complex_hessian(trig_phi(grid))
        np.testing.assert_allclose(H, np.swapaxes(H, -1, -2).conj(), atol=1e-15)

    def test_dd_J_matches_definition(self, grid):
        phi = trig_phi(grid)
        J = hypalg.flat_J(1)
        idx = (3, 1, 5, 2)
        x = np.array([i / grid.N for i in idx])

        def real_phi(y):
            return 0.02 * (np.cos(TWO_PI * y[0]) * np.sin(TWO_PI * y[3]) + np.sin(TWO_PI * (y[1] + y[2])))

        ref = oracles.dd_J_definition(real_phi, J, x)
        np.testing.assert_allclose(fields.dd_J(phi, J)[idx], ref, atol=1e-9)


class TestForms:
    def test_zero_phi(self, grid):
        J = hypalg.flat_J(1)
        phi = fields.ScalarField(grid, np.zeros(grid.shape))
        np.testing.assert_allclose(fields.omega_phi(np.eye(2), J, phi), np.broadcast_to(np.eye(2), grid.shape + (2, 2)))
        assert fields.volume_check(np.eye(2), J, phi) == 0.0

    @given(st.integers(0, 2 ** 31))
    @settings(max_examples=5, deadline=None)
    def test_form_routes_agree(self, seed):
        grid = fields.TorusGrid(1, 8)
        rng = np.random.default_rng(seed)
        J = hypalg.flat_J(1)
        phi = random_admissible_phi(grid, rng)
        Om = hypalg.omega_from_gJ(np.eye(2), J)
        via20 = hypalg.g_from_omegaJ(fields.omega20_phi(Om, J, phi), J, check=False)
        np.testing.assert_allclose(fields.omega_phi(np.eye(2), J, phi), via20, atol=1e-13)
        assert hypalg.q_real_residual(fields.dd_J(phi, J), J) < 1e-13

    def test_pfaffian_squared_is_determinant(self, grid, rng):
        J = hypalg.flat_J(1)
        phi = random_admissible_phi(grid, rng)
        Om = hypalg.omega_from_gJ(np.eye(2), J)
        pf = fields.pfaffian_ratio(Om, J, phi)
        np.testing.assert_allclose(pf ** 2, np.exp(fields.log_det_ratio(np.eye(2), J, phi)), rtol=1e-12)

    def test_residual_routes_agree(self, grid, rng):
        J = hypalg.flat_J(1)
        phi = random_admissible_phi(grid, rng)
        F = trig_phi(grid, 0.1)
        r20 = fields.residual_20(hypalg.omega_from_gJ(np.eye(2), J), J, phi, F, 0.3)
        r11 = fields.residual_11(np.eye(2), J, phi, F, 0.3)
        np.testing.assert_allclose(r20.values, r11.values, atol=1e-13)

    def test_cone_exit(self, grid):
        J = hypalg.flat_J(1)
        phi = trig_phi(grid, 2.0)
        with pytest.raises(ConeExitError, match="left the q-positive cone"):
            fields.residual_11(np.eye(2), J, phi, 0.0, 0.0)

    def test_pfaffian_volume_conserved(self, grid, rng):
        J = hypalg.flat_J(1)
        phi = random_admissible_phi(grid, rng, amplitude=0.05)
        assert abs(fields.volume_check(np.eye(2), J, phi)) < 1e-12

    def test_top_form_volume_not_conserved(self, grid):
        # the squared ratio has a nonzero mean for a single cosine
        J = hypalg.flat_J(1)
        phi = fields.field_from_function(grid, lambda x: 0.03 * np.cos(TWO_PI * x[0]))
        assert abs(fields.volume_check_11(np.eye(2), J, phi)) > 1e-4


class TestSnapshots:
    def test_round_trip(self, grid, tmp_path, rng):
        data = rng.normal(size=grid.shape + (3,))
        fields.save_snapshot(tmp_path / "a.snap", grid, data)
        g2, back = fields.load_snapshot(tmp_path / "a.snap")
        assert g2 == grid
        np.testing.assert_array_equal(back, data)

    def test_header(self, grid, tmp_path):
        fields.save_snapshot(tmp_path / "b.snap", grid, np.zeros(grid.shape))
        raw = (tmp_path / "b.snap").read_bytes()
        assert raw[:4] == b"QMA1"
        assert len(raw) == 20 + 8 * grid.size

    def test_bad_files(self, grid, tmp_path):
        (tmp_path / "c.snap").write_bytes(b"XXXX" + bytes(16))
        with pytest.raises(ValidationError):
            fields.load_snapshot(tmp_path / "c.snap")
        fields.save_snapshot(tmp_path / "d.snap", grid, np.zeros(grid.shape))
        (tmp_path / "d.snap").write_bytes((tmp_path / "d.snap").read_bytes()[:-8])
        with pytest.raises(ValidationError, match="truncated"):
            fields.load_snapshot(tmp_path / "d.snap")

    def test_shape_mismatch(self, grid, tmp_path):
        with pytest.raises(StructureError):
            fields.save_snapshot(tmp_path / "e.snap", grid, np.zeros((4, 4)))
