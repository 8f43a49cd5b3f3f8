import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import oracles
from qmalab import jets
from qmalab.errors import ChartError, ValidationError

small = st.floats(min_value=-0.8, max_value=0.8, allow_nan=False)


def scalar_jet(z0, fn):
    space = jets.jet_space(2)
    zs, zbs = space.coordinates(z0)
    return fn(zs, zbs)


class TestArithmetic:
    def test_space_size(self):
        # monomials of degree <= 4 in 4 variables
        assert jets.jet_space(2).size == 70

    def test_polynomial_partials(self):
        z0 = np.array([0.3 + 0.1j, -0.2j])
        f = scalar_jet(z0, lambda z, zb: z[0] ** 2 * zb[1] + 3 * z[1] * zb[1])
        assert f.value == pytest.approx(z0[0] ** 2 * np.conj(z0[1]) + 3 * abs(z0[1]) ** 2)
        assert f.partial([0], [1]) == pytest.approx(2 * z0[0])
        assert f.partial([0, 0], [1]) == pytest.approx(2.0)
        assert f.partial([1], [1]) == pytest.approx(3.0)
        assert f.partial([0, 0, 0]) == 0

    @given(small, small, small, small)
    @settings(max_examples=30, deadline=None)
    def test_elementary_functions_match_differences(self, a, b, c, d):
        z0 = np.array([1.0 + a + 1j * b, c + 1j * d])
        fn = lambda z, zb: ((z[0] * zb[0] + z[1] * zb[1] + 1.0).log() + (z[0] * zb[1]).exp()  # noqa: E731
                            + (z[0] * zb[0] + 2.0).sqrt() / (z[1] * zb[1] + 1.0))
        f = scalar_jet(z0, fn)

        def real_f(x):
            z = np.array([x[0] + 1j * x[1], x[2] + 1j * x[3]])
            return (np.log(np.vdot(z, z).real + 1) + np.exp(z[0] * np.conj(z[1]))
                    + np.sqrt(abs(z[0]) ** 2 + 2) / (abs(z[1]) ** 2 + 1))

        x = oracles.real_point(z0)
        assert f.partial([1]) == pytest.approx(oracles.dz(real_f, x, 1), abs=1e-9)
        assert f.partial([], [0]) == pytest.approx(oracles.dzbar(real_f, x, 0), abs=1e-9)
        mixed = oracles.dz(lambda y: oracles.dzbar(real_f, y, 1, 1e-3), x, 0, 1e-3)
        assert f.partial([0], [1]) == pytest.approx(mixed, abs=1e-6)

    def test_reciprocal_and_power(self):
        z0 = np.array([0.5, 0.2])
        u = scalar_jet(z0, lambda z, zb: z[0] * zb[0] + 1.0)
        one = u * u.reciprocal()
        assert one.max_abs() == pytest.approx(1.0)
        np.testing.assert_allclose(one.coef[1:], 0, atol=1e-14)
        diff = u.power(1.5) - u * u.sqrt()
        assert diff.max_abs() < 1e-13

    def test_conj_swaps_variables(self):
        z0 = np.array([0.4 + 0.3j, 0.1])
        f = scalar_jet(z0, lambda z, zb: z[0] ** 2 * zb[1])
        fc = f.conj()
        assert fc.partial([1], [0, 0]) == pytest.approx(np.conj(f.partial([0, 0], [1])))

    def test_order_tracking(self):
        f = scalar_jet(np.zeros(2), lambda z, zb: z[0] * zb[0])
        h = f.hessian()
        assert h.order == 2 and h.shape == (2, 2)
        with pytest.raises(ValueError):
            f.truncate(0).deriv(0)

    def test_matrix_helpers(self, rng):
        space = jets.jet_space(2)
        G = jets.random_jet(rng, space, (2, 2), order=2, scale=0.1) + np.eye(2) * 3.0
        inv = jets.jet_inv(G)
        prod = jets.jet_matmul(G, inv)
        assert (prod - np.eye(2)).max_abs() < 1e-13
        ld = jets.jet_logdet(G)
        assert ld.value == pytest.approx(np.log(np.linalg.det(G.value)))
        assert (jets.jet_det(G) - ld.exp()).max_abs() < 1e-12

    def test_compose_with_identity(self, rng):
        space = jets.jet_space(2)
        f = jets.random_jet(rng, space)
        inc = [space.variable(v) for v in range(4)]
        assert (f.compose(inc) - f).max_abs() < 1e-14

    def test_compose_rejects_offset(self, rng):
        space = jets.jet_space(2)
        f = jets.random_jet(rng, space)
        with pytest.raises(ValueError):
            f.compose([space.variable(v, 1.0) for v in range(4)])


class TestCharts:
    def test_flat_metric(self):
        g, ginv = jets.metric_jets(jets.flat_chart(2), np.zeros(4))
        np.testing.assert_allclose(g.value, np.eye(4))
        assert g.gradient().max_abs() == 0

    def test_eh_metric_matches_closed_form(self, eh_chart):
        z0 = np.array([0.6 - 0.3j, 0.4 + 0.5j])
        g, _ = jets.metric_jets(eh_chart, z0)
        np.testing.assert_allclose(g.value, oracles.eh_metric(z0), atol=1e-13)

    @pytest.mark.parametrize("a", [0.5, 1.0, 1.7])
    def test_eh_volume_form(self, a):
        # the potential is normalised so that det g = 1 on the whole chart
        chart = jets.eguchi_hanson_chart(a, domain=None)
        z0 = np.array([0.8 * a, 0.3j * a])
        g, _ = jets.metric_jets(chart, z0)
        assert jets.jet_logdet(g).max_abs() < 1e-12

    def test_domain(self, eh_chart):
        with pytest.raises(ValidationError):
            jets.metric_jets(eh_chart, np.array([0.1, 0.0]))

    def test_christoffel_oracle(self, eh_chart):
        z0 = np.array([0.7 + 0.2j, -0.3 + 0.6j])
        g, ginv = jets.metric_jets(eh_chart, z0)
        gam = jets.christoffel_jet(g, ginv).value
        np.testing.assert_allclose(gam, oracles.eh_christoffel(z0), atol=1e-10)

    def test_recovered_J_is_quaternionic(self, eh_chart):
        from qmalab import hypalg
        g, _ = jets.metric_jets(eh_chart, np.array([1.1, 0.4j]))
        J = jets.recover_J(g, eh_chart.omega)
        assert hypalg.check_quaternionic(J.value).max < 1e-12


class TestNormalChart:
    def test_round_trip(self, eh_chart):
        nc = jets.normal_chart_at(eh_chart, np.array([1.0, 0.2]))
        w = np.array([0.01 + 0.02j, -0.03j])
        np.testing.assert_allclose(nc.forward(nc.inverse(w)), w, atol=1e-13)

    def test_first_derivatives_vanish(self, eh_chart):
        nc = jets.normal_chart_at(eh_chart, np.array([1.0, 0.2]))
        g, _ = nc.metric_jets()
        assert g.gradient().truncate(0).max_abs() < 1e-12

    def test_inverse_nonconvergence(self, eh_chart):
        import dataclasses
        nc = dataclasses.replace(jets.normal_chart_at(eh_chart, np.array([1.0, 0.2])), max_iter=1)
        with pytest.raises(ChartError):
            nc.inverse(np.array([0.5, 0.5j]))

    def test_transported_metric_agrees(self, eh_chart):
        z0 = np.array([0.9, 0.3 - 0.2j])
        nc = jets.normal_chart_at(eh_chart, z0)
        g, _ = jets.metric_jets(eh_chart, z0)
        gw, _ = nc.metric_jets()
        assert (jets.transport_metric(g, nc).truncate(2) - gw).max_abs() < 1e-11
