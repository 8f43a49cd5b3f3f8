import numpy as np
import pytest

import oracles
from qmalab import curvature, hypalg, jets
from qmalab.errors import StructureError, ValidationError


class TestCurvatureTensor:
    def test_flat_vanishes(self, flat_ctx):
        assert curvature.curvature_at(flat_ctx.g).norm() == 0.0

    def test_eh_matches_closed_form(self):
        z0 = np.array([0.8 + 0.1j, 0.5 - 0.4j])
        g, _ = jets.metric_jets(jets.eguchi_hanson_chart(1.0), z0)
        ref = oracles.eh_curvature(z0)
        np.testing.assert_allclose(curvature.kahler_curvature_formula(g), ref, atol=1e-8)
        lowered = curvature.curvature_at(g).lowered
        np.testing.assert_allclose(lowered, ref, atol=1e-8)

    def test_symmetries(self, eh_ctx):
        curv = curvature.curvature_at(eh_ctx.g, eh_ctx.ginv)
        assert curv.kahler_symmetry_residual() < 1e-12 * curv.norm()
        # hyperkahler metrics are Ricci flat
        assert np.abs(curv.ricci()).max() < 1e-12 * curv.norm()
        assert curvature.christoffel(eh_ctx.g).symmetry_residual() < 1e-14

    def test_tensorial_under_normal_chart(self, eh_ctx):
        # the full curvature norm is a scalar, so it agrees in both charts
        nz = curvature.curvature_at(eh_ctx.g, eh_ctx.ginv)
        nw = curvature.curvature_at(eh_ctx.gw, eh_ctx.ginvw)
        iz = np.einsum("abij,ba,ji->", nz.lowered, hypalg.inverse_metric(nz.metric), hypalg.inverse_metric(nz.metric))
        iw = np.einsum("abij,ba,ji->", nw.lowered, hypalg.inverse_metric(nw.metric), hypalg.inverse_metric(nw.metric))
        assert iz == pytest.approx(iw, abs=1e-12)

    def test_order_needed(self, eh_ctx):
        with pytest.raises(ValidationError):
            curvature.curvature_at(eh_ctx.g.truncate(1))


class TestPre:
    def test_eh(self, eh_chart, eh_ctx):
        res = curvature.verify_prop_pre(eh_chart, eh_ctx.x0, eh_ctx)
        assert max(res.values()) < 1e-6

    def test_flat_exact(self, flat_ctx):
        res = curvature.verify_prop_pre(flat_ctx.chart, flat_ctx.x0, flat_ctx)
        assert max(res.values()) < 1e-12

    def test_normal_chart_J_is_parallel_to_first_order(self, eh_ctx):
        assert eh_ctx.Jw.gradient().truncate(0).max_abs() < 1e-12


class TestFund:
    def test_positive_samples(self, eh_chart, eh_ctx, rng):
        for _ in range(10):
            g = hypalg.random_hyperhermitian(rng, eh_ctx.J0, base=eh_ctx.ghat0)
            res = curvature.verify_lemma_fund(eh_chart, eh_ctx.x0, g, eh_ctx)
            assert max(res.values()) < 1e-7

    def test_indefinite_sample(self, eh_chart, eh_ctx, rng):
        g = hypalg.random_hyperhermitian(rng, eh_ctx.J0, positive=False)
        res = curvature.verify_lemma_fund(eh_chart, eh_ctx.x0, g, eh_ctx, require_positive=False)
        assert max(res.values()) < 1e-7

    def test_requires_hyperhermitian(self, eh_chart, eh_ctx):
        # ghat is diag(1/sqrt2, sqrt2) here, so diag(2, 1) is not conformal to it
        with pytest.raises(ValidationError, match="hyperhermitian"):
            curvature.verify_lemma_fund(eh_chart, eh_ctx.x0, np.diag([2.0, 1.0]), eh_ctx)

    def test_shape_check(self, eh_chart, eh_ctx):
        with pytest.raises(StructureError):
            curvature.verify_lemma_fund(eh_chart, eh_ctx.x0, np.eye(4), eh_ctx)

    def test_negative_control(self, eh_chart, eh_ctx, rng):
        # a Hermitian tensor that is not J-invariant does not kill the trace
        bad = eh_ctx.ghat0 + 0.3 * hypalg.random_hermitian(rng, 2)
        bad = bad - 0.5 * hypalg.j_average(bad - eh_ctx.ghat0, eh_ctx.J0)
        res = curvature.verify_lemma_fund(eh_chart, eh_ctx.x0, bad, eh_ctx, check_hyperhermitian=False)
        assert res["fund1"] > 1e-3


class TestFund2:
    def test_eh(self, eh_chart, eh_ctx, rng):
        for _ in range(5):
            g = hypalg.random_hyperhermitian(rng, eh_ctx.J0, base=eh_ctx.ghat0)
            res = curvature.verify_lemma_fund2(eh_chart, eh_ctx.x0, g, eh_ctx)
            assert max(v for k, v in res.items() if k.startswith("eq")) < 1e-7
            assert res["conj12"] < 1e-12 and res["conj34"] < 1e-12

    def test_second_derivatives_of_J_are_nonzero(self, eh_ctx):
        # otherwise the identities would be trivially satisfied
        assert np.abs(eh_ctx.Jw.hessian().value).max() > 1e-2


class TestFrames:
    @pytest.mark.parametrize("n", [1, 2])
    def test_frame_is_orthonormal_and_j_adapted(self, rng, n):
        J = hypalg.flat_J(n)
        g = hypalg.random_hyperhermitian(rng, J)
        fr = curvature.j_adapted_frame(g, J)
        assert fr.orthonormality_residual() < 1e-12
        for k in range(0, 2 * n, 2):
            np.testing.assert_allclose(fr.Z[k + 1], curvature.j_conj(fr.Z[k], J), atol=1e-14)

    def test_frame_trace_eh(self, eh_ctx, rng):
        curv = curvature.curvature_at(eh_ctx.g, eh_ctx.ginv)
        fr = curvature.j_adapted_frame(eh_ctx.ghat0, eh_ctx.J0)
        res = curvature.frame_trace_check(curv, fr, eh_ctx.J0, rng=rng, pairs=20)
        assert max(res.values()) < 1e-8
