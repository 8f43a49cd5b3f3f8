"""Verification suites shared by the command line and the acceptance tests.

A suite maps ``(context, rng, samples)`` at one chart point to a dict
``{name: (value, threshold_key)}``; the verdict is looked up in
:data:`qmalab.config.THRESHOLDS`.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import curvature, fields, hypalg, jets, monitor
from .config import THRESHOLDS, passes
from .errors import ValidationError

SUITES = ("quaternionic", "bijection", "pre", "fund", "fund2", "frame", "delta", "eqns", "fform", "equiv")
GRID_SUITES = ("fform", "equiv")


def make_chart(name: str, a: float = 1.0, n: int = 1) -> jets.KahlerPotentialChart:
    if name == "flat":
        return jets.flat_chart(n)
    if name in ("eh", "eguchi-hanson"):
        return jets.eguchi_hanson_chart(a)
    raise ValidationError(f"unknown chart {name!r}")


def _point_metrics(rng, J0, ghat0, samples):
    """Positive and (every fourth sample) sign-indefinite J-invariant tensors."""
    out = []
    for k in range(samples):
        if k % 4 == 3:
            out.append((hypalg.random_hyperhermitian(rng, J0, positive=False), False))
        else:
            out.append((hypalg.random_hyperhermitian(rng, J0, base=ghat0), True))
    return out


def _worst(acc: dict, key: str, value: float, thr: str, mode: str = "max"):
    if key not in acc:
        acc[key] = (value, thr)
    else:
        old = acc[key][0]
        acc[key] = (max(old, value) if mode == "max" else min(old, value), thr)


def suite_quaternionic(ctx, rng, samples, mutate=None):
    r = hypalg.check_quaternionic(ctx.J0)
    rw = hypalg.check_quaternionic(ctx.Jw.value)
    return {"j_squared": (r.max, "quaternionic"), "normal_chart": (rw.max, "quaternionic")}


def suite_bijection(ctx, rng, samples, mutate=None):
    J0 = ctx.J0
    out: dict = {}
    for g, _ in _point_metrics(rng, J0, ctx.ghat0, samples):
        if np.linalg.eigvalsh(g).min() <= 0:
            continue
        Om = hypalg.omega_from_gJ(g, J0)
        back = hypalg.g_from_omegaJ(Om, J0)
        scale = max(1.0, float(np.abs(g).max()))
        _worst(out, "round_trip", float(np.abs(back - g).max()) / scale, "bijection")
        _worst(out, "q_real", hypalg.q_real_residual(Om, J0) / scale, "bijection")
        _worst(out, "j_anti_invariance", hypalg.j_anti_invariance_residual(g, J0) / scale, "bijection")
    return out


def suite_pre(ctx, rng, samples, mutate=None):
    key = "pre_flat" if ctx.chart.name == "flat" else "pre_eh"
    res = curvature.verify_prop_pre(ctx.chart, ctx.x0, ctx)
    return {k: (v, key) for k, v in res.items()}


def suite_fund(ctx, rng, samples, mutate=None):
    out: dict = {}
    for g, pos in _point_metrics(rng, ctx.J0, ctx.ghat0, samples):
        res = curvature.verify_lemma_fund(ctx.chart, ctx.x0, g, ctx, require_positive=pos)
        for k, v in res.items():
            _worst(out, k, v, "fund")
    if ctx.chart.name != "flat":
        bad = ctx.ghat0 + 0.5 * hypalg.random_hermitian(rng, ctx.J0.shape[0], 0.2)
        bad = bad - 0.5 * hypalg.j_average(bad - ctx.ghat0, ctx.J0)
        res = curvature.verify_lemma_fund(ctx.chart, ctx.x0, bad, ctx, check_hyperhermitian=False)
        out["negative_control"] = (res["fund1"], "fund_negative")
    return out


def suite_fund2(ctx, rng, samples, mutate=None):
    out: dict = {}
    for g, pos in _point_metrics(rng, ctx.J0, ctx.ghat0, samples):
        res = curvature.verify_lemma_fund2(ctx.chart, ctx.x0, g, ctx, require_positive=pos)
        for k, v in res.items():
            _worst(out, k, v, "fund2_conj" if k.startswith("conj") else "fund2")
    return out


def suite_frame(ctx, rng, samples, mutate=None):
    out: dict = {}
    curv = curvature.curvature_at(ctx.g, ctx.ginv)
    for g, pos in _point_metrics(rng, ctx.J0, ctx.ghat0, max(1, samples // 4)):
        if not pos:
            continue
        frame = curvature.j_adapted_frame(g, ctx.J0)
        res = curvature.frame_trace_check(curv, frame, ctx.J0, rng=rng, pairs=50)
        for k, v in res.items():
            _worst(out, k, v, "frame")
    return out


def suite_delta(ctx, rng, samples, mutate=None):
    out: dict = {}
    for _ in range(samples):
        b = monitor.random_bundle(rng, ctx)
        res = monitor.delta_tr_check(b, mutate)
        _worst(out, "delta", res["delta"], "delta")
        if mutate is None:
            _worst(out, "direct", res["direct"], "delta")
            _worst(out, "expansion", res["expansion"], "delta")
    return out


def suite_eqns(ctx, rng, samples, mutate=None):
    if mutate not in (None, "dehyper"):
        raise ValidationError("the eqns suite supports only the dehyper mutation")
    out: dict = {}
    for _ in range(samples):
        b = monitor.random_bundle(rng, ctx)
        if mutate is None:
            for k, v in monitor.eqns_term(b).items():
                _worst(out, k, v, "eqns")
        else:
            bad = monitor.dehyperhermitize(b.gphi.value, b.J.value)
            _worst(out, "curvature", monitor.eqns_term(b, bad)["curvature"], "eqns")
    return out


SUITE_FUNCS = {
    "quaternionic": suite_quaternionic,
    "bijection": suite_bijection,
    "pre": suite_pre,
    "fund": suite_fund,
    "fund2": suite_fund2,
    "frame": suite_frame,
    "delta": suite_delta,
    "eqns": suite_eqns,
}


# ---------------------------------------------------------------------------
# Torus suites
# ---------------------------------------------------------------------------


def random_admissible_phi(grid: fields.TorusGrid, rng, amplitude: float = 0.02, band: int = 2) -> fields.ScalarField:
    """Random band-limited real field, shrunk until ``g_phi > 0`` for ``g = Id``."""
    coeffs = np.zeros(grid.shape, dtype=complex)
    idx = tuple(np.r_[0:band + 1, grid.N - band:grid.N] for _ in range(grid.ndim))
    block = np.ix_(*idx)
    coeffs[block] = rng.normal(size=coeffs[block].shape) + 1j * rng.normal(size=coeffs[block].shape)
    phi = fields.ScalarField.from_coeffs(grid, coeffs)
    phi = phi * (amplitude / np.abs(phi.values).max())
    g, J = np.eye(grid.m, dtype=complex), hypalg.flat_J(grid.n)
    while fields.min_eigenvalue_field(fields.omega_phi(g, J, phi)).min() <= 0.1:
        phi = phi * 0.5
    return phi


def suite_fform(grid, rng, samples):
    g, J = np.eye(grid.m, dtype=complex), hypalg.flat_J(grid.n)
    Om = hypalg.omega_from_gJ(g, J)
    out: dict = {}
    for _ in range(samples):
        phi = random_admissible_phi(grid, rng)
        via11 = fields.omega_phi(g, J, phi)
        via20 = hypalg.g_from_omegaJ(fields.omega20_phi(Om, J, phi), J, check=False)
        _worst(out, "fform", float(np.abs(via11 - via20).max()), "fform")
        dd = fields.dd_J(phi, J)
        _worst(out, "q_real", hypalg.q_real_residual(dd, J), "fform")
    return out


def suite_equiv(grid, rng, samples):
    g, J = np.eye(grid.m, dtype=complex), hypalg.flat_J(grid.n)
    Om = hypalg.omega_from_gJ(g, J)
    out: dict = {}
    for _ in range(samples):
        phi = random_admissible_phi(grid, rng)
        F = fields.ScalarField(grid, np.zeros(grid.shape))
        r20 = fields.residual_20(Om, J, phi, F, 0.0).values
        r11 = fields.residual_11(g, J, phi, F, 0.0).values
        _worst(out, "residual_gap", float(np.abs(r20 - r11).max()), "equiv")
        pf = fields.pfaffian_ratio(Om, J, phi)
        det = np.exp(fields.log_det_ratio(g, J, phi))
        _worst(out, "pfaffian_squared", float((np.abs(pf ** 2 - det) / det).max()), "equiv")
    return out


GRID_SUITE_FUNCS = {"fform": suite_fform, "equiv": suite_equiv}


@dataclass
class PointResult:
    location: list
    residuals: dict

    def verdict(self) -> bool:
        return all(passes(thr, v) for v, thr in self.residuals.values())


def run_point(suite: str, chart, x0, seed_seq, samples: int, mutate=None) -> PointResult:
    rng = np.random.default_rng(seed_seq)
    ctx = curvature.point_context(chart, x0)
    res = SUITE_FUNCS[suite](ctx, rng, samples, mutate)
    loc = [[float(np.real(z)), float(np.imag(z))] for z in np.atleast_1d(x0)]
    return PointResult(loc, res)


def run_grid(suite: str, grid, seed_seq, samples: int) -> PointResult:
    rng = np.random.default_rng(seed_seq)
    return PointResult([], GRID_SUITE_FUNCS[suite](grid, rng, samples))


def summarize(results: list[PointResult]) -> dict:
    worst = {}
    for r in results:
        for k, (v, thr) in r.residuals.items():
            op = THRESHOLDS[thr][0]
            if k not in worst or (v > worst[k][0] if op == "le" else v < worst[k][0]):
                worst[k] = (v, thr)
    le = [v for v, thr in worst.values() if THRESHOLDS[thr][0] == "le"]
    return {
        "max_rel_residual": max(le) if le else 0.0,
        "worst": {k: v for k, (v, _) in sorted(worst.items())},
        "pass": all(r.verdict() for r in results),
    }
