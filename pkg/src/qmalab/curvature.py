"""Curvature of hyperkahler charts and the pointwise identities it satisfies.

On a hyperkahler chart the Obata connection is the Levi-Civita (= Chern)
connection, with ``nabla_k d_l = Gamma^i_{kl} d_i``, vanishing mixed
symbols and ``Gamma^i_{kl} = g^{i j-bar} d_k g_{l j-bar}``.  Index layouts:

* ``R[j, k, l, i] = R_{j-bar k l-bar}^{i-bar}``, i.e.
  ``R(d_jbar, d_k) d_lbar = R[j, k, l, i] d_ibar``; it equals
  ``-d_k Gamma-bar^i_{j l}`` in every holomorphic chart.
* ``mixed[a, b, i, k]``: ``R(d_a, d_bbar) d_i = mixed[a, b, i, k] d_k``.
* ``lowered[a, b, i, j] = g_{k j-bar} mixed[a, b, i, k]``.

Every ``verify_*`` function returns plain residuals, already divided by the
product of the norms of the contracted factors.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import hypalg
from .errors import StructureError, ValidationError
from .jets import (
    Jet,
    KahlerPotentialChart,
    christoffel_jet,
    inverse_metric_jet,
    jeinsum,
    metric_jets,
    normal_chart_at,
    recover_J,
    transport_J,
)

TINY = 1e-300


def _norm(a) -> float:
    return float(np.abs(np.asarray(a)).max()) if np.size(a) else 0.0


def relative(residual: float, scale: float) -> float:
    """Residual divided by a homogeneous scale; zero scales leave the residual absolute."""
    return residual / scale if scale > TINY else residual


@dataclass(frozen=True)
class ChristoffelSymbols:
    values: np.ndarray = field(repr=False)  # [i, k, l]

    def symmetry_residual(self) -> float:
        return _norm(self.values - np.swapaxes(self.values, 1, 2))


@dataclass(frozen=True)
class CurvatureTensor:
    R: np.ndarray = field(repr=False)
    mixed: np.ndarray = field(repr=False)
    lowered: np.ndarray = field(repr=False)
    metric: np.ndarray = field(repr=False)

    @property
    def m(self) -> int:
        return self.R.shape[0]

    def norm(self) -> float:
        return _norm(self.R)

    def full(self) -> np.ndarray:
        """``F[A, B, C, D]`` with ``R(E_A, E_B) E_C = F[A, B, C, D] E_D`` on ``(d_1.., d_1bar..)``."""
        m = self.m
        F = np.zeros((2 * m,) * 4, dtype=complex)
        hol, anti = slice(0, m), slice(m, 2 * m)
        F[hol, anti, hol, hol] = self.mixed
        F[anti, hol, hol, hol] = -np.swapaxes(self.mixed, 0, 1)
        F[anti, hol, anti, anti] = self.R
        F[hol, anti, anti, anti] = -np.swapaxes(self.R, 0, 1)
        return F

    def endomorphism(self, X, Y) -> np.ndarray:
        """Matrix of ``R(X, Y)`` acting on column vectors of full components."""
        return np.einsum("a,b,abcd->dc", X, Y, self.full())

    def kahler_symmetry_residual(self) -> float:
        L = self.lowered
        res = max(
            _norm(L - np.transpose(L, (2, 1, 0, 3))),
            _norm(L - np.transpose(L, (0, 3, 2, 1))),
            _norm(L.conj() - np.transpose(L, (1, 0, 3, 2))),
        )
        return relative(res, _norm(L))

    def ricci(self) -> np.ndarray:
        """``Ric_{a b-bar} = g^{i j-bar} lowered[a, b, i, j]``."""
        return np.einsum("ij,abij->ab", hypalg.inverse_metric(self.metric), self.lowered)


def christoffel(g: Jet, ginv: Jet | None = None) -> ChristoffelSymbols:
    if np.abs(np.linalg.det(g.value)) == 0:
        raise ValidationError("singular metric")
    return ChristoffelSymbols(christoffel_jet(g, ginv).value)


def curvature_at(g: Jet, ginv: Jet | None = None) -> CurvatureTensor:
    """Curvature at the base point from metric jets of order >= 2."""
    if g.order < 2:
        raise ValidationError("curvature needs order-2 metric jets")
    gam = christoffel_jet(g, inverse_metric_jet(g) if ginv is None else ginv)
    gam_bar = gam.conj()
    R = -np.transpose(gam_bar.gradient().value, (1, 3, 2, 0))  # [i,j,l,k] -> [j,k,l,i]
    mixed = -np.transpose(gam.gradient_bar().value, (1, 3, 2, 0))  # [k,a,i,b] -> [a,b,i,k]
    lowered = np.einsum("kj,abik->abij", g.value, mixed)
    return CurvatureTensor(R, mixed, lowered, g.value.copy())


def kahler_curvature_formula(g: Jet) -> np.ndarray:
    """Independent route: ``-g_{i j-bar, a b-bar} + g^{p q-bar} g_{i q-bar, a} g_{p j-bar, b-bar}``."""
    ginv = hypalg.inverse_metric(g.value)
    d1 = g.gradient().value  # [i, q, a]
    d1b = g.gradient_bar().value  # [p, j, b]
    d2 = g.gradient().gradient_bar().value  # [i, j, a, b]
    return -np.transpose(d2, (2, 3, 0, 1)) + np.einsum("pq,iqa,pjb->abij", ginv, d1, d1b)


# ---------------------------------------------------------------------------
# Chart context shared by the verification routines
# ---------------------------------------------------------------------------


@dataclass
class PointContext:
    """Jets of the metric and of J at ``x0`` in the original and in the normal chart."""

    chart: KahlerPotentialChart
    x0: np.ndarray
    g: Jet
    ginv: Jet
    J: Jet
    gw: Jet
    ginvw: Jet
    Jw: Jet

    @property
    def J0(self) -> np.ndarray:
        return self.J.value

    @property
    def ghat0(self) -> np.ndarray:
        return self.g.value


def point_context(chart: KahlerPotentialChart, x0) -> PointContext:
    x0 = np.asarray(x0, dtype=complex)
    g, ginv = metric_jets(chart, x0, order=2)
    J = recover_J(g, chart.omega)
    nc = normal_chart_at(chart, x0)
    gw, ginvw = nc.metric_jets(order=2)
    Jw = transport_J(J, nc)
    return PointContext(chart, x0, g, ginv, J, gw, ginvw, Jw)


def _check_point_metric(g_point, J0, require_positive=True):
    g_point = np.asarray(g_point, dtype=complex)
    if g_point.shape != J0.shape:
        raise StructureError("g_point has the wrong shape")
    res = hypalg.is_hyperhermitian(g_point, J0)
    if res > 1e-9 * max(1.0, _norm(g_point)):
        raise ValidationError(f"g_point is not hyperhermitian (residual {res:.3e})")
    if require_positive and np.linalg.eigvalsh(g_point).min() <= 0:
        raise ValidationError("g_point is not positive definite")
    return g_point


# ---------------------------------------------------------------------------
# J identities in geodesic coordinates
# ---------------------------------------------------------------------------


def verify_prop_pre(chart: KahlerPotentialChart, x0, ctx: PointContext | None = None) -> dict:
    """Relative residuals of pre1 (original chart) and pre2-pre4 (normal chart)."""
    ctx = point_context(chart, x0) if ctx is None else ctx
    J0 = ctx.J.value
    dJ = ctx.J.gradient().value  # [r, s, k] = J_{r,k}^{s-bar}
    gam = christoffel_jet(ctx.g, ctx.ginv).value  # [i, k, l]
    scale1 = max(_norm(dJ), _norm(J0) * _norm(gam))
    pre1 = relative(_norm(dJ - np.transpose(dJ, (2, 1, 0))), scale1)
    parallel = relative(_norm(dJ - np.einsum("sm,skr->rmk", J0, gam)), scale1)

    Jw = ctx.Jw
    pre2 = relative(max(_norm(Jw.gradient().value), _norm(Jw.gradient_bar().value)), scale1)

    Jwb = Jw.conj()
    Jv, Jbv = Jw.value, Jwb.value
    d2J = Jw.hessian().value  # [r, s, k, l] = d_k d_lbar J_r^{s-bar}
    d2Jb = Jwb.hessian().value  # [j, s, k, l] = d_k d_lbar J_{j-bar}^s
    lhs3 = np.einsum("jskl,si->jikl", d2Jb, Jv)
    rhs3 = -np.einsum("js,sikl->jikl", Jbv, d2J)
    pre3 = relative(_norm(lhs3 - rhs3), _norm(Jv) * max(_norm(d2J), _norm(d2Jb)))

    curv = curvature_at(ctx.gw, ctx.ginvw)
    rhs4 = np.einsum("ai,lakj->jkli", Jv, d2Jb)
    pre4 = relative(_norm(curv.R - rhs4), max(curv.norm(), _norm(Jv) * _norm(d2Jb)))
    return {"pre1": pre1, "pre1_parallel": parallel, "pre2": pre2, "pre3": pre3, "pre4": pre4}


# ---------------------------------------------------------------------------
# Trace identities
# ---------------------------------------------------------------------------


def fund1_contraction(curv: CurvatureTensor, g_point) -> np.ndarray:
    """``g^{i j-bar} R_{j-bar i q-bar}^{a-bar}``, axes ``[q, a]``."""
    return np.einsum("ij,jiqa->qa", hypalg.inverse_metric(g_point), curv.R)


def hk_trace_contraction(curv: CurvatureTensor, g_point) -> np.ndarray:
    """``g^{i j-bar} ghat_{i k-bar} R_{s-bar r j-bar}^{k-bar}``, axes ``[s, r]``."""
    return np.einsum("ij,ik,srjk->sr", hypalg.inverse_metric(g_point), curv.metric, curv.R)


def verify_lemma_fund(chart: KahlerPotentialChart, x0, g_point, ctx: PointContext | None = None,
                      require_positive: bool = True, check_hyperhermitian: bool = True) -> dict:
    """Residuals of the trace identity for a pointwise metric (or J-invariant tensor).

    ``check_hyperhermitian=False`` exists for negative controls only.
    """
    ctx = point_context(chart, x0) if ctx is None else ctx
    if check_hyperhermitian:
        g_point = _check_point_metric(g_point, ctx.J0, require_positive)
    ginv_n = _norm(hypalg.inverse_metric(g_point))
    curv_w = curvature_at(ctx.gw, ctx.ginvw)
    curv_z = curvature_at(ctx.g, ctx.ginv)
    fund1 = relative(_norm(fund1_contraction(curv_w, g_point)), ginv_n * curv_w.norm())
    hk_z = hk_trace_contraction(curv_z, g_point)
    hk_w = hk_trace_contraction(curv_w, g_point)
    scale = ginv_n * _norm(ctx.ghat0) * curv_z.norm()
    return {
        "fund1": fund1,
        "hk_trace": relative(_norm(hk_z), scale),
        "tensoriality": relative(_norm(hk_z - hk_w), scale),
    }


# ---------------------------------------------------------------------------
# Second-derivative contractions of J
# ---------------------------------------------------------------------------


def fund2_contractions(ctx: PointContext, g_point) -> dict[str, np.ndarray]:
    """The four contractions, each with free axes ``[a, b]`` as written in the identities."""
    ginv = hypalg.inverse_metric(g_point)
    ghinv = ctx.ginvw.value
    Jw, Jwb = ctx.Jw, ctx.Jw.conj()
    J, Jb = Jw.value, Jwb.value
    d2J = Jw.hessian().value  # [r, a, i, j] = J_{r, i j-bar}^{a-bar}
    d2Jb = Jwb.hessian().value  # [s, b, i, j] = J_{s-bar, i j-bar}^b
    return {
        "eq1": np.einsum("ij,rs,raij,sb->ab", ginv, ghinv, d2J, Jb),
        "eq2": np.einsum("ij,rs,ra,sbij->ab", ginv, ghinv, J, d2Jb),
        "eq3": np.einsum("ij,rs,ib,jars->ab", ginv, ghinv, J, d2Jb),
        "eq4": np.einsum("ij,rs,ibrs,ja->ab", ginv, ghinv, d2J, Jb),
    }


def verify_lemma_fund2(chart: KahlerPotentialChart, x0, g_point, ctx: PointContext | None = None,
                       require_positive: bool = True) -> dict:
    ctx = point_context(chart, x0) if ctx is None else ctx
    g_point = _check_point_metric(g_point, ctx.J0, require_positive)
    c = fund2_contractions(ctx, g_point)
    d2 = max(_norm(ctx.Jw.hessian().value), _norm(ctx.Jw.conj().hessian().value))
    scale = _norm(hypalg.inverse_metric(g_point)) * _norm(ctx.ginvw.value) * d2 * _norm(ctx.Jw.value)
    out = {k: relative(_norm(v), scale) for k, v in c.items()}
    # eq2 is eq1 of the conjugated inputs: eq2[b, a] = conj(eq1[a, b]); likewise eq4 / eq3
    out["conj12"] = relative(_norm(c["eq2"] - c["eq1"].conj().T), scale)
    out["conj34"] = relative(_norm(c["eq4"] - c["eq3"].conj().T), scale)
    return out


# ---------------------------------------------------------------------------
# J-adapted frames
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class JAdaptedFrame:
    Z: np.ndarray  # rows are (1,0) vectors
    metric: np.ndarray

    def gram(self) -> np.ndarray:
        return self.Z @ self.metric @ self.Z.conj().T

    def orthonormality_residual(self) -> float:
        return _norm(self.gram() - np.eye(len(self.Z)))


def j_conj(Z, J0) -> np.ndarray:
    """Components of ``J Zbar`` for a (1,0) vector ``Z``."""
    return np.conj(np.asarray(J0).T @ Z)


def j_adapted_frame(g_point, J0) -> JAdaptedFrame:
    """Gram-Schmidt on pairs ``(Z, J Zbar)``."""
    g_point = np.asarray(g_point, dtype=complex)
    m = g_point.shape[0]

    def ip(a, b):
        return a @ g_point @ b.conj()

    frame = []
    for e in np.eye(m, dtype=complex):
        if len(frame) == m:
            break
        v = e - sum(ip(e, z) * z for z in frame)
        nv = ip(v, v).real
        if nv <= 1e-12:
            continue
        z1 = v / np.sqrt(nv)
        frame += [z1, j_conj(z1, J0)]
    if len(frame) != m:
        raise ValidationError("Gram-Schmidt breakdown while building a J-adapted frame")
    return JAdaptedFrame(np.array(frame), g_point)


def _full_vec(Z, m, antiholomorphic=False):
    v = np.zeros(2 * m, dtype=complex)
    if antiholomorphic:
        v[m:] = np.conj(Z)
    else:
        v[:m] = Z
    return v


def frame_trace_check(curv: CurvatureTensor, frame: JAdaptedFrame, J0, rng=None, pairs: int = 50) -> dict:
    """``sum_j R(Z_j, Zbar_j)`` and ``R(JX, JY) - R(X, Y)`` on random complex pairs."""
    m = curv.m
    T = sum(curv.endomorphism(_full_vec(z, m), _full_vec(z, m, True)) for z in frame.Z)
    scale = curv.norm() * max(_norm(frame.Z), 1.0) ** 2
    Jf = hypalg.JTensor(J0).full()
    rng = np.random.default_rng(0) if rng is None else rng
    worst = 0.0
    for _ in range(pairs):
        X = rng.normal(size=2 * m) + 1j * rng.normal(size=2 * m)
        Y = rng.normal(size=2 * m) + 1j * rng.normal(size=2 * m)
        d = curv.endomorphism(Jf @ X, Jf @ Y) - curv.endomorphism(X, Y)
        worst = max(worst, relative(_norm(d), curv.norm() * _norm(X) * _norm(Y) * max(_norm(Jf), 1.0) ** 2))
    return {"trace": relative(_norm(T), scale), "j_invariance": worst,
            "orthonormality": frame.orthonormality_residual()}
