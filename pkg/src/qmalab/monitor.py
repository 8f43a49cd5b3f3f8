"""Instrumentation of the second-order estimate.

Pointwise checks run on a :class:`PointJetBundle`, a bundle of Taylor jets at
a base point of a hyperkahler chart expressed in holomorphic normal
coordinates.  Grid checks run on converged solver states on the flat torus.

Relative residuals are divided by the sum of the magnitudes of the terms
being compared, so they are insensitive to the random scale of the jets.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import asdict, dataclass, field

import numpy as np

from . import fields, hypalg
from .curvature import PointContext, curvature_at, point_context
from .errors import ValidationError
from .fields import ScalarField
from .jets import (
    Jet,
    KahlerPotentialChart,
    hermitian_transpose,
    jeinsum,
    jet_logdet,
    inverse_metric_jet,
    random_jet,
)

NORMAL_CHART_TOL = 1e-10
MUTATIONS = (None, "sign-flip", "dehyper")


def _norm(a) -> float:
    return float(np.abs(np.asarray(a)).max()) if np.size(a) else 0.0


def _rel(residual: float, scale: float) -> float:
    return residual / scale if scale > 1e-300 else residual


# ---------------------------------------------------------------------------
# Jets at a point
# ---------------------------------------------------------------------------


def jet_sigma(H: Jet, J: Jet) -> Jet:
    """``sigma(H)_{r s-bar} = J_r^{a-bar} J_{s-bar}^b H_{b a-bar}`` with varying J."""
    return jeinsum("ra,ba,sb->rs", J, H, J.conj())


def gphi_jet(g: Jet, J: Jet, phi: Jet) -> Jet:
    """``g_phi = g + (phi'' + sigma(phi'')) / 2`` as a jet (order of ``phi`` minus 2)."""
    hess = phi.hessian()
    return g.truncate(hess.order) + (hess + jet_sigma(hess, J.truncate(hess.order))) * 0.5


@dataclass
class PointJetBundle:
    """Jets at ``x0`` in normal coordinates: ``ghat``, ``J`` (order 2), ``g`` (order 2), ``phi`` (order 4)."""

    ctx: PointContext
    g: Jet
    phi: Jet
    gphi: Jet = field(init=False)

    def __post_init__(self):
        if self.phi.order < 4:
            raise ValidationError("phi needs an order-4 jet")
        if _norm(self.phi.coef - self.phi.conj().coef) > 1e-12 * max(1.0, _norm(self.phi.coef)):
            raise ValidationError("phi jet is not real")
        J0 = self.J.value
        if hypalg.is_hyperhermitian(self.g.value, J0) > 1e-10 * max(1.0, _norm(self.g.value)):
            raise ValidationError("g is not hyperhermitian at x0")
        self.gphi = gphi_jet(self.g, self.J, self.phi)
        if np.linalg.eigvalsh(self.gphi.value).min() <= 0.0:
            raise ValidationError("g_phi is not positive definite at x0")

    @property
    def ghat(self) -> Jet:
        return self.ctx.gw

    @property
    def ghat_inv(self) -> Jet:
        return self.ctx.ginvw

    @property
    def J(self) -> Jet:
        return self.ctx.Jw

    @property
    def m(self) -> int:
        return self.g.shape[-1]

    def positivity_certificate(self) -> float:
        return float(np.linalg.eigvalsh(self.gphi.value).min())

    def check_normal(self, tol: float = NORMAL_CHART_TOL) -> None:
        """Reject bundles whose chart is not normal at ``x0``."""
        dg = _norm(self.ghat.gradient().value)
        dJ = max(_norm(self.J.gradient().value), _norm(self.J.gradient_bar().value))
        scale = max(1.0, _norm(self.ghat.value))
        if dg > tol * scale or dJ > tol * scale:
            raise ValidationError(f"bundle is not in a normal chart (|dg|={dg:.2e}, |dJ|={dJ:.2e})")


def random_hyperhermitian_jet(rng: np.random.Generator, ctx: PointContext, scale: float = 0.3) -> Jet:
    """``g = ghat + t * (H + sigma_J(H)) / 2`` for a random Hermitian jet ``H``, positive at ``x0``."""
    space = ctx.gw.space
    m = ctx.gw.shape[-1]
    X = random_jet(rng, space, (m, m), order=2, scale=1.0)
    H = (X + hermitian_transpose(X)) * 0.5
    H = (H + jet_sigma(H, ctx.Jw.truncate(2))) * 0.5
    t = scale / (1.0 + _norm(H.coef))
    base = ctx.gw.truncate(2)
    while np.linalg.eigvalsh(base.value + t * H.value).min() <= 0.0:
        t *= 0.5
    return base + H * t


def random_bundle(rng: np.random.Generator, ctx: PointContext, g: Jet | None = None,
                  phi_scale: float = 0.2) -> PointJetBundle:
    """Random admissible bundle; the phi jet is shrunk until ``g_phi(x0) > 0``."""
    g = random_hyperhermitian_jet(rng, ctx) if g is None else g
    space = ctx.gw.space
    phi = random_jet(rng, space, (), order=4, scale=1.0, real=True)
    s = phi_scale
    for _ in range(60):
        try:
            return PointJetBundle(ctx, g, phi * s)
        except ValidationError:
            s *= 0.5
    raise ValidationError("could not build an admissible phi jet")


def bundles_at(chart: KahlerPotentialChart, x0, count: int, rng: np.random.Generator) -> list[PointJetBundle]:
    ctx = point_context(chart, x0)
    return [random_bundle(rng, ctx) for _ in range(count)]


def sample_points(chart: KahlerPotentialChart, count: int, rng: np.random.Generator) -> list[np.ndarray]:
    """Points of the chart domain (uniform in ``|z|`` over the domain annulus)."""
    m = chart.m
    lo, hi = chart.domain if chart.domain is not None else (0.5, 2.0)
    pts = []
    for _ in range(count):
        v = rng.normal(size=m) + 1j * rng.normal(size=m)
        pts.append(v / np.linalg.norm(v) * rng.uniform(lo, hi))
    return pts


# ---------------------------------------------------------------------------
# Chern Laplacian
# ---------------------------------------------------------------------------


def chern_laplacian(f, gphi):
    """``Delta_phi f = g_phi^{r s-bar} f_{r s-bar}`` for a jet (value at x0) or a grid field."""
    gp = np.asarray(gphi, dtype=complex)
    if np.any(np.abs(np.linalg.det(gp)) < 1e-300):
        raise ValidationError("singular g_phi")
    ginv = hypalg.inverse_metric(gp)
    if isinstance(f, Jet):
        return float(np.einsum("rs,rs->", ginv, f.hessian().value).real)
    if isinstance(f, ScalarField):
        return np.einsum("...rs,...rs->...", ginv, fields.complex_hessian(f)).real
    raise TypeError("chern_laplacian expects a Jet or a ScalarField")


# ---------------------------------------------------------------------------
# The pointwise identities
# ---------------------------------------------------------------------------


def _pieces(b: PointJetBundle, gphi0=None) -> dict:
    """Point values shared by the identity checks; ``gphi0`` overrides g_phi(x0)."""
    gp0 = b.gphi.value if gphi0 is None else np.asarray(gphi0, dtype=complex)
    J, Jb = b.J.value, b.J.conj().value
    return {
        "gp0": gp0,
        "gpinv": hypalg.inverse_metric(gp0),
        "ghinv": b.ghat_inv.value,
        "J": J,
        "Jb": Jb,
        "d2J": b.J.hessian().value,  # [r, a, i, j] = J_{r, i j-bar}^{a-bar}
        "d2Jb": b.J.conj().hessian().value,  # [s, b, i, j] = J_{s-bar, i j-bar}^b
        "g2": b.g.hessian().value,  # [r, s, i, j] = g_{r s-bar, i j-bar}
        "phi2": b.phi.hessian().value,  # [b, a] = phi_{b a-bar}
        "phi4": b.phi.derivatives(2, 2),  # [r, i, s, j] = phi_{r i s-bar j-bar}
        "Rhat": curvature_at(b.ghat, b.ghat_inv).lowered,  # [a, b, i, j] = Rhat_{a b-bar i j-bar}
    }


def eqns_terms(b: PointJetBundle, gphi0=None) -> dict:
    """The curvature and J summands of the vanishing cross term with their natural scales."""
    p = _pieces(b, gphi0)
    curv = np.einsum("ij,as,rb,abij,rs->", p["gpinv"], p["ghinv"], p["ghinv"], p["Rhat"], p["gp0"])
    jt = 0.5 * np.einsum("ij,rs,raij,sb,ba->", p["gpinv"], p["ghinv"], p["d2J"], p["Jb"], p["phi2"])
    jt += 0.5 * np.einsum("ij,rs,ra,sbij,ba->", p["gpinv"], p["ghinv"], p["J"], p["d2Jb"], p["phi2"])
    curv_scale = _norm(p["gpinv"]) * _norm(p["ghinv"]) ** 2 * _norm(p["Rhat"]) * _norm(p["gp0"])
    j_scale = (_norm(p["gpinv"]) * _norm(p["ghinv"]) * _norm(p["J"])
               * max(_norm(p["d2J"]), _norm(p["d2Jb"])) * _norm(p["phi2"]))
    return {"curvature": complex(curv), "j_term": complex(jt),
            "curvature_scale": curv_scale, "j_scale": j_scale, "pieces": p}


def eqns_term(b: PointJetBundle, gphi0=None) -> dict:
    """Relative sizes of the cross term and of each of its two summands."""
    t = eqns_terms(b, gphi0)
    total = t["curvature"] + t["j_term"]
    return {
        "total": _rel(abs(total), t["curvature_scale"] + t["j_scale"]),
        "curvature": _rel(abs(t["curvature"]), t["curvature_scale"]),
        "j_term": _rel(abs(t["j_term"]), t["j_scale"]),
    }


def delta_expansion(b: PointJetBundle, mutate: str | None = None) -> dict:
    """Direct Laplacian of ``tr_ghat g_phi``, its term-by-term expansion, and the displayed RHS.

    ``mutate='sign-flip'`` flips the curvature summand of the expansion;
    ``mutate='dehyper'`` contracts with a non-hyperhermitian Hermitian
    perturbation of ``g_phi(x0)`` in place of ``g_phi(x0)``.
    """
    if mutate not in MUTATIONS:
        raise ValidationError(f"unknown mutation {mutate!r}")
    gphi0 = None
    if mutate == "dehyper":
        gphi0 = dehyperhermitize(b.gphi.value, b.J.value)
    t = eqns_terms(b, gphi0)
    p = t["pieces"]
    gpinv, ghinv = p["gpinv"], p["ghinv"]

    trace = jeinsum("rs,rs->", b.ghat_inv.truncate(2), b.gphi)
    direct = np.einsum("ij,ij->", gpinv, trace.hessian().value)

    phi4 = p["phi4"]
    main_g = np.einsum("ij,rs,rsij->", gpinv, ghinv, p["g2"])
    half_phi = 0.5 * np.einsum("ij,rs,risj->", gpinv, ghinv, phi4)
    half_jj = 0.5 * np.einsum("ij,rs,ra,sb,biaj->", gpinv, ghinv, p["J"], p["Jb"], phi4)
    curv = -t["curvature"] if mutate == "sign-flip" else t["curvature"]
    expansion = curv + main_g + half_phi + half_jj + t["j_term"]
    rhs = main_g + np.einsum("ij,rs,risj->", gpinv, ghinv, phi4)

    main_scale = _norm(gpinv) * _norm(ghinv) * (_norm(p["g2"]) + _norm(phi4) * (1 + _norm(p["J"]) ** 2))
    scale = main_scale + t["curvature_scale"] + t["j_scale"]
    return {"direct": complex(direct), "expansion": complex(expansion), "rhs": complex(rhs), "scale": scale}


def delta_tr_check(b: PointJetBundle, mutate: str | None = None, require_normal: bool = True) -> dict:
    """Relative residuals of the Laplacian identity for ``tr_ghat g_phi`` at ``x0``.

    ``delta`` compares the expansion with the displayed RHS; ``direct``
    compares the jet Laplacian with the displayed RHS; ``expansion``
    compares the jet Laplacian with the expansion (it certifies the expansion
    itself and is independent of the cancellation).
    """
    if require_normal:
        b.check_normal()
    d = delta_expansion(b, mutate)
    s = d["scale"]
    return {
        "delta": _rel(abs(d["expansion"] - d["rhs"]), s),
        "direct": _rel(abs(d["direct"] - d["rhs"]), s),
        "expansion": _rel(abs(d["direct"] - d["expansion"]), s) if mutate is None else float("nan"),
    }


def dehyperhermitize(gphi0, J0, strength: float = 0.5) -> np.ndarray:
    """Positive Hermitian matrix near ``gphi0`` with a large J-anti-invariant part."""
    gp = np.asarray(gphi0, dtype=complex)
    m = gp.shape[-1]
    E = np.zeros((m, m), dtype=complex)
    E[0, 0], E[1, 1] = 1.0, -1.0
    A = E - hypalg.j_average(E, J0)
    if _norm(A) < 1e-12:
        A = np.zeros((m, m), dtype=complex)
        A[0, 1], A[1, 0] = 1.0, 1.0
        A = A - hypalg.j_average(A, J0)
    lam = np.linalg.eigvalsh(gp).min()
    return gp + strength * lam * A / _norm(A)


def quadratic_term(b: PointJetBundle) -> float:
    """``ghat^{r s-bar} g_phi^{i b-bar} g_phi^{a j-bar} g_phi_{a b-bar, s-bar} g_phi_{i j-bar, r}``."""
    gpinv = hypalg.inverse_metric(b.gphi.value)
    d = b.gphi.gradient().value  # [i, j, r] = g_phi_{i j-bar, r}
    db = b.gphi.gradient_bar().value  # [a, b, s] = g_phi_{a b-bar, s-bar}
    q = np.einsum("rs,ib,aj,abs,ijr->", b.ghat_inv.value, gpinv, gpinv, db, d)
    return float(q.real)


def phi4_discrepancy(b: PointJetBundle) -> tuple[float, float]:
    """``D = Laplacian_ghat(F) - (-quad/2 + ghat gphi^{-1}(g'' + phi'''')/2)`` and its scale.

    ``F = log det(g_phi) / 2 - log det(g) / 2`` is built as a jet from the bundle.
    """
    F = (jet_logdet(b.gphi) - jet_logdet(b.g.truncate(b.gphi.order))) * 0.5
    ghinv = b.ghat_inv.value
    lap_F = np.einsum("rs,rs->", ghinv, F.hessian().value)
    gpinv = hypalg.inverse_metric(b.gphi.value)
    quad = quadratic_term(b)
    g2 = b.g.hessian().value  # [i, j, r, s] = g_{i j-bar, r s-bar}
    phi4 = b.phi.derivatives(2, 2)  # [r, i, s, j]
    main = 0.5 * (np.einsum("rs,ij,ijrs->", ghinv, gpinv, g2) + np.einsum("rs,ij,risj->", ghinv, gpinv, phi4))
    D = lap_F - (-0.5 * quad + main)
    scale = abs(lap_F) + 0.5 * abs(quad) + abs(main)
    return float(D.real), float(scale) + abs(float(D.imag))


def phi4_cancellation_check(bundles: list[PointJetBundle]) -> dict:
    """The discrepancy must not depend on the phi jet (same g jets at the same point)."""
    if len(bundles) < 2:
        raise ValidationError("need at least two bundles sharing the same g jets")
    g0 = bundles[0].g
    for b in bundles[1:]:
        if b.g is not g0 and _norm(b.g.coef - g0.coef) > 0:
            raise ValidationError("bundles must share the same g jets")
    vals = [phi4_discrepancy(b) for b in bundles]
    D = np.array([v[0] for v in vals])
    scale = max(v[1] for v in vals)
    quads = [quadratic_term(b) for b in bundles]
    return {
        "spread": _rel(float(D.max() - D.min()), scale),
        "min_quadratic": float(min(quads)),
        "discrepancy": float(D.mean()),
    }


# ---------------------------------------------------------------------------
# Grid monitoring along a continuity path
# ---------------------------------------------------------------------------


@dataclass
class EstimateRow:
    t: float
    b: float
    sup_Q: float
    argmax: tuple[int, ...]
    tr_max: float
    tr_at_argmax: float
    tr_inv_at_argmax: float
    phi_inf: float
    laplacian_Q_at_argmax: float
    trace_ineq_min: float
    C_emp: float
    volume_gap: float = float("nan")
    trace_ineq_rhs_min: float = float("nan")


@dataclass
class EstimateReport:
    A: float
    A_prime: float
    rows: list[EstimateRow] = field(default_factory=list)
    excluded: list[float] = field(default_factory=list)

    @property
    def C_emp(self) -> float:
        return max(r.C_emp for r in self.rows) if self.rows else float("nan")

    @property
    def sup_Q(self) -> float:
        return max(r.sup_Q for r in self.rows) if self.rows else float("nan")

    @property
    def max_laplacian_Q(self) -> float:
        return max(r.laplacian_Q_at_argmax for r in self.rows) if self.rows else float("nan")

    @property
    def min_trace_ineq(self) -> float:
        return min(r.trace_ineq_min for r in self.rows) if self.rows else float("nan")

    def to_dict(self) -> dict:
        return {
            "A": self.A, "A_prime": self.A_prime, "C_emp": self.C_emp, "sup_Q": self.sup_Q,
            "max_laplacian_Q": self.max_laplacian_Q, "min_trace_ineq": self.min_trace_ineq,
            "rows": [asdict(r) for r in self.rows], "excluded": list(self.excluded),
        }

    def to_json(self, **kw) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, **kw)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["t", "sup_Q", "tr_max", "phi_inf", "b"])
        for r in self.rows:
            w.writerow([repr(r.t), repr(r.sup_Q), repr(r.tr_max), repr(r.phi_inf), repr(r.b)])
        return buf.getvalue()


def estimate_trace(states, ghat=None, A: float | None = None, F: ScalarField | None = None,
                   J=None) -> EstimateReport:
    """Monitor ``Q = tr_ghat g_phi - A phi`` on each converged state.

    ``A`` defaults to 1; the constant of the final inequality chain is not
    computable from the data, so ``C_emp`` is reported instead.
    """
    if not states:
        raise ValidationError("no states to monitor")
    grid = states[0].grid
    n = grid.n
    gh = np.eye(grid.m, dtype=complex) if ghat is None else np.asarray(ghat, dtype=complex)
    J = hypalg.flat_J(n) if J is None else J
    A = 1.0 if A is None else float(A)
    # g = ghat on the flat torus, so the relative eigenvalue bound is 1
    A_prime = float(np.linalg.eigvalsh(np.linalg.solve(gh, gh)).min().real)
    report = EstimateReport(A=A, A_prime=A_prime)
    ghinv = hypalg.inverse_metric(gh)
    for st in states:
        if not st.converged:
            report.excluded.append(st.t)
            continue
        phi = st.phi - st.phi.values.max()
        gp = fields.omega_phi(gh, J, phi)
        tr = np.einsum("ij,...ij->...", ghinv, gp).real
        Qv = tr - A * phi.values
        k = int(np.argmax(Qv))
        idx = np.unravel_index(k, grid.shape)
        gp_at = gp[idx]
        lapQ = float(np.einsum("ij,ij->", hypalg.inverse_metric(gp_at),
                               fields.complex_hessian(ScalarField(grid, Qv))[idx]).real)
        tr_inv = float(np.einsum("ij,ij->", hypalg.inverse_metric(gp_at), gh).real)
        ineq = hypalg.trace_inequality_residual(gh, gp, n)
        phi_inf = float(np.abs(phi.values).max())
        row = EstimateRow(
            t=st.t, b=st.b, sup_Q=float(Qv.flat[k]), argmax=tuple(int(i) for i in idx),
            tr_max=float(tr.max()), tr_at_argmax=float(tr[idx]), tr_inv_at_argmax=tr_inv,
            phi_inf=phi_inf, laplacian_Q_at_argmax=lapQ, trace_ineq_min=float(np.min(ineq)),
            C_emp=float(tr.max() - A * phi_inf),
        )
        if F is not None:
            ratio = np.exp(fields.log_det_ratio(gh, J, phi))
            target = np.exp(2 * st.t * F.values + 2 * st.b)
            row.volume_gap = float(np.abs(ratio - target).max())
            row.trace_ineq_rhs_min = float(np.min(hypalg.trace_inequality_residual(gh, gp, n, ratio=target)))
        report.rows.append(row)
    return report


def compare_reports(coarse: EstimateReport, fine: EstimateReport) -> dict:
    """Relative variation of ``C_emp`` and ``sup_Q`` between two grids."""
    def rel(a, b):
        return abs(a - b) / max(abs(a), abs(b), 1e-300)

    return {
        "C_emp_coarse": coarse.C_emp, "C_emp_fine": fine.C_emp,
        "C_emp_variation": rel(coarse.C_emp, fine.C_emp),
        "sup_Q_variation": rel(coarse.sup_Q, fine.sup_Q),
    }
