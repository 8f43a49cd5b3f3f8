"""Truncated Taylor jets in (z, zbar) and the chart machinery built on them.

A :class:`Jet` stores the Taylor coefficients ``c[alpha]`` of a (possibly
tensor-valued) function of ``z^1..z^m, zbar^1..zbar^m`` at a base point,

    f(z0 + h, conj(z0) + hbar) = sum_alpha c[alpha] (h, hbar)^alpha,

for all multi-indices of total degree at most the jet's ``order`` (4 at
most).  ``z`` and ``zbar`` are treated as independent variables, so Wirtinger
derivatives are plain coefficient shifts.  Products are truncated Cauchy
products; elementary functions are applied through their Taylor series.

Charts are Kahler potentials evaluated on coordinate jets, which makes a
holomorphic change of coordinates nothing more than evaluating the potential
on different input jets.
"""

from __future__ import annotations

import functools
import itertools
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import ChartError, ValidationError

MAX_ORDER = 4


def _exponents(nvars, degree):
    for combo in itertools.combinations_with_replacement(range(nvars), degree):
        e = [0] * nvars
        for v in combo:
            e[v] += 1
        yield tuple(e)


class JetSpace:
    """Monomial bookkeeping for jets in ``2m`` variables up to total order 4."""

    def __init__(self, m: int, order: int = MAX_ORDER):
        self.m = m
        self.nvars = 2 * m
        self.order = order
        monos = [e for d in range(order + 1) for e in _exponents(self.nvars, d)]
        self.exps = np.array(monos, dtype=int)
        self.deg = self.exps.sum(axis=1)
        self.size = len(monos)
        self.index = {e: i for i, e in enumerate(monos)}
        self.factorial = np.array([math.prod(math.factorial(k) for k in e) for e in monos], dtype=float)

        I, J, K = [], [], []
        for i, a in enumerate(monos):
            for j, b in enumerate(monos):
                if self.deg[i] + self.deg[j] <= order:
                    I.append(i)
                    J.append(j)
                    K.append(self.index[tuple(x + y for x, y in zip(a, b))])
        I, J, K = map(np.array, (I, J, K))
        self._prod = {}
        for p in range(order + 1):
            keep = self.deg[K] <= p
            self._prod[p] = (I[keep], J[keep], K[keep])

        # d/dvar: new[alpha - e_v] = alpha_v * c[alpha]
        self._deriv = []
        for v in range(self.nvars):
            src, dst, fac = [], [], []
            for i, e in enumerate(monos):
                if e[v] > 0:
                    lowered = list(e)
                    lowered[v] -= 1
                    src.append(i)
                    dst.append(self.index[tuple(lowered)])
                    fac.append(e[v])
            self._deriv.append((np.array(src), np.array(dst), np.array(fac, dtype=float)))

        m = self.m
        self._conj_perm = np.array([self.index[e[m:] + e[:m]] for e in monos])

    def product_table(self, order):
        return self._prod[order]

    def zero(self, shape=(), order=None) -> "Jet":
        return Jet(self, np.zeros((self.size,) + tuple(shape), dtype=complex), order)

    def constant(self, value, order=None) -> "Jet":
        value = np.asarray(value, dtype=complex)
        coef = np.zeros((self.size,) + value.shape, dtype=complex)
        coef[0] = value
        return Jet(self, coef, order)

    def variable(self, v: int, base=0.0) -> "Jet":
        """Jet of the coordinate function number ``v`` (``z`` for v < m, ``zbar`` after)."""
        coef = np.zeros(self.size, dtype=complex)
        coef[0] = base
        e = [0] * self.nvars
        e[v] = 1
        coef[self.index[tuple(e)]] = 1.0
        return Jet(self, coef)

    def coordinates(self, z0) -> tuple[list["Jet"], list["Jet"]]:
        """Jets of ``z^k`` and ``zbar^k`` at the base point ``z0``."""
        z0 = np.asarray(z0, dtype=complex)
        zs = [self.variable(k, z0[k]) for k in range(self.m)]
        zbs = [self.variable(self.m + k, np.conj(z0[k])) for k in range(self.m)]
        return zs, zbs

    def increments(self) -> tuple[list["Jet"], list["Jet"]]:
        return self.coordinates(np.zeros(self.m))


@functools.lru_cache(maxsize=None)
def jet_space(m: int, order: int = MAX_ORDER) -> JetSpace:
    return JetSpace(m, order)


class Jet:
    """Truncated Taylor polynomial, optionally tensor valued (trailing axes)."""

    __slots__ = ("space", "coef", "order")
    __array_priority__ = 100

    def __init__(self, space: JetSpace, coef, order=None):
        self.space = space
        self.order = space.order if order is None else int(order)
        coef = np.asarray(coef, dtype=complex)
        if coef.shape[0] != space.size:
            raise ValueError("coefficient array does not match the jet space")
        if self.order < space.order:
            coef = coef.copy()
            coef[space.deg > self.order] = 0.0
        self.coef = coef

    # -- basic structure -------------------------------------------------
    @property
    def shape(self):
        return self.coef.shape[1:]

    @property
    def value(self) -> np.ndarray:
        return self.coef[0]

    def __repr__(self):
        return f"Jet(m={self.space.m}, order={self.order}, shape={self.shape})"

    def __getitem__(self, idx):
        if not isinstance(idx, tuple):
            idx = (idx,)
        return Jet(self.space, self.coef[(slice(None),) + idx], self.order)

    def transpose(self, *axes) -> "Jet":
        axes = axes or tuple(reversed(range(len(self.shape))))
        return Jet(self.space, np.transpose(self.coef, (0,) + tuple(a + 1 for a in axes)), self.order)

    @property
    def T(self) -> "Jet":
        return self.transpose()

    def truncate(self, order: int) -> "Jet":
        return Jet(self.space, self.coef, min(order, self.order))

    def max_abs(self, upto=None) -> float:
        upto = self.order if upto is None else upto
        return float(np.abs(self.coef[self.space.deg <= upto]).max())

    @staticmethod
    def stack(jets: Sequence["Jet"], axis: int = 0) -> "Jet":
        space = jets[0].space
        order = min(j.order for j in jets)
        return Jet(space, np.stack([j.coef for j in jets], axis=axis + 1), order)

    # -- arithmetic ------------------------------------------------------
    def _lift(self, other):
        if isinstance(other, Jet):
            if other.space is not self.space:
                raise ValueError("jets live in different spaces")
            return other
        return self.space.constant(other, order=self.space.order)

    def __add__(self, other):
        o = self._lift(other)
        return Jet(self.space, self.coef + o.coef, min(self.order, o.order))

    __radd__ = __add__

    def __neg__(self):
        return Jet(self.space, -self.coef, self.order)

    def __sub__(self, other):
        return self + (-self._lift(other))

    def __rsub__(self, other):
        return self._lift(other) - self

    def __mul__(self, other):
        if not isinstance(other, Jet):
            return Jet(self.space, self.coef * np.asarray(other), self.order)
        order = min(self.order, other.order)
        I, J, K = self.space.product_table(order)
        terms = self.coef[I] * other.coef[J]
        out = np.zeros((self.space.size,) + terms.shape[1:], dtype=complex)
        np.add.at(out, K, terms)
        return Jet(self.space, out, order)

    __rmul__ = __mul__

    def __truediv__(self, other):
        if not isinstance(other, Jet):
            return Jet(self.space, self.coef / np.asarray(other), self.order)
        return self * other.reciprocal()

    def __rtruediv__(self, other):
        return self._lift(other) * self.reciprocal()

    def __pow__(self, p):
        if isinstance(p, int) and p >= 0:
            out = self.space.constant(np.ones(self.shape), self.order)
            for _ in range(p):
                out = out * self
            return out
        return self.power(p)

    def conj(self) -> "Jet":
        """Jet of the complex conjugate function."""
        return Jet(self.space, self.coef[self.space._conj_perm].conj(), self.order)

    # -- elementary functions --------------------------------------------
    def _series(self, derivs):
        delta = Jet(self.space, self.coef.copy(), self.order)
        delta.coef[0] = 0.0
        out = self.space.constant(derivs[0], self.order)
        power = None
        for k in range(1, self.order + 1):
            power = delta if power is None else power * delta
            out = out + power * (derivs[k] / math.factorial(k))
        return out

    def reciprocal(self) -> "Jet":
        a = self.value
        if np.any(a == 0):
            raise ZeroDivisionError("jet with vanishing constant term")
        return self._series([(-1) ** k * math.factorial(k) / a ** (k + 1) for k in range(self.order + 1)])

    def power(self, p: float) -> "Jet":
        a = self.value
        derivs, c = [], 1.0
        for k in range(self.order + 1):
            derivs.append(c * a ** (p - k))
            c *= p - k
        return self._series(derivs)

    def sqrt(self) -> "Jet":
        if np.any(self.value == 0):
            raise ValueError("sqrt of a jet with vanishing constant term")
        return self.power(0.5)

    def log(self) -> "Jet":
        a = self.value
        if np.any(a == 0):
            raise ValueError("log of a jet with vanishing constant term")
        derivs = [np.log(a)] + [(-1) ** (k - 1) * math.factorial(k - 1) / a ** k for k in range(1, self.order + 1)]
        return self._series(derivs)

    def exp(self) -> "Jet":
        e = np.exp(self.value)
        return self._series([e] * (self.order + 1))

    def apply(self, f: Callable[[np.ndarray, int], np.ndarray]) -> "Jet":
        """Compose with a univariate function given as ``f(x, k) -> f^(k)(x)``."""
        return self._series([f(self.value, k) for k in range(self.order + 1)])

    # -- differentiation -------------------------------------------------
    def deriv(self, var: int) -> "Jet":
        if self.order == 0:
            raise ValueError("cannot differentiate an order-0 jet")
        src, dst, fac = self.space._deriv[var]
        out = np.zeros_like(self.coef)
        fac = fac.reshape((-1,) + (1,) * len(self.shape))
        out[dst] = self.coef[src] * fac
        return Jet(self.space, out, self.order - 1)

    def d(self, k: int) -> "Jet":
        """Holomorphic derivative ``d/dz^k``."""
        return self.deriv(k)

    def db(self, k: int) -> "Jet":
        """Antiholomorphic derivative ``d/dzbar^k``."""
        return self.deriv(self.space.m + k)

    def gradient(self) -> "Jet":
        """Trailing axis ``k`` holds ``d/dz^k``."""
        return Jet.stack([self.d(k) for k in range(self.space.m)], axis=len(self.shape))

    def gradient_bar(self) -> "Jet":
        return Jet.stack([self.db(k) for k in range(self.space.m)], axis=len(self.shape))

    def hessian(self) -> "Jet":
        """Trailing axes ``[r, s]`` hold ``d^2 / dz^r dzbar^s``."""
        return self.gradient().gradient_bar()

    def partial(self, holo: Sequence[int] = (), anti: Sequence[int] = ()) -> np.ndarray:
        """Value at the base point of the mixed partial derivative."""
        e = [0] * self.space.nvars
        for k in holo:
            e[k] += 1
        for k in anti:
            e[self.space.m + k] += 1
        i = self.space.index[tuple(e)]
        if self.space.deg[i] > self.order:
            raise ValueError("derivative order exceeds jet order")
        return self.coef[i] * self.space.factorial[i]

    def derivatives(self, nholo: int, nanti: int) -> np.ndarray:
        """All mixed partials at the base point, trailing axes (holo..., anti...)."""
        m = self.space.m
        idx = list(itertools.product(range(m), repeat=nholo + nanti))
        vals = [self.partial(t[:nholo], t[nholo:]) for t in idx]
        return np.stack(vals, axis=-1).reshape(self.shape + (m,) * (nholo + nanti))

    # -- composition -----------------------------------------------------
    def compose(self, inner: Sequence["Jet"]) -> "Jet":
        """Substitute ``(h, hbar) -> inner`` (jets with vanishing constant term)."""
        space = self.space
        if len(inner) != space.nvars:
            raise ValueError("need one inner jet per variable")
        for g in inner:
            if np.any(np.abs(g.value) > 0):
                raise ValueError("inner jets must vanish at the base point")
        target = inner[0].space
        order = min([self.order] + [g.order for g in inner])
        monos = [target.constant(1.0, order)]
        for e in space.exps[1:]:
            v = int(np.nonzero(e)[0][-1])
            lower = list(e)
            lower[v] -= 1
            monos.append(monos[space.index[tuple(lower)]] * inner[v])
        basis = np.stack([mo.coef for mo in monos])  # (src, tgt)
        keep = space.deg <= order
        coef = np.einsum("a...,ab->b...", self.coef[keep], basis[keep])
        return Jet(target, coef, order)


def jeinsum(subscripts: str, *ops):
    """``np.einsum`` for mixtures of jets and constant arrays (no ellipsis)."""
    inputs, out = subscripts.replace(" ", "").split("->")
    subs = inputs.split(",")
    if len(subs) != len(ops):
        raise ValueError("operand count mismatch")
    acc, acc_sub = ops[0], subs[0]
    for k in range(1, len(ops)):
        later = set(out).union(*subs[k + 1:]) if k + 1 < len(subs) else set(out)
        s = subs[k]
        inter = "".join(c for c in dict.fromkeys(acc_sub + s) if c in later)
        acc = _pair(f"{acc_sub},{s}->{inter}", acc, ops[k])
        acc_sub = inter
    if acc_sub != out:
        acc = _pair_single(f"{acc_sub}->{out}", acc)
    return acc


def _pair_single(sub, a):
    if isinstance(a, Jet):
        i, o = sub.split("->")
        return Jet(a.space, np.einsum(f"Z{i}->Z{o}", a.coef), a.order)
    return np.einsum(sub, a)


def _pair(sub, a, b):
    ins, o = sub.split("->")
    sa, sb = ins.split(",")
    ja, jb = isinstance(a, Jet), isinstance(b, Jet)
    if not ja and not jb:
        return np.einsum(sub, a, b)
    if ja and not jb:
        return Jet(a.space, np.einsum(f"Z{sa},{sb}->Z{o}", a.coef, b), a.order)
    if jb and not ja:
        return Jet(b.space, np.einsum(f"{sa},Z{sb}->Z{o}", a, b.coef), b.order)
    if a.space is not b.space:
        raise ValueError("jets live in different spaces")
    order = min(a.order, b.order)
    I, J, K = a.space.product_table(order)
    terms = np.einsum(f"Z{sa},Z{sb}->Z{o}", a.coef[I], b.coef[J])
    out = np.zeros((a.space.size,) + terms.shape[1:], dtype=complex)
    np.add.at(out, K, terms)
    return Jet(a.space, out, order)


def jet_matmul(a, b):
    return jeinsum("ij,jk->ik", a, b)


def hermitian_transpose(a: Jet) -> Jet:
    """Jet of the pointwise conjugate transpose of a matrix-valued function."""
    return a.conj().transpose(1, 0)


def jet_inv(G: Jet) -> Jet:
    """Pointwise matrix inverse of a square-matrix jet."""
    G0inv = np.linalg.inv(G.value)
    X = jeinsum("ij,jk->ik", G0inv, G - G.value)
    S = G.space.constant(np.eye(G.shape[-1]), G.order)
    term = S
    for _ in range(G.order):
        term = -jeinsum("ij,jk->ik", X, term)
        S = S + term
    return jeinsum("ij,jk->ik", S, G0inv)


def jet_logdet(G: Jet) -> Jet:
    """``log det G`` (principal branch at the base point) as a scalar jet."""
    G0 = G.value
    X = jeinsum("ij,jk->ik", np.linalg.inv(G0), G - G0)
    out = G.space.constant(np.log(np.linalg.det(G0)), G.order)
    power = None
    for k in range(1, G.order + 1):
        power = X if power is None else jeinsum("ij,jk->ik", power, X)
        out = out + jeinsum("ii->", power) * ((-1) ** (k + 1) / k)
    return out


def jet_det(G: Jet) -> Jet:
    G0 = G.value
    X = jeinsum("ij,jk->ik", np.linalg.inv(G0), G - G0)
    s = G.space.zero(order=G.order)
    power = None
    for k in range(1, G.order + 1):
        power = X if power is None else jeinsum("ij,jk->ik", power, X)
        s = s + jeinsum("ii->", power) * ((-1) ** (k + 1) / k)
    return s.exp() * np.linalg.det(G0)


def inverse_metric_jet(g: Jet) -> Jet:
    """``ginv[i, j] = g^{i j-bar}`` as a jet."""
    return jet_inv(g).transpose(1, 0)


def random_jet(rng: np.random.Generator, space: JetSpace, shape=(), order=None, scale=1.0, real=False) -> Jet:
    """Random jet; with ``real`` the coefficients satisfy the real-function symmetry."""
    c = rng.normal(size=(space.size,) + tuple(shape)) + 1j * rng.normal(size=(space.size,) + tuple(shape))
    c = scale * c / space.factorial.reshape((-1,) + (1,) * len(shape))
    j = Jet(space, c, order)
    if real:
        j = (j + j.conj()) * 0.5
    return j


# ---------------------------------------------------------------------------
# Kahler potential charts
# ---------------------------------------------------------------------------

Potential = Callable[[Sequence[Jet], Sequence[Jet]], Jet]


def standard_symplectic(m: int) -> np.ndarray:
    """Components of ``dz^1 ^ dz^2 + dz^3 ^ dz^4 + ...``."""
    Om = np.zeros((m, m), dtype=complex)
    for k in range(0, m, 2):
        Om[k, k + 1] = 1.0
        Om[k + 1, k] = -1.0
    return Om


@dataclass(frozen=True)
class KahlerPotentialChart:
    """A Kahler potential on an open set of C^m, evaluated on coordinate jets.

    ``potential(zs, zbs)`` must return a scalar jet for any coordinate jets.
    ``omega`` holds the constant components of the holomorphic (2,0)-form
    paired with the metric.
    """

    name: str
    m: int
    potential: Potential = field(repr=False, compare=False)
    omega: np.ndarray = field(repr=False, compare=False)
    params: dict = field(default_factory=dict)
    domain: tuple[float, float] | None = None

    def in_domain(self, z0) -> bool:
        if self.domain is None:
            return True
        r = float(np.linalg.norm(z0))
        return self.domain[0] - 1e-12 <= r <= self.domain[1] + 1e-12

    def potential_jet(self, z0, order: int = MAX_ORDER) -> Jet:
        space = jet_space(self.m)
        zs, zbs = space.coordinates(z0)
        return self.potential(zs, zbs).truncate(order)


def flat_chart(n: int = 1) -> KahlerPotentialChart:
    m = 2 * n

    def potential(zs, zbs):
        out = zs[0] * zbs[0]
        for z, zb in zip(zs[1:], zbs[1:]):
            out = out + z * zb
        return out

    return KahlerPotentialChart("flat", m, potential, standard_symplectic(m), {"n": n})


def eguchi_hanson_chart(a: float = 1.0, domain=(0.5, 2.0)) -> KahlerPotentialChart:
    """Eguchi-Hanson metric on C^2 minus the origin.

    ``K(u) = sqrt(u^2 + a^4) + a^2 log(u / (a^2 + sqrt(u^2 + a^4)))`` with
    ``u = |z^1|^2 + |z^2|^2``; ``det(dd-bar K) = 1`` identically, so the pair
    (K, dz^1 ^ dz^2) is hyperkahler.
    """
    a2 = a * a
    a4 = a2 * a2

    def potential(zs, zbs):
        u = zs[0] * zbs[0] + zs[1] * zbs[1]
        root = (u * u + a4).sqrt()
        return root + (u / (root + a2)).log() * a2

    return KahlerPotentialChart("eguchi-hanson", 2, potential, standard_symplectic(2), {"a": a}, domain)


def metric_jets(chart: KahlerPotentialChart, z0, order: int = 2) -> tuple[Jet, Jet]:
    """Jets of ``g_{r s-bar}`` and ``g^{r s-bar}`` at ``z0`` (order <= 2)."""
    if not chart.in_domain(z0):
        raise ValidationError(f"point {z0} outside the chart domain {chart.domain}")
    g = chart.potential_jet(z0, order + 2).hessian()
    if np.linalg.eigvalsh(0.5 * (g.value + g.value.conj().T)).min() <= 0.0:
        raise ValidationError("metric is not positive definite at the base point")
    return g, inverse_metric_jet(g)


def christoffel_jet(g: Jet, ginv: Jet | None = None) -> Jet:
    """``Gamma^i_{kl} = g^{i j-bar} d_k g_{l j-bar}``, axes ``[i, k, l]``."""
    ginv = inverse_metric_jet(g) if ginv is None else ginv
    dg = g.gradient()  # [l, j, k]
    return jeinsum("ij,ljk->ikl", ginv, dg)


def recover_J(g: Jet | np.ndarray, omega) -> Jet | np.ndarray:
    """``J_r^{b-bar} = Omega_{rc} g^{c b-bar}`` (the sharp of omega_J by g)."""
    if isinstance(g, Jet):
        return jeinsum("rc,cb->rb", omega, inverse_metric_jet(g))
    return np.asarray(omega) @ np.linalg.inv(g).T


# ---------------------------------------------------------------------------
# Normal coordinates
# ---------------------------------------------------------------------------


def _quad(gamma, y1, y2):
    return np.einsum("ikl,k,l->i", gamma, y1, y2)


@dataclass(frozen=True)
class NormalChart:
    """Holomorphic normal coordinates ``w = (z - z0) + Gamma(z0)(z - z0)^2 / 2``."""

    chart: KahlerPotentialChart
    z0: np.ndarray
    gamma: np.ndarray
    tol: float = 1e-13
    max_iter: int = 50

    def forward(self, z) -> np.ndarray:
        y = np.asarray(z, dtype=complex) - self.z0
        return y + 0.5 * _quad(self.gamma, y, y)

    def inverse(self, w) -> np.ndarray:
        """Newton iteration for ``z(w)``."""
        w = np.asarray(w, dtype=complex)
        y = w.copy()
        m = len(w)
        for _ in range(self.max_iter):
            res = y + 0.5 * _quad(self.gamma, y, y) - w
            if np.abs(res).max() <= self.tol * max(1.0, np.abs(w).max()):
                return self.z0 + y
            jac = np.eye(m) + np.einsum("ikl,l->ik", self.gamma, y)
            y = y - np.linalg.solve(jac, res)
        raise ChartError("normal-chart inversion did not converge (point too far from the base)")

    def inverse_jets(self, ws: Sequence[Jet]) -> list[Jet]:
        """Jets of ``z - z0`` along the given ``w`` coordinate jets."""
        w0 = np.array([w.value for w in ws])
        y0 = self.inverse(w0) - self.z0
        m = len(ws)
        jac_inv = np.linalg.inv(np.eye(m) + np.einsum("ikl,l->ik", self.gamma, y0))
        ys = [ws[0].space.constant(y0[i], ws[0].order) + (ws[i] - w0[i]) for i in range(m)]
        for _ in range(ws[0].order + 1):
            res = [ys[i] + 0.5 * sum(self.gamma[i, k, l] * ys[k] * ys[l] for k in range(m) for l in range(m)) - ws[i]
                   for i in range(m)]
            ys = [ys[i] - sum(jac_inv[i, k] * res[k] for k in range(m)) for i in range(m)]
        return ys

    def space(self) -> JetSpace:
        return jet_space(self.chart.m)

    def y_jets(self) -> list[Jet]:
        """``z(w) - z0`` as holomorphic jets at ``w = 0``."""
        ws, _ = self.space().increments()
        return self.inverse_jets(ws)

    def coordinate_jets(self) -> tuple[list[Jet], list[Jet]]:
        ys = self.y_jets()
        zs = [y + self.z0[i] for i, y in enumerate(ys)]
        return zs, [z.conj() for z in zs]

    def jacobian(self) -> Jet:
        """``dz^r / dw^a`` as a jet, axes ``[r, a]``."""
        return Jet.stack(self.y_jets()).gradient()

    def inverse_jacobian(self) -> Jet:
        """``dw^b / dz^s`` along ``z(w)``, axes ``[b, s]``."""
        ys = Jet.stack(self.y_jets())
        m = self.chart.m
        return jeinsum("bsl,l->bs", self.gamma, ys) + np.eye(m)

    def potential_jet(self, order: int = MAX_ORDER) -> Jet:
        """Kahler potential as a function of ``(w, wbar)`` at ``w = 0``."""
        zs, zbs = self.coordinate_jets()
        return self.chart.potential(zs, zbs).truncate(order)

    def omega(self) -> Jet:
        """Pulled-back holomorphic form ``Omega'_{ab} = Omega_{rs} dz^r/dw^a dz^s/dw^b``."""
        return jeinsum("ra,rs,sb->ab", self.jacobian(), self.chart.omega, self.jacobian())

    def metric_jets(self, order: int = 2) -> tuple[Jet, Jet]:
        g = self.potential_jet(order + 2).hessian()
        return g, inverse_metric_jet(g)

    def pulled_back_chart(self) -> KahlerPotentialChart:
        """The same metric expressed in ``w`` (valid near ``w = 0``)."""
        chart = self

        def potential(ws, wbs):
            ys = chart.inverse_jets(ws)
            zs = [y + chart.z0[i] for i, y in enumerate(ys)]
            return chart.chart.potential(zs, [z.conj() for z in zs])

        # omega is not constant in w; callers needing it use NormalChart.omega
        return KahlerPotentialChart(f"{self.chart.name}@normal", self.chart.m, potential,
                                    self.chart.omega, dict(self.chart.params))


def normal_chart_at(chart: KahlerPotentialChart, z0) -> NormalChart:
    z0 = np.asarray(z0, dtype=complex)
    g, ginv = metric_jets(chart, z0, order=1)
    gamma = christoffel_jet(g, ginv).value
    nc = NormalChart(chart, z0, gamma)
    nc.inverse(np.zeros(chart.m))
    return nc


def transport_J(J: Jet, nc: NormalChart) -> Jet:
    """Tensor transport ``J'_a^{b-bar} = dz^r/dw^a J_r^{s-bar}(z(w)) conj(dw^b/dz^s)``."""
    ys = nc.y_jets()
    inner = ys + [y.conj() for y in ys]
    Jw = J.compose(inner)
    return jeinsum("ra,rs,bs->ab", nc.jacobian(), Jw, nc.inverse_jacobian().conj())


def transport_metric(g: Jet, nc: NormalChart) -> Jet:
    """``g'_{a b-bar} = dz^r/dw^a g_{r s-bar}(z(w)) conj(dz^s/dw^b)``."""
    ys = nc.y_jets()
    Gw = g.compose(ys + [y.conj() for y in ys])
    jac = nc.jacobian()
    return jeinsum("ra,rs,sb->ab", jac, Gw, jac.conj())
