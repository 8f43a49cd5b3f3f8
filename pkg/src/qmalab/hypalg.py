"""Pointwise algebra of hyperhermitian structures.

Components are taken in an I-holomorphic frame ``dz^1 .. dz^m`` with
``m = 2n``.  The second complex structure is stored only through its block
``J[r, s] = J_r^{s-bar}`` (it sends ``d/dz^r`` to ``J_r^{s-bar} d/dzbar^s``);
the conjugate block ``J_{r-bar}^s`` is ``conj(J[r, s])``.

Conventions (checked by round-trip tests, see ``tests/test_hypalg.py``):

* ``g[r, s] = g(d/dz^r, d/dzbar^s)``, a Hermitian matrix.
* ``Omega[r, s] = Omega(d/dz^r, d/dz^s) = J_r^{a-bar} g_{s a-bar}``, i.e.
  ``Omega = J @ g.T``; the inverse map is ``g = Omega @ J^H``.
* ``sigma(H) = J @ H.T @ J^H`` is the action ``H(J., J.)`` on (1,1) tensors;
  ``g`` is hyperhermitian iff ``sigma(g) == g``.
* Inverse metrics are returned index-aligned, ``ginv[i, j] = g^{i j-bar}``,
  so that ``sum_j g[k, j] * ginv[i, j] = delta_ki``.

Most functions accept either the dataclass wrappers below or bare arrays and
broadcast over leading batch axes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import NotAMetricForm, StructureError, ValidationError

__all__ = [
    "JTensor",
    "HermitianMetric",
    "QForm20",
    "QuaternionicResidual",
    "flat_J",
    "check_quaternionic",
    "sigma",
    "is_hyperhermitian",
    "j_average",
    "omega_from_gJ",
    "g_from_omegaJ",
    "q_real_residual",
    "q_positive_check",
    "omega11",
    "j_anti_invariance_residual",
    "pfaffian",
    "inverse_metric",
    "trace_pair",
    "trace_inequality_residual",
    "random_hermitian",
    "random_hyperhermitian",
]


def _frozen(a):
    a = np.array(a, dtype=complex)
    a.setflags(write=False)
    return a


def _arr(x):
    return np.asarray(x.comp if hasattr(x, "comp") else x)


@dataclass(frozen=True)
class JTensor:
    """Second complex structure, block ``J_r^{s-bar}``."""

    comp: np.ndarray = field(repr=False)

    def __post_init__(self):
        object.__setattr__(self, "comp", _frozen(self.comp))

    @property
    def m(self) -> int:
        return self.comp.shape[-1]

    @property
    def conj_block(self) -> np.ndarray:
        """``J_{r-bar}^s`` laid out as ``[r, s]``."""
        return self.comp.conj()

    def full(self) -> np.ndarray:
        """Endomorphism of the complexified tangent space.

        Acts on column vectors ``(V^1..V^m, V^{1-bar}..V^{m-bar})``.
        """
        return _full_J(self.comp)

    @classmethod
    def flat(cls, n: int) -> "JTensor":
        return cls(flat_J(n))


@dataclass(frozen=True)
class HermitianMetric:
    """Hermitian component matrix ``g_{r s-bar}``."""

    comp: np.ndarray = field(repr=False)

    def __post_init__(self):
        c = _frozen(self.comp)
        if c.shape[-1] != c.shape[-2]:
            raise StructureError("metric components must be square")
        if not np.allclose(c, np.swapaxes(c, -1, -2).conj(), atol=1e-12, rtol=1e-12):
            raise ValidationError("metric components are not Hermitian")
        object.__setattr__(self, "comp", c)

    @property
    def m(self) -> int:
        return self.comp.shape[-1]

    @property
    def inverse(self) -> np.ndarray:
        return inverse_metric(self.comp)

    def min_eigenvalue(self) -> float:
        return float(np.linalg.eigvalsh(self.comp).min())

    @property
    def is_positive(self) -> bool:
        return self.min_eigenvalue() > 0.0


@dataclass(frozen=True)
class QForm20:
    """Antisymmetric component matrix ``Omega_{rs}`` of a (2,0)-form."""

    comp: np.ndarray = field(repr=False)

    def __post_init__(self):
        c = _frozen(self.comp)
        if c.shape[-1] != c.shape[-2]:
            raise StructureError("form components must be square")
        if not np.allclose(c, -np.swapaxes(c, -1, -2), atol=1e-12):
            raise ValidationError("(2,0)-form components are not antisymmetric")
        object.__setattr__(self, "comp", c)

    @property
    def m(self) -> int:
        return self.comp.shape[-1]

    def is_q_real(self, J, tol: float = 1e-12) -> bool:
        return q_real_residual(self, J) <= tol

    def is_q_positive(self, J) -> bool:
        return q_positive_check(self, J) > 0.0


@dataclass(frozen=True)
class QuaternionicResidual:
    j_squared: float
    ij_anticommute: float
    k_squared: float

    @property
    def max(self) -> float:
        return max(self.j_squared, self.ij_anticommute, self.k_squared)


def flat_J(n: int) -> np.ndarray:
    """Standard structure on H^n = C^{2n}: ``J_{2k-1}^{2k-bar} = 1``, ``J_{2k}^{(2k-1)-bar} = -1``."""
    m = 2 * n
    J = np.zeros((m, m), dtype=complex)
    for k in range(n):
        J[2 * k, 2 * k + 1] = 1.0
        J[2 * k + 1, 2 * k] = -1.0
    return J


def _full_J(J):
    m = J.shape[-1]
    out = np.zeros(J.shape[:-2] + (2 * m, 2 * m), dtype=complex)
    # (JV)^{s-bar} = J_r^{s-bar} V^r ; (JV)^s = J_{r-bar}^s V^{r-bar}
    out[..., m:, :m] = np.swapaxes(J, -1, -2)
    out[..., :m, m:] = np.swapaxes(J.conj(), -1, -2)
    return out


def _full_I(m):
    return np.diag(np.concatenate([np.full(m, 1j), np.full(m, -1j)]))


def check_quaternionic(J) -> QuaternionicResidual:
    """Max-abs residuals of ``J^2 + Id``, ``IJ + JI`` and ``K^2 + Id`` with ``K = IJ``."""
    Jc = _arr(J)
    if Jc.ndim != 2 or Jc.shape[0] != Jc.shape[1]:
        raise StructureError("J must be a square matrix")
    m = Jc.shape[0]
    if m % 2:
        raise StructureError(f"no quaternionic structure in odd complex dimension {m}")
    Jf = _full_J(Jc)
    If = _full_I(m)
    Id = np.eye(2 * m)
    K = If @ Jf
    return QuaternionicResidual(
        j_squared=float(np.abs(Jf @ Jf + Id).max()),
        ij_anticommute=float(np.abs(If @ Jf + Jf @ If).max()),
        k_squared=float(np.abs(K @ K + Id).max()),
    )


def sigma(H, J) -> np.ndarray:
    """``sigma(H)_{r s-bar} = J_r^{a-bar} J_{s-bar}^b H_{b a-bar}``."""
    H = _arr(H)
    Jc = _arr(J)
    return Jc @ np.swapaxes(H, -1, -2) @ np.swapaxes(Jc, -1, -2).conj()


def _check_hermitian(H):
    if not np.allclose(H, np.swapaxes(H, -1, -2).conj(), atol=1e-12, rtol=1e-12):
        raise ValidationError("input is not Hermitian")


def is_hyperhermitian(g, J) -> float:
    """Max-abs residual of ``g - sigma(g)``; zero iff ``g`` is J-compatible."""
    gc = _arr(g)
    _check_hermitian(gc)
    return float(np.abs(gc - sigma(gc, J)).max())


def j_average(H, J) -> np.ndarray:
    """Project a Hermitian matrix onto the J-invariant ones: ``(H + sigma(H)) / 2``.

    The result is not necessarily positive definite.
    """
    H = _arr(H)
    if H.shape[-1] != _arr(J).shape[-1]:
        raise StructureError("shape mismatch between H and J")
    return 0.5 * (H + sigma(H, J))


def omega_from_gJ(g, J) -> np.ndarray:
    """(2,0)-form ``Omega = (omega_J + i omega_K) / 2`` of a hyperhermitian metric."""
    gc = _arr(g)
    return _arr(J) @ np.swapaxes(gc, -1, -2)


def g_from_omegaJ(omega, J, check: bool = True) -> np.ndarray:
    """Hermitian matrix of ``2 Re Omega(., J.)``; inverse of :func:`omega_from_gJ`."""
    Om = _arr(omega)
    Jc = _arr(J)
    g = Om @ np.swapaxes(Jc.conj(), -1, -2)
    if check:
        herm = 0.5 * (g + np.swapaxes(g, -1, -2).conj())
        if np.linalg.eigvalsh(herm).min() <= 0.0:
            raise NotAMetricForm("not a metric form: Omega is not q-positive")
    return g


def q_real_residual(omega, J) -> float:
    """Max-abs residual of ``Omega(J., J.) - conj(Omega)`` on (0,1) vectors."""
    Om = _arr(omega)
    Jb = _arr(J).conj()
    lhs = Jb @ Om @ np.swapaxes(Jb, -1, -2)
    return float(np.abs(lhs - Om.conj()).max())


def q_positive_check(omega, J) -> float:
    """Minimum eigenvalue of the Hermitian form ``Z -> Omega(Z, J Zbar)``."""
    g = g_from_omegaJ(omega, J, check=False)
    herm = 0.5 * (g + np.swapaxes(g, -1, -2).conj())
    return float(np.linalg.eigvalsh(herm).min())


def omega11(g) -> np.ndarray:
    """Components ``omega(d_r, d_sbar) = i g_{r s-bar}`` of the fundamental form."""
    return 1j * _arr(g)


def j_anti_invariance_residual(g, J) -> float:
    """Max-abs residual of ``omega(J., J.) + omega`` evaluated on ``(d_r, d_sbar)``."""
    om = omega11(g)
    Jc = _arr(J)
    # omega(d_abar, d_b) = -omega_{b a-bar}
    lhs = sigma(-om, Jc)
    return float(np.abs(lhs + om).max())


def pfaffian(M) -> complex | np.ndarray:
    """Pfaffian of antisymmetric matrices by Parlett-Reid elimination.

    Partial pivoting on the sub-diagonal column; a rank-2 Schur update at
    each step.  Broadcasts over leading axes.
    """
    A = np.array(_arr(M), dtype=complex)
    if A.shape[-1] != A.shape[-2]:
        raise StructureError("Pfaffian needs a square matrix")
    n = A.shape[-1]
    if n % 2:
        raise StructureError("Pfaffian of an odd-dimensional matrix")
    batch = A.shape[:-2]
    A = A.reshape((-1, n, n))
    nb = A.shape[0]
    rows = np.arange(nb)
    pf = np.ones(nb, dtype=complex)
    for k in range(0, n - 1, 2):
        kp = k + 1 + np.argmax(np.abs(A[:, k + 1:, k]), axis=1)
        swap = kp != k + 1
        if swap.any():
            idx = np.tile(np.arange(n), (nb, 1))
            idx[rows, k + 1] = kp
            idx[rows, kp] = k + 1
            A = A[rows[:, None, None], idx[:, :, None], idx[:, None, :]]
            pf[swap] *= -1.0
        piv = A[:, k, k + 1]
        zero = piv == 0
        pf = np.where(zero, 0.0, pf * piv)
        if k + 2 < n:
            safe = np.where(zero, 1.0, piv)
            tau = A[:, k, k + 2:] / safe[:, None]
            col = A[:, k + 2:, k + 1]
            A[:, k + 2:, k + 2:] += tau[:, :, None] * col[:, None, :] - col[:, :, None] * tau[:, None, :]
    out = pf.reshape(batch)
    return complex(out) if out.ndim == 0 else out


def inverse_metric(g) -> np.ndarray:
    """``ginv[i, j] = g^{i j-bar}``."""
    gc = _arr(g)
    try:
        return np.swapaxes(np.linalg.inv(gc), -1, -2)
    except np.linalg.LinAlgError as exc:
        raise ValidationError("singular metric") from exc


def trace_pair(A, B):
    """``tr_A B = A^{i j-bar} B_{i j-bar}``."""
    Ac = _arr(A)
    if np.linalg.eigvalsh(0.5 * (Ac + np.swapaxes(Ac, -1, -2).conj())).min() <= 0.0:
        raise ValidationError("trace_pair: A is not positive definite")
    val = np.einsum("...ij,...ij->...", inverse_metric(Ac), _arr(B))
    if np.ndim(val) == 0:
        return float(val.real) if abs(val.imag) <= 1e-12 * max(1.0, abs(val)) else complex(val)
    return val


def trace_inequality_residual(ghat, gphi, n: int, ratio=None):
    """RHS - LHS of ``tr_ghat gphi <= (tr_gphi ghat)^(2n-1) det(gphi) / ((2n-1)! det(ghat))``.

    ``ratio`` replaces the determinant ratio (e.g. by the right-hand side of
    the equation the pair is supposed to solve).
    """
    gh = _arr(ghat)
    gp = _arr(gphi)
    m = gp.shape[-1]
    if m != 2 * n or gh.shape[-1] != m:
        raise StructureError(f"expected {2 * n}x{2 * n} matrices, got {m}")
    lhs = np.einsum("...ij,...ij->...", inverse_metric(gh), gp).real
    tr_inv = np.einsum("...ij,...ij->...", inverse_metric(gp), gh).real
    if ratio is None:
        ratio = (np.linalg.det(gp) / np.linalg.det(gh)).real
    rhs = tr_inv ** (2 * n - 1) * ratio / math.factorial(2 * n - 1)
    out = rhs - lhs
    return float(out) if np.ndim(out) == 0 else out


def random_hermitian(rng: np.random.Generator, m: int, scale: float = 1.0) -> np.ndarray:
    A = rng.normal(size=(m, m)) + 1j * rng.normal(size=(m, m))
    return scale * 0.5 * (A + A.conj().T)


def random_hyperhermitian(rng: np.random.Generator, J, base=None, positive: bool = True) -> np.ndarray:
    """Random J-invariant Hermitian matrix.

    With ``positive`` the sample is ``base + t * j_average(H)`` with
    ``t = 0.5 / (1 + |H|)`` halved until positive definite; ``base`` defaults
    to the identity, which is hyperhermitian for every unitary J.
    """
    Jc = _arr(J)
    m = Jc.shape[-1]
    H = j_average(random_hermitian(rng, m), Jc)
    if not positive:
        return H
    base = np.eye(m, dtype=complex) if base is None else _arr(base)
    t = 0.5 / (1.0 + np.abs(H).max())
    g = base + t * H
    while np.linalg.eigvalsh(g).min() <= 0.0:
        t *= 0.5
        g = base + t * H
    return g
