"""Spectral calculus on the flat hyperkahler torus H^n / Z^{4n}.

Real coordinates ``x^1..x^{4n}`` have period 1 and ``z^k = x^{2k-1} + i x^{2k}``.
Grid arrays carry the ``4n`` grid axes first; matrix-valued fields append
their ``(m, m)`` component axes last.

The quaternionic Hessian is normalised so that the (2,0) route
``Omega + dd_J(phi) / 2`` and the (1,1) route
``g + (phi'' + sigma(phi'')) / 2`` produce the same metric; see
:data:`HESSIAN_SCALE`.
"""

from __future__ import annotations

import functools
import itertools
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.fft as sfft

from . import hypalg
from .errors import ConeExitError, StructureError, ValidationError

HESSIAN_SCALE = 0.5
SNAPSHOT_MAGIC = b"QMA1"
SNAPSHOT_VERSION = 1


@dataclass(frozen=True)
class TorusGrid:
    n: int = 1
    N: int = 16

    def __post_init__(self):
        if self.N % 2 or self.N < 4:
            raise StructureError("N must be even and at least 4")
        if self.n < 1:
            raise StructureError("n must be positive")

    @property
    def m(self) -> int:
        return 2 * self.n

    @property
    def ndim(self) -> int:
        return 4 * self.n

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.N,) * self.ndim

    @property
    def size(self) -> int:
        return self.N ** self.ndim

    @property
    def volume(self) -> float:
        return 1.0

    def coords(self) -> list[np.ndarray]:
        x = np.arange(self.N) / self.N
        return np.meshgrid(*([x] * self.ndim), indexing="ij", sparse=True)

    @functools.cached_property
    def _k(self) -> np.ndarray:
        return sfft.fftfreq(self.N, 1.0 / self.N)

    def axis_multiplier(self, axis: int, power: int) -> np.ndarray:
        """Symbol of ``(d/dx^axis)^power``; odd powers drop the Nyquist mode."""
        k = self._k.copy()
        if power % 2:
            k[self.N // 2] = 0.0
        mult = (2j * np.pi * k) ** power
        shp = [1] * self.ndim
        shp[axis] = self.N
        return mult.reshape(shp)

    @functools.lru_cache(maxsize=256)
    def multiplier(self, holo: tuple[int, ...], anti: tuple[int, ...]) -> np.ndarray:
        """Symbol of ``d_{z^holo} d_{zbar^anti}`` (0-based complex indices)."""
        # d_z = (d_x - i d_y)/2, d_zbar = (d_x + i d_y)/2
        factors = [[(0.5, 2 * k), (-0.5j, 2 * k + 1)] for k in holo]
        factors += [[(0.5, 2 * k), (0.5j, 2 * k + 1)] for k in anti]
        terms: dict[tuple[int, ...], complex] = {}
        for choice in itertools.product(*factors):
            powers = [0] * self.ndim
            c = 1.0 + 0j
            for coef, axis in choice:
                c *= coef
                powers[axis] += 1
            key = tuple(powers)
            terms[key] = terms.get(key, 0.0) + c
        out = np.zeros(self.shape, dtype=complex)
        for powers, c in terms.items():
            if c == 0:
                continue
            term = np.full((1,) * self.ndim, c, dtype=complex)
            for axis, p in enumerate(powers):
                if p:
                    term = term * self.axis_multiplier(axis, p)
            out = out + term
        return out


@dataclass(frozen=True)
class ScalarField:
    grid: TorusGrid
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        v = np.asarray(self.values)
        if np.iscomplexobj(v):
            if np.abs(v.imag).max() > 1e-12 * max(1.0, np.abs(v).max()):
                raise ValidationError("scalar fields are real valued")
            v = v.real
        v = np.array(np.broadcast_to(v, self.grid.shape), dtype=float)
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @functools.cached_property
    def coeffs(self) -> np.ndarray:
        return sfft.fftn(self.values)

    @classmethod
    def from_coeffs(cls, grid: TorusGrid, coeffs) -> "ScalarField":
        return cls(grid, sfft.ifftn(coeffs).real)

    def derivative(self, holo=(), anti=()) -> np.ndarray:
        if len(holo) + len(anti) == 0:
            return self.values.astype(complex)
        mult = self.grid.multiplier(tuple(sorted(holo)), tuple(sorted(anti)))
        return sfft.ifftn(mult * self.coeffs)

    def mean(self) -> float:
        return float(self.values.mean())

    def __add__(self, other):
        o = other.values if isinstance(other, ScalarField) else other
        return ScalarField(self.grid, self.values + o)

    def __sub__(self, other):
        o = other.values if isinstance(other, ScalarField) else other
        return ScalarField(self.grid, self.values - o)

    def __mul__(self, c):
        return ScalarField(self.grid, self.values * c)

    __rmul__ = __mul__


def field_from_function(grid: TorusGrid, f) -> ScalarField:
    """Sample ``f(x)`` where ``x`` is the list of broadcastable coordinate arrays."""
    return ScalarField(grid, np.broadcast_to(f(grid.coords()), grid.shape))


def spectral_derivative(f: ScalarField, holo=(), anti=()) -> np.ndarray:
    if len(holo) + len(anti) > 4:
        raise ValidationError("derivative order above 4 is not supported")
    return f.derivative(holo, anti)


def complex_hessian(f: ScalarField) -> np.ndarray:
    """``f_{r s-bar}`` with trailing axes ``(r, s)``."""
    m = f.grid.m
    out = np.empty(f.grid.shape + (m, m), dtype=complex)
    for r in range(m):
        for s in range(r, m):
            out[..., r, s] = f.derivative((r,), (s,))
            if s != r:
                out[..., s, r] = out[..., r, s].conj()
    out[..., range(m), range(m)] = out[..., range(m), range(m)].real
    return out


def _const_J(J) -> np.ndarray:
    Jc = np.asarray(J.comp if hasattr(J, "comp") else J, dtype=complex)
    if Jc.ndim != 2:
        raise ValidationError("dd_J on the torus requires a constant J")
    return Jc


def dd_J_from_hessian(hess: np.ndarray, J) -> np.ndarray:
    """``(d d_J phi)_{ab} = J_a^{s-bar} phi_{b s-bar} - J_b^{s-bar} phi_{a s-bar}`` for constant J."""
    Jc = _const_J(J)
    A = np.einsum("as,...bs->...ab", Jc, hess)
    return A - np.swapaxes(A, -1, -2)


def dd_J(phi: ScalarField, J) -> np.ndarray:
    """(2,0)-form ``d J^{-1} dbar J phi`` of a real function (J constant)."""
    return dd_J_from_hessian(complex_hessian(phi), J)


def _metric_array(g, grid: TorusGrid) -> np.ndarray:
    g = np.asarray(g.comp if hasattr(g, "comp") else g, dtype=complex)
    return g


def omega_phi_from_hessian(g, J, hess) -> np.ndarray:
    return g + 0.5 * (hess + hypalg.sigma(hess, _const_J(J)))


def omega_phi(g, J, phi: ScalarField) -> np.ndarray:
    """Components of ``omega + (i dd-bar phi - i J dd-bar phi) / 2``."""
    return omega_phi_from_hessian(_metric_array(g, phi.grid), J, complex_hessian(phi))


def omega20_phi(omega, J, phi: ScalarField) -> np.ndarray:
    """``Omega_phi = Omega + HESSIAN_SCALE * dd_J(phi)``."""
    Om = np.asarray(omega.comp if hasattr(omega, "comp") else omega, dtype=complex)
    return Om + HESSIAN_SCALE * dd_J(phi, J)


def min_eigenvalue_field(gphi: np.ndarray) -> np.ndarray:
    herm = 0.5 * (gphi + np.swapaxes(gphi, -1, -2).conj())
    return np.linalg.eigvalsh(herm)[..., 0]


def pfaffian_ratio(omega, J, phi: ScalarField) -> np.ndarray:
    """``Pf(Omega_phi) / Pf(Omega)`` at every grid point (real for q-real forms)."""
    Om = np.asarray(omega.comp if hasattr(omega, "comp") else omega, dtype=complex)
    ratio = hypalg.pfaffian(omega20_phi(Om, J, phi)) / hypalg.pfaffian(Om)
    return ratio


def residual_20(omega, J, phi: ScalarField, F, b: float) -> ScalarField:
    """``log(Pf(Omega_phi) / Pf(Omega)) - F - b``."""
    ratio = pfaffian_ratio(omega, J, phi)
    if np.any(ratio.real <= 0.0):
        raise ConeExitError("left the q-positive cone")
    Fv = F.values if isinstance(F, ScalarField) else F
    return ScalarField(phi.grid, np.log(ratio.real) - Fv - b)


def log_det_ratio(g, J, phi: ScalarField) -> np.ndarray:
    g = _metric_array(g, phi.grid)
    gphi = omega_phi(g, J, phi)
    if np.any(min_eigenvalue_field(gphi) <= 0.0):
        raise ConeExitError("left the q-positive cone")
    s1, l1 = np.linalg.slogdet(gphi)
    s0, l0 = np.linalg.slogdet(g)
    return (l1 - l0).real


def residual_11(g, J, phi: ScalarField, F, b: float) -> ScalarField:
    """``log(det g_phi / det g) / 2 - F - b``."""
    Fv = F.values if isinstance(F, ScalarField) else F
    return ScalarField(phi.grid, 0.5 * log_det_ratio(g, J, phi) - Fv - b)


def integrate(f) -> float:
    """Integral over the unit torus; the grid mean is exact for band-limited data."""
    v = f.values if isinstance(f, ScalarField) else np.asarray(f)
    return float(np.real(v.mean()))


def volume_check(g, J, phi: ScalarField) -> float:
    """``int Omega_phi^n ^ conj(Omega)^n - int Omega^n ^ conj(Omega)^n`` (normalised by the latter)."""
    Om = hypalg.omega_from_gJ(_metric_array(g, phi.grid), _const_J(J))
    return integrate(pfaffian_ratio(Om, J, phi).real) - phi.grid.volume


def volume_check_11(g, J, phi: ScalarField) -> float:
    """``int omega_phi^{2n} - int omega^{2n}`` (normalised); not a conserved quantity."""
    return integrate(np.exp(log_det_ratio(g, J, phi))) - phi.grid.volume


# ---------------------------------------------------------------------------
# Snapshots
# ---------------------------------------------------------------------------


def save_snapshot(path, grid: TorusGrid, components) -> None:
    """Write ``QMA1`` snapshot: header then little-endian f64, grid axes then components."""
    data = np.asarray(components, dtype="<f8")
    if data.shape == grid.shape:
        data = data[..., None]
    if data.shape[:-1] != grid.shape:
        raise StructureError("snapshot data does not match the grid")
    with open(Path(path), "wb") as fh:
        fh.write(SNAPSHOT_MAGIC)
        fh.write(struct.pack("<IIII", SNAPSHOT_VERSION, grid.n, grid.N, data.shape[-1]))
        fh.write(np.ascontiguousarray(data).tobytes(order="C"))


def load_snapshot(path) -> tuple[TorusGrid, np.ndarray]:
    raw = Path(path).read_bytes()
    if raw[:4] != SNAPSHOT_MAGIC:
        raise ValidationError("not a QMA1 snapshot")
    version, n, N, ncomp = struct.unpack("<IIII", raw[4:20])
    if version != SNAPSHOT_VERSION:
        raise ValidationError(f"unsupported snapshot version {version}")
    grid = TorusGrid(n, N)
    data = np.frombuffer(raw[20:], dtype="<f8")
    if data.size != grid.size * ncomp:
        raise ValidationError("truncated snapshot")
    return grid, data.reshape(grid.shape + (ncomp,)).astype(float)
