"""Independent reference computations used only by the tests.

Everything here works from closed formulas and central differences in real
coordinates, so it shares no code path with the spectral or jet machinery.
"""

from __future__ import annotations

import numpy as np


def dz(f, x, k, h=1e-4):
    """``d f / d z^k`` at real point ``x`` by 4th-order central differences."""
    def d(axis):
        e = np.zeros_like(x)
        e[axis] = h
        return (-f(x + 2 * e) + 8 * f(x + e) - 8 * f(x - e) + f(x - 2 * e)) / (12 * h)
    return 0.5 * (d(2 * k) - 1j * d(2 * k + 1))


def dzbar(f, x, k, h=1e-4):
    def d(axis):
        e = np.zeros_like(x)
        e[axis] = h
        return (-f(x + 2 * e) + 8 * f(x + e) - 8 * f(x - e) + f(x - 2 * e)) / (12 * h)
    return 0.5 * (d(2 * k) + 1j * d(2 * k + 1))


def dd_J_definition(phi, J, x, h=1e-3):
    """``d (J^{-1} dbar J phi)`` at ``x`` from nested central differences.

    On functions ``J phi = phi`` and ``J^{-1} = -J`` on 1-forms, with
    ``(J alpha)(X) = alpha(J X)``; so the (1,0)-form is
    ``alpha_r = -J_r^{s-bar} phi_{s-bar}``, and its ``d`` has components
    ``d_a alpha_b - d_b alpha_a``.
    """
    m = J.shape[0]

    def alpha(r):
        return lambda y: -sum(J[r, s] * dzbar(phi, y, s, h) for s in range(m))

    out = np.zeros((m, m), dtype=complex)
    for a in range(m):
        for b in range(m):
            out[a, b] = dz(alpha(b), x, a, h) - dz(alpha(a), x, b, h)
    return out


# ---------------------------------------------------------------------------
# Eguchi-Hanson from its closed-form metric
# ---------------------------------------------------------------------------


def eh_metric(z, a=1.0):
    """``g_{i j-bar} = f(u) delta_ij + f'(u) zbar_i z_j`` with ``f = sqrt(u^2 + a^4) / u``."""
    z = np.asarray(z, dtype=complex)
    u = float(np.sum(np.abs(z) ** 2))
    root = np.sqrt(u * u + a ** 4)
    f = root / u
    fp = 1.0 / root - root / u ** 2
    return f * np.eye(2) + fp * np.outer(z.conj(), z)


def _zeta(x):
    return np.array([x[0] + 1j * x[1], x[2] + 1j * x[3]])


def eh_metric_real(x, a=1.0):
    return eh_metric(_zeta(x), a)


def real_point(z):
    z = np.asarray(z, dtype=complex)
    return np.array([v for c in z for v in (c.real, c.imag)])


def eh_christoffel(z, a=1.0, h=1e-4):
    """``Gamma^i_{kl} = g^{i j-bar} d_k g_{l j-bar}`` by differences, axes ``[i, k, l]``."""
    x = real_point(z)
    g = eh_metric(z, a)
    ginv = np.linalg.inv(g).T
    dg = np.stack([dz(lambda y: eh_metric_real(y, a), x, k, h) for k in range(2)])  # [k, l, j]
    return np.einsum("ij,klj->ikl", ginv, dg)


def eh_curvature(z, a=1.0, h=1e-3):
    """``-g_{i j-bar, a b-bar} + g^{p q-bar} g_{i q-bar, a} g_{p j-bar, b-bar}``, axes ``[a, b, i, j]``."""
    x = real_point(z)
    G = lambda y: eh_metric_real(y, a)  # noqa: E731
    g = G(x)
    ginv = np.linalg.inv(g).T
    d1 = np.stack([dz(G, x, k, h) for k in range(2)])  # [a, i, q]
    d1b = np.stack([dzbar(G, x, k, h) for k in range(2)])  # [b, p, j]
    d2 = np.stack([np.stack([dz(lambda y, b=b: dzbar(G, y, b, h), x, k, h) for b in range(2)])
                   for k in range(2)])  # [a, b, i, j]
    return -d2 + np.einsum("pq,aiq,bpj->abij", ginv, d1, d1b)


# ---------------------------------------------------------------------------
# Finite-difference Frechet derivative
# ---------------------------------------------------------------------------


def frechet_quotient(F, x, u, h):
    return (F(x + h * u) - F(x)) / h


def chern_laplacian_fd(f, gphi, x, h=1e-4):
    """``g_phi^{r s-bar} f_{r s-bar}`` at ``x`` from nested differences."""
    m = gphi.shape[0]
    ginv = np.linalg.inv(gphi).T
    return sum(ginv[r, s] * dz(lambda y, s=s: dzbar(f, y, s, h), x, r, h)
               for r in range(m) for s in range(m))
