"""Damped Newton-Krylov solver for the quaternionic Monge-Ampere equation on the flat torus.

Stage ``t`` solves ``log det(g_phi) / 2 - log det(g) / 2 = t F + b`` for a
mean-zero ``phi`` and a constant ``b``. Stages are chained along the
continuity path ``t_0 = 0 < ... < t_K = 1``.
"""

from __future__ import annotations

import json
import logging
import time
from dataclasses import asdict, dataclass, field, replace

import numpy as np
import scipy.fft as sfft
from scipy.sparse.linalg import LinearOperator, gmres

from . import fields, hypalg
from .errors import ConeExitError, StageFailure, ValidationError
from .fields import ScalarField, TorusGrid

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class SolverConfig:
    n: int = 1
    N: int = 16
    steps: int = 5
    tol: float = 1e-10
    max_iter: int = 30
    initial_step: float = 1.0
    backtrack: float = 0.5
    min_step: float = 1e-8
    eps_pos: float = 1e-6
    lin_tol: float = 1e-12
    lin_maxiter: int = 200
    max_halvings: int = 4
    seed: int = 0

    def __post_init__(self):
        for name in ("tol", "min_step", "eps_pos", "lin_tol"):
            if getattr(self, name) <= 0:
                raise ValidationError(f"{name} must be positive")
        if self.steps < 1 or self.max_iter < 1:
            raise ValidationError("steps and max_iter must be at least 1")
        if not 0 < self.backtrack < 1 or not 0 < self.initial_step <= 1:
            raise ValidationError("damping parameters out of range")

    @property
    def grid(self) -> TorusGrid:
        return TorusGrid(self.n, self.N)

    @property
    def t_values(self) -> np.ndarray:
        return np.linspace(0.0, 1.0, self.steps + 1)


@dataclass(frozen=True)
class SolverState:
    phi: ScalarField
    b: float = 0.0
    t: float = 0.0
    residual_history: tuple[float, ...] = ()
    min_eig_history: tuple[float, ...] = ()
    converged: bool = False

    @property
    def grid(self) -> TorusGrid:
        return self.phi.grid

    @property
    def iterations(self) -> int:
        return max(len(self.residual_history) - 1, 0)

    @classmethod
    def initial(cls, grid: TorusGrid) -> "SolverState":
        return cls(ScalarField(grid, np.zeros(grid.shape)))


@dataclass
class SolveReport:
    config: dict
    stages: list[dict] = field(default_factory=list)
    b: float = 0.0
    converged: bool = False
    b_closed_form_residual: float = float("nan")
    volume_check: float = float("nan")
    failure: str | None = None
    elapsed: float = 0.0

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self, **kw) -> str:
        d = self.to_dict()
        d.pop("elapsed")
        return json.dumps(d, sort_keys=True, **kw)


def background(n: int) -> tuple[np.ndarray, np.ndarray]:
    """Flat background ``(g, J)`` with ``g = Id``."""
    return np.eye(2 * n, dtype=complex), hypalg.flat_J(n)


def _contract(ginv_field, H):
    return np.einsum("...ij,...ij->...", ginv_field, H).real


def linearized_operator(gphi: np.ndarray, J, grid: TorusGrid):
    """Frechet derivative of ``phi -> log det(g_phi) / 2`` at a field with metric ``gphi``.

    ``L(u) = g_phi^{i j-bar} (u_{i j-bar} + sigma(u'')_{i j-bar}) / 4``.
    """
    if np.any(fields.min_eigenvalue_field(gphi) <= 0.0):
        raise ConeExitError("left the q-positive cone")
    ginv = hypalg.inverse_metric(gphi)
    Jc = fields._const_J(J)
    # J is constant, so the sigma-twist moves onto the coefficients
    coef = 0.25 * (ginv + np.swapaxes(Jc.T @ ginv @ Jc.conj(), -1, -2))

    def apply(u: ScalarField) -> ScalarField:
        return ScalarField(grid, _contract(coef, fields.complex_hessian(u)))

    return apply


def preconditioner_symbol(grid: TorusGrid, g, J) -> np.ndarray:
    """Fourier symbol of the linearised operator at ``phi = 0``."""
    m = grid.m
    mult = np.empty(grid.shape + (m, m), dtype=complex)
    for r in range(m):
        for s in range(m):
            mult[..., r, s] = grid.multiplier((r,), (s,))
    ginv = hypalg.inverse_metric(np.asarray(g, dtype=complex))
    sym = 0.25 * np.einsum("ij,...ij->...", ginv, mult + hypalg.sigma(mult, fields._const_J(J)))
    return sym.real


class _Stage:
    """Newton iteration for a single value of ``t``."""

    def __init__(self, F: ScalarField, t: float, config: SolverConfig, g, J):
        self.F, self.t, self.cfg, self.g, self.J = F, t, config, g, J
        self.grid = F.grid
        sym = preconditioner_symbol(self.grid, g, J)
        sym.flat[0] = 1.0
        self.inv_sym = 1.0 / sym
        self.inv_sym.flat[0] = 0.0

    def residual(self, phi: ScalarField, b: float) -> np.ndarray:
        return fields.residual_11(self.g, self.J, phi, self.t * self.F.values, b).values

    def _linear_system(self, gphi):
        L = linearized_operator(gphi, self.J, self.grid)
        shape, size = self.grid.shape, self.grid.size

        def matvec(w):
            w = np.asarray(w).real.reshape(shape)
            wbar = w.mean()
            return (L(ScalarField(self.grid, w - wbar)).values + wbar).ravel()

        def precond(r):
            r = np.asarray(r).real.reshape(shape)
            rbar = r.mean()
            u = sfft.ifftn(self.inv_sym * sfft.fftn(r - rbar)).real
            return (u + rbar).ravel()

        A = LinearOperator((size, size), matvec=matvec, dtype=float)
        M = LinearOperator((size, size), matvec=precond, dtype=float)
        return A, M

    def newton_direction(self, phi: ScalarField, res: np.ndarray):
        gphi = fields.omega_phi(self.g, self.J, phi)
        A, M = self._linear_system(gphi)
        # inexact Newton: the forcing term shrinks with the residual
        rtol = max(self.cfg.lin_tol, min(1e-2, float(np.abs(res).max())))
        w, info = gmres(A, -res.ravel(), M=M, rtol=rtol, atol=0.0,
                        restart=min(50, self.cfg.lin_maxiter), maxiter=self.cfg.lin_maxiter)
        if info < 0:
            raise StageFailure(f"linear solver breakdown (info={info})")
        w = w.reshape(self.grid.shape)
        wbar = w.mean()
        # the mean mode of the correction carries -db
        return ScalarField(self.grid, w - wbar), -wbar

    def run(self, state: SolverState) -> SolverState:
        cfg = self.cfg
        phi, b = state.phi, state.b
        # b that annihilates the mean residual at the incoming phi
        b = b + self.residual(phi, b).mean()
        res = self.residual(phi, b)
        rmax = float(np.abs(res).max())
        hist = [rmax]
        eigs = [float(fields.min_eigenvalue_field(fields.omega_phi(self.g, self.J, phi)).min())]
        for it in range(cfg.max_iter):
            if rmax <= cfg.tol:
                break
            du, db = self.newton_direction(phi, res)
            step = cfg.initial_step
            while True:
                if step < cfg.min_step:
                    raise StageFailure(
                        "positivity cone exit",
                        state=replace(state, phi=phi, b=b, t=self.t,
                                      residual_history=tuple(hist), min_eig_history=tuple(eigs)),
                        diagnostics={"t": self.t, "iteration": it, "residual": rmax},
                    )
                trial = phi + du * step
                mineig = float(fields.min_eigenvalue_field(fields.omega_phi(self.g, self.J, trial)).min())
                if mineig > cfg.eps_pos:
                    tres = self.residual(trial, b + step * db)
                    tmax = float(np.abs(tres).max())
                    if tmax <= rmax:
                        break
                step *= cfg.backtrack
            phi, b, res, rmax = trial, b + step * db, tres, tmax
            hist.append(rmax)
            eigs.append(mineig)
            log.debug("t=%.3f it=%d step=%.3g residual=%.3e", self.t, it, step, rmax)
        converged = rmax <= cfg.tol
        new = SolverState(phi, float(b), float(self.t), tuple(hist), tuple(eigs), converged)
        if not converged:
            raise StageFailure("Newton did not converge", state=new,
                               diagnostics={"t": self.t, "residual": rmax})
        return new


def solve_stage(state: SolverState, F: ScalarField, t: float, config: SolverConfig,
                g=None, J=None) -> SolverState:
    """Solve ``omega_phi^{2n} = exp(2 t F + 2 b) omega^{2n}`` starting from ``state``."""
    g0, J0 = background(F.grid.n)
    g = g0 if g is None else g
    J = J0 if J is None else J
    return _Stage(F, t, config, g, J).run(state)


def b_closed_form_residual(F: ScalarField, b: float, t: float = 1.0) -> float:
    """``exp(b) * mean(exp(t F)) - 1``: vanishes when the Omega-volume is conserved."""
    return float(np.exp(b) * np.exp(t * F.values).mean() - 1.0)


def solve_qma(F: ScalarField, config: SolverConfig | None = None, g=None, J=None,
              callback=None):
    """Run the continuity path and return ``(phi, b, report, states)`` with ``sup phi = 0``.

    ``callback(state)`` is invoked after each accepted stage.
    """
    cfg = config or SolverConfig(n=F.grid.n, N=F.grid.N)
    if F.grid != cfg.grid:
        raise ValidationError("F does not live on the configured grid")
    g0, J0 = background(cfg.n)
    g = g0 if g is None else g
    J = J0 if J is None else J
    report = SolveReport(config=asdict(cfg))
    start = time.perf_counter()
    state = SolverState.initial(cfg.grid)
    states = []
    pending = list(cfg.t_values[1:])
    halvings = 0
    while pending:
        t = float(pending[0])
        try:
            new = _Stage(F, t, cfg, g, J).run(state)
        except (StageFailure, ConeExitError) as exc:
            if halvings >= cfg.max_halvings:
                report.failure = str(exc)
                report.elapsed = time.perf_counter() - start
                raise StageFailure(str(exc), state=state,
                                   diagnostics={"report": report, "t": t}) from exc
            halvings += 1
            pending.insert(0, 0.5 * (state.t + t))
            continue
        pending.pop(0)
        state = new
        states.append(new)
        report.stages.append({
            "t": new.t, "iterations": new.iterations, "b": new.b,
            "residual_history": list(new.residual_history),
            "min_eig_history": list(new.min_eig_history),
        })
        if callback is not None:
            callback(new)
    # sup normalisation; the equation only sees derivatives so b is unchanged
    phi = state.phi - state.phi.values.max()
    report.b = state.b
    report.converged = True
    report.b_closed_form_residual = b_closed_form_residual(F, state.b, 1.0)
    report.volume_check = fields.volume_check(g, J, phi)
    report.elapsed = time.perf_counter() - start
    return phi, state.b, report, states


# ---------------------------------------------------------------------------
# Standard right-hand sides
# ---------------------------------------------------------------------------


def manufactured_phi(grid: TorusGrid, amplitude: float = 0.05) -> ScalarField:
    if grid.ndim < 4:
        raise ValidationError("the manufactured solution needs four real axes")
    return fields.field_from_function(
        grid,
        lambda x: amplitude * (np.cos(2 * np.pi * x[0])
                               + np.sin(2 * np.pi * x[2]) * np.cos(2 * np.pi * x[3])),
    )


def manufactured_F(phi_star: ScalarField, g=None, J=None) -> ScalarField:
    """``F`` for which ``(phi_star, 0)`` is the exact solution."""
    g0, J0 = background(phi_star.grid.n)
    g = g0 if g is None else g
    J = J0 if J is None else J
    return ScalarField(phi_star.grid, 0.5 * fields.log_det_ratio(g, J, phi_star))


def random_F(grid: TorusGrid, amplitude: float, seed: int = 0, band: int = 2) -> ScalarField:
    """Random band-limited real field with ``sup |F| = amplitude``."""
    rng = np.random.default_rng(seed)
    coeffs = np.zeros(grid.shape, dtype=complex)
    idx = tuple(np.r_[0:band + 1, grid.N - band:grid.N] for _ in range(grid.ndim))
    block = np.ix_(*idx)
    coeffs[block] = rng.standard_normal(coeffs[block].shape) + 1j * rng.standard_normal(coeffs[block].shape)
    coeffs.flat[0] = 0.0
    v = sfft.ifftn(coeffs).real
    return ScalarField(grid, amplitude * v / np.abs(v).max())
