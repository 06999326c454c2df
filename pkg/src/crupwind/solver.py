"""Nonlinear and linear solves for one implicit step."""

from __future__ import annotations

import enum
import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

log = logging.getLogger(__name__)


class JacobianMode(str, enum.Enum):
    FINITE_DIFFERENCE = "finite_difference"
    ANALYTIC_FROZEN_UPWIND = "analytic_frozen_upwind"


@dataclass(frozen=True)
class SolverConfig:
    nonlinear_tol: float = 1e-10
    max_picard: int = 3
    max_newton: int = 30
    linear_tol: float = 1e-12
    linear_max_iter: int = 500
    jacobian_mode: JacobianMode = JacobianMode.ANALYTIC_FROZEN_UPWIND
    damping: float = 1.0
    direct_threshold: int = 8000
    # Picard steps stop early once the scaled residual is below this
    picard_switch: float = 1e-3

    def __post_init__(self):
        object.__setattr__(self, "jacobian_mode", JacobianMode(self.jacobian_mode))
        if not (self.nonlinear_tol > 0 and self.linear_tol > 0):
            raise ValueError("tolerances must be positive")
        if self.max_picard < 0 or self.max_newton < 1 or self.linear_max_iter < 1:
            raise ValueError("iteration budgets must be >= 1")
        if not 0 < self.damping <= 1:
            raise ValueError("damping must lie in (0, 1]")


class SolverError(RuntimeError):
    pass


class NonconvergenceError(SolverError):
    def __init__(self, history):
        self.history = list(history)
        super().__init__(f"nonlinear solve did not converge, final scaled residual {history[-1]:.3e}")


class LinearSolveFailure(SolverError):
    def __init__(self, msg, residual=None, pivot=None):
        self.residual = residual
        self.pivot = pivot
        super().__init__(msg)


@dataclass
class SolveReport:
    picard: int = 0
    newton: int = 0
    history: list = field(default_factory=list)

    @property
    def iterations(self) -> int:
        return self.picard + self.newton


def ilu_preconditioner(A):
    ilu = spla.spilu(sp.csc_matrix(A), drop_tol=1e-3, fill_factor=5)
    return spla.LinearOperator(A.shape, ilu.solve)


def linear_solve(A, b, cfg: SolverConfig = SolverConfig(), preconditioner=None) -> np.ndarray:
    """Solve ``A x = b`` to relative residual ``cfg.linear_tol``.

    Sparse LU up to ``cfg.direct_threshold`` unknowns, ILU-preconditioned
    GMRES above.  A caller-supplied ``preconditioner`` (e.g. an ILU of an
    earlier Newton matrix) is used as is.
    """
    A = sp.csc_matrix(A)
    b = np.asarray(b, dtype=float)
    n = A.shape[0]
    if A.shape != (n, n) or b.shape != (n,):
        raise ValueError(f"dimension mismatch: matrix {A.shape}, rhs {b.shape}")
    absA = abs(A)
    zero_rows = np.flatnonzero(np.asarray(absA.sum(axis=1)).ravel() == 0)
    if len(zero_rows):
        raise LinearSolveFailure(f"singular matrix: row {zero_rows[0]} is zero", pivot=int(zero_rows[0]))
    zero_cols = np.flatnonzero(np.asarray(absA.sum(axis=0)).ravel() == 0)
    if len(zero_cols):
        raise LinearSolveFailure(f"singular matrix: column {zero_cols[0]} is zero", pivot=int(zero_cols[0]))

    if n <= cfg.direct_threshold and preconditioner is None:
        try:
            lu = spla.splu(A)
        except RuntimeError as e:
            raise LinearSolveFailure(f"singular matrix: {e}") from None
        x = lu.solve(b)
        diag = np.abs(lu.U.diagonal())
        if not np.all(np.isfinite(x)) or diag.min() <= 1e-14 * diag.max():
            k = int(np.argmin(diag))
            raise LinearSolveFailure(f"singular matrix: pivot {k} is {diag[k]:.3e}", pivot=k)
    else:
        try:
            M = preconditioner if preconditioner is not None else ilu_preconditioner(A)
        except RuntimeError as e:
            raise LinearSolveFailure(f"singular matrix: {e}") from None
        x, info = spla.gmres(A, b, M=M, rtol=cfg.linear_tol, atol=0.0,
                             maxiter=cfg.linear_max_iter, restart=100)
        if info != 0:
            raise LinearSolveFailure("GMRES did not converge", residual=_relres(A, x, b))
    res = _relres(A, x, b)
    if res > max(10 * cfg.linear_tol, 1e3 * np.finfo(float).eps * np.sqrt(n)):
        raise LinearSolveFailure(f"linear residual {res:.3e} above tolerance", residual=res)
    return x


def _relres(A, x, b):
    nb = np.linalg.norm(b)
    return float(np.linalg.norm(A @ x - b) / (nb if nb > 0 else 1.0))


def fd_jacobian(residual_fn, x, step=1e-7):
    """Dense forward-difference Jacobian; only for small systems."""
    r0 = residual_fn(x)
    J = np.empty((len(r0), len(x)))
    for j in range(len(x)):
        dx = step * max(1.0, abs(x[j]))
        xp = x.copy()
        xp[j] += dx
        J[:, j] = (residual_fn(xp) - r0) / dx
    return sp.csc_matrix(J)


def solve_step(residual_fn, jacobian_fn, x0, cfg: SolverConfig = SolverConfig(), scale=None,
               admissible=None):
    """Drive ``residual_fn(x) = 0`` from ``x0``.

    ``jacobian_fn(x, picard)`` returns the linearisation; Picard steps use
    the frozen-direction operator, Newton steps the full a.e. Jacobian.
    Convergence is declared on ``max |scale * residual| <= nonlinear_tol``.
    ``admissible(x)`` may reject trial iterates (e.g. nonpositive density);
    Picard steps that do not reduce the residual hand over to Newton;
    Newton steps are halved up to eight times until the residual decreases.
    """
    x = np.array(x0, dtype=float)
    scale = np.ones_like(x) if scale is None else np.asarray(scale)
    report = SolveReport()
    precond = None

    def norm(r):
        return float(np.max(np.abs(scale * r))) if len(r) else 0.0

    r = residual_fn(x)
    res = norm(r)
    report.history.append(res)
    phases = [("picard", cfg.max_picard), ("newton", cfg.max_newton)]
    for phase, budget in phases:
        for _ in range(budget):
            if res <= cfg.nonlinear_tol:
                return x, report
            if phase == "picard" and res <= cfg.picard_switch:
                break
            if cfg.jacobian_mode is JacobianMode.FINITE_DIFFERENCE:
                J = fd_jacobian(residual_fn, x)
            else:
                J = jacobian_fn(x, phase == "picard")
            if J.shape[0] > cfg.direct_threshold:
                # one ILU per step, refreshed only when GMRES stalls
                if precond is None:
                    precond = ilu_preconditioner(J)
                try:
                    dx = linear_solve(J, -r, cfg, preconditioner=precond)
                except LinearSolveFailure:
                    precond = ilu_preconditioner(J)
                    dx = linear_solve(J, -r, cfg, preconditioner=precond)
            else:
                dx = linear_solve(J, -r, cfg)
            lam = cfg.damping
            accepted = False
            for _ in range(8 if phase == "newton" else 1):
                trial = x + lam * dx
                if admissible is None or admissible(trial):
                    r_trial = residual_fn(trial)
                    res_trial = norm(r_trial)
                    if res_trial < res or res_trial <= cfg.nonlinear_tol:
                        accepted = True
                        break
                lam *= 0.5
            if not accepted:
                if phase == "picard":
                    # no contraction from the frozen-direction operator; hand over to Newton
                    break
                raise NonconvergenceError(report.history + [res])
            x, r, res = trial, r_trial, res_trial
            report.history.append(res)
            setattr(report, phase, getattr(report, phase) + 1)
            log.debug("%s %d: residual %.3e (step %.3g)", phase, getattr(report, phase), res, lam)
    if res <= cfg.nonlinear_tol:
        return x, report
    raise NonconvergenceError(report.history)
