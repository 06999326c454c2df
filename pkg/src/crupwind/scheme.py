"""Implicit upwind finite volume / Crouzeix-Raviart scheme.

Unknowns of one step are ordered ``[rho (nc); u (3 * n_interior)]`` with the
three velocity components of an interior face stored contiguously.
Residuals here are unscaled: the mass row of cell ``K`` carries the factor
``|K|`` and the momentum row of face ``sigma`` is the scheme tested against
the CR basis function ``phi_sigma e_i``.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field, replace
from functools import lru_cache
from typing import Callable, Optional

import numpy as np
import scipy.sparse as sp

from .mesh import Mesh
from .quadrature import cell_points
from .spaces import CellField, CRField, project_Q, shape_gradients
from .thermo import PressureLaw


class Variant(str, enum.Enum):
    STANDARD = "standard"
    STABILIZED = "stabilized"
    MODIFIED_UPWIND = "modified_upwind"


@dataclass(frozen=True)
class Sources:
    """Analytic sources ``g(t, x)`` (mass) and ``f(t, x)`` (momentum)."""

    mass: Optional[Callable] = None
    momentum: Optional[Callable] = None


@dataclass(frozen=True)
class SchemeConfig:
    dt: float
    mu: float
    variant: Variant = Variant.STANDARD
    epsilon: float = 0.0
    sources: Sources = field(default_factory=Sources)
    t_end: float = 1.0
    output_every: int = 1

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError(f"time step must be positive, got {self.dt}")
        if not self.mu > 0:
            raise ValueError(f"viscosity must be positive, got {self.mu}")
        if not 0.0 <= self.epsilon < 1.0:
            raise ValueError(f"epsilon must lie in [0, 1), got {self.epsilon}")
        object.__setattr__(self, "variant", Variant(self.variant))

    def with_dt(self, dt: float) -> "SchemeConfig":
        return replace(self, dt=dt)


@dataclass(frozen=True, eq=False)
class StepState:
    rho: CellField
    u: CRField
    n: int = 0
    t: float = 0.0

    def __post_init__(self):
        if np.any(self.rho.values <= 0):
            raise ValueError("density must be positive")
        if not self.u.zero_trace:
            raise ValueError("velocity must have zero trace")

    @property
    def mesh(self) -> Mesh:
        return self.rho.mesh

    def pack(self) -> np.ndarray:
        return np.concatenate([self.rho.values, self.u.interior.ravel()])

    @classmethod
    def unpack(cls, mesh: Mesh, x, n=0, t=0.0) -> "StepState":
        nc = mesh.n_cells
        return cls(CellField(mesh, x[:nc].copy()), CRField.from_interior(mesh, x[nc:]), n, t)


# -- upwinding ---------------------------------------------------------------

def upwind_coefficients(a, variant: Variant, delta: float = 0.0):
    """Split the normal velocity ``a`` into ``(A+, A-)`` with ``A+ + A- = a``.

    The face flux of a cell quantity is ``q_K A+ + q_L A-``.  Also returns
    a.e. derivatives ``dA+/da`` and ``dA-/da``; at ``a = 0`` the classical
    upwind takes the downstream branch, matching ``q_L`` for ties.
    """
    a = np.asarray(a, dtype=float)
    if Variant(variant) is not Variant.MODIFIED_UPWIND:
        delta = 0.0
    hi, lo = a + delta, a - delta
    Ap = 0.5 * (np.maximum(hi, 0.0) + np.maximum(lo, 0.0))
    Am = 0.5 * (np.minimum(hi, 0.0) + np.minimum(lo, 0.0))
    dAp = 0.5 * ((hi > 0).astype(float) + (lo > 0))
    dAm = 0.5 * ((hi <= 0).astype(float) + (lo <= 0))
    return Ap, Am, dAp, dAm


def upwind_value(q_K, q_L, un, variant=Variant.STANDARD, h=0.0, epsilon=0.0):
    """Upwinded face value (classical) or face flux (modified upwind)."""
    variant = Variant(variant)
    if variant is Variant.MODIFIED_UPWIND:
        Ap, Am, _, _ = upwind_coefficients(un, variant, h ** (1.0 - epsilon))
        return q_K * Ap + q_L * Am
    return np.where(np.asarray(un) > 0, q_K, q_L)


# -- mesh operators ----------------------------------------------------------

@dataclass(frozen=True, eq=False)
class Operators:
    mesh: Mesh
    K: np.ndarray  # owner of each interior face
    L: np.ndarray  # neighbour of each interior face
    area: np.ndarray  # (ni,)
    normal: np.ndarray  # (ni, 3), outward from K
    D: sp.csr_matrix  # (nc, ni): cell sum of s |sigma| F_sigma
    SK: sp.csr_matrix  # (ni, nc) picks rho_K
    SL: sp.csr_matrix  # (ni, nc) picks rho_L
    mean: sp.csr_matrix  # (3nc, 3ni): interior u -> cell means
    stiffness: sp.csr_matrix  # (3ni, 3ni): int grad u : grad v
    graddiv: sp.csr_matrix  # (3ni, 3ni): int div u div v
    N: sp.csr_matrix  # (ni, 3ni): u -> u_sigma . n_sigma
    omega: np.ndarray  # (ni,) lumped weight (|K| + |L|) / 4


@lru_cache(maxsize=16)
def operators(mesh: Mesh) -> Operators:
    nc, ni = mesh.n_cells, mesh.n_interior
    faces = mesh.interior_faces
    K, L = mesh.face_cells[faces].T
    area = mesh.face_area[faces]
    rows = np.arange(ni)
    D = sp.csr_matrix((np.concatenate([area, -area]), (np.concatenate([K, L]), np.concatenate([rows, rows]))),
                      shape=(nc, ni))
    SK = sp.csr_matrix((np.ones(ni), (rows, K)), shape=(ni, nc))
    SL = sp.csr_matrix((np.ones(ni), (rows, L)), shape=(ni, nc))

    local = mesh.interior_index[mesh.cell_faces]  # (nc, 4), -1 on boundary
    cell = np.repeat(np.arange(nc), 4)
    loc = local.ravel()
    keep = loc >= 0
    mean_scalar = sp.csr_matrix((np.full(keep.sum(), 0.25), (cell[keep], loc[keep])), shape=(nc, ni))
    mean = sp.kron(mean_scalar, sp.identity(3), format="csr")

    g = shape_gradients(mesh)  # (nc, 4, 3)
    vol = mesh.cell_volume
    # scalar stiffness |K| g_a . g_b on interior dofs
    Sloc = np.einsum("c,cak,cbk->cab", vol, g, g)
    ia = np.repeat(local[:, :, None], 4, axis=2)
    ib = np.repeat(local[:, None, :], 4, axis=1)
    m = (ia >= 0) & (ib >= 0)
    S = sp.csr_matrix((Sloc[m], (ia[m], ib[m])), shape=(ni, ni))
    stiffness = sp.kron(S, sp.identity(3), format="csr")
    # div-div: |K| g_{a,i} g_{b,j}
    Bloc = np.einsum("c,cai,cbj->caibj", vol, g, g)
    IA = (3 * local[:, :, None] + np.arange(3)[None, None, :])  # (nc, 4, 3)
    RA = np.broadcast_to(IA[:, :, :, None, None], Bloc.shape)
    CB = np.broadcast_to(IA[:, None, None, :, :], Bloc.shape)
    mask = (np.broadcast_to(local[:, :, None, None, None], Bloc.shape) >= 0) & \
           (np.broadcast_to(local[:, None, None, :, None], Bloc.shape) >= 0)
    graddiv = sp.csr_matrix((Bloc[mask], (RA[mask], CB[mask])), shape=(3 * ni, 3 * ni))

    normal = mesh.face_normal[faces]
    N = sp.csr_matrix((normal.ravel(), (np.repeat(rows, 3), np.arange(3 * ni))), shape=(ni, 3 * ni))
    omega = 0.25 * (vol[K] + vol[L])
    return Operators(mesh, K, L, area, normal, D, SK, SL, mean, stiffness, graddiv, N, omega)


def viscous_matrix(mesh: Mesh, mu: float) -> sp.csr_matrix:
    ops = operators(mesh)
    return (mu * ops.stiffness + (mu / 3.0) * ops.graddiv).tocsr()


def cr_basis_load(f, mesh: Mesh, degree: int = 3) -> np.ndarray:
    """``int f . phi_sigma dx`` for every interior face, shape (ni, 3)."""
    pts, w = cell_points(mesh, degree)
    from .quadrature import tet_rule
    phi = 1.0 - 3.0 * tet_rule(degree).barycentric  # (nq, 4)
    vals = np.asarray(f(pts), dtype=float)  # (nc, nq, 3)
    local = np.einsum("cq,qa,cqk->cak", w, phi, vals)
    out = np.zeros((mesh.n_faces, 3))
    np.add.at(out, mesh.cell_faces.ravel(), local.reshape(-1, 3))
    return out[mesh.interior_faces]


# -- the discrete system -----------------------------------------------------

class Scheme:
    """Residual and Jacobian of one backward Euler step.

    ``set_previous`` fixes the old state and the source time; ``residual``
    and ``jacobian`` then act on packed unknown vectors.
    """

    def __init__(self, mesh: Mesh, law: PressureLaw, cfg: SchemeConfig):
        self.mesh = mesh
        self.law = law
        self.cfg = cfg
        self.ops = operators(mesh)
        self.visc = viscous_matrix(mesh, cfg.mu)
        self.delta = mesh.h ** (1.0 - cfg.epsilon)
        self.c_stab = self.delta if cfg.variant is Variant.STABILIZED else 0.0
        self.nc = mesh.n_cells
        self.ni = mesh.n_interior
        self.rho_prev = None
        self.m_prev = None
        self.g = np.zeros(self.nc)
        self.f = np.zeros((self.ni, 3))

    # sources and previous state
    def set_previous(self, rho_prev, u_prev_interior, t_new: float | None = None):
        self.rho_prev = np.asarray(rho_prev, dtype=float)
        uhat = (self.ops.mean @ np.asarray(u_prev_interior).ravel()).reshape(-1, 3)
        self.m_prev = self.rho_prev[:, None] * uhat
        self.g, self.f = self.source_terms(t_new)

    def source_terms(self, t):
        src = self.cfg.sources
        g = np.zeros(self.nc)
        f = np.zeros((self.ni, 3))
        if t is not None and src.mass is not None:
            g = project_Q(lambda x: src.mass(t, x), self.mesh)
        if t is not None and src.momentum is not None:
            f = cr_basis_load(lambda x: src.momentum(t, x), self.mesh)
        return g, f

    def split(self, x):
        x = np.asarray(x, dtype=float)
        return x[:self.nc], x[self.nc:]

    def _face_state(self, rho, u):
        ops = self.ops
        a = ops.N @ u
        Ap, Am, dAp, dAm = upwind_coefficients(a, self.cfg.variant, self.delta)
        uhat = (ops.mean @ u).reshape(-1, 3)
        return a, Ap, Am, dAp, dAm, uhat

    def mass_flux(self, rho, u):
        """Per-interior-face convective mass flux (without the area factor)."""
        _, Ap, Am, _, _, _ = self._face_state(rho, u)
        return rho[self.ops.K] * Ap + rho[self.ops.L] * Am

    def mass_residual(self, x):
        rho, u = self.split(x)
        ops, vol = self.ops, self.mesh.cell_volume
        F = self.mass_flux(rho, u)
        r = vol * (rho - self.rho_prev) / self.cfg.dt + ops.D @ F - vol * self.g
        if self.c_stab:
            r += self.c_stab * (ops.D @ (rho[ops.K] - rho[ops.L]))
        return r

    def momentum_cell_terms(self, rho, u):
        """Per-cell vectors paired with the cell mean of the test function."""
        ops = self.ops
        _, Ap, Am, _, _, uhat = self._face_state(rho, u)
        m = rho[:, None] * uhat
        G = m[ops.K] * Ap[:, None] + m[ops.L] * Am[:, None]
        W = (self.mesh.cell_volume / self.cfg.dt)[:, None] * (m - self.m_prev) + ops.D @ G
        if self.c_stab:
            avg = 0.5 * (uhat[ops.K] + uhat[ops.L])
            W += self.c_stab * (ops.D @ ((rho[ops.K] - rho[ops.L])[:, None] * avg))
        return W

    def pressure_term(self, rho):
        ops = self.ops
        p = self.law.p(rho)
        return -(ops.area * (p[ops.K] - p[ops.L]))[:, None] * ops.normal

    def momentum_residual(self, x):
        rho, u = self.split(x)
        W = self.momentum_cell_terms(rho, u)
        r = (self.ops.mean.T @ W.ravel()).reshape(-1, 3)
        r += self.pressure_term(rho)
        r += (self.visc @ u).reshape(-1, 3)
        return r - self.f

    def residual(self, x):
        return np.concatenate([self.mass_residual(x), self.momentum_residual(x).ravel()])

    def scaling(self, rho_ref: float, u_ref: float) -> np.ndarray:
        dt = self.cfg.dt
        return np.concatenate([dt / self.mesh.cell_volume,
                               np.repeat(dt / (self.ops.omega * rho_ref * u_ref), 3)])

    def jacobian(self, x, picard: bool = False) -> sp.csr_matrix:
        """Jacobian with a.e. derivatives of the upwind brackets.

        With ``picard=True`` the dependence of the upwind coefficients on the
        advecting normal velocity is frozen, which leaves the linear part of
        the residual exact.
        """
        rho, u = self.split(x)
        ops, vol, dt = self.ops, self.mesh.cell_volume, self.cfg.dt
        nc = self.nc
        a, Ap, Am, dAp, dAm, uhat = self._face_state(rho, u)
        m = rho[:, None] * uhat
        diag = sp.diags

        # mass rows
        dF_drho = diag(Ap) @ ops.SK + diag(Am) @ ops.SL
        J_rr = diag(vol / dt) + ops.D @ dF_drho
        if self.c_stab:
            J_rr = J_rr + self.c_stab * (ops.D @ (ops.SK - ops.SL))
        if picard:
            J_ru = sp.csr_matrix((nc, 3 * self.ni))
        else:
            J_ru = ops.D @ diag(rho[ops.K] * dAp + rho[ops.L] * dAm) @ ops.N

        # momentum: W depends on rho and u; rows = mean^T W
        I3 = sp.identity(3)
        block_uhat = _block_column(uhat)  # (3nc, nc)
        dm_drho = block_uhat
        dm_du = sp.kron(diag(rho), I3) @ ops.mean
        SK3 = sp.kron(ops.SK, I3)
        SL3 = sp.kron(ops.SL, I3)
        D3 = sp.kron(ops.D, I3)
        CG = sp.kron(diag(Ap), I3) @ SK3 + sp.kron(diag(Am), I3) @ SL3  # dG/dm
        dW_drho = diag(np.repeat(vol / dt, 3)) @ dm_drho + D3 @ CG @ dm_drho
        dW_du = diag(np.repeat(vol / dt, 3)) @ dm_du + D3 @ CG @ dm_du
        if not picard:
            coef = m[ops.K] * dAp[:, None] + m[ops.L] * dAm[:, None]  # (ni, 3)
            dW_du = dW_du + D3 @ _block_column(coef) @ ops.N
        if self.c_stab:
            c = self.c_stab
            jump = rho[ops.K] - rho[ops.L]
            avg = 0.5 * (uhat[ops.K] + uhat[ops.L])
            dW_drho = dW_drho + c * D3 @ _block_column(avg) @ (ops.SK - ops.SL)
            avg_op = 0.5 * (SK3 + SL3) @ ops.mean
            dW_du = dW_du + c * D3 @ sp.kron(diag(jump), I3) @ avg_op
        P = ops.mean.T
        dp = self.law.dp(rho)
        nrm = _block_column(ops.area[:, None] * ops.normal)  # (3ni, ni)
        J_pr = -(nrm @ (diag(dp[ops.K]) @ ops.SK - diag(dp[ops.L]) @ ops.SL))
        J_ur = P @ dW_drho + J_pr
        J_uu = P @ dW_du + self.visc
        return sp.bmat([[J_rr, J_ru], [J_ur, J_uu]], format="csc")

    # stabilisation functionals, used for diagnostics and tests
    def T_c(self, rho, phi) -> float:
        ops = self.ops
        return float(self.delta * np.sum(ops.area * (rho[ops.K] - rho[ops.L]) * (phi[ops.K] - phi[ops.L])))

    def T_m(self, rho, uhat, vhat) -> float:
        ops = self.ops
        avg = 0.5 * (uhat[ops.K] + uhat[ops.L])
        jv = vhat[ops.K] - vhat[ops.L]
        return float(self.delta * np.sum(ops.area * (rho[ops.K] - rho[ops.L]) * np.einsum("fk,fk->f", avg, jv)))


def _block_column(vec3) -> sp.csr_matrix:
    """(3n, n) sparse matrix with column j holding the 3-vector ``vec3[j]``."""
    vec3 = np.asarray(vec3)
    n = len(vec3)
    rows = np.arange(3 * n)
    cols = np.repeat(np.arange(n), 3)
    return sp.csr_matrix((vec3.ravel(), (rows, cols)), shape=(3 * n, n))


# -- functional API ----------------------------------------------------------

def _scheme_for(mesh, cfg, law, rho_prev, u_prev_int, t):
    s = Scheme(mesh, law, cfg)
    s.set_previous(rho_prev, u_prev_int, t)
    return s


def mass_residual(rho_prev, rho, u, mesh: Mesh, cfg: SchemeConfig, t=None) -> np.ndarray:
    """Per-cell residual of the discrete mass balance; ``u`` is a CRField."""
    law = PressureLaw(1.0, 0.0, 2.0)  # unused by the mass balance
    s = _scheme_for(mesh, cfg, law, _vals(rho_prev), np.zeros((mesh.n_interior, 3)), t)
    return s.mass_residual(np.concatenate([_vals(rho), u.interior.ravel()]))


def momentum_residual(rho_prev, u_prev, rho, u, mesh: Mesh, cfg: SchemeConfig, law: PressureLaw, t=None):
    """Per-interior-face residual (ni, 3) of the discrete momentum balance."""
    s = _scheme_for(mesh, cfg, law, _vals(rho_prev), u_prev.interior, t)
    return s.momentum_residual(np.concatenate([_vals(rho), u.interior.ravel()]))


def stabilization_terms(rho, u: CRField, phi, v: CRField, mesh: Mesh, epsilon: float):
    """``(T_c(phi), T_m(v))`` for cell field ``phi`` and CR field ``v``."""
    cfg = SchemeConfig(dt=1.0, mu=1.0, variant=Variant.STABILIZED, epsilon=epsilon)
    s = Scheme(mesh, PressureLaw(1.0, 0.0, 2.0), cfg)
    rho = _vals(rho)
    return s.T_c(rho, _vals(phi)), s.T_m(rho, u.cell_means(), v.cell_means())


def _vals(field_or_array):
    return np.asarray(getattr(field_or_array, "values", field_or_array), dtype=float)


# -- time stepping -----------------------------------------------------------

class PositivityLost(RuntimeError):
    """A converged step produced a nonpositive density."""


def reference_scales(state: StepState) -> tuple[float, float]:
    """Density and velocity scales used to normalise momentum residuals."""
    rho_ref = float(np.max(state.rho.values))
    u_ref = max(float(np.max(np.abs(state.u.values))) if state.u.values.size else 0.0, 1.0)
    return rho_ref, u_ref


def advance(state_prev: StepState, cfg: SchemeConfig, law: PressureLaw, mesh: Mesh,
            solver_cfg=None, scales=None, scheme: Scheme | None = None):
    """One backward Euler step; returns ``(new_state, SolveReport)``."""
    from .solver import SolverConfig, solve_step

    solver_cfg = solver_cfg or SolverConfig()
    scheme = scheme or Scheme(mesh, law, cfg)
    t_new = state_prev.t + cfg.dt
    scheme.set_previous(state_prev.rho.values, state_prev.u.interior, t_new)
    rho_ref, u_ref = scales or reference_scales(state_prev)
    nc = mesh.n_cells
    x, report = solve_step(
        scheme.residual, scheme.jacobian, state_prev.pack(), solver_cfg,
        scale=scheme.scaling(rho_ref, u_ref),
        admissible=lambda y: bool(np.all(y[:nc] > 0)),
    )
    if np.any(x[:nc] <= 0):
        k = int(np.argmin(x[:nc]))
        raise PositivityLost(f"density {x[k]:.3e} in cell {k} at step {state_prev.n + 1}")
    return StepState.unpack(mesh, x, state_prev.n + 1, t_new), report
