"""Mass, energy, dissipation and error functionals of discrete states."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, fields

import numpy as np

from .quadrature import cell_points
from .scheme import Scheme, StepState, Variant, operators, upwind_coefficients
from .spaces import CRField, broken_div, broken_grad, project_CR, project_Q
from .thermo import PressureLaw, E_rel


def total_mass(rho, mesh) -> float:
    return float(np.dot(mesh.cell_volume, np.asarray(getattr(rho, "values", rho))))


def kinetic_energy(state: StepState) -> float:
    mesh = state.mesh
    uhat = state.u.cell_means()
    return float(0.5 * np.dot(mesh.cell_volume, state.rho.values * (uhat ** 2).sum(axis=1)))


def internal_energy(state: StepState, law: PressureLaw) -> float:
    return float(np.dot(state.mesh.cell_volume, law.H(state.rho.values)))


def total_energy(state: StepState, law: PressureLaw) -> float:
    return kinetic_energy(state) + internal_energy(state, law)


def viscous_rate(u: CRField, mu: float) -> float:
    """``mu int |grad_h u|^2 + (mu/3) int |div_h u|^2``."""
    vol = u.mesh.cell_volume
    G = broken_grad(u)
    d = broken_div(u)
    return float(mu * np.einsum("c,cij,cij->", vol, G, G) + mu / 3.0 * np.dot(vol, d * d))


def _face_split(state: StepState, variant, delta):
    ops = operators(state.mesh)
    a = ops.N @ state.u.interior.ravel()
    Ap, Am, _, _ = upwind_coefficients(a, variant, delta)
    return ops, Ap, Am


def step_dissipation(prev: StepState, new: StepState, dt: float, variant=Variant.STANDARD,
                     epsilon: float = 0.0, law: PressureLaw | None = None) -> dict:
    """Dissipation of one step.

    ``D_time_u`` and ``D_space_u`` are the velocity terms of the discrete
    energy balance.  For a flux ``q_K A+ + q_L A-`` the space term weighs
    ``|u_K - u_L|^2 / 2`` by ``rho_K A+ - rho_L A-``, which is
    ``rho_up |u . n|`` for classical upwinding.  With ``law`` given, the
    density terms are returned in their exact Bregman form as well.
    """
    mesh = new.mesh
    delta = mesh.h ** (1.0 - epsilon)
    vol = mesh.cell_volume
    u0, u1 = prev.u.cell_means(), new.u.cell_means()
    rho0, rho1 = prev.rho.values, new.rho.values
    out = {"D_time_u": float(0.5 * np.dot(vol, rho0 * ((u1 - u0) ** 2).sum(axis=1)))}
    ops, Ap, Am = _face_split(new, variant, delta)
    K, L = ops.K, ops.L
    jump2 = ((u1[K] - u1[L]) ** 2).sum(axis=1)
    weight = rho1[K] * Ap - rho1[L] * Am
    out["D_space_u"] = float(dt * np.sum(ops.area * 0.5 * jump2 * weight))
    if law is not None:
        out["D_time_rho"] = float(np.dot(vol, E_rel(rho0, rho1, law)))
        out["D_space_rho"] = float(dt * np.sum(ops.area * (Ap * E_rel(rho1[K], rho1[L], law)
                                                           - Am * E_rel(rho1[L], rho1[K], law))))
        if Variant(variant) is Variant.STABILIZED:
            dH = law.dH(rho1)
            out["tc"] = float(dt * delta * np.sum(ops.area * (rho1[K] - rho1[L]) * (dH[K] - dH[L])))
        else:
            out["tc"] = 0.0
    return out


def dissipation_terms(history, dt: float, variant=Variant.STANDARD, epsilon: float = 0.0):
    """Cumulative ``(D_time_u, D_space_u)`` over a list of states."""
    if len(history) < 2:
        raise ValueError("need at least two states")
    dt_sum = ds_sum = 0.0
    for prev, new in zip(history[:-1], history[1:]):
        d = step_dissipation(prev, new, dt, variant, epsilon)
        dt_sum += d["D_time_u"]
        ds_sum += d["D_space_u"]
    return dt_sum, ds_sum


def source_work(scheme: Scheme, state: StepState) -> float:
    """Rate of work of the discrete sources on the energy (per unit time)."""
    vol = state.mesh.cell_volume
    rho = state.rho.values
    uhat = state.u.cell_means()
    phi = scheme.law.dH(rho) - 0.5 * (uhat ** 2).sum(axis=1)
    return float(np.sum(scheme.f * state.u.interior) + np.dot(vol * scheme.g, phi))


def relative_energy(state: StepState, ref_rho, ref_u: CRField, law: PressureLaw) -> float:
    """``sum_K |K| (rho_K |u_K - v_K|^2 + E(rho_K | z_K))`` on cell means."""
    z = np.asarray(getattr(ref_rho, "values", ref_rho), dtype=float)
    if np.any(z <= 0):
        raise ValueError("reference density must be positive")
    vol = state.mesh.cell_volume
    rho = state.rho.values
    du = state.u.cell_means() - ref_u.cell_means()
    return float(np.dot(vol, rho * (du ** 2).sum(axis=1) + E_rel(rho, z, law)))


def projected_reference(sol, t, mesh):
    """``(Pi^Q r(t), Pi^V_{h,0} V(t))``."""
    return project_Q(lambda x: sol.r(t, x), mesh), project_CR(lambda x: sol.V(t, x), mesh, zero_trace=True)


def m1_pointwise(state: StepState, sol, t, law: PressureLaw, degree: int = 3) -> float:
    """``int 1/2 rho |u_hat - V(t)|^2 + E(rho | r(t)) dx`` by cell quadrature."""
    mesh = state.mesh
    pts, w = cell_points(mesh, degree)
    rho = state.rho.values[:, None]
    du = state.u.cell_means()[:, None, :] - sol.V(t, pts)
    integrand = 0.5 * rho * (du ** 2).sum(axis=-1) + E_rel(np.broadcast_to(rho, w.shape), sol.r(t, pts), law)
    return float((w * integrand).sum())


def gradient_error(state: StepState, sol, t, degree: int = 3) -> float:
    """``int |grad_h u - grad V(t)|^2 dx`` with grad V evaluated at quadrature points."""
    pts, w = cell_points(state.mesh, degree)
    diff = broken_grad(state.u)[:, None] - sol.grad_V(t, pts)
    return float((w * (diff ** 2).sum(axis=(-2, -1))).sum())


def error_functional_value(state: StepState, sol, t, law: PressureLaw, cumulative_grad_error: float) -> float:
    """Per-step pointwise part plus the running ``dt sum int |grad_h u - grad V|^2``."""
    return m1_pointwise(state, sol, t, law) + cumulative_grad_error


def theoretical_exponent(gamma: float, variant=Variant.STANDARD, epsilon: float = 0.0) -> float:
    """Exponent ``a`` of ``h`` in the a priori bound."""
    if gamma < 1.5:
        raise ValueError("no rate is available for gamma < 3/2")
    base = (2.0 * gamma - 3.0) / gamma if gamma <= 2.0 else 0.5
    if Variant(variant) is Variant.STANDARD:
        return base
    stab = (1.0 - epsilon) / 2.0
    return stab if gamma >= 2.0 else min(base, stab)


def eoc(errors, hs):
    """Observed orders ``log(e_i / e_{i+1}) / log(h_i / h_{i+1})``."""
    errors = np.asarray(errors, dtype=float)
    hs = np.asarray(hs, dtype=float)
    if len(errors) != len(hs) or len(errors) < 2:
        raise ValueError("need matching lists of at least two errors and mesh sizes")
    if np.any(errors <= 0) or not np.all(np.isfinite(errors)):
        raise ValueError("errors must be positive and finite")
    if np.any(np.diff(hs) >= 0):
        raise ValueError("mesh sizes must be strictly decreasing")
    return list(np.log(errors[:-1] / errors[1:]) / np.log(hs[:-1] / hs[1:]))


# -- the per-step ledger -----------------------------------------------------

LEDGER_COLUMNS = ("time", "mass", "kinetic", "internal", "viscous_cum", "D_time_u", "D_space_u",
                  "rel_energy", "m1_functional")
EXTRA_COLUMNS = ("step", "D_time_rho", "D_space_rho", "tc_dissipation", "source_work",
                 "grad_error_cum", "min_rho", "iterations", "residual")


@dataclass
class LedgerRow:
    time: float
    mass: float
    kinetic: float
    internal: float
    viscous_cum: float = 0.0
    D_time_u: float = 0.0
    D_space_u: float = 0.0
    rel_energy: float = math.nan
    m1_functional: float = math.nan
    step: int = 0
    D_time_rho: float = 0.0
    D_space_rho: float = 0.0
    tc_dissipation: float = 0.0
    source_work: float = 0.0
    grad_error_cum: float = 0.0
    min_rho: float = math.nan
    iterations: int = 0
    residual: float = 0.0

    @property
    def energy(self) -> float:
        return self.kinetic + self.internal


@dataclass
class EnergyLedger:
    """Cumulative energy bookkeeping of a run, one row per time level."""

    rows: list = field(default_factory=list)

    def __len__(self):
        return len(self.rows)

    def column(self, name) -> np.ndarray:
        return np.array([getattr(r, name) for r in self.rows], dtype=float)

    def inequality_margin(self) -> np.ndarray:
        """``E_m - E_0 + viscous + D_time_u + D_space_u + T_c - work`` per row.

        Nonpositive for an exact solve: the omitted density terms are >= 0.
        """
        r0 = self.rows[0]
        return np.array([r.energy - r0.energy + r.viscous_cum + r.D_time_u + r.D_space_u
                         + r.tc_dissipation - r.source_work for r in self.rows])

    def identity_defect(self) -> np.ndarray:
        """The same balance with the density dissipations included; zero up to solver error."""
        return self.inequality_margin() + self.column("D_time_rho") + self.column("D_space_rho")

    def write_csv(self, path) -> None:
        names = list(LEDGER_COLUMNS) + list(EXTRA_COLUMNS)
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(names)
            for r in self.rows:
                w.writerow([_fmt(getattr(r, n)) for n in names])


def _fmt(v):
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return repr(float(v))


def read_ledger_csv(path) -> EnergyLedger:
    types = {f.name: f.type for f in fields(LedgerRow)}
    rows = []
    with open(path, newline="") as fh:
        for rec in csv.DictReader(fh):
            rows.append(LedgerRow(**{k: (int(v) if types[k] == "int" else float(v)) for k, v in rec.items()}))
    return EnergyLedger(rows)
