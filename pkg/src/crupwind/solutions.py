"""Closed-form reference solutions and the sources they induce.

With mass source ``g`` and momentum source ``f`` the target system reads

    d_t r + div(r V) = g
    d_t(r V) + div(r V (x) V) + grad p(r) - mu lap V - (mu/3) grad div V = f

so ``f = r d_t V + r (V . grad) V + g V + grad p(r) - mu lap V - (mu/3) grad div V``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .scheme import Sources
from .thermo import PressureLaw


@dataclass(frozen=True)
class ManufacturedSolution:
    """Density ``r(t, x)`` and velocity ``V(t, x)`` with analytic derivatives.

    All callables take ``(t, x)`` with ``x`` of shape (..., 3).  Vector
    outputs have a trailing axis of 3; ``grad_V[..., i, j] = d V_i / d x_j``.
    Entries with ``exact=False`` only provide initial data.
    """

    name: str
    r: Callable
    V: Callable
    dr_dt: Optional[Callable] = None
    grad_r: Optional[Callable] = None
    dV_dt: Optional[Callable] = None
    grad_V: Optional[Callable] = None
    lap_V: Optional[Callable] = None
    grad_div_V: Optional[Callable] = None
    exact: bool = True

    def mass_source(self, t, x):
        V = self.V(t, x)
        div_V = np.trace(self.grad_V(t, x), axis1=-2, axis2=-1)
        return self.dr_dt(t, x) + np.einsum("...k,...k->...", V, self.grad_r(t, x)) + self.r(t, x) * div_V

    def momentum_source(self, t, x, law: PressureLaw, mu: float):
        r = self.r(t, x)[..., None]
        V = self.V(t, x)
        adv = np.einsum("...j,...ij->...i", V, self.grad_V(t, x))
        g = self.mass_source(t, x)[..., None]
        grad_p = law.dp(self.r(t, x))[..., None] * self.grad_r(t, x)
        return (r * self.dV_dt(t, x) + r * adv + g * V + grad_p
                - mu * self.lap_V(t, x) - (mu / 3.0) * self.grad_div_V(t, x))

    def sources(self, law: PressureLaw, mu: float) -> Sources:
        if not self.exact:
            return Sources()
        return Sources(mass=self.mass_source,
                       momentum=lambda t, x: self.momentum_source(t, x, law, mu))


def _bubble(x):
    s = np.sin(np.pi * x)
    c = np.cos(np.pi * x)
    B = s.prod(axis=-1)
    grad = np.empty(x.shape)
    for j in range(3):
        others = [k for k in range(3) if k != j]
        grad[..., j] = np.pi * c[..., j] * s[..., others[0]] * s[..., others[1]]
    hess = np.empty(x.shape + (3,))
    for j in range(3):
        for k in range(3):
            if j == k:
                hess[..., j, k] = -np.pi ** 2 * B
            else:
                m = 3 - j - k
                hess[..., j, k] = np.pi ** 2 * c[..., j] * c[..., k] * s[..., m]
    return B, grad, hess


_ONES = np.ones(3)


def _mms1() -> ManufacturedSolution:
    # r = 1 + sin(t) B / 4, V = sin(t) B (1, 1, 1), B = prod_i sin(pi x_i)
    def r(t, x):
        return 1.0 + 0.25 * np.sin(t) * _bubble(x)[0]

    def dr_dt(t, x):
        return 0.25 * np.cos(t) * _bubble(x)[0]

    def grad_r(t, x):
        return 0.25 * np.sin(t) * _bubble(x)[1]

    def V(t, x):
        return np.sin(t) * _bubble(x)[0][..., None] * _ONES

    def dV_dt(t, x):
        return np.cos(t) * _bubble(x)[0][..., None] * _ONES

    def grad_V(t, x):
        return np.sin(t) * _ONES[:, None] * _bubble(x)[1][..., None, :]

    def lap_V(t, x):
        return np.sin(t) * (-3.0 * np.pi ** 2) * _bubble(x)[0][..., None] * _ONES

    def grad_div_V(t, x):
        return np.sin(t) * _bubble(x)[2].sum(axis=-1)

    return ManufacturedSolution("mms1", r, V, dr_dt, grad_r, dV_dt, grad_V, lap_V, grad_div_V)


def _rest() -> ManufacturedSolution:
    def zero3(t, x):
        return np.zeros(np.shape(x))

    def zero33(t, x):
        return np.zeros(np.shape(x) + (3,))

    return ManufacturedSolution(
        "rest",
        r=lambda t, x: np.ones(np.shape(x)[:-1]),
        V=zero3,
        dr_dt=lambda t, x: np.zeros(np.shape(x)[:-1]),
        grad_r=zero3, dV_dt=zero3, grad_V=zero33, lap_V=zero3, grad_div_V=zero3,
    )


def _pulse() -> ManufacturedSolution:
    # unforced density bump with a swirling velocity; initial data only
    def r(t, x):
        return 1.0 + 0.5 * _bubble(x)[0]

    def V(t, x):
        B = _bubble(x)[0]
        return np.stack([B, -B, 0.5 * B], axis=-1)

    return ManufacturedSolution("pulse", r, V, exact=False)


def builtin_solutions() -> dict[str, ManufacturedSolution]:
    return {s.name: s for s in (_rest(), _mms1(), _pulse())}


def boundary_velocity_defect(sol: ManufacturedSolution, mesh, times=(0.0, 0.5, 1.0)) -> float:
    """Max |V| over boundary-face quadrature points at the given times."""
    from .quadrature import face_points

    pts, _ = face_points(mesh, 3, mesh.boundary_faces)
    return max(float(np.abs(sol.V(t, pts)).max()) for t in times)
