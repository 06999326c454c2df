"""Barotropic pressure law ``p = a rho + b rho**gamma`` and its free energy."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class PressureLaw:
    a_lin: float
    b: float
    gamma: float

    def __post_init__(self):
        if not self.gamma > 1.0:
            raise ValueError(f"gamma must exceed 1, got {self.gamma}")
        if self.a_lin < 0 or self.b < 0 or (self.a_lin == 0 and self.b == 0):
            raise ValueError("need a_lin, b >= 0, not both zero")

    @property
    def positive_sound_speed_at_vacuum(self) -> bool:
        """True when p'(0) > 0; a pure gamma-law falls outside that class."""
        return self.a_lin > 0

    @property
    def p_infinity(self) -> float:
        """Limit of p'(rho) / rho**(gamma - 1) as rho grows."""
        return self.b * self.gamma

    def p(self, rho):
        rho = np.asarray(rho, dtype=float)
        return self.a_lin * rho + self.b * rho ** self.gamma

    def dp(self, rho):
        rho = np.asarray(rho, dtype=float)
        return self.a_lin + self.b * self.gamma * rho ** (self.gamma - 1.0)

    def H(self, rho):
        rho = np.asarray(rho, dtype=float)
        with np.errstate(divide="ignore", invalid="ignore"):
            log_term = np.where(rho > 0, rho * np.log(np.where(rho > 0, rho, 1.0)), 0.0)
        return self.a_lin * log_term + self.b * (rho ** self.gamma - rho) / (self.gamma - 1.0)

    def dH(self, rho):
        rho = np.asarray(rho, dtype=float)
        return (self.a_lin * (np.log(rho) + 1.0)
                + self.b * (self.gamma * rho ** (self.gamma - 1.0) - 1.0) / (self.gamma - 1.0))

    def d2H(self, rho):
        rho = np.asarray(rho, dtype=float)
        return self.a_lin / rho + self.b * self.gamma * rho ** (self.gamma - 2.0)


def make_law(a_lin: float, b: float, gamma: float) -> PressureLaw:
    return PressureLaw(float(a_lin), float(b), float(gamma))


def E_rel(rho, z, law: PressureLaw):
    """Bregman divergence ``H(rho) - H'(z)(rho - z) - H(z)``."""
    z = np.asarray(z, dtype=float)
    if np.any(z <= 0):
        raise ValueError("reference density must be positive")
    rho = np.asarray(rho, dtype=float)
    return law.H(rho) - law.dH(z) * (rho - z) - law.H(z)


def essential_residual_split(rho, r_lo: float, r_hi: float):
    """Masks of cells with ``r_lo/2 <= rho <= 2 r_hi`` and of the rest."""
    if not 0 < r_lo <= r_hi:
        raise ValueError("need 0 < r_lo <= r_hi")
    rho = np.asarray(getattr(rho, "values", rho))
    ess = (rho >= 0.5 * r_lo) & (rho <= 2.0 * r_hi)
    return ess, ~ess
