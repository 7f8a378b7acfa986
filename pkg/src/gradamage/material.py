"""Pointwise constitutive relations for finite-strain gradient damage.

All functions broadcast over leading axes: ``F`` has shape ``(..., 3, 3)`` and
``alpha`` shape ``(...)``.  Units are N, mm, MPa.
"""

from dataclasses import dataclass
from typing import NamedTuple, Optional

import numpy as np

__all__ = [
    "MaterialParams",
    "InvertedStateError",
    "DamageDomainError",
    "neo_hooke",
    "damage_function",
    "dissipation",
    "PointResponse",
    "point_response",
    "yield_value",
]


class InvertedStateError(ValueError):
    """det F <= 0 somewhere; the load stepper is expected to cut the step."""


class DamageDomainError(ValueError):
    pass


@dataclass(frozen=True)
class MaterialParams:
    """Neo-Hooke elasticity with exponential damage and quadratic dissipation.

    Construct from Young's modulus and Poisson ratio, or use
    :meth:`from_lame`.  ``c`` is the nonlocal (gradient) parameter in N mm.
    """

    E: float = 1000.0
    nu: float = 0.3
    d0: float = 0.0
    d1: float = 1.0
    c: float = 100.0

    def __post_init__(self):
        if not self.E > 0.0:
            raise ValueError(f"E must be positive, got {self.E}")
        if not 0.0 <= self.nu < 0.5:
            raise ValueError(f"nu must lie in [0, 0.5), got {self.nu}")
        if self.d0 < 0.0 or self.d1 < 0.0:
            raise ValueError("d0 and d1 must be nonnegative")
        if not self.d0 + self.d1 > 0.0:
            raise ValueError("d0 + d1 must be positive")
        if self.c < 0.0:
            raise ValueError("c must be nonnegative")

    @classmethod
    def from_lame(cls, lam: float, mu: float, **kw) -> "MaterialParams":
        nu = lam / (2.0 * (lam + mu))
        E = mu * (3.0 * lam + 2.0 * mu) / (lam + mu)
        return cls(E=E, nu=nu, **kw)

    @property
    def lam(self) -> float:
        return self.E * self.nu / ((1.0 + self.nu) * (1.0 - 2.0 * self.nu))

    @property
    def mu(self) -> float:
        return self.E / (2.0 * (1.0 + self.nu))

    def as_dict(self) -> dict:
        return {"E": self.E, "nu": self.nu, "d0": self.d0, "d1": self.d1, "c": self.c}


def _det_inv(F):
    J = np.linalg.det(F)
    if np.any(J <= 0.0):
        raise InvertedStateError(f"det F <= 0 (min {np.min(J):.3e})")
    return J, np.linalg.inv(F)


def neo_hooke(F, params: MaterialParams, tangent: bool = True):
    """Undamaged Neo-Hooke energy, first Piola-Kirchhoff stress and tangent.

    ``psi0 = mu/2 (I_C - 3) + lam/4 (J^2 - 1) - lam/2 ln J - mu ln J``.

    Returns
    -------
    psi0 : ndarray (...)
    P0 : ndarray (..., 3, 3)
    A0 : ndarray (..., 3, 3, 3, 3) or None
        ``A0[..., i, J, k, L] = d P0_iJ / d F_kL``.
    """
    return _neo_hooke(F, params.lam, params.mu, tangent)


def _neo_hooke(F, lam, mu, tangent=True):
    F = np.asarray(F, dtype=float)
    J, Finv = _det_inv(F)
    lnJ = np.log(J)
    ic = np.einsum("...ij,...ij->...", F, F)
    psi0 = 0.5 * mu * (ic - 3.0) + 0.25 * lam * (J * J - 1.0) - (0.5 * lam + mu) * lnJ
    FinvT = np.swapaxes(Finv, -1, -2)
    coef = 0.5 * lam * (J * J - 1.0) - mu
    P0 = mu * F + coef[..., None, None] * FinvT
    if not tangent:
        return psi0, P0, None
    eye = np.eye(3)
    A0 = (
        mu * np.einsum("ik,JL->iJkL", eye, eye)
        + (lam * J * J)[..., None, None, None, None] * np.einsum("...Ji,...Lk->...iJkL", Finv, Finv)
        - coef[..., None, None, None, None] * np.einsum("...Li,...Jk->...iJkL", Finv, Finv)
    )
    return psi0, P0, A0


def damage_function(alpha, check: bool = True):
    """``D = 1 - exp(-alpha)`` with first and second derivatives."""
    alpha = np.asarray(alpha, dtype=float)
    if check and np.any(alpha < 0.0):
        raise DamageDomainError("damage variable must be nonnegative")
    g = np.exp(-alpha)
    return 1.0 - g, g, -g


def dissipation(alpha, params: MaterialParams):
    """``phi = d1/2 alpha^2 + d0 alpha`` with first and second derivatives."""
    alpha = np.asarray(alpha, dtype=float)
    if np.any(alpha < 0.0):
        raise DamageDomainError("damage variable must be nonnegative")
    phi = 0.5 * params.d1 * alpha**2 + params.d0 * alpha
    return phi, params.d1 * alpha + params.d0, np.full_like(alpha, params.d1)


class PointResponse(NamedTuple):
    psi: np.ndarray
    P: np.ndarray
    dpsi_da: np.ndarray
    d2psi_da2: np.ndarray
    d2psi_dFda: np.ndarray
    A: Optional[np.ndarray]
    dphi_da: np.ndarray
    d2phi_da2: np.ndarray
    psi0: np.ndarray


def point_response(F, alpha, params: MaterialParams, tangent: bool = True) -> PointResponse:
    """Damaged response ``psi = (1 - D(alpha)) psi0(F)`` and all derivatives."""
    alpha = np.asarray(alpha, dtype=float)
    psi0, P0, A0 = neo_hooke(F, params, tangent)
    # no domain check: slightly negative Gauss-point values occur inside
    # Newton iterations and are only monitored
    D, dD, ddD = damage_function(alpha, check=False)
    g = 1.0 - D
    dphi = params.d1 * alpha + params.d0
    ddphi = np.full_like(alpha, params.d1)
    return PointResponse(
        psi=g * psi0,
        P=g[..., None, None] * P0,
        dpsi_da=-dD * psi0,
        d2psi_da2=-ddD * psi0,
        d2psi_dFda=-dD[..., None, None] * P0,
        A=None if A0 is None else g[..., None, None, None, None] * A0,
        dphi_da=dphi,
        d2phi_da2=ddphi,
        psi0=psi0,
    )


def yield_value(F, alpha, params: MaterialParams, laplacian_term=0.0):
    """Damage criterion ``Phi = D'(alpha) psi0 + c*Lap(alpha) - (d1 alpha + d0)``.

    ``laplacian_term`` is ``c * Lap(alpha)`` supplied by the caller; weak-form
    callers pass zero and carry the gradient term separately.
    """
    psi0, _, _ = neo_hooke(F, params, tangent=False)
    _, dD, _ = damage_function(alpha)
    return dD * psi0 + laplacian_term - (params.d1 * np.asarray(alpha) + params.d0)
