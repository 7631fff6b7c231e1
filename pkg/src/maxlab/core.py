"""Shared material parameters, equation of state and small tensor helpers.

Tensors are plain numpy arrays. Anything documented as a "matrix" may carry
leading batch axes, i.e. have shape ``(..., d, d)``; the deformation gradient
is indexed ``F[..., i, alpha]`` with ``i`` spatial and ``alpha`` material.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


class DomainError(ValueError):
    """A state left the hyperbolicity domain (rho <= 0, singular F, A not SPD)."""


class ConfigurationError(ValueError):
    """Inconsistent inputs, e.g. two runs compared on different grids."""


class StabilityError(ValueError):
    """Time step violates the CFL restriction of the scheme."""


@dataclass(frozen=True)
class MaterialParams:
    """Maxwell-fluid parameters with the relaxation frequency ``xi = 1/lambda`` stored.

    ``xi = 0`` is elastodynamics; the viscosity ``mu_dot = G / xi`` is derived
    so that ``lambda == mu_dot / G`` holds by construction.
    """

    G: float = 1.0
    xi: float = 0.0
    c0: float = 1.0

    def __post_init__(self):
        if not (math.isfinite(self.G) and self.G > 0):
            raise ValueError(f"G must be a positive number, got {self.G!r}")
        if not (math.isfinite(self.xi) and self.xi >= 0):
            raise ValueError(f"xi must be a non-negative number, got {self.xi!r}")
        if not (math.isfinite(self.c0) and self.c0 > 0):
            raise ValueError(f"c0 must be a positive number, got {self.c0!r}")

    @property
    def relaxation_time(self) -> float:
        return math.inf if self.xi == 0 else 1.0 / self.xi

    @property
    def mu_dot(self) -> float:
        return math.inf if self.xi == 0 else self.G / self.xi

    def with_xi(self, xi: float) -> "MaterialParams":
        return MaterialParams(G=self.G, xi=xi, c0=self.c0)


@dataclass(frozen=True)
class Eos:
    """Isothermal barotropic law ``e0(nu) = -c0**2 ln(nu)``, ``p = c0**2 rho``.

    ``nu = 1/rho`` is the specific volume. Only the isothermal kind exists;
    ``kind`` is kept so result files record which law produced them.
    """

    c0: float = 1.0
    kind: str = "isothermal"

    def __post_init__(self):
        if self.kind != "isothermal":
            raise ValueError(f"unsupported EOS kind {self.kind!r}")
        if not (math.isfinite(self.c0) and self.c0 > 0):
            raise ValueError(f"c0 must be a positive number, got {self.c0!r}")

    def e0(self, nu):
        nu = np.asarray(nu, dtype=float)
        if np.any(nu <= 0):
            raise DomainError("specific volume must be positive")
        return -self.c0**2 * np.log(nu)

    def pressure(self, rho):
        return eos_pressure(self, rho)

    def dpressure(self, rho):
        """dp/drho, the squared acoustic speed."""
        return np.full_like(np.asarray(rho, dtype=float), self.c0**2)


def eos_pressure(eos: Eos, rho):
    rho_arr = np.asarray(rho, dtype=float)
    if np.any(~(rho_arr > 0)):
        raise DomainError("density must be positive")
    p = eos.c0**2 * rho_arr
    return float(p) if np.ndim(p) == 0 else p


def symmetrize(A):
    return 0.5 * (A + np.swapaxes(A, -1, -2))


def frobenius(A, B):
    """A:B over the two trailing axes."""
    return np.einsum("...ij,...ij->...", A, B)


def neo_hookean_stress(rho, F, A, G: float):
    """Extra stress ``tau = rho G (F A F^T - I)``.

    Broadcasts over leading axes: ``rho`` has shape ``(...)`` and ``F``, ``A``
    shape ``(..., d, d)``.
    """
    F = np.asarray(F, dtype=float)
    A = np.asarray(A, dtype=float)
    rho = np.asarray(rho, dtype=float)
    d = F.shape[-1]
    return G * rho[..., None, None] * (left_conformation(F, A) - np.eye(d))


def left_conformation(F, A):
    """``F A F^T``, the spatial image of the conformation tensor.

    Symmetrized so that a symmetric ``A`` gives an exactly symmetric result.
    """
    return symmetrize(F @ A @ np.swapaxes(F, -1, -2))


def relaxation_target(F):
    """Equilibrium conformation ``F^{-1} F^{-T}``."""
    Finv = np.linalg.inv(F)
    return Finv @ np.swapaxes(Finv, -1, -2)
