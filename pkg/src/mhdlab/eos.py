"""Gas closure rho(p, S) and its pressure derivative."""
from dataclasses import dataclass

import numpy as np

from .errors import NonPositivePressure


@dataclass(frozen=True)
class EosParams:
    adiabatic_exponent: float = 5.0 / 3.0
    reference_density: float = 1.0

    def __post_init__(self):
        if not self.adiabatic_exponent > 1:
            raise ValueError("adiabatic_exponent must exceed 1")
        if not self.reference_density > 0:
            raise ValueError("reference_density must be positive")


@dataclass(frozen=True)
class ThermoPoint:
    pressure: np.ndarray
    entropy: np.ndarray
    rho: np.ndarray
    rho_p: np.ndarray


def density(params: EosParams, p, S) -> ThermoPoint:
    """rho = rho_ref (p e^{-S})^{1/Gamma}, rho_p = rho / (Gamma p).

    Works elementwise on arrays.
    """
    p = np.asarray(p, dtype=float)
    S = np.asarray(S, dtype=float)
    if np.any(~(p > 0)):
        raise NonPositivePressure(f"pressure must be positive, min p = {np.min(p)!r}")
    g = params.adiabatic_exponent
    rho = params.reference_density * (p * np.exp(-S)) ** (1.0 / g)
    return ThermoPoint(p, S, rho, rho / (g * p))


def density_from_total_pressure(params: EosParams, q, H, S) -> ThermoPoint:
    """Evaluate the closure at p = q - |H|^2/2; H has a trailing axis of length 3."""
    q = np.asarray(q, dtype=float)
    H = np.asarray(H, dtype=float)
    p = q - 0.5 * np.sum(H * H, axis=-1)
    if np.any(~(p > 0)):
        raise NonPositivePressure(f"q - |H|^2/2 must be positive, min = {np.min(p)!r}")
    return density(params, p, S)
