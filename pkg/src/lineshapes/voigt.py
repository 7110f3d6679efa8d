"""Voigt line shape via the Faddeeva function."""
import numpy as np
from scipy.special import wofz

from ..exceptions import ParameterDomainError
from ..models import Family, LineShapeParams
from .base import ArrayLike, LineShape


def voigt_eval(nu_offset: ArrayLike, gamma: float, sigma: float) -> ArrayLike:
    """
    Lorentzian of HWHM gamma convolved with a Gaussian of standard deviation sigma.

    Evaluated as Re w((nu + i gamma) / (sigma sqrt 2)) / (sigma sqrt(2 pi)).
    """
    if not gamma > 0:
        raise ParameterDomainError(f"gamma must be positive, got {gamma}")
    if not sigma > 0:
        raise ParameterDomainError(f"sigma must be positive, got {sigma}")
    nu_offset = np.asarray(nu_offset, dtype=float)
    z = (nu_offset + 1j * gamma) / (sigma * np.sqrt(2.0))
    value = np.real(wofz(z)) / (sigma * np.sqrt(2.0 * np.pi))
    return float(value) if value.ndim == 0 else value


class VoigtLineShape(LineShape):
    """Combined collisional and Doppler broadening profile."""

    def __init__(self):
        super().__init__(Family.VOIGT)

    def evaluate(self, nu_offset: ArrayLike, params: LineShapeParams) -> ArrayLike:
        return voigt_eval(nu_offset, params.gamma, params.sigma)

    def peak_value(self, params: LineShapeParams) -> float:
        return float(voigt_eval(0.0, params.gamma, params.sigma))
