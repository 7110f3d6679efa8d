"""Lorentz line shape."""
import numpy as np

from ..exceptions import ParameterDomainError
from ..models import Family, LineShapeParams
from .base import ArrayLike, LineShape


def lorentz_eval(nu_offset: ArrayLike, gamma: float) -> ArrayLike:
    """Unit-area Lorentzian with half-width at half-maximum gamma."""
    if not gamma > 0:
        raise ParameterDomainError(f"gamma must be positive, got {gamma}")
    nu_offset = np.asarray(nu_offset, dtype=float)
    value = (1.0 / (np.pi * gamma)) * gamma ** 2 / (nu_offset ** 2 + gamma ** 2)
    return float(value) if value.ndim == 0 else value


class LorentzLineShape(LineShape):
    """Collisional broadening profile."""

    def __init__(self):
        super().__init__(Family.LORENTZ)

    def evaluate(self, nu_offset: ArrayLike, params: LineShapeParams) -> ArrayLike:
        return lorentz_eval(nu_offset, params.gamma)

    def peak_value(self, params: LineShapeParams) -> float:
        return 1.0 / (np.pi * params.gamma)
