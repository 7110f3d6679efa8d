"""Line shape kernels for the supported families."""
from typing import Dict

from ..models import Family, LineShapeParams
from .base import LineShape
from .lorentz import LorentzLineShape, lorentz_eval
from .voigt import VoigtLineShape, voigt_eval

_LINE_SHAPES: Dict[Family, LineShape] = {
    Family.LORENTZ: LorentzLineShape(),
    Family.VOIGT: VoigtLineShape(),
}


def get_line_shape(family: Family) -> LineShape:
    """Get the kernel object for a family."""
    return _LINE_SHAPES[Family(family)]


def kernel_values(offsets, params: LineShapeParams):
    """Evaluate the kernel selected by params at the given offsets."""
    return get_line_shape(params.family).sample(offsets, params)


__all__ = [
    "LineShape",
    "LorentzLineShape",
    "VoigtLineShape",
    "get_line_shape",
    "kernel_values",
    "lorentz_eval",
    "voigt_eval",
]
