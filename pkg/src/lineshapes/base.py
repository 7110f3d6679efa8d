"""Base class for kernel line shapes."""
from abc import ABC, abstractmethod
from typing import Union

import numpy as np
import structlog

from ..models import Family, LineShapeParams
from ..exceptions import ParameterDomainError

logger = structlog.get_logger(__name__)

ArrayLike = Union[float, np.ndarray]


class LineShape(ABC):
    """Base class for unit-area, symmetric line shape kernels."""

    def __init__(self, family: Family):
        self.family = family
        self.logger = logger.bind(family=family.value)

    @abstractmethod
    def evaluate(self, nu_offset: ArrayLike, params: LineShapeParams) -> ArrayLike:
        """Kernel value at the given offsets from the line center."""
        pass

    @abstractmethod
    def peak_value(self, params: LineShapeParams) -> float:
        """Kernel value at zero offset."""
        pass

    def check_params(self, params: LineShapeParams) -> None:
        """Reject parameters of another family."""
        if params.family is not self.family:
            raise ParameterDomainError(
                f"{self.family.value} kernel cannot evaluate {params.family.value} parameters"
            )

    def sample(self, offsets: np.ndarray, params: LineShapeParams) -> np.ndarray:
        """Evaluate on an array of offsets, always returning an array."""
        self.check_params(params)
        return np.asarray(self.evaluate(np.asarray(offsets, dtype=float), params), dtype=float)

    def __repr__(self):
        return f"<{type(self).__name__}(family='{self.family.value}')>"
