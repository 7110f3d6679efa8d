"""Domain types for spectra, line shapes and peaks."""
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Dict, Optional, Sequence

import numpy as np

from .exceptions import ParameterDomainError, ShapeError

GRID_RELATIVE_TOLERANCE = 1e-9
MIN_GRID_POINTS = 4


def _frozen_array(values: Any, dtype: Any = float) -> np.ndarray:
    """Copy values into a read-only numpy array."""
    array = np.array(values, dtype=dtype, copy=True)
    array.setflags(write=False)
    return array


class Family(str, Enum):
    """Kernel family tag."""

    LORENTZ = "lorentz"
    VOIGT = "voigt"


@dataclass(frozen=True)
class WavenumberGrid:
    """Equidistant wavenumber grid stored as (start, h, K)."""

    start: float
    h: float
    k: int
    nu: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if not np.isfinite(self.start):
            raise ParameterDomainError(f"Grid start must be finite, got {self.start}")
        if not (self.h > 0 and np.isfinite(self.h)):
            raise ParameterDomainError(f"Sampling resolution h must be positive, got {self.h}")
        if int(self.k) != self.k or self.k < MIN_GRID_POINTS:
            raise ParameterDomainError(f"Grid needs at least {MIN_GRID_POINTS} points, got {self.k}")
        object.__setattr__(self, "k", int(self.k))
        object.__setattr__(self, "nu", _frozen_array(self.start + self.h * np.arange(self.k)))

    @classmethod
    def from_values(cls, nu: Sequence[float]) -> "WavenumberGrid":
        """Build a grid from explicit wavenumbers, enforcing equidistance."""
        values = np.asarray(nu, dtype=float)
        if values.ndim != 1 or values.size < MIN_GRID_POINTS:
            raise ParameterDomainError(f"Grid needs at least {MIN_GRID_POINTS} points")
        steps = np.diff(values)
        h = float(np.mean(steps))
        if h <= 0 or np.any(steps <= 0):
            raise ParameterDomainError("Wavenumbers must be strictly increasing")
        # float roundoff of the stored wavenumbers on top of the relative tolerance
        tolerance = GRID_RELATIVE_TOLERANCE * h + 8 * np.finfo(float).eps * np.max(np.abs(values))
        if np.max(np.abs(steps - h)) > tolerance:
            raise ParameterDomainError("Wavenumbers are not equidistant")
        return cls(start=float(values[0]), h=h, k=values.size)

    def __len__(self) -> int:
        return self.k

    @property
    def stop(self) -> float:
        """Last wavenumber on the grid."""
        return self.start + self.h * (self.k - 1)

    @property
    def span(self) -> float:
        """Width of the grid, last minus first wavenumber."""
        return self.h * (self.k - 1)

    def contains(self, location: float) -> bool:
        return self.start <= location <= self.stop

    def normalized(self) -> np.ndarray:
        """Grid mapped onto the unit interval."""
        return (self.nu - self.start) / self.span


@dataclass(frozen=True)
class Spectrum:
    """Observed or synthesized spectrum on an equidistant grid."""

    grid: WavenumberGrid
    intensity: np.ndarray
    metadata: Dict[str, Any] = field(default_factory=dict, compare=False)

    def __post_init__(self):
        intensity = _frozen_array(self.intensity)
        if intensity.shape != (self.grid.k,):
            raise ShapeError(
                f"Intensity length {intensity.size} does not match grid length {self.grid.k}"
            )
        if not np.all(np.isfinite(intensity)):
            raise ParameterDomainError("Spectrum intensities must be finite")
        object.__setattr__(self, "intensity", intensity)

    def __len__(self) -> int:
        return self.grid.k

    @property
    def nu(self) -> np.ndarray:
        return self.grid.nu

    @property
    def area(self) -> float:
        """Sum of intensities, the y_area of the count marginalization."""
        return float(np.sum(self.intensity))

    def with_intensity(self, intensity: np.ndarray, **metadata: Any) -> "Spectrum":
        """Same grid, new intensities."""
        return Spectrum(grid=self.grid, intensity=intensity, metadata={**self.metadata, **metadata})


@dataclass(frozen=True)
class LineShapeParams:
    """Kernel family plus its scale parameters theta = (gamma[, sigma])."""

    family: Family
    gamma: float
    sigma: Optional[float] = None

    def __post_init__(self):
        object.__setattr__(self, "family", Family(self.family))
        if not (self.gamma > 0 and np.isfinite(self.gamma)):
            raise ParameterDomainError(f"gamma must be positive, got {self.gamma}")
        if self.family is Family.VOIGT:
            if self.sigma is None or not (self.sigma > 0 and np.isfinite(self.sigma)):
                raise ParameterDomainError(f"Voigt sigma must be positive, got {self.sigma}")
        elif self.sigma is not None:
            raise ParameterDomainError("Lorentz line shape takes no sigma")

    @property
    def n_params(self) -> int:
        return 2 if self.family is Family.VOIGT else 1

    def as_vector(self) -> np.ndarray:
        if self.family is Family.VOIGT:
            return np.array([self.gamma, self.sigma], dtype=float)
        return np.array([self.gamma], dtype=float)

    @classmethod
    def from_vector(cls, family: Family, theta: Sequence[float]) -> "LineShapeParams":
        family = Family(family)
        if family is Family.VOIGT:
            return cls(family=family, gamma=float(theta[0]), sigma=float(theta[1]))
        return cls(family=family, gamma=float(theta[0]))

    @classmethod
    def lorentz(cls, gamma: float) -> "LineShapeParams":
        return cls(family=Family.LORENTZ, gamma=gamma)

    @classmethod
    def voigt(cls, gamma: float, sigma: float) -> "LineShapeParams":
        return cls(family=Family.VOIGT, gamma=gamma, sigma=sigma)


@dataclass(frozen=True)
class PeakSet:
    """Dirac comb: sorted peak locations with positive amplitudes."""

    locations: np.ndarray
    amplitudes: np.ndarray

    def __post_init__(self):
        locations = _frozen_array(self.locations)
        amplitudes = _frozen_array(self.amplitudes)
        if locations.ndim != 1 or locations.shape != amplitudes.shape:
            raise ShapeError("Peak locations and amplitudes must be 1-D of equal length")
        if np.any(np.diff(locations) <= 0):
            raise ParameterDomainError("Peak locations must be strictly increasing")
        if np.any(amplitudes <= 0) or not np.all(np.isfinite(amplitudes)):
            raise ParameterDomainError("Peak amplitudes must be positive and finite")
        object.__setattr__(self, "locations", locations)
        object.__setattr__(self, "amplitudes", amplitudes)

    def __len__(self) -> int:
        return int(self.locations.size)

    @classmethod
    def empty(cls) -> "PeakSet":
        return cls(locations=np.empty(0), amplitudes=np.empty(0))

    @classmethod
    def from_unsorted(cls, locations: Sequence[float], amplitudes: Sequence[float]) -> "PeakSet":
        locations = np.asarray(locations, dtype=float)
        amplitudes = np.asarray(amplitudes, dtype=float)
        order = np.argsort(locations)
        return cls(locations=locations[order], amplitudes=amplitudes[order])


@dataclass(frozen=True)
class NoiseModel:
    """Gaussian measurement error with known standard deviation."""

    sigma_eps: float

    def __post_init__(self):
        if not (self.sigma_eps > 0 and np.isfinite(self.sigma_eps)):
            raise ParameterDomainError(f"sigma_eps must be positive, got {self.sigma_eps}")
