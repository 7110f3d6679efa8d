"""Prior distributions over line shape parameters and truncation length."""
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy import stats

from .exceptions import ParameterDomainError
from .models import Family, LineShapeParams


@dataclass(frozen=True)
class UniformPrior:
    """Continuous uniform prior on [lo, hi]; lo == hi is a point mass."""

    lo: float
    hi: float

    def __post_init__(self):
        if not (np.isfinite(self.lo) and np.isfinite(self.hi)) or self.lo > self.hi:
            raise ParameterDomainError(f"Uniform prior needs lo <= hi, got ({self.lo}, {self.hi})")

    @property
    def is_point(self) -> bool:
        return self.lo == self.hi

    def sample(self, rng: np.random.Generator) -> float:
        if self.is_point:
            return float(self.lo)
        return float(rng.uniform(self.lo, self.hi))

    def log_density(self, value: float) -> float:
        if self.is_point:
            return 0.0 if value == self.lo else -np.inf
        if self.lo <= value <= self.hi:
            return -np.log(self.hi - self.lo)
        return -np.inf


@dataclass(frozen=True)
class DiscreteUniformPrior:
    """Discrete uniform prior on the integers lo..hi inclusive."""

    lo: int
    hi: int

    def __post_init__(self):
        if int(self.lo) != self.lo or int(self.hi) != self.hi or self.lo > self.hi:
            raise ParameterDomainError(
                f"Discrete uniform prior needs integers lo <= hi, got ({self.lo}, {self.hi})"
            )

    def sample(self, rng: np.random.Generator) -> int:
        return int(rng.integers(self.lo, self.hi + 1))

    def log_density(self, value: int) -> float:
        if self.lo <= value <= self.hi and int(value) == value:
            return -np.log(self.hi - self.lo + 1)
        return -np.inf


@dataclass(frozen=True)
class TruncatedNormalPrior:
    """Positive-truncated normal for sigma given gamma: N+(mean_mult gamma, (sd_mult gamma)^2)."""

    mean_multiplier: float
    sd_multiplier: float

    def __post_init__(self):
        if not (self.mean_multiplier > 0 and self.sd_multiplier > 0):
            raise ParameterDomainError("Truncated normal multipliers must be positive")

    def _frozen(self, gamma: float):
        mean = self.mean_multiplier * gamma
        sd = self.sd_multiplier * gamma
        return stats.truncnorm(a=-mean / sd, b=np.inf, loc=mean, scale=sd)

    def sample(self, gamma: float, rng: np.random.Generator) -> float:
        return float(self._frozen(gamma).rvs(random_state=rng))

    def log_density(self, sigma: float, gamma: float) -> float:
        if sigma <= 0:
            return -np.inf
        return float(self._frozen(gamma).logpdf(sigma))


@dataclass(frozen=True)
class PriorSpec:
    """Joint prior pi0(gamma) pi0(sigma | gamma) pi0(M)."""

    gamma_prior: UniformPrior
    m_prior: DiscreteUniformPrior
    sigma_given_gamma: Optional[TruncatedNormalPrior] = None

    def __post_init__(self):
        if self.gamma_prior.lo <= 0:
            raise ParameterDomainError("gamma prior must have positive support")
        if self.m_prior.lo < 3:
            raise ParameterDomainError("Truncation length prior must start at 3 or above")

    @property
    def family(self) -> Family:
        return Family.VOIGT if self.sigma_given_gamma is not None else Family.LORENTZ

    @property
    def dim(self) -> int:
        """Number of random-walk coordinates: theta plus M."""
        return (2 if self.family is Family.VOIGT else 1) + 1

    @classmethod
    def lorentz(cls, gamma=(1.0, 30.0), m=(10, 80)) -> "PriorSpec":
        return cls(gamma_prior=UniformPrior(*gamma), m_prior=DiscreteUniformPrior(*m))

    @classmethod
    def voigt(cls, gamma=(1.0, 30.0), m=(10, 80), sigma_multipliers=(0.5, 0.05)) -> "PriorSpec":
        return cls(
            gamma_prior=UniformPrior(*gamma),
            m_prior=DiscreteUniformPrior(*m),
            sigma_given_gamma=TruncatedNormalPrior(*sigma_multipliers),
        )

    def sample(self, rng: np.random.Generator):
        """Draw (params, M) from the prior."""
        gamma = self.gamma_prior.sample(rng)
        if self.sigma_given_gamma is not None:
            sigma = self.sigma_given_gamma.sample(gamma, rng)
            params = LineShapeParams.voigt(gamma, sigma)
        else:
            params = LineShapeParams.lorentz(gamma)
        return params, self.m_prior.sample(rng)

    def log_density_vector(self, theta: np.ndarray, m: int) -> float:
        """Log prior of a raw coordinate vector; -inf outside the support."""
        gamma = float(theta[0])
        value = self.gamma_prior.log_density(gamma) + self.m_prior.log_density(m)
        if not np.isfinite(value):
            return -np.inf
        if self.sigma_given_gamma is not None:
            value += self.sigma_given_gamma.log_density(float(theta[1]), gamma)
        return float(value)

    def log_density(self, params: LineShapeParams, m: int) -> float:
        return self.log_density_vector(params.as_vector(), m)
