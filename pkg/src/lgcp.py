"""
Log-Gaussian Cox process over line-narrowed spectra.

Posterior samples of x_LN are pooled into integer counts on the grid, a GP
log-intensity with squared-exponential covariance is fitted by MAP, and local
maxima of Laplace-approximate posterior draws give the peak location posterior.
"""
import time
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
import structlog
from scipy import linalg, optimize, stats
from scipy.special import gammaln

from .exceptions import ConditioningError, DegenerateSignalError, ParameterDomainError, ShapeError
from .models import Spectrum, WavenumberGrid
from .smc import SmcPosterior

logger = structlog.get_logger(__name__)

JITTER_LEVELS = (1e-10, 1e-9, 1e-8, 1e-7, 1e-6)
LOG_SIGMA_BOUNDS = (-10.0, 10.0)
TARGET_MAX_COUNT = 50.0
# one expected event
MIN_PEAK_INTENSITY = 1.0
CREDIBLE_Z90 = stats.norm.ppf(0.95)


@dataclass(frozen=True)
class CountVector:
    """Discretized pooled line-narrowed spectrum z_k = floor(C xbar_k + 1/2)."""

    z: np.ndarray
    c_scale: float
    x_bar: Optional[np.ndarray] = None

    def __post_init__(self):
        z = np.array(self.z, copy=True)
        if z.ndim != 1 or np.any(z < 0) or np.any(z != np.floor(z)):
            raise ParameterDomainError("Counts must be a vector of nonnegative integers")
        z = z.astype(np.int64)
        z.setflags(write=False)
        object.__setattr__(self, "z", z)
        if not self.c_scale > 0:
            raise ParameterDomainError(f"Count scale must be positive, got {self.c_scale}")

    def __len__(self) -> int:
        return int(self.z.size)

    @property
    def total(self) -> int:
        return int(np.sum(self.z))


@dataclass(frozen=True)
class GpHyperParams:
    log_sigma_lambda: float
    length_scale: float

    def __post_init__(self):
        if not (self.length_scale > 0 and np.isfinite(self.length_scale)):
            raise ParameterDomainError(f"Length scale must be positive, got {self.length_scale}")
        if not np.isfinite(self.log_sigma_lambda):
            raise ParameterDomainError("log sigma_lambda must be finite")

    @property
    def sigma_lambda(self) -> float:
        return float(np.exp(self.log_sigma_lambda))


@dataclass(frozen=True)
class StudentTPrior:
    """Student-t on log sigma_lambda, parameterized by mean, variance and dof."""

    mean: float = 0.0
    variance: float = 100.0 ** 2
    dof: float = 10.0

    def __post_init__(self):
        if not self.dof > 2:
            raise ParameterDomainError(f"Variance parameterization needs dof > 2, got {self.dof}")
        if not self.variance > 0:
            raise ParameterDomainError(f"Prior variance must be positive, got {self.variance}")

    @classmethod
    def lorentz(cls) -> "StudentTPrior":
        return cls(mean=0.0, variance=100.0 ** 2, dof=10.0)

    @classmethod
    def voigt(cls) -> "StudentTPrior":
        return cls(mean=0.01, variance=100.0 ** 2, dof=10.0)

    @property
    def scale(self) -> float:
        return float(np.sqrt(self.variance * (self.dof - 2.0) / self.dof))

    def log_density(self, x: float) -> float:
        return float(stats.t.logpdf(x, df=self.dof, loc=self.mean, scale=self.scale))

    def grad_log_density(self, x: float) -> float:
        offset = x - self.mean
        return float(-(self.dof + 1.0) * offset / (self.dof * self.scale ** 2 + offset ** 2))

    def sample(self, rng: np.random.Generator) -> float:
        return float(self.mean + self.scale * rng.standard_t(self.dof))


@dataclass
class LgcpFit:
    """MAP log-intensity with its Laplace covariance."""

    b_map: np.ndarray
    laplace_cov: np.ndarray
    hypers: GpHyperParams
    converged: bool
    gradient_norm: float
    grid: WavenumberGrid
    iterations: int = 0
    log_posterior: float = float("nan")
    message: str = ""
    laplace_factor: Optional[np.ndarray] = field(default=None, repr=False)

    @property
    def intensity(self) -> np.ndarray:
        return np.exp(self.b_map)

    def credible_band(self, z_score: float = CREDIBLE_Z90) -> Tuple[np.ndarray, np.ndarray]:
        """Pointwise band on the intensity from the Laplace marginals."""
        sd = np.sqrt(np.clip(np.diag(self.laplace_cov), 0.0, None))
        return np.exp(self.b_map - z_score * sd), np.exp(self.b_map + z_score * sd)

    def summary(self) -> Dict[str, Any]:
        lower, upper = self.credible_band()
        return {
            "nu": self.grid.nu.tolist(),
            "b_map": self.b_map.tolist(),
            "intensity": self.intensity.tolist(),
            "band90_lower": lower.tolist(),
            "band90_upper": upper.tolist(),
            "hypers": {
                "log_sigma_lambda": self.hypers.log_sigma_lambda,
                "length_scale": self.hypers.length_scale,
            },
            "convergence": {
                "converged": self.converged,
                "gradient_norm": self.gradient_norm,
                "iterations": self.iterations,
                "log_posterior": self.log_posterior,
                "message": self.message,
            },
        }


@dataclass
class PeakPosterior:
    """Local maxima of posterior log-intensity draws."""

    location_samples: List[np.ndarray]
    count_samples: np.ndarray

    def __len__(self) -> int:
        return len(self.location_samples)

    @property
    def all_locations(self) -> np.ndarray:
        if not self.location_samples:
            return np.empty(0)
        return np.concatenate(self.location_samples)

    def count_distribution(self) -> Dict[int, float]:
        """Posterior probability of each peak count N."""
        values, counts = np.unique(self.count_samples, return_counts=True)
        return {int(n): float(c) / self.count_samples.size for n, c in zip(values, counts)}

    @property
    def modal_count(self) -> int:
        values, counts = np.unique(self.count_samples, return_counts=True)
        return int(values[np.argmax(counts)])

    def location_histogram(self, grid: WavenumberGrid) -> Tuple[np.ndarray, np.ndarray]:
        """Fraction of all sampled maxima falling in each grid cell (centres, mass)."""
        edges = grid.start - 0.5 * grid.h + grid.h * np.arange(grid.k + 1)
        counts, _ = np.histogram(self.all_locations, bins=edges)
        total = max(int(np.sum(counts)), 1)
        return grid.nu.copy(), counts / total


def counts_from_intensity(x_bar: np.ndarray, c_scale: float) -> CountVector:
    """z_k = floor(C xbar_k + 1/2)."""
    x_bar = np.asarray(x_bar, dtype=float)
    if np.any(x_bar < 0):
        raise ParameterDomainError("Pooled intensity must be nonnegative")
    return CountVector(z=np.floor(c_scale * x_bar + 0.5), c_scale=float(c_scale), x_bar=x_bar)


def marginalize_counts(
    posterior: SmcPosterior, y: Spectrum, c_scale: Optional[float] = None
) -> CountVector:
    """
    Pool the positive parts of the x_LN samples, each normalized to unit mass,
    weighted by particle weight and scaled to the data area.

    c_scale defaults to the value that puts the largest count near 50.
    """
    if len(posterior) == 0:
        raise ParameterDomainError("Cannot marginalize an empty ensemble")
    samples = np.clip(np.array([p.x_ln.x_ln for p in posterior.particles]), 0.0, None)
    if samples.shape[1] != y.grid.k:
        raise ShapeError(f"x_LN length {samples.shape[1]} does not match data length {y.grid.k}")

    masses = samples.sum(axis=1)
    keep = masses > 0
    skipped = int(np.sum(~keep))
    if skipped:
        logger.warning("Skipping particles without positive mass", skipped=skipped)
    if not np.any(keep):
        raise DegenerateSignalError("No particle carries positive line-narrowed mass")

    weights = posterior.weights[keep]
    weights = weights / weights.sum()
    x_bar = y.area * (weights / masses[keep]) @ samples[keep]

    if c_scale is None:
        peak = float(np.max(x_bar))
        if not peak > 0:
            raise DegenerateSignalError("Pooled intensity vanishes; data area must be positive")
        c_scale = TARGET_MAX_COUNT / peak

    counts = counts_from_intensity(x_bar, c_scale)
    logger.info("Counts marginalized", c_scale=counts.c_scale, total=counts.total, particles=int(keep.sum()))
    return counts


def correlation_matrix(nu: np.ndarray, length_scale: float) -> np.ndarray:
    """Unit-variance squared-exponential correlation exp(-(nu - nu')^2 / (2 l^2))."""
    nu = np.asarray(nu, dtype=float)
    offsets = nu[:, None] - nu[None, :]
    return np.exp(-0.5 * (offsets / length_scale) ** 2)


def squared_exponential_cov(nu: np.ndarray, hypers: GpHyperParams) -> np.ndarray:
    """Sigma(nu, nu') = sigma_lambda^2 exp(-(nu - nu')^2 / (2 l^2))."""
    return hypers.sigma_lambda ** 2 * correlation_matrix(nu, hypers.length_scale)


def cholesky_with_jitter(matrix: np.ndarray, reference: Optional[float] = None) -> Tuple[np.ndarray, float]:
    """
    Lower Cholesky factor of matrix + jitter I, escalating jitter from 1e-10 to
    1e-6 of the reference variance (the mean diagonal by default).
    """
    matrix = np.atleast_2d(np.asarray(matrix, dtype=float))
    if reference is None:
        reference = float(np.mean(np.diag(matrix)))
    reference = reference if reference > 0 else 1.0
    identity = np.eye(matrix.shape[0])
    for level in JITTER_LEVELS:
        jitter = level * reference
        try:
            factor = linalg.cholesky(matrix + jitter * identity, lower=True)
        except linalg.LinAlgError:
            continue
        if np.all(np.isfinite(factor)):
            return factor, jitter
    raise ConditioningError(f"Cholesky failed with jitter up to {JITTER_LEVELS[-1]} of {reference}")


def _poisson_terms(b: np.ndarray, z: np.ndarray) -> Tuple[float, np.ndarray]:
    rate = np.exp(b)
    value = float(np.sum(z * b - rate - gammaln(z + 1.0)))
    return value, z - rate


def poisson_gp_log_density(b: Sequence[float], z: Sequence[float], cov: np.ndarray) -> Tuple[float, np.ndarray]:
    """
    Poisson log-likelihood of counts z under rate exp(b) plus the Gaussian
    log-density of b under N(0, cov). Returns (value, gradient over b).
    """
    b = np.atleast_1d(np.asarray(b, dtype=float))
    z = np.atleast_1d(np.asarray(z, dtype=float))
    cov = np.atleast_2d(cov)
    if not (b.shape == z.shape and cov.shape == (b.size, b.size)):
        raise ShapeError("b, z and covariance dimensions disagree")
    if not np.all(np.isfinite(b)):
        raise ParameterDomainError("Log-intensity must be finite")

    factor, _ = cholesky_with_jitter(cov)
    alpha = linalg.cho_solve((factor, True), b)
    poisson, gradient = _poisson_terms(b, z)
    value = (
        poisson
        - 0.5 * float(b @ alpha)
        - float(np.sum(np.log(np.diag(factor))))
        - 0.5 * b.size * np.log(2.0 * np.pi)
    )
    return float(value), gradient - alpha


def lgcp_log_posterior(
    b: Sequence[float],
    z: CountVector,
    hypers: GpHyperParams,
    grid: WavenumberGrid,
    prior: Optional[StudentTPrior] = None,
) -> Tuple[float, np.ndarray]:
    """Joint log posterior of (b, psi) up to the evidence; gradient over b."""
    if len(z) != grid.k:
        raise ShapeError(f"Count length {len(z)} does not match grid length {grid.k}")
    cov = squared_exponential_cov(grid.nu, hypers)
    value, gradient = poisson_gp_log_density(b, z.z, cov)
    if prior is not None:
        value += prior.log_density(hypers.log_sigma_lambda)
    return value, gradient


class LgcpFitter:
    """MAP fitting of the GP log-intensity and its Laplace approximation."""

    def __init__(
        self,
        grid: WavenumberGrid,
        prior: Optional[StudentTPrior] = None,
        max_iter: int = 2000,
        gtol: float = 1e-6,
        memory: int = 10,
    ):
        self.grid = grid
        self.prior = prior
        self.max_iter = max_iter
        self.gtol = gtol
        self.memory = memory
        self.logger = logger.bind(component="lgcp_fitter", points=grid.k)

    def fit(self, z: CountVector, hypers_init: GpHyperParams) -> LgcpFit:
        """
        Jointly maximize the log posterior over (b, log sigma_lambda).

        The optimizer works in whitened coordinates b = sigma_lambda L u with
        L L^T the correlation matrix; the maximizer is unchanged.
        """
        if len(z) != self.grid.k:
            raise ShapeError(f"Count length {len(z)} does not match grid length {self.grid.k}")
        start_time = time.time()
        k = self.grid.k
        counts = z.z.astype(float)
        correlation = correlation_matrix(self.grid.nu, hypers_init.length_scale)
        factor, jitter = cholesky_with_jitter(correlation, reference=1.0)
        half_log_det = float(np.sum(np.log(np.diag(factor))))
        constant = -float(np.sum(gammaln(counts + 1.0))) - half_log_det - 0.5 * k * np.log(2.0 * np.pi)

        def negative_objective(x: np.ndarray) -> Tuple[float, np.ndarray]:
            u, s = x[:-1], x[-1]
            b = np.exp(s) * (factor @ u)
            rate = np.exp(b)
            value = float(counts @ b - np.sum(rate)) - 0.5 * float(u @ u) - k * s + constant
            residual = counts - rate
            grad_u = np.exp(s) * (factor.T @ residual) - u
            grad_s = float(residual @ b) - k
            if self.prior is not None:
                value += self.prior.log_density(s)
                grad_s += self.prior.grad_log_density(s)
            return -value, -np.append(grad_u, grad_s)

        x0 = np.append(np.zeros(k), np.clip(hypers_init.log_sigma_lambda, *LOG_SIGMA_BOUNDS))
        bounds = [(None, None)] * k + [LOG_SIGMA_BOUNDS]
        result = optimize.minimize(
            negative_objective,
            x0,
            jac=True,
            method="L-BFGS-B",
            bounds=bounds,
            options={"maxcor": self.memory, "gtol": self.gtol, "maxiter": self.max_iter},
        )

        u, s = result.x[:-1], float(result.x[-1])
        hypers = GpHyperParams(log_sigma_lambda=s, length_scale=hypers_init.length_scale)
        b_map = np.exp(s) * (factor @ u)
        prior_cov = np.exp(2.0 * s) * (correlation + jitter * np.eye(k))
        laplace_cov = laplace_covariance(prior_cov, b_map)
        laplace_factor, _ = cholesky_with_jitter(laplace_cov)

        fit = LgcpFit(
            b_map=b_map,
            laplace_cov=laplace_cov,
            hypers=hypers,
            converged=bool(result.success),
            gradient_norm=float(np.linalg.norm(result.jac)),
            grid=self.grid,
            iterations=int(result.nit),
            log_posterior=float(-result.fun),
            message=str(result.message),
            laplace_factor=laplace_factor,
        )
        log = self.logger.info if fit.converged else self.logger.warning
        log(
            "MAP fit finished",
            converged=fit.converged,
            gradient_norm=fit.gradient_norm,
            iterations=fit.iterations,
            log_sigma_lambda=s,
            elapsed_time=time.time() - start_time,
        )
        return fit


def laplace_covariance(prior_cov: np.ndarray, b_map: np.ndarray) -> np.ndarray:
    """
    (Sigma^-1 + W)^-1 with W = diag(exp(b)), evaluated as
    Sigma - Sigma W^1/2 B^-1 W^1/2 Sigma, B = I + W^1/2 Sigma W^1/2.
    """
    root_w = np.exp(0.5 * np.asarray(b_map, dtype=float))
    scaled = root_w[:, None] * prior_cov
    b_matrix = np.eye(root_w.size) + scaled * root_w[None, :]
    factor = linalg.cholesky(b_matrix, lower=True)
    v = linalg.solve_triangular(factor, scaled, lower=True)
    cov = prior_cov - v.T @ v
    return 0.5 * (cov + cov.T)


def fit_map(
    z: CountVector,
    grid: WavenumberGrid,
    hypers_init: GpHyperParams,
    prior_log_sigma: Optional[StudentTPrior] = None,
    max_iter: int = 2000,
) -> LgcpFit:
    """MAP estimate of the LGCP log-intensity by L-BFGS."""
    return LgcpFitter(grid, prior=prior_log_sigma, max_iter=max_iter).fit(z, hypers_init)


def local_maxima(
    draws: np.ndarray,
    grid: WavenumberGrid,
    refine: bool = True,
    min_value: Optional[float] = None,
) -> Tuple[np.ndarray, List[np.ndarray]]:
    """
    Strict interior maxima b[k-1] < b[k] > b[k+1] of each row of draws.

    Locations are refined to the vertex of the parabola through the three
    neighbouring samples unless refine is False. Maxima whose sampled value lies
    below min_value are dropped when it is given. Returns (counts, locations).
    """
    draws = np.atleast_2d(np.asarray(draws, dtype=float))
    left, centre, right = draws[:, :-2], draws[:, 1:-1], draws[:, 2:]
    is_peak = (centre > left) & (centre > right)
    if min_value is not None:
        is_peak &= centre >= min_value
    rows, cols = np.nonzero(is_peak)

    position = (cols + 1).astype(float)
    if refine:
        b_left, b_centre, b_right = left[rows, cols], centre[rows, cols], right[rows, cols]
        position += 0.5 * (b_left - b_right) / (b_left - 2.0 * b_centre + b_right)
    locations = grid.start + grid.h * position

    counts = np.bincount(rows, minlength=draws.shape[0])
    return counts, np.split(locations, np.cumsum(counts)[:-1])


def sample_peak_posterior(
    fit: LgcpFit,
    n_samples: int,
    rng: np.random.Generator,
    chunk_size: int = 1000,
    min_intensity: Optional[float] = MIN_PEAK_INTENSITY,
) -> PeakPosterior:
    """
    Draw b ~ N(b_map, laplace_cov) and collect their local maxima.

    A maximum only counts as a peak where the sampled intensity exp(b) reaches
    min_intensity expected events; None counts every strict maximum.
    """
    if n_samples < 1:
        raise ParameterDomainError(f"Need at least one sample, got {n_samples}")
    if min_intensity is not None and not min_intensity > 0:
        raise ParameterDomainError(f"Minimum peak intensity must be positive, got {min_intensity}")
    min_value = None if min_intensity is None else float(np.log(min_intensity))
    factor = fit.laplace_factor
    if factor is None:
        factor, _ = cholesky_with_jitter(fit.laplace_cov)

    locations: List[np.ndarray] = []
    counts = []
    for start in range(0, n_samples, chunk_size):
        size = min(chunk_size, n_samples - start)
        draws = fit.b_map[None, :] + rng.standard_normal((size, fit.b_map.size)) @ factor.T
        chunk_counts, chunk_locations = local_maxima(draws, fit.grid, min_value=min_value)
        counts.append(chunk_counts)
        locations.extend(chunk_locations)

    posterior = PeakPosterior(location_samples=locations, count_samples=np.concatenate(counts))
    logger.info(
        "Peak posterior sampled",
        samples=n_samples,
        modal_count=posterior.modal_count,
        mean_count=float(np.mean(posterior.count_samples)),
    )
    return posterior
