"""Adaptive-tempering sequential Monte Carlo over line shape and truncation length."""
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Any, Callable, Dict, Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np
import structlog
from scipy import linalg
from scipy.special import logsumexp

from .exceptions import (
    NormalizationError,
    NumericError,
    ParameterDomainError,
    ShapeError,
)
from .fourier_lp import LineNarrowedSpectrum, lomep
from .models import Family, LineShapeParams, Spectrum
from .priors import PriorSpec

logger = structlog.get_logger(__name__)

NORMALIZATION_TOLERANCE = 1e-9
KAPPA_TOLERANCE = 1e-6
COVARIANCE_RIDGE = 1e-8
RESAMPLE_STREAM = 7

VectorLike = Union[Spectrum, Sequence[float], np.ndarray]


@dataclass(frozen=True)
class Particle:
    """One weighted sample (theta, M) with its deterministic LOMEP outputs."""

    params: LineShapeParams
    m: int
    x_ln: LineNarrowedSpectrum
    g: Spectrum
    log_like: float
    weight: float
    order: int

    def with_weight(self, weight: float) -> "Particle":
        """Copy of this particle carrying a new importance weight."""
        return replace(self, weight=float(weight))

    def coordinates(self) -> np.ndarray:
        """Random-walk coordinates (theta..., M)."""
        return np.append(self.params.as_vector(), float(self.m))


@dataclass(frozen=True)
class SmcConfig:
    """Sampler settings; defaults follow the published computational setup."""

    j_particles: int = 1000
    j_min: Optional[int] = None
    eta: float = 0.9
    n_mcmc: int = 5
    target_accept: float = 0.30
    noise_sd: float = 0.025
    rng_seed: int = 0
    adapt_rate: float = 0.05
    threads: int = 1
    max_init_retries: int = 100
    max_iterations: int = 10_000

    def __post_init__(self):
        if self.j_min is None:
            object.__setattr__(self, "j_min", self.j_particles // 2)
        if self.j_particles < 2:
            raise ParameterDomainError("Need at least two particles")
        if not 0 <= self.j_min < self.j_particles:
            raise ParameterDomainError(
                f"Resample threshold {self.j_min} must lie below {self.j_particles} particles"
            )
        if not 0 < self.eta < 1:
            raise ParameterDomainError(f"eta must lie in (0, 1), got {self.eta}")
        if self.n_mcmc < 1:
            raise ParameterDomainError("n_mcmc must be at least 1")
        if not 0 < self.target_accept < 1:
            raise ParameterDomainError(f"target_accept must lie in (0, 1), got {self.target_accept}")
        if not self.noise_sd > 0:
            raise ParameterDomainError(f"noise_sd must be positive, got {self.noise_sd}")
        if self.threads < 1:
            raise ParameterDomainError("threads must be at least 1")


@dataclass
class SmcPosterior:
    """Final particle ensemble and the realized tempering diagnostics."""

    particles: List[Particle]
    kappa_schedule: List[float]
    acceptance_history: List[float]
    trace: List[Dict[str, Any]] = field(default_factory=list)
    log_evidence: float = 0.0

    def __len__(self) -> int:
        return len(self.particles)

    @property
    def family(self) -> Family:
        return self.particles[0].params.family

    @property
    def weights(self) -> np.ndarray:
        return np.array([p.weight for p in self.particles])

    @property
    def gammas(self) -> np.ndarray:
        return np.array([p.params.gamma for p in self.particles])

    @property
    def sigmas(self) -> Optional[np.ndarray]:
        if self.family is not Family.VOIGT:
            return None
        return np.array([p.params.sigma for p in self.particles])

    @property
    def ms(self) -> np.ndarray:
        return np.array([p.m for p in self.particles])

    def summary(self) -> Dict[str, Any]:
        """Weighted posterior summaries of gamma (sigma) and M."""
        weights = self.weights
        result = {
            "gamma": describe_weighted(self.gammas, weights),
            "m": describe_weighted(self.ms.astype(float), weights),
            "iterations": len(self.kappa_schedule) - 1,
            "log_evidence": self.log_evidence,
        }
        if self.sigmas is not None:
            result["sigma"] = describe_weighted(self.sigmas, weights)
        return result


@dataclass(frozen=True)
class MutationResult:
    particles: List[Particle]
    acceptance: float
    scale: float
    sweep_acceptance: List[float]


def weighted_quantile(values: np.ndarray, weights: np.ndarray, q: Iterable[float]) -> np.ndarray:
    """Quantiles of a weighted sample by interpolating the weighted CDF."""
    order = np.argsort(values)
    values = np.asarray(values, dtype=float)[order]
    weights = np.asarray(weights, dtype=float)[order]
    cdf = np.cumsum(weights) - 0.5 * weights
    cdf /= np.sum(weights)
    return np.interp(np.asarray(list(q), dtype=float), cdf, values)


def describe_weighted(values: np.ndarray, weights: np.ndarray) -> Dict[str, float]:
    """Weighted mean, standard deviation, median and central 95% interval."""
    mean = float(np.average(values, weights=weights))
    lo, median, hi = weighted_quantile(values, weights, (0.025, 0.5, 0.975))
    return {
        "mean": mean,
        "sd": float(np.sqrt(np.average((values - mean) ** 2, weights=weights))),
        "median": float(median),
        "q025": float(lo),
        "q975": float(hi),
    }


def _values(x: VectorLike) -> np.ndarray:
    if isinstance(x, Spectrum):
        return x.intensity
    return np.asarray(x, dtype=float)


def quasi_log_likelihood(y: VectorLike, g: VectorLike, sigma_eps: float) -> float:
    """Sum_k log N(y_k; g_k, sigma_eps^2)."""
    y, g = _values(y), _values(g)
    if y.shape != g.shape:
        raise ShapeError(f"Data length {y.size} does not match approximation length {g.size}")
    if not sigma_eps > 0:
        raise ParameterDomainError(f"sigma_eps must be positive, got {sigma_eps}")
    residual = y - g
    return float(
        -0.5 * y.size * np.log(2.0 * np.pi * sigma_eps ** 2)
        - residual @ residual / (2.0 * sigma_eps ** 2)
    )


def ess(weights: Sequence[float]) -> float:
    """Effective sample size 1 / sum w_j^2 of normalized weights."""
    weights = np.asarray(weights, dtype=float)
    total = float(np.sum(weights))
    if abs(total - 1.0) > NORMALIZATION_TOLERANCE or np.any(weights < 0):
        raise NormalizationError(f"Weights must be nonnegative and sum to 1, got sum {total}")
    return float(1.0 / np.sum(weights ** 2))


def _normalize_log(log_weights: np.ndarray) -> np.ndarray:
    if not np.any(np.isfinite(log_weights)):
        raise NormalizationError("All particle weights underflowed to zero")
    return np.exp(log_weights - logsumexp(log_weights))


def _log(weights: np.ndarray) -> np.ndarray:
    with np.errstate(divide="ignore"):
        return np.log(weights)


def next_kappa(
    current_kappa: float,
    log_likes: Sequence[float],
    weights: Sequence[float],
    eta: float,
    tolerance: float = KAPPA_TOLERANCE,
) -> float:
    """
    Next tempering exponent such that ESS(new) / ESS(current) is about eta.

    Solved by bisection on [current_kappa, 1]; returns exactly 1 when the full
    step keeps the relative ESS at or above eta.
    """
    if not 0 <= current_kappa < 1:
        raise ParameterDomainError(f"current kappa must lie in [0, 1), got {current_kappa}")
    log_likes = np.asarray(log_likes, dtype=float)
    log_weights = _log(np.asarray(weights, dtype=float))
    current_ess = ess(weights)

    def relative_ess(kappa: float) -> float:
        updated = _normalize_log(log_weights + (kappa - current_kappa) * log_likes)
        return ess(updated) / current_ess

    if relative_ess(1.0) >= eta:
        return 1.0

    lo, hi = current_kappa, 1.0
    while hi - lo > tolerance:
        mid = 0.5 * (lo + hi)
        if relative_ess(mid) >= eta:
            lo = mid
        else:
            hi = mid
    return lo if lo > current_kappa else hi


def reweight(particles: Sequence[Particle], old_kappa: float, new_kappa: float) -> List[Particle]:
    """W_j proportional to exp((kappa' - kappa) loglike_j) w_j, normalized."""
    if new_kappa < old_kappa:
        raise ParameterDomainError(f"Tempering must increase: {old_kappa} -> {new_kappa}")
    log_likes = np.array([p.log_like for p in particles])
    log_weights = _log(np.array([p.weight for p in particles]))
    weights = _normalize_log(log_weights + (new_kappa - old_kappa) * log_likes)
    return [p.with_weight(w) for p, w in zip(particles, weights)]


def residual_resample_indices(weights: Sequence[float], rng: np.random.Generator) -> np.ndarray:
    """floor(J w_j) deterministic copies, the remainder drawn multinomially."""
    weights = np.asarray(weights, dtype=float)
    n = weights.size
    scaled = n * weights
    copies = np.floor(scaled + 1e-9).astype(int)
    remainder = n - int(np.sum(copies))
    if remainder > 0:
        residual = np.clip(scaled - copies, 0.0, None)
        copies += rng.multinomial(remainder, residual / np.sum(residual))
    return np.repeat(np.arange(n), copies)


def residual_resample(particles: Sequence[Particle], rng: np.random.Generator) -> List[Particle]:
    """Residual resampling; every output particle carries weight 1/J."""
    weights = np.array([p.weight for p in particles])
    ess(weights)
    indices = residual_resample_indices(weights, rng)
    uniform = 1.0 / len(particles)
    return [particles[i].with_weight(uniform) for i in indices]


def evaluate_particle(
    data: Spectrum, params: LineShapeParams, m: int, sigma_eps: float, weight: float
) -> Particle:
    """Run LOMEP for (theta, M) and score it with the quasi-likelihood."""
    result = lomep(data, params, m)
    return Particle(
        params=params,
        m=m,
        x_ln=result.x_ln,
        g=result.g,
        log_like=quasi_log_likelihood(data, result.g, sigma_eps),
        weight=weight,
        order=result.order,
    )


def _proposal_factor(particles: Sequence[Particle], scale: float) -> np.ndarray:
    """Cholesky factor of c times the weighted empirical covariance."""
    coords = np.array([p.coordinates() for p in particles])
    weights = np.array([p.weight for p in particles])
    covariance = np.atleast_2d(np.cov(coords.T, aweights=weights))
    try:
        factor = linalg.cholesky(covariance, lower=True)
        if not np.all(np.isfinite(factor)):
            raise linalg.LinAlgError("non-finite factor")
    except (linalg.LinAlgError, ValueError):
        variances = np.clip(np.diag(covariance), 0.0, None)
        factor = np.diag(np.sqrt(variances + COVARIANCE_RIDGE))
    return np.sqrt(scale) * factor


def _mutate_one(
    particle: Particle,
    kappa: float,
    priors: PriorSpec,
    data: Spectrum,
    sigma_eps: float,
    factor: np.ndarray,
    rng: np.random.Generator,
) -> Tuple[Particle, bool]:
    """One random-walk Metropolis-Hastings step for a single particle."""
    dim = factor.shape[0]
    step = factor @ rng.standard_normal(dim)
    theta = particle.params.as_vector() + step[:-1]
    m = int(np.floor(particle.m + step[-1] + 0.5)) + int(rng.integers(-1, 2))
    log_u = np.log(rng.uniform())

    log_prior_new = priors.log_density_vector(theta, m)
    if not np.isfinite(log_prior_new):
        return particle, False
    try:
        params = LineShapeParams.from_vector(particle.params.family, theta)
        proposal = evaluate_particle(data, params, m, sigma_eps, particle.weight)
    except (NumericError, ParameterDomainError):
        return particle, False

    log_prior_old = priors.log_density(particle.params, particle.m)
    log_alpha = kappa * (proposal.log_like - particle.log_like) + log_prior_new - log_prior_old
    if log_u < log_alpha:
        return proposal, True
    return particle, False


def _run_parallel(executor: Optional[ThreadPoolExecutor], func: Callable, items: Sequence) -> List:
    if executor is None:
        return [func(item) for item in items]
    return list(executor.map(func, items))


def mh_mutate(
    particles: Sequence[Particle],
    kappa: float,
    priors: PriorSpec,
    config: SmcConfig,
    data: Spectrum,
    scale: Optional[float] = None,
    iteration: int = 0,
    adapt: bool = True,
    executor: Optional[ThreadPoolExecutor] = None,
) -> MutationResult:
    """
    n_mcmc random-walk Metropolis-Hastings sweeps targeting the tempered posterior.

    Proposals: Gaussian step with covariance c times the empirical particle
    covariance on (theta, M); M is rounded and then moved by a uniform step in
    {-1, 0, +1}. Each particle draws from its own stream keyed on
    (seed, iteration, sweep, index). Between sweeps c moves toward the target
    acceptance rate unless adaptation is frozen.
    """
    scale = 2.38 ** 2 / priors.dim if scale is None else float(scale)
    current = list(particles)
    sweep_acceptance = []

    for sweep in range(config.n_mcmc):
        factor = _proposal_factor(current, scale)

        def step(indexed):
            index, particle = indexed
            rng = np.random.default_rng([config.rng_seed, iteration, sweep, index])
            return _mutate_one(particle, kappa, priors, data, config.noise_sd, factor, rng)

        outcomes = _run_parallel(executor, step, list(enumerate(current)))
        current = [particle for particle, _ in outcomes]
        acceptance = float(np.mean([accepted for _, accepted in outcomes]))
        sweep_acceptance.append(acceptance)

        if adapt:
            scale *= float(np.exp(config.adapt_rate * (acceptance - config.target_accept)))

    return MutationResult(
        particles=current,
        acceptance=float(np.mean(sweep_acceptance)),
        scale=scale,
        sweep_acceptance=sweep_acceptance,
    )


class SmcSampler:
    """Sequential Monte Carlo sampled line narrowing."""

    def __init__(self, priors: PriorSpec, config: SmcConfig):
        self.priors = priors
        self.config = config
        self.logger = logger.bind(component="smc_sampler")

    def _initial_particle(self, data: Spectrum, index: int) -> Particle:
        rng = np.random.default_rng([self.config.rng_seed, index])
        weight = 1.0 / self.config.j_particles
        last_error: Optional[Exception] = None
        for _ in range(self.config.max_init_retries):
            params, m = self.priors.sample(rng)
            try:
                return evaluate_particle(data, params, m, self.config.noise_sd, weight)
            except (NumericError, ParameterDomainError) as e:
                last_error = e
        raise NumericError(
            f"Particle {index}: no valid prior draw in {self.config.max_init_retries} attempts "
            f"({last_error})"
        )

    def initialize(self, data: Spectrum, executor: Optional[ThreadPoolExecutor] = None) -> List[Particle]:
        """Sample J particles from the prior and evaluate their LOMEP outputs."""
        particles = _run_parallel(
            executor,
            lambda index: self._initial_particle(data, index),
            list(range(self.config.j_particles)),
        )
        self.logger.info(
            "Particles initialized",
            particles=len(particles),
            family=self.priors.family.value,
        )
        return particles

    def run(self, data: Spectrum) -> SmcPosterior:
        """Execute the tempering loop until kappa reaches 1."""
        config = self.config
        start_time = time.time()
        executor = ThreadPoolExecutor(max_workers=config.threads) if config.threads > 1 else None

        try:
            particles = self.initialize(data, executor)
            kappa = 0.0
            kappa_schedule = [kappa]
            acceptance_history: List[float] = []
            trace: List[Dict[str, Any]] = []
            log_evidence = 0.0
            scale: Optional[float] = None
            t = 0

            while kappa < 1.0:
                t += 1
                if t > config.max_iterations:
                    raise NumericError(f"Tempering did not reach 1 in {config.max_iterations} steps")

                log_likes = np.array([p.log_like for p in particles])
                weights = np.array([p.weight for p in particles])
                new_kappa = next_kappa(kappa, log_likes, weights, config.eta)

                log_evidence += float(logsumexp(_log(weights) + (new_kappa - kappa) * log_likes))
                particles = reweight(particles, kappa, new_kappa)
                current_ess = ess([p.weight for p in particles])

                resampled = current_ess < config.j_min
                if resampled:
                    rng = np.random.default_rng([config.rng_seed, t, RESAMPLE_STREAM])
                    particles = residual_resample(particles, rng)

                # adaptation stays frozen on the final step
                mutation = mh_mutate(
                    particles,
                    new_kappa,
                    self.priors,
                    config,
                    data,
                    scale=scale,
                    iteration=t,
                    adapt=new_kappa < 1.0,
                    executor=executor,
                )
                particles = mutation.particles
                scale = mutation.scale
                kappa = new_kappa

                kappa_schedule.append(kappa)
                acceptance_history.append(mutation.acceptance)
                record = {
                    "t": t,
                    "kappa": kappa,
                    "ess": current_ess,
                    "resampled": bool(resampled),
                    "acceptance": mutation.acceptance,
                    "c": scale,
                }
                trace.append(record)
                self.logger.info("Tempering step", **record)
        finally:
            if executor is not None:
                executor.shutdown()

        posterior = SmcPosterior(
            particles=particles,
            kappa_schedule=kappa_schedule,
            acceptance_history=acceptance_history,
            trace=trace,
            log_evidence=log_evidence,
        )
        self.logger.info(
            "Sampler completed",
            iterations=t,
            elapsed_time=time.time() - start_time,
            gamma_mean=posterior.summary()["gamma"]["mean"],
        )
        return posterior


def run_smc(y: Spectrum, priors: PriorSpec, config: SmcConfig) -> SmcPosterior:
    """Sample the approximate posterior over (x_LN, theta, M) given y."""
    return SmcSampler(priors, config).run(y)
