"""Simulation-based calibration of the peak count."""
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
import structlog
from scipy import stats

from .exceptions import (
    InsufficientReplicatesError,
    LineNarrowingError,
    NumericError,
    ParameterDomainError,
)
from .lgcp import (
    MIN_PEAK_INTENSITY,
    GpHyperParams,
    StudentTPrior,
    cholesky_with_jitter,
    correlation_matrix,
    fit_map,
    local_maxima,
    marginalize_counts,
    sample_peak_posterior,
)
from .lineshapes import get_line_shape
from .models import Family, LineShapeParams, NoiseModel, PeakSet, Spectrum, WavenumberGrid
from .priors import PriorSpec
from .smc import SmcConfig, run_smc
from .spectrum import add_noise, synthesize

logger = structlog.get_logger(__name__)

MIN_REPLICATES = 20
AMPLITUDE_MODES = ("area", "height")


@dataclass(frozen=True)
class SbcConfig:
    """Calibration study settings; the GP length scale lives on the [0, 1] axis."""

    n_replicates: int = 100
    j_particles: int = 1000
    n_peak_samples: int = 20000
    k: int = 512
    h: float = 1.0
    length_scale: float = 0.025
    noise_sd: float = 0.025
    amplitude_range: Tuple[float, float] = (0.5, 2.0)
    amplitude_mode: str = "area"
    family: Family = Family.LORENTZ
    gamma_range: Tuple[float, float] = (1.0, 30.0)
    m_range: Tuple[int, int] = (10, 80)
    sigma_multipliers: Tuple[float, float] = (0.5, 0.05)
    sigma_lambda: Optional[float] = None
    log_sigma_prior: StudentTPrior = field(default_factory=StudentTPrior.lorentz)
    c_scale: Optional[float] = None
    min_peak_intensity: float = MIN_PEAK_INTENSITY
    n_bins: int = 20
    eta: float = 0.9
    n_mcmc: int = 5
    seed: int = 0
    threads: int = 1
    max_redraws: int = 100

    def __post_init__(self):
        object.__setattr__(self, "family", Family(self.family))
        if self.amplitude_mode not in AMPLITUDE_MODES:
            raise ParameterDomainError(
                f"Amplitude mode must be one of {AMPLITUDE_MODES}, got {self.amplitude_mode!r}"
            )
        lo, hi = self.amplitude_range
        if not 0 < lo <= hi:
            raise ParameterDomainError(f"Amplitude range must satisfy 0 < lo <= hi, got {self.amplitude_range}")
        if not self.length_scale > 0:
            raise ParameterDomainError(f"Length scale must be positive, got {self.length_scale}")
        if self.sigma_lambda is not None and self.sigma_lambda < 0:
            raise ParameterDomainError("sigma_lambda must be nonnegative")
        if self.n_replicates < 1 or self.n_peak_samples < 1 or self.n_bins < 1:
            raise ParameterDomainError("Replicate, sample and bin counts must be positive")

    @property
    def grid(self) -> WavenumberGrid:
        return WavenumberGrid(start=0.0, h=self.h, k=self.k)

    @property
    def priors(self) -> PriorSpec:
        if self.family is Family.VOIGT:
            return PriorSpec.voigt(self.gamma_range, self.m_range, self.sigma_multipliers)
        return PriorSpec.lorentz(self.gamma_range, self.m_range)

    def smc_config(self, rng_seed: int) -> SmcConfig:
        return SmcConfig(
            j_particles=self.j_particles,
            eta=self.eta,
            n_mcmc=self.n_mcmc,
            noise_sd=self.noise_sd,
            rng_seed=rng_seed,
        )


@dataclass(frozen=True)
class SbcTruth:
    b_star: np.ndarray
    peaks: PeakSet
    params: LineShapeParams
    sigma_lambda: float

    @property
    def n_true(self) -> int:
        return len(self.peaks)


@dataclass
class SbcReplicate:
    """One calibration replicate; rank counts posterior samples strictly below the truth."""

    truth: SbcTruth
    data: Optional[Spectrum]
    posterior_counts: np.ndarray
    rank: int = -1
    index: int = 0

    def __post_init__(self):
        self.posterior_counts = np.asarray(self.posterior_counts, dtype=int)
        self.rank = rank_statistic(self.truth.n_true, self.posterior_counts)

    @property
    def n_true(self) -> int:
        return self.truth.n_true


@dataclass
class SbcReport:
    ranks: np.ndarray
    bin_counts: np.ndarray
    bin_edges: np.ndarray
    uniformity_statistic: float
    uniformity_pvalue: float
    band_lower: float
    band_upper: float
    bias: float
    rmse: float
    coverage95: float
    n_posterior: int
    failures: List[Dict[str, Any]] = field(default_factory=list)

    @property
    def n_replicates(self) -> int:
        return int(self.ranks.size)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "replicates": self.n_replicates,
            "posterior_samples": self.n_posterior,
            "bias": self.bias,
            "rmse": self.rmse,
            "coverage95": self.coverage95,
            "chi2_statistic": self.uniformity_statistic,
            "p_value": self.uniformity_pvalue,
            "ranks": self.ranks.tolist(),
            "failures": self.failures,
        }

    def histogram_rows(self) -> List[Dict[str, float]]:
        """Plot-ready bins with the expected count and the 99% binomial band."""
        expected = self.n_replicates / self.bin_counts.size
        return [
            {
                "bin_lower": float(self.bin_edges[i]),
                "bin_upper": float(self.bin_edges[i + 1]),
                "count": int(self.bin_counts[i]),
                "expected": expected,
                "band_lower": self.band_lower,
                "band_upper": self.band_upper,
            }
            for i in range(self.bin_counts.size)
        ]


@lru_cache(maxsize=8)
def _gp_factor(grid: WavenumberGrid, length_scale: float) -> np.ndarray:
    factor, _ = cholesky_with_jitter(correlation_matrix(grid.normalized(), length_scale), reference=1.0)
    return factor


def _draw_sigma_lambda(config: SbcConfig, rng: np.random.Generator) -> float:
    if config.sigma_lambda is not None:
        return float(config.sigma_lambda)
    log_sigma = np.clip(config.log_sigma_prior.sample(rng), -10.0, 10.0)
    return float(np.exp(log_sigma))


def draw_replicate(config: SbcConfig, rng: np.random.Generator) -> Tuple[SbcTruth, Spectrum]:
    """
    Simulate (truth, data) from the joint generative model.

    Peaks sit at the interior grid maxima of a GP draw; a draw without maxima is
    redrawn up to max_redraws times.
    """
    grid = config.grid
    factor = _gp_factor(grid, config.length_scale)

    for attempt in range(config.max_redraws):
        sigma_lambda = _draw_sigma_lambda(config, rng)
        b_star = sigma_lambda * (factor @ rng.standard_normal(config.k))
        counts, locations = local_maxima(b_star, grid, refine=False)
        if counts[0] > 0:
            break
        logger.info("Replicate without peaks redrawn", attempt=attempt + 1)
    else:
        raise NumericError(f"No GP draw with local maxima in {config.max_redraws} attempts")

    params, _ = config.priors.sample(rng)
    amplitudes = rng.uniform(*config.amplitude_range, size=int(counts[0]))
    if config.amplitude_mode == "height":
        amplitudes = amplitudes / get_line_shape(params.family).peak_value(params)

    peaks = PeakSet(locations=locations[0], amplitudes=amplitudes)
    clean = synthesize(grid, peaks, params)
    data = add_noise(clean, NoiseModel(config.noise_sd), rng_seed=int(rng.integers(2 ** 32)))
    truth = SbcTruth(b_star=b_star, peaks=peaks, params=params, sigma_lambda=sigma_lambda)
    return truth, data


def rank_statistic(n_true: int, posterior_counts: Sequence[int]) -> int:
    """Number of posterior samples strictly below the true value."""
    counts = np.asarray(posterior_counts)
    if counts.size == 0:
        raise ParameterDomainError("Rank statistic needs at least one posterior sample")
    return int(np.sum(counts < n_true))


def sbc_report(
    replicates: Sequence[SbcReplicate],
    n_bins: int = 20,
    failures: Optional[List[Dict[str, Any]]] = None,
) -> SbcReport:
    """Rank histogram, chi-square uniformity test and point-estimate summaries."""
    if len(replicates) < MIN_REPLICATES:
        raise InsufficientReplicatesError(
            f"Need at least {MIN_REPLICATES} replicates, got {len(replicates)}"
        )
    n_posterior = {r.posterior_counts.size for r in replicates}
    if len(n_posterior) != 1:
        raise ParameterDomainError("Replicates must share the number of posterior samples")
    j_s = n_posterior.pop()

    ranks = np.array([r.rank for r in replicates])
    bin_counts, bin_edges = np.histogram(ranks, bins=n_bins, range=(0, j_s))
    statistic, pvalue = stats.chisquare(bin_counts)
    s = ranks.size
    band_lower, band_upper = stats.binom.ppf([0.005, 0.995], s, 1.0 / n_bins)

    truths = np.array([r.n_true for r in replicates], dtype=float)
    means = np.array([np.mean(r.posterior_counts) for r in replicates])
    intervals = np.array([np.quantile(r.posterior_counts, [0.025, 0.975]) for r in replicates])
    errors = means - truths

    report = SbcReport(
        ranks=ranks,
        bin_counts=bin_counts,
        bin_edges=bin_edges,
        uniformity_statistic=float(statistic),
        uniformity_pvalue=float(pvalue),
        band_lower=float(band_lower),
        band_upper=float(band_upper),
        bias=float(np.mean(errors)),
        rmse=float(np.sqrt(np.mean(errors ** 2))),
        coverage95=float(np.mean((intervals[:, 0] <= truths) & (truths <= intervals[:, 1]))),
        n_posterior=int(j_s),
        failures=list(failures or []),
    )
    logger.info(
        "SBC report assembled",
        replicates=s,
        p_value=report.uniformity_pvalue,
        bias=report.bias,
        rmse=report.rmse,
        coverage95=report.coverage95,
    )
    return report


@dataclass
class SbcRun:
    replicates: List[SbcReplicate]
    failures: List[Dict[str, Any]]


class SbcRunner:
    """Runs calibration replicates through the full pipeline."""

    def __init__(self, config: SbcConfig):
        self.config = config
        self.logger = logger.bind(component="sbc_runner")

    def run_replicate(self, index: int) -> SbcReplicate:
        """Simulate, sample, pool, fit and count peaks for one replicate."""
        config = self.config
        rng = np.random.default_rng([config.seed, index])
        truth, data = draw_replicate(config, rng)

        posterior = run_smc(data, config.priors, config.smc_config(int(rng.integers(2 ** 32))))
        counts = marginalize_counts(posterior, data, config.c_scale)
        hypers = GpHyperParams(
            log_sigma_lambda=0.0, length_scale=config.length_scale * data.grid.span
        )
        fit = fit_map(counts, data.grid, hypers, config.log_sigma_prior)
        peaks = sample_peak_posterior(
            fit, config.n_peak_samples, rng, min_intensity=config.min_peak_intensity
        )

        replicate = SbcReplicate(
            truth=truth, data=data, posterior_counts=peaks.count_samples, index=index
        )
        self.logger.info(
            "Replicate finished",
            index=index,
            n_true=truth.n_true,
            rank=replicate.rank,
            modal_count=peaks.modal_count,
        )
        return replicate

    def _attempt(self, index: int):
        try:
            return self.run_replicate(index), None
        except LineNarrowingError as e:
            self.logger.warning("Replicate failed", index=index, error=str(e))
            return None, {"index": index, "error_type": type(e).__name__, "error": str(e)}

    def run(self) -> SbcRun:
        start_time = time.time()
        indices = list(range(self.config.n_replicates))
        if self.config.threads > 1:
            with ThreadPoolExecutor(max_workers=self.config.threads) as executor:
                outcomes = list(executor.map(self._attempt, indices))
        else:
            outcomes = [self._attempt(index) for index in indices]

        replicates = [r for r, _ in outcomes if r is not None]
        failures = [f for _, f in outcomes if f is not None]
        if failures:
            self.logger.warning("Failed replicates excluded", failed=len(failures))
        self.logger.info(
            "SBC run completed",
            replicates=len(replicates),
            failed=len(failures),
            elapsed_time=time.time() - start_time,
        )
        return SbcRun(replicates=replicates, failures=failures)


def run_sbc(config: SbcConfig) -> SbcReport:
    """Run every replicate and assemble the report."""
    result = SbcRunner(config).run()
    return sbc_report(result.replicates, config.n_bins, failures=result.failures)
