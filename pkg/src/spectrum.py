"""Forward generative model: kernel sums and measurement noise."""
import numpy as np
import structlog
from scipy.stats import median_abs_deviation

from .exceptions import ParameterDomainError
from .lineshapes import kernel_values
from .models import LineShapeParams, NoiseModel, PeakSet, Spectrum, WavenumberGrid

logger = structlog.get_logger(__name__)


def synthesize(grid: WavenumberGrid, peaks: PeakSet, params: LineShapeParams) -> Spectrum:
    """Evaluate sum_n a_n K(nu_k - l_n; theta) exactly on the grid."""
    outside = [float(loc) for loc in peaks.locations if not grid.contains(loc)]
    if outside:
        raise ParameterDomainError(
            f"Peak locations {outside} lie outside the grid span [{grid.start}, {grid.stop}]"
        )

    if len(peaks) == 0:
        return Spectrum(grid=grid, intensity=np.zeros(grid.k))

    # K x N matrix of kernel values, one column per peak
    offsets = grid.nu[:, None] - peaks.locations[None, :]
    intensity = kernel_values(offsets, params) @ peaks.amplitudes
    return Spectrum(grid=grid, intensity=intensity)


def add_noise(spec: Spectrum, noise: NoiseModel, rng_seed: int) -> Spectrum:
    """Add i.i.d. N(0, sigma_eps^2) errors; deterministic for a fixed seed."""
    rng = np.random.default_rng(rng_seed)
    perturbation = rng.normal(0.0, noise.sigma_eps, size=spec.grid.k)
    return spec.with_intensity(spec.intensity + perturbation, sigma_eps=noise.sigma_eps)


def estimate_noise_sd(spec: Spectrum) -> float:
    """
    Robust estimate of sigma_eps for real data.

    Successive differences of a smooth signal plus white noise have standard
    deviation sqrt(2) sigma_eps; their normal-scaled median absolute deviation
    is insensitive to the peaks themselves.
    """
    differences = np.diff(spec.intensity)
    estimate = float(median_abs_deviation(differences, scale="normal") / np.sqrt(2.0))
    if not estimate > 0:
        raise ParameterDomainError("Cannot estimate noise level of a noiseless spectrum")
    logger.info("Estimated noise level", sigma_eps=estimate, points=spec.grid.k)
    return estimate
