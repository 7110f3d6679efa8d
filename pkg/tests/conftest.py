"""Shared fixtures for the line narrowing tests."""
import numpy as np
import pytest

from src.fourier_lp import LineNarrowedSpectrum
from src.models import LineShapeParams, NoiseModel, PeakSet, Spectrum, WavenumberGrid
from src.smc import Particle, SmcPosterior
from src.spectrum import add_noise, synthesize


@pytest.fixture
def grid():
    return WavenumberGrid(start=0.0, h=1.0, k=128)


@pytest.fixture
def lorentz_params():
    return LineShapeParams.lorentz(3.0)


@pytest.fixture
def two_peaks():
    return PeakSet(locations=np.array([50.0, 70.0]), amplitudes=np.array([5.0, 3.0]))


@pytest.fixture
def noisy_spectrum(grid, two_peaks, lorentz_params):
    clean = synthesize(grid, two_peaks, lorentz_params)
    return add_noise(clean, NoiseModel(0.02), rng_seed=7)


def make_posterior(x_ln_rows, grid, weights=None):
    """Ensemble of particles that only carries the given line-narrowed spectra."""
    rows = np.atleast_2d(np.asarray(x_ln_rows, dtype=float))
    weights = np.full(len(rows), 1.0 / len(rows)) if weights is None else np.asarray(weights)
    particles = [
        Particle(
            params=LineShapeParams.lorentz(1.0),
            m=10,
            x_ln=LineNarrowedSpectrum(x_ln=row),
            g=Spectrum(grid=grid, intensity=np.zeros(grid.k)),
            log_like=0.0,
            weight=float(w),
            order=9,
        )
        for row, w in zip(rows, weights)
    ]
    return SmcPosterior(particles=particles, kappa_schedule=[0.0, 1.0], acceptance_history=[0.0])


THREE_PEAK_LOCATIONS = (100.0, 120.0, 160.0)


def three_peak_spectrum(noise_sd=0.025, rng_seed=2):
    """Three Lorentz lines of half width 5 on 512 unit-spaced points; noiseless when noise_sd is 0."""
    grid = WavenumberGrid(start=0.0, h=1.0, k=512)
    peaks = PeakSet(locations=np.array(THREE_PEAK_LOCATIONS), amplitudes=np.array([40.0, 24.0, 32.0]))
    clean = synthesize(grid, peaks, LineShapeParams.lorentz(5.0))
    if noise_sd == 0:
        return clean
    return add_noise(clean, NoiseModel(noise_sd), rng_seed=rng_seed)
