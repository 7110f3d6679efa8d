"""Tests for the forward model."""
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from src.exceptions import ParameterDomainError
from src.lineshapes import lorentz_eval
from src.models import LineShapeParams, NoiseModel, PeakSet, Spectrum, WavenumberGrid
from src.spectrum import add_noise, estimate_noise_sd, synthesize


def test_single_peak_matches_kernel(grid):
    params = LineShapeParams.lorentz(2.0)
    peaks = PeakSet(locations=np.array([40.0]), amplitudes=np.array([3.0]))
    spec = synthesize(grid, peaks, params)
    np.testing.assert_allclose(spec.intensity, 3.0 * lorentz_eval(grid.nu - 40.0, 2.0))
    assert spec.intensity[40] == pytest.approx(3.0 / (2.0 * np.pi))


def test_empty_peak_set_gives_zero_spectrum(grid, lorentz_params):
    spec = synthesize(grid, PeakSet.empty(), lorentz_params)
    assert not np.any(spec.intensity)


def test_peak_outside_grid_is_rejected(grid, lorentz_params):
    peaks = PeakSet(locations=np.array([-1.0]), amplitudes=np.array([1.0]))
    with pytest.raises(ParameterDomainError):
        synthesize(grid, peaks, lorentz_params)


@settings(max_examples=25)
@given(
    st.lists(st.floats(min_value=1.0, max_value=126.0), min_size=2, max_size=2, unique=True),
    st.floats(min_value=0.1, max_value=5.0),
)
def test_synthesis_is_linear_in_peaks(locations, amplitude):
    grid = WavenumberGrid(start=0.0, h=1.0, k=128)
    params = LineShapeParams.voigt(2.0, 1.0)
    first = PeakSet(locations=np.array([locations[0]]), amplitudes=np.array([amplitude]))
    second = PeakSet(locations=np.array([locations[1]]), amplitudes=np.array([1.0]))
    both = PeakSet.from_unsorted(locations, [amplitude, 1.0])
    np.testing.assert_allclose(
        synthesize(grid, both, params).intensity,
        synthesize(grid, first, params).intensity + synthesize(grid, second, params).intensity,
        atol=1e-12,
    )


def test_noise_is_deterministic_per_seed(grid, two_peaks, lorentz_params):
    clean = synthesize(grid, two_peaks, lorentz_params)
    noise = NoiseModel(0.1)
    first = add_noise(clean, noise, rng_seed=3)
    np.testing.assert_array_equal(first.intensity, add_noise(clean, noise, rng_seed=3).intensity)
    assert not np.array_equal(first.intensity, add_noise(clean, noise, rng_seed=4).intensity)
    assert first.metadata["sigma_eps"] == 0.1


def test_noise_level_estimate_recovers_white_noise():
    grid = WavenumberGrid(start=0.0, h=1.0, k=4096)
    spec = add_noise(Spectrum(grid=grid, intensity=np.zeros(grid.k)), NoiseModel(0.1), rng_seed=1)
    assert estimate_noise_sd(spec) == pytest.approx(0.1, rel=0.1)


def test_noise_level_estimate_ignores_smooth_peaks(noisy_spectrum):
    assert estimate_noise_sd(noisy_spectrum) == pytest.approx(0.02, rel=0.5)


def test_noiseless_constant_spectrum_has_no_noise_estimate(grid):
    with pytest.raises(ParameterDomainError):
        estimate_noise_sd(Spectrum(grid=grid, intensity=np.ones(grid.k)))


def test_noise_has_the_requested_variance():
    grid = WavenumberGrid(start=0.0, h=1.0, k=100_000)
    clean = Spectrum(grid=grid, intensity=np.zeros(grid.k))
    noisy = add_noise(clean, NoiseModel(0.025), rng_seed=9)
    assert np.var(noisy.intensity - clean.intensity) == pytest.approx(0.025 ** 2, rel=0.03)


def test_vanishing_noise_leaves_the_spectrum_unchanged(grid, two_peaks, lorentz_params):
    clean = synthesize(grid, two_peaks, lorentz_params)
    noisy = add_noise(clean, NoiseModel(1e-12), rng_seed=0)
    np.testing.assert_allclose(noisy.intensity, clean.intensity, rtol=0, atol=1e-10)
    with pytest.raises(ParameterDomainError):
        NoiseModel(0.0)
