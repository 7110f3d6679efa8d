"""Tests for the Lorentz and Voigt kernels."""
import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy import integrate, stats

from src.exceptions import ParameterDomainError
from src.lineshapes import (
    LorentzLineShape,
    VoigtLineShape,
    get_line_shape,
    kernel_values,
    lorentz_eval,
    voigt_eval,
)
from src.models import Family, LineShapeParams

widths = st.floats(min_value=0.1, max_value=50.0)
offsets = st.floats(min_value=-500.0, max_value=500.0)


@given(offsets, widths)
def test_lorentz_is_symmetric(x, gamma):
    assert lorentz_eval(x, gamma) == lorentz_eval(-x, gamma)


@given(offsets, widths, widths)
def test_voigt_is_symmetric(x, gamma, sigma):
    assert voigt_eval(x, gamma, sigma) == pytest.approx(voigt_eval(-x, gamma, sigma), rel=1e-12)


def test_lorentz_peak_value_and_half_width():
    gamma = 2.5
    peak = lorentz_eval(0.0, gamma)
    assert peak == pytest.approx(1.0 / (np.pi * gamma))
    assert lorentz_eval(gamma, gamma) == pytest.approx(0.5 * peak)


@pytest.mark.parametrize("gamma", [0.5, 2.0, 10.0])
def test_lorentz_has_unit_area(gamma):
    area, _ = integrate.quad(lambda x: lorentz_eval(x, gamma), -np.inf, np.inf)
    assert area == pytest.approx(1.0, abs=1e-8)


@pytest.mark.parametrize("gamma, sigma", [(1.0, 1.0), (3.0, 0.5), (0.5, 4.0)])
def test_voigt_has_unit_area(gamma, sigma):
    area, _ = integrate.quad(lambda x: voigt_eval(x, gamma, sigma), -np.inf, np.inf)
    assert area == pytest.approx(1.0, abs=1e-6)


def test_voigt_tends_to_lorentz_for_small_sigma():
    x = np.linspace(-5.0, 5.0, 41)
    np.testing.assert_allclose(voigt_eval(x, 1.0, 1e-3), lorentz_eval(x, 1.0), rtol=1e-3)


def test_voigt_tends_to_gaussian_for_small_gamma():
    x = np.linspace(-4.0, 4.0, 33)
    np.testing.assert_allclose(voigt_eval(x, 1e-6, 1.0), stats.norm.pdf(x), atol=1e-5)


def test_scalar_input_returns_float():
    assert isinstance(lorentz_eval(0.3, 1.0), float)
    assert isinstance(voigt_eval(0.3, 1.0, 1.0), float)


@pytest.mark.parametrize("gamma", [0.0, -1.0])
def test_non_positive_width_is_rejected(gamma):
    with pytest.raises(ParameterDomainError):
        lorentz_eval(1.0, gamma)
    with pytest.raises(ParameterDomainError):
        voigt_eval(1.0, gamma, 1.0)


def test_registry_dispatches_on_family():
    assert isinstance(get_line_shape(Family.LORENTZ), LorentzLineShape)
    assert isinstance(get_line_shape("voigt"), VoigtLineShape)

    params = LineShapeParams.voigt(2.0, 1.0)
    x = np.array([0.0, 1.0, 2.0])
    np.testing.assert_array_equal(kernel_values(x, params), voigt_eval(x, 2.0, 1.0))


def test_kernel_rejects_other_family_parameters():
    with pytest.raises(ParameterDomainError):
        LorentzLineShape().sample(np.zeros(3), LineShapeParams.voigt(1.0, 1.0))


def test_voigt_peak_value_is_below_lorentz():
    params = LineShapeParams.voigt(2.0, 1.0)
    assert get_line_shape(Family.VOIGT).peak_value(params) < 1.0 / (np.pi * 2.0)


@pytest.mark.parametrize("x", [0.0, 1.5, 4.0])
def test_voigt_matches_direct_convolution(x):
    value, _ = integrate.quad(
        lambda t: lorentz_eval(t, 1.0) * stats.norm.pdf(x - t),
        -np.inf,
        np.inf,
        epsabs=1e-14,
        epsrel=1e-12,
        limit=200,
    )
    assert voigt_eval(x, 1.0, 1.0) == pytest.approx(value, rel=1e-6)


@pytest.mark.parametrize("gamma", [0.5, 2.0, 10.0])
def test_voigt_with_vanishing_gaussian_width_is_lorentz(gamma):
    x = np.linspace(-10.0 * gamma, 10.0 * gamma, 81)
    peak = lorentz_eval(0.0, gamma)
    np.testing.assert_allclose(voigt_eval(x, gamma, 1e-4 * gamma), lorentz_eval(x, gamma), rtol=0, atol=1e-5 * peak)


def test_voigt_with_vanishing_lorentz_width_peaks_at_gaussian_value():
    assert voigt_eval(0.0, 1e-9, 1.0) == pytest.approx(1.0 / np.sqrt(2.0 * np.pi), abs=1e-6)
