"""Tests for the tempered SMC sampler."""
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, strategies as st

from src import smc
from src.exceptions import NormalizationError, ParameterDomainError, ShapeError
from src.models import LineShapeParams
from src.priors import DiscreteUniformPrior, PriorSpec, UniformPrior
from src.smc import (
    COVARIANCE_RIDGE,
    SmcConfig,
    ess,
    evaluate_particle,
    mh_mutate,
    next_kappa,
    quasi_log_likelihood,
    residual_resample,
    residual_resample_indices,
    reweight,
    run_smc,
    weighted_quantile,
)
from tests.conftest import make_posterior, three_peak_spectrum


def particles_with(log_likes, spectrum, weights=None):
    weights = np.full(len(log_likes), 1.0 / len(log_likes)) if weights is None else weights
    base = evaluate_particle(spectrum, LineShapeParams.lorentz(3.0), 20, 0.02, 1.0)
    return [
        replace(base, log_like=float(ll), weight=float(w))
        for ll, w in zip(log_likes, weights)
    ]


def test_quasi_log_likelihood_single_point():
    assert quasi_log_likelihood([0.0], [0.0], 1.0) == pytest.approx(-0.5 * np.log(2 * np.pi))


def test_quasi_log_likelihood_penalizes_residuals():
    y = np.array([1.0, 2.0, 3.0])
    exact = quasi_log_likelihood(y, y, 0.5)
    shifted = quasi_log_likelihood(y, y + 0.5, 0.5)
    assert shifted == pytest.approx(exact - 1.5)


def test_quasi_log_likelihood_validates_inputs():
    with pytest.raises(ShapeError):
        quasi_log_likelihood([0.0, 1.0], [0.0], 1.0)
    with pytest.raises(ParameterDomainError):
        quasi_log_likelihood([0.0], [0.0], 0.0)


def test_ess_extremes():
    assert ess(np.full(100, 0.01)) == pytest.approx(100.0)
    assert ess([1.0, 0.0, 0.0]) == pytest.approx(1.0)
    with pytest.raises(NormalizationError):
        ess([0.5, 0.6])


@given(st.lists(st.floats(min_value=1e-3, max_value=1e3), min_size=1, max_size=200))
def test_ess_lies_between_one_and_particle_count(raw):
    weights = np.asarray(raw) / np.sum(raw)
    value = ess(weights)
    assert 1.0 - 1e-9 <= value <= len(raw) + 1e-9


def test_next_kappa_jumps_to_one_for_flat_likelihood():
    assert next_kappa(0.0, np.zeros(50), np.full(50, 0.02), 0.9) == 1.0


def test_next_kappa_hits_target_ess_ratio():
    rng = np.random.default_rng(1)
    log_likes = rng.normal(scale=50.0, size=500)
    weights = np.full(500, 1.0 / 500)
    kappa = next_kappa(0.0, log_likes, weights, 0.9)
    assert 0.0 < kappa < 1.0

    updated = np.exp(kappa * log_likes - np.max(kappa * log_likes))
    updated /= updated.sum()
    assert ess(updated) / ess(weights) == pytest.approx(0.9, abs=1e-3)


def test_next_kappa_steps_shrink_as_eta_grows():
    rng = np.random.default_rng(2)
    log_likes = rng.normal(scale=50.0, size=300)
    weights = np.full(300, 1.0 / 300)
    steps = [next_kappa(0.2, log_likes, weights, eta) - 0.2 for eta in (0.5, 0.9, 0.999)]
    assert steps[0] >= steps[1] >= steps[2] > 0.0


def test_reweight_requires_increasing_kappa(noisy_spectrum):
    particles = particles_with([0.0, 1.0], noisy_spectrum)
    with pytest.raises(ParameterDomainError):
        reweight(particles, 0.5, 0.4)

    updated = reweight(particles, 0.0, 1.0)
    weights = np.array([p.weight for p in updated])
    np.testing.assert_allclose(weights, [1.0 / (1.0 + np.e), np.e / (1.0 + np.e)])


def test_residual_resample_copies_exact_multiples():
    rng = np.random.default_rng(0)
    indices = residual_resample_indices([0.5, 0.25, 0.25, 0.0], rng)
    np.testing.assert_array_equal(indices, [0, 0, 1, 2])


def test_residual_resample_is_unbiased():
    rng = np.random.default_rng(3)
    weights = rng.uniform(size=10)
    weights /= weights.sum()
    counts = np.zeros(10)
    repetitions = 20000
    for _ in range(repetitions):
        counts += np.bincount(residual_resample_indices(weights, rng), minlength=10)
    np.testing.assert_allclose(counts / (repetitions * 10), weights, atol=0.01)


def test_residual_resample_resets_weights(noisy_spectrum):
    particles = particles_with([0.0, 0.0, 0.0], noisy_spectrum, weights=[0.7, 0.2, 0.1])
    resampled = residual_resample(particles, np.random.default_rng(0))
    assert len(resampled) == 3
    assert all(p.weight == pytest.approx(1.0 / 3.0) for p in resampled)


def test_weighted_quantile_matches_unweighted_median():
    values = np.arange(11.0)
    assert weighted_quantile(values, np.ones(11), [0.5])[0] == pytest.approx(5.0)


def test_config_validation():
    assert SmcConfig(j_particles=100).j_min == 50
    with pytest.raises(ParameterDomainError):
        SmcConfig(eta=1.0)
    with pytest.raises(ParameterDomainError):
        SmcConfig(j_particles=10, j_min=10)


def test_point_prior_yields_single_tempering_step(noisy_spectrum):
    priors = PriorSpec(gamma_prior=UniformPrior(5.0, 5.0), m_prior=DiscreteUniformPrior(30, 30))
    posterior = run_smc(noisy_spectrum, priors, SmcConfig(j_particles=20, n_mcmc=2, noise_sd=0.02))

    assert posterior.kappa_schedule == [0.0, 1.0]
    np.testing.assert_array_equal(posterior.gammas, 5.0)
    np.testing.assert_array_equal(posterior.ms, 30)
    np.testing.assert_allclose(posterior.weights, 1.0 / 20)
    assert posterior.acceptance_history == [0.0]


@pytest.fixture
def small_run(noisy_spectrum):
    priors = PriorSpec.lorentz(gamma=(1.0, 10.0), m=(10, 20))
    config = SmcConfig(j_particles=30, eta=0.5, n_mcmc=2, noise_sd=0.02, rng_seed=11)
    return priors, config


def test_run_is_reproducible_for_any_thread_count(noisy_spectrum, small_run):
    priors, config = small_run
    first = run_smc(noisy_spectrum, priors, config)
    second = run_smc(noisy_spectrum, priors, config)
    threaded = run_smc(noisy_spectrum, priors, replace(config, threads=3))

    np.testing.assert_array_equal(first.gammas, second.gammas)
    np.testing.assert_array_equal(first.gammas, threaded.gammas)
    np.testing.assert_array_equal(first.ms, threaded.ms)
    assert first.kappa_schedule == threaded.kappa_schedule


def test_run_trace_is_monotone(noisy_spectrum, small_run):
    priors, config = small_run
    posterior = run_smc(noisy_spectrum, priors, config)

    kappas = posterior.kappa_schedule
    assert kappas[0] == 0.0 and kappas[-1] == 1.0
    assert all(b > a for a, b in zip(kappas, kappas[1:]))
    assert [record["kappa"] for record in posterior.trace] == kappas[1:]
    assert np.sum(posterior.weights) == pytest.approx(1.0)
    assert np.isfinite(posterior.log_evidence)
    assert all(1.0 <= g <= 10.0 for g in posterior.gammas)


def stacked_particles(grid, gammas, ms):
    template = make_posterior([np.zeros(grid.k)], grid).particles[0]
    return [
        replace(template, params=LineShapeParams.lorentz(g), m=int(m), weight=1.0 / len(gammas))
        for g, m in zip(gammas, ms)
    ]


def test_mutation_never_leaves_the_prior_support(grid, noisy_spectrum):
    priors = PriorSpec.lorentz(gamma=(1.0, 30.0), m=(10, 80))
    particles = stacked_particles(grid, [29.9] * 50, [80] * 50)
    config = SmcConfig(j_particles=50, n_mcmc=3, noise_sd=0.02, rng_seed=1)
    # proposal steps of about 1e4 in every coordinate
    scale = 1e8 / COVARIANCE_RIDGE

    result = mh_mutate(particles, 0.0, priors, config, noisy_spectrum, scale=scale, adapt=False)

    assert result.acceptance == 0.0
    assert all(p.params.gamma == 29.9 and p.m == 80 for p in result.particles)


def test_mutation_at_zero_temperature_accepts_every_move_inside_the_support(grid, noisy_spectrum):
    priors = PriorSpec.lorentz(gamma=(1.0, 30.0), m=(10, 80))
    particles = stacked_particles(grid, [5.0] * 40, [40] * 40)
    config = SmcConfig(j_particles=40, n_mcmc=4, noise_sd=0.02, rng_seed=2)

    result = mh_mutate(particles, 0.0, priors, config, noisy_spectrum, scale=1e-4, adapt=False)

    assert result.sweep_acceptance == [1.0] * 4
    assert all(1.0 <= p.params.gamma <= 30.0 and 10 <= p.m <= 80 for p in result.particles)
    assert any(p.m != 40 for p in result.particles)


def gaussian_width_log_like(gamma):
    return -0.5 * ((gamma - 8.0) / 1.5) ** 2


def reference_metropolis_chain(n_steps, step, rng):
    """Plain scalar random-walk Metropolis on the truncated Gaussian width target."""
    chain = np.empty(n_steps)
    current = 8.0
    for i in range(n_steps):
        proposal = current + step * rng.standard_normal()
        if 1.0 <= proposal <= 30.0:
            if np.log(rng.uniform()) < gaussian_width_log_like(proposal) - gaussian_width_log_like(current):
                current = proposal
        chain[i] = current
    return chain


def test_mutation_kernel_samples_a_known_target(grid, noisy_spectrum, monkeypatch):
    def evaluate(data, params, m, sigma_eps, weight):
        return replace(template, params=params, m=m, log_like=gaussian_width_log_like(params.gamma), weight=weight)

    template = stacked_particles(grid, [1.0], [10])[0]
    monkeypatch.setattr(smc, "evaluate_particle", evaluate)

    rng = np.random.default_rng(0)
    j = 400
    start = [
        evaluate(None, LineShapeParams.lorentz(g), int(m), 0.02, 1.0 / j)
        for g, m in zip(rng.uniform(2.0, 20.0, j), rng.integers(10, 81, j))
    ]
    priors = PriorSpec.lorentz(gamma=(1.0, 30.0), m=(10, 80))
    config = SmcConfig(j_particles=j, n_mcmc=60, noise_sd=0.02, rng_seed=3)

    result = mh_mutate(start, 1.0, priors, config, noisy_spectrum)
    gammas = np.array([p.params.gamma for p in result.particles])
    ms = np.array([p.m for p in result.particles])

    reference = reference_metropolis_chain(50000, 2.0, np.random.default_rng(1))[5000:]
    assert np.mean(gammas) == pytest.approx(np.mean(reference), abs=0.25)
    assert np.std(gammas) == pytest.approx(np.std(reference), abs=0.25)
    assert np.mean(reference) == pytest.approx(8.0, abs=0.1)
    # M carries no likelihood information, so it stays uniform on {10..80}
    assert np.mean(ms) == pytest.approx(45.0, abs=3.0)
    assert 0.05 < result.acceptance < 0.95


@pytest.mark.slow
def test_posterior_recovers_true_width():
    data = three_peak_spectrum()
    posterior = run_smc(data, PriorSpec.lorentz(), SmcConfig(j_particles=300, noise_sd=0.025, rng_seed=4))
    summary = posterior.summary()["gamma"]
    assert abs(summary["mean"] - 5.0) <= 1.0
    assert summary["q025"] <= 5.0 <= summary["q975"]
