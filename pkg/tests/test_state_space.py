"""Test the Kalman filter, FFBS and the scalar updates against dense Gaussian oracles."""
import math

import numpy as np
import pytest
from scipy import integrate
from scipy.stats import beta as beta_dist

from fcam.core.exceptions import SamplerError
from fcam.models.schemas import HyperParams
from fcam.services.state_space import (
    AdaptiveStep,
    ARStatistics,
    baseline_posterior,
    ffbs_sample,
    gamma_log_accept_ratio,
    gamma_log_target,
    kalman_forward,
    sample_calcium_prior,
    update_gamma_mh,
    variance_posteriors,
)
from tests.conftest import make_state, make_trace


def dense_prior(A, gamma, tau2, C0):
    """Mean and covariance of (c_0..c_T) under the AR(1) prior."""
    T = len(A)
    G = np.zeros((T + 1, T + 1))
    for t in range(T + 1):
        for s in range(t + 1):
            G[t, s] = gamma ** (t - s)
    noise = np.diag([C0] + [tau2] * T)
    mean = G @ np.concatenate(([0.0], A))
    return mean, G @ noise @ G.T


def dense_posterior(y, A, b, gamma, sigma2, tau2, C0, upto=None):
    """Exact Gaussian conditioning of c on y_1..y_upto."""
    T = len(y)
    upto = T if upto is None else upto
    mean, cov = dense_prior(A, gamma, tau2, C0)
    obs = np.arange(1, upto + 1)
    S_cy = cov[:, obs]
    S_yy = cov[np.ix_(obs, obs)] + sigma2 * np.eye(upto)
    gain = np.linalg.solve(S_yy, S_cy.T).T
    post_mean = mean + gain @ (y[:upto] - b - mean[obs])
    post_cov = cov - gain @ S_cy.T
    return post_mean, post_cov


def random_instance(seed):
    r = np.random.default_rng(seed)
    T = 5
    params = dict(
        b=r.normal(0, 0.5),
        gamma=r.uniform(0.1, 0.95),
        sigma2=r.uniform(0.02, 0.5),
        tau2=r.uniform(0.01, 0.3),
    )
    A = np.where(r.random(T) < 0.4, r.gamma(8, 1 / 8, T), 0.0)
    y = r.normal(0, 1, T)
    C0 = r.uniform(0.5, 2.0)
    return y, A, params, C0


class TestKalmanFilter:
    """Test filtered moments against dense conditioning."""

    @pytest.mark.parametrize("seed", range(10))
    def test_filtered_moments_match_oracle(self, seed):
        y, A, params, C0 = random_instance(seed)
        trace = make_trace(y, np.zeros(len(y), dtype=int))
        state = make_state(len(y), 1, **params)
        cache = kalman_forward(trace, state, A, C0)
        for t in range(1, len(y) + 1):
            mean, cov = dense_posterior(y, A, C0=C0, upto=t, **params)
            assert cache.m[t - 1] == pytest.approx(mean[t], abs=1e-10)
            assert cache.C[t - 1] == pytest.approx(cov[t, t], abs=1e-10)

    def test_nonpositive_variance_rejected(self):
        trace = make_trace([0.0, 1.0], [0, 0])
        state = make_state(2, 1, sigma2=0.0)
        with pytest.raises(SamplerError):
            kalman_forward(trace, state, np.zeros(2), 1.0)


class TestFFBS:
    """Test backward sampling against the dense joint posterior."""

    def test_draws_match_oracle(self):
        y, A, params, C0 = random_instance(42)
        trace = make_trace(y, np.zeros(len(y), dtype=int))
        state = make_state(len(y), 1, **params)
        cache = kalman_forward(trace, state, A, C0)
        rng = np.random.default_rng(0)
        n = 100_000
        draws = np.array([ffbs_sample(cache, state, rng) for _ in range(n)])
        mean, cov = dense_posterior(y, A, C0=C0, **params)
        sd = np.sqrt(np.diag(cov))
        assert np.all(np.abs(draws.mean(axis=0) - mean) < 5 * sd / math.sqrt(n))
        rel = np.linalg.norm(np.cov(draws.T) - cov) / np.linalg.norm(cov)
        assert rel < 0.03

    def test_path_length(self, rng):
        trace = make_trace(np.zeros(8), np.zeros(8, dtype=int))
        state = make_state(8, 1)
        cache = kalman_forward(trace, state, np.zeros(8), 1.0)
        assert ffbs_sample(cache, state, rng).shape == (9,)

    def test_mismatched_cache_detected(self, rng):
        """A cache built under a different gamma gives negative backward variances."""
        trace = make_trace(np.zeros(6), np.zeros(6, dtype=int))
        cache = kalman_forward(trace, make_state(6, 1, gamma=0.05, tau2=1e-4, sigma2=1e-4), np.zeros(6), 1.0)
        with pytest.raises(SamplerError, match="negative backward variance"):
            ffbs_sample(cache, make_state(6, 1, gamma=0.99, tau2=1e-4, sigma2=1e-4), rng)


class TestPriorPath:
    def test_deterministic_limit(self, rng):
        A = np.array([0.0, 1.0, 0.0, 0.5])
        c = sample_calcium_prior(A, 0.5, 1e-20, 1e-20, rng)
        np.testing.assert_allclose(c, [0.0, 0.0, 1.0, 0.5, 0.75], atol=1e-8)


class TestScalarUpdates:
    """Test the conjugate updates of b and the variances."""

    def test_baseline_posterior(self):
        hyper = HyperParams(b0=0.5, B0=2.0)
        y = np.array([1.0, 2.0, 3.0])
        trace = make_trace(y, [0, 0, 0])
        c = np.array([0.0, 0.5, 0.5, 0.5])
        mean, var = baseline_posterior(trace, c, 0.25, hyper)
        precision = 1 / 2.0 + 3 / 0.25
        assert var == pytest.approx(1 / precision)
        assert mean == pytest.approx((0.5 / 2.0 + (0.5 + 1.5 + 2.5) / 0.25) / precision)

    def test_variance_posteriors(self, hyper):
        y = np.array([1.0, 0.0])
        trace = make_trace(y, [0, 0])
        c = np.array([0.0, 0.5, 0.5])
        A = np.array([0.5, 0.0])
        state = make_state(2, 1, b=0.0, gamma=0.5)
        (s_shape, s_rate), (t_shape, t_rate) = variance_posteriors(trace, c, A, state, hyper)
        assert s_shape == pytest.approx(hyper.h1sigma + 1.0)
        assert s_rate == pytest.approx(hyper.h2sigma + 0.5 * (0.25 + 0.25))
        assert t_shape == pytest.approx(hyper.h1tau + 1.0)
        # residuals: 0.5 - 0 - 0.5 = 0 and 0.5 - 0.25 - 0 = 0.25
        assert t_rate == pytest.approx(hyper.h2tau + 0.5 * 0.0625)


class TestGammaUpdate:
    """Test the logit random-walk MH step for gamma."""

    def test_statistics_reproduce_sse(self, rng):
        c = rng.normal(size=11)
        A = rng.random(10)
        stats = ARStatistics.from_path(c, A)
        g = 0.37
        direct = np.sum((c[1:] - g * c[:-1] - A) ** 2)
        assert stats.zz - 2 * g * stats.zx + g * g * stats.xx == pytest.approx(direct)

    def test_identity_proposal_accepts(self, hyper, rng):
        stats = ARStatistics.from_path(rng.normal(size=6), np.zeros(5))
        assert gamma_log_accept_ratio(0.4, 0.4, stats, 0.1, hyper) == 0.0

    def test_target_outside_unit_interval(self, hyper):
        stats = ARStatistics(zz=1.0, zx=0.5, xx=1.0)
        assert gamma_log_target(1.0, stats, 0.1, hyper) == -np.inf
        assert gamma_log_target(0.0, stats, 0.1, hyper) == -np.inf

    def test_chain_matches_quadrature_posterior(self, rng):
        hyper = HyperParams(h1gamma=2.0, h2gamma=2.0)
        path_rng = np.random.default_rng(5)
        T = 40
        A = np.zeros(T)
        c = np.zeros(T + 1)
        for t in range(1, T + 1):
            c[t] = 0.6 * c[t - 1] + path_rng.normal(0, 0.5)
        stats = ARStatistics.from_path(c, A)
        tau2 = 0.25

        def density(g):
            return math.exp(gamma_log_target(g, stats, tau2, hyper))

        norm_const = integrate.quad(density, 0, 1, limit=200)[0]
        exact = integrate.quad(lambda g: g * density(g), 0, 1, limit=200)[0] / norm_const

        state = make_state(T, 1, tau2=tau2, gamma=0.5)
        step = AdaptiveStep(log_step=math.log(0.5))
        step.freeze()
        draws = []
        for i in range(30_000):
            state.gamma, _ = update_gamma_mh(c, A, state, hyper, step, rng, iteration=i)
            draws.append(state.gamma)
        assert np.mean(draws[2000:]) == pytest.approx(exact, abs=0.01)

    def test_prior_only_chain_recovers_beta_prior(self, rng):
        """With no transitions to fit, the chain targets Beta(h1gamma, h2gamma)."""
        hyper = HyperParams(h1gamma=3.0, h2gamma=2.0)
        c = np.zeros(2)
        state = make_state(1, 1, tau2=1.0, gamma=0.5)
        step = AdaptiveStep(log_step=math.log(1.0))
        step.freeze()
        draws = []
        for i in range(40_000):
            state.gamma, _ = update_gamma_mh(c, np.zeros(1), state, hyper, step, rng, iteration=i)
            draws.append(state.gamma)
        assert np.mean(draws) == pytest.approx(beta_dist.mean(3.0, 2.0), abs=0.01)


class TestAdaptiveStep:
    def test_adapts_then_freezes(self):
        step = AdaptiveStep(log_step=0.0, target=0.3)
        for i in range(10):
            step.record(1.0, True, i)
        assert step.log_step > 0.0
        step.freeze()
        frozen = step.log_step
        step.record(0.0, False, 11)
        assert step.log_step == frozen
        assert step.proposed == 1
        assert step.acceptance_rate == 0.0
