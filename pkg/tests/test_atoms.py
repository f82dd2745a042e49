"""Test the spike-and-slab atom updates."""
import math

import numpy as np
import pytest
from scipy import integrate
from scipy.stats import gamma as gamma_dist
from scipy.stats import norm

from fcam.core.exceptions import QuadratureError
from fcam.models.domain import PartitionCounts
from fcam.models.schemas import HyperParams, SamplerOptions
from fcam.services import atoms
from fcam.services.atoms import ResidualStats
from tests.conftest import make_state, make_trace


def quad_log_marginal(residuals, s2, hA1=8.0, hA2=8.0):
    residuals = np.asarray(residuals, dtype=float)

    def integrand(A):
        return gamma_dist.pdf(A, hA1, scale=1 / hA2) * np.prod(norm.pdf(residuals, A, math.sqrt(s2)))

    upper = max(residuals.max(), 0.0) + 30.0
    value, _ = integrate.quad(
        integrand, 0, upper, points=[max(residuals.mean(), 1e-3), 0.1], epsabs=0, epsrel=1e-10, limit=400
    )
    return math.log(value)


class TestResidualStats:
    """Test sufficient statistics of atom residuals."""

    def test_grouped_stats_match_direct(self, rng):
        r = rng.normal(size=30)
        M = rng.integers(3, size=30)
        grouped = atoms.atom_residual_stats(r, M, 4)
        for l in range(3):
            direct = ResidualStats.from_residuals(r[M == l])
            assert grouped[l].n == direct.n
            assert grouped[l].mean == pytest.approx(direct.mean)
            assert grouped[l].ss == pytest.approx(direct.ss)
            assert grouped[l].max == direct.max
        assert grouped[3].n == 0

    def test_point_mass_loglik(self, rng):
        r = rng.normal(size=7)
        stats = ResidualStats.from_residuals(r)
        assert atoms.point_mass_loglik(stats, 0.3) == pytest.approx(norm.logpdf(r, 0, math.sqrt(0.3)).sum())


class TestSlabMarginal:
    """Test the quadrature slab marginal likelihood."""

    def test_empty_set_is_zero(self):
        assert atoms.slab_log_marginal([], 0.1, [], 8.0, 8.0) == 0.0

    def test_length_mismatch(self):
        with pytest.raises(ValueError, match="lengths differ"):
            atoms.slab_log_marginal([0.0, 1.0], 0.1, [1.0], 8.0, 8.0)

    def test_single_observation_matches_monte_carlo(self, rng):
        """y - mu = 1, s2 = 0.09, Ga(8, 8) slab."""
        ours = atoms.slab_log_marginal([0.0], 0.09, [1.0], 8.0, 8.0)
        A = rng.gamma(8.0, 1 / 8.0, size=400_000)
        mc = norm.pdf(1.0, A, 0.3).mean()
        assert math.exp(ours) == pytest.approx(mc, rel=0.01)
        assert ours == pytest.approx(quad_log_marginal([1.0], 0.09), abs=1e-7)

    @pytest.mark.parametrize(
        "residuals, s2",
        [
            ([1.2, 0.8, 1.1, 0.95], 0.05),
            ([0.01, -0.02, 0.03], 0.01),
            (list(np.linspace(2.5, 3.5, 25)), 0.2),
            ([-0.5], 0.5),
        ],
    )
    def test_matches_adaptive_quadrature(self, residuals, s2):
        mu = np.zeros(len(residuals))
        ours = atoms.slab_log_marginal(mu, s2, residuals, 8.0, 8.0)
        assert ours == pytest.approx(quad_log_marginal(residuals, s2), abs=1e-6)

    def test_offsets_enter_through_residuals(self):
        a = atoms.slab_log_marginal([0.5, 0.2], 0.1, [1.5, 1.0], 8.0, 8.0)
        b = atoms.slab_log_marginal([0.0, 0.0], 0.1, [1.0, 0.8], 8.0, 8.0)
        assert a == pytest.approx(b, abs=1e-12)

    def test_quadrature_without_doublings_raises(self):
        stats = ResidualStats.from_residuals([1.0, 1.1])
        with pytest.raises(QuadratureError, match="did not converge"):
            atoms.slab_log_marginal_stats(stats, 0.09, 8.0, 8.0, max_doublings=0)

    def test_mode_is_stationary(self):
        stats = ResidualStats.from_residuals([0.9, 1.0, 1.3])
        mode, curvature = atoms.slab_mode(stats, 0.09, 8.0, 8.0)
        h = 1e-6
        lp = atoms.slab_log_conditional(mode + h, stats, 0.09, 8.0, 8.0)
        lm = atoms.slab_log_conditional(mode - h, stats, 0.09, 8.0, 8.0)
        assert (lp - lm) / (2 * h) == pytest.approx(0.0, abs=1e-4)
        assert curvature > 0


class TestSlabIndicator:
    """Test the point-mass versus slab decision."""

    def test_point_mass_dominates_near_zero(self, rng, hyper, options):
        stats = ResidualStats.from_residuals(rng.normal(0.0, 0.1, size=40))
        log_odds = atoms.slab_log_odds(stats, 0.01, 0.5, hyper, options)
        assert log_odds < math.log(0.01 / 0.99)

    def test_large_residuals_favor_slab(self, hyper, options):
        stats = ResidualStats.from_residuals([1.0, 1.1, 0.9, 1.05])
        assert atoms.slab_log_odds(stats, 0.01, 0.1, hyper, options) > 10.0

    def test_p_one_always_slab(self, rng, hyper, options):
        trace = make_trace([0.01, -0.02, 0.0, 0.01], [0, 0, 0, 0])
        state = make_state(4, 1, Astar=[0.0, 0.5], M=[0, 0, 1, 1], p=1.0)
        counts = PartitionCounts.from_state(state, trace.g)
        for _ in range(20):
            Astar, _ = atoms.update_atoms(trace, state.c, state, counts, hyper, options, rng)
            assert np.all(Astar >= atoms.MIN_SLAB_AMPLITUDE)

    def test_p_zero_never_slab(self, rng, hyper, options):
        trace = make_trace([1.0, 1.2, 0.9, 1.1], [0, 0, 0, 0])
        state = make_state(4, 1, Astar=[0.0, 0.5], M=[0, 0, 1, 1], p=0.0)
        counts = PartitionCounts.from_state(state, trace.g)
        Astar, rate = atoms.update_atoms(trace, state.c, state, counts, hyper, options, rng)
        assert Astar.tolist() == [0.0, 0.0]
        assert math.isnan(rate)


class TestSlabAmplitude:
    """Test the reflected random-walk amplitude update."""

    def test_chain_mean_matches_quadrature(self, rng):
        residuals = np.array([0.9, 1.1, 1.0, 1.2, 0.8])
        s2 = 0.09
        stats = ResidualStats.from_residuals(residuals)

        def density(A):
            return gamma_dist.pdf(A, 8.0, scale=1 / 8.0) * np.prod(norm.pdf(residuals, A, 0.3))

        z, _ = integrate.quad(density, 0, 30.0, points=[1.0])
        first, _ = integrate.quad(lambda A: A * density(A), 0, 30.0, points=[1.0])
        mode, curvature = atoms.slab_mode(stats, s2, 8.0, 8.0)
        A, draws = mode, []
        for _ in range(20_000):
            A, _ = atoms.sample_slab_amplitude(stats, s2, 8.0, 8.0, rng, steps=1, start=(A, curvature))
            draws.append(A)
        assert np.mean(draws) == pytest.approx(first / z, rel=0.02)

    def test_counts_acceptances(self, rng):
        stats = ResidualStats.from_residuals([1.0, 1.0])
        A, accepted = atoms.sample_slab_amplitude(stats, 0.1, 8.0, 8.0, rng, steps=10)
        assert 0 <= accepted <= 10
        assert A >= atoms.MIN_SLAB_AMPLITUDE


class TestAtomUpdate:
    """Test the full atom refresh."""

    def test_every_atom_is_zero_or_positive(self, rng, hyper, options, small_trace):
        state = make_state(
            small_trace.T, small_trace.J, Astar=[0.0, 1.3, 0.4], M=np.r_[np.zeros(18, int), 1, 2], p=0.5
        )
        counts = PartitionCounts.from_state(state, small_trace.g)
        for _ in range(30):
            Astar, _ = atoms.update_atoms(small_trace, state.c, state, counts, hyper, options, rng)
            assert Astar.shape == (3,)
            assert np.all((Astar == 0.0) | (Astar >= atoms.MIN_SLAB_AMPLITUDE))

    def test_prior_only_draws_from_base_measure(self, rng, small_trace):
        hyper = HyperParams()
        options = SamplerOptions(prior_only=True)
        state = make_state(small_trace.T, small_trace.J, Astar=[0.0, 1.0], M=np.r_[np.zeros(19, int), 1], p=0.3)
        counts = PartitionCounts.from_state(state, small_trace.g)
        draws = np.array(
            [atoms.update_atoms(small_trace, state.c, state, counts, hyper, options, rng)[0] for _ in range(5000)]
        )
        assert np.mean(draws > 0) == pytest.approx(0.3, abs=0.02)
        assert draws[draws > 0].mean() == pytest.approx(1.0, abs=0.02)

    def test_base_measure_fraction(self, rng, hyper):
        draws = atoms.draw_from_base_measure(50_000, 0.25, hyper, rng)
        assert np.mean(draws > 0) == pytest.approx(0.25, abs=0.01)
        assert np.all((draws == 0) | (draws >= atoms.MIN_SLAB_AMPLITUDE))
