"""Tests of the local probabilities P(d, rho, theta) and Q(d, theta)."""
import math

import numpy as np
import pytest

from conftest import binomial_sigma
from dbalign.errors import ParameterError, NumericalError
from dbalign.montecarlo.engine import estimate_dot_rate
from dbalign.theory import special
from dbalign.theory.special import cap_probability, q_prob, p_prob, local_probs, split_points

THETA_GRID = np.linspace(0.1, 0.9, 9)


class TestQProb:

    @pytest.mark.parametrize('theta', THETA_GRID)
    def test_circle_closed_form(self, theta):
        assert q_prob(2, theta) == pytest.approx(math.acos(theta) / math.pi, abs=1e-10)

    @pytest.mark.parametrize('d', [2, 5, 50, 10_000])
    def test_end_points(self, d):
        assert q_prob(d, 0.0) == pytest.approx(0.5, abs=1e-15)
        assert q_prob(d, 1.0) == 0.0

    def test_large_dimension_stays_finite(self):
        value = q_prob(10_000, 0.05)
        assert math.isfinite(value)
        assert 0.0 <= value < 1e-5

    def test_decreasing_in_theta(self):
        values = [q_prob(50, theta) for theta in THETA_GRID]
        assert all(later < earlier for earlier, later in zip(values, values[1:]))

    @pytest.mark.parametrize('d, theta', [(1, 0.5), (0, 0.5), (10, -0.1), (10, 1.1)])
    def test_out_of_range(self, d, theta):
        with pytest.raises(ParameterError):
            q_prob(d, theta)

    def test_cap_probability_symmetry(self):
        for s0 in (0.1, 0.4, 0.9):
            assert cap_probability(20, -s0) == pytest.approx(1.0 - cap_probability(20, s0), abs=1e-14)


class TestPProb:

    def test_decreasing_in_theta(self):
        values = [p_prob(50, 0.7, theta) for theta in THETA_GRID]
        assert all(later < earlier for earlier, later in zip(values, values[1:]))

    def test_large_dimension_concentrates(self):
        assert p_prob(500, 0.7, 0.5) >= 0.99

    def test_theta_one(self):
        assert p_prob(50, 0.7, 1.0) == 0.0

    @pytest.mark.parametrize('d', [10, 50, 200])
    @pytest.mark.parametrize('rho', [0.3, 0.6, 0.9])
    def test_dominates_q(self, d, rho):
        for theta in (0.2, 0.5, 0.8):
            assert p_prob(d, rho, theta) >= q_prob(d, theta)

    def test_zero_threshold_exceeds_half(self):
        assert 0.5 < p_prob(20, 0.3, 0.0) <= 1.0

    def test_two_dimensions(self):
        value = p_prob(2, 0.8, 0.5)
        assert q_prob(2, 0.5) < value < 1.0

    def test_local_probs(self):
        probs = local_probs(50, 0.7, 0.55)
        assert probs.p == pytest.approx(p_prob(50, 0.7, 0.55))
        assert probs.q == pytest.approx(q_prob(50, 0.55))

    @pytest.mark.parametrize('rho', [0.0, 1.0])
    def test_rho_out_of_range(self, rho):
        with pytest.raises(ParameterError):
            p_prob(50, rho, 0.5)

    def test_split_points(self):
        alpha, split_beta = split_points(0.6, 0.5)
        assert alpha == pytest.approx(0.64 / 0.36)
        assert split_beta == pytest.approx(0.64 / (0.36 * 0.75))
        assert split_points(0.6, 1.0)[1] == math.inf

    def test_quadrature_failure_raises(self, monkeypatch):
        def failing_quad(*args, **kwargs):
            return 0.5, 0.1, {'neval': 21}, 'The maximum number of subdivisions has been achieved.'

        monkeypatch.setattr(special.integrate, 'quad', failing_quad)
        with pytest.raises(NumericalError) as info:
            p_prob(50, 0.7, 0.55)
        assert info.value.achieved == pytest.approx(0.1)


def _assert_within(estimate, expected, trials, sigmas):
    # the sigma of the exact value, so an empty count matches a vanishing probability
    assert abs(estimate.rate - expected) <= sigmas * binomial_sigma(expected, trials) + 1e-15


class TestMonteCarloAgreement:
    TRIALS = 200_000

    @pytest.mark.parametrize('d, theta', [(10, 0.2), (10, 0.5), (50, 0.2), (50, 0.5)])
    def test_q_matches_simulation(self, d, theta):
        estimate = estimate_dot_rate(d, theta, self.TRIALS, seed=101)
        _assert_within(estimate, q_prob(d, theta), self.TRIALS, 4.0)

    @pytest.mark.parametrize('d, rho, theta', [(10, 0.3, 0.2), (10, 0.6, 0.5), (50, 0.7, 0.55), (50, 0.3, 0.2), (200, 0.6, 0.5)])
    def test_p_matches_simulation(self, d, rho, theta):
        estimate = estimate_dot_rate(d, theta, self.TRIALS, seed=202, rho=rho)
        _assert_within(estimate, p_prob(d, rho, theta), self.TRIALS, 4.0)


@pytest.mark.slow
class TestMonteCarloAcceptance:
    TRIALS = 1_000_000

    @pytest.mark.parametrize('d', [10, 50, 200])
    @pytest.mark.parametrize('theta', [0.2, 0.5, 0.8])
    def test_q(self, d, theta):
        estimate = estimate_dot_rate(d, theta, self.TRIALS, seed=303)
        _assert_within(estimate, q_prob(d, theta), self.TRIALS, 3.0)

    @pytest.mark.parametrize('d', [10, 50, 200])
    @pytest.mark.parametrize('rho', [0.3, 0.6, 0.9])
    @pytest.mark.parametrize('theta', [0.2, 0.5, 0.8])
    def test_p(self, d, rho, theta):
        estimate = estimate_dot_rate(d, theta, self.TRIALS, seed=404, rho=rho)
        _assert_within(estimate, p_prob(d, rho, theta), self.TRIALS, 3.0)
