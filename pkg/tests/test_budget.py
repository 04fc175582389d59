"""Closed-form analysis oracles.

The numeric anchors here were derived independently of the library code
(direct arithmetic on the defining formulas, exhaustive enumeration for
the probability recurrences) and then frozen.
"""

import itertools
import math
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qident import budget
from qident.budget import (
    AllZero,
    BudgetParams,
    DeceptionParams,
    NeverBreaksEven,
    NoRoot,
    binary_entropy,
    break_even_pulses,
    channel_mutual_info,
    corrected_len,
    critical_guess_probability,
    critical_guess_probability_finite,
    deception_probability_bound,
    deception_probability_exact,
    distilled_len,
    distilled_terms,
    error_rate_upper_bound,
    expected_sifted_len,
    guess_probability_from_info,
    info_limit,
    log_deception_probability_bound,
    min_initial_secret_bits,
    optimal_attack_info,
    optimize_intensity,
)


def brute_force_deception(p_list, k: int) -> float:
    """Independent oracle: full enumeration over correctness patterns."""
    total = 0.0
    n = len(p_list)
    for pattern in itertools.product((0, 1), repeat=n):  # 1 = wrong guess
        if sum(pattern) > k:
            continue
        prob = 1.0
        for wrong, p in zip(pattern, p_list):
            prob *= (1.0 - p) if wrong else p
        total += prob
    return total


class TestBinaryEntropy:
    def test_anchors(self):
        assert binary_entropy(0.5) == 1.0
        assert binary_entropy(0.0) == 0.0
        assert binary_entropy(1.0) == 0.0
        assert abs(binary_entropy(0.11) - 0.49992) < 5e-5

    @given(st.floats(0.001, 0.999))
    def test_symmetry(self, p):
        assert binary_entropy(p) == pytest.approx(binary_entropy(1 - p), abs=1e-12)


class TestDeceptionExact:
    def test_matches_enumeration(self, rng):
        for _ in range(25):
            n = int(rng.integers(1, 13))
            p_list = rng.random(n).tolist()
            k = int(rng.integers(0, n + 1))
            got = deception_probability_exact(p_list, k)
            want = brute_force_deception(p_list, k)
            assert abs(got - want) <= 1e-12

    def test_k_at_least_n_means_certainty(self, rng):
        p_list = rng.random(8).tolist()
        assert deception_probability_exact(p_list, 8) == pytest.approx(1.0)

    def test_perfect_guessing(self):
        assert deception_probability_exact([1.0] * 10, 0) == pytest.approx(1.0)

    def test_bound_dominates(self, rng):
        # the closed-form bound must never fall below the exact value
        # when all bits share the same guess probability in [1/2, 1]
        for _ in range(50):
            n = int(rng.integers(2, 13))
            eps = float(rng.uniform(0.0, 0.4))
            p_bar = float(rng.uniform(0.5, 1.0))
            k = DeceptionParams(n_is=n, eps=eps, p_bar=p_bar).k
            exact = deception_probability_exact([p_bar] * n, min(k, n))
            bound = deception_probability_bound(n, eps, p_bar)
            assert bound >= exact - 1e-12

    def test_headline_bound_value(self):
        # N=50, eps=0.01, p_bar=0.6: bound = 0.6**50 * 2 * 50
        log_b = log_deception_probability_bound(50, 0.01, 0.6)
        assert math.exp(log_b) == pytest.approx(0.6**50 * 100, rel=1e-9)


class TestCriticalGuessProbability:
    def test_anchor(self):
        assert critical_guess_probability(0.01) == pytest.approx(
            0.9390063792246772, abs=1e-12
        )
        assert critical_guess_probability(0.066) == pytest.approx(
            0.7490760339841308, abs=1e-12
        )

    def test_finite_n_converges(self):
        # large-sequence evaluation approaches the closed form
        for eps in (0.01, 0.03, 0.05, 0.08, 0.1):
            finite = critical_guess_probability_finite(eps, 1_000_000)
            assert abs(finite - critical_guess_probability(eps)) <= 1e-4

    def test_threshold_dichotomy(self):
        # below the threshold the impersonation bound decays with length,
        # above it the bound's log grows without limit
        eps = 0.02
        pc = critical_guess_probability(eps)
        for n in (100, 1_000, 10_000):
            below = log_deception_probability_bound(n, eps, pc - 0.02)
            above = log_deception_probability_bound(n, eps, min(1.0, pc + 0.02))
            assert below < log_deception_probability_bound(
                max(2, n // 10), eps, pc - 0.02
            )
            assert above > 0.0 or n < 200
        # decay really is geometric in n below threshold
        l1 = log_deception_probability_bound(1_000, eps, pc - 0.02)
        l2 = log_deception_probability_bound(10_000, eps, pc - 0.02)
        assert l2 < 5 * l1


class TestInformationCurves:
    def test_info_limit_anchor(self):
        assert info_limit(0.066) == pytest.approx(0.18726070575622122, abs=1e-9)

    def test_attack_info_guess_rate_anchor(self):
        # the optimal probe at one percent error guesses each bit with
        # probability very close to 0.6
        p_bar = guess_probability_from_info(optimal_attack_info(0.01))
        assert p_bar == pytest.approx(0.5994987437, abs=1e-6)

    def test_channel_info(self):
        assert channel_mutual_info(0.0) == 1.0
        assert channel_mutual_info(0.5) == 0.0

    def test_guess_probability_roundtrip(self):
        for p in (0.5, 0.6, 0.75, 0.9, 0.99):
            info = 1.0 - binary_entropy(p)
            assert guess_probability_from_info(info) == pytest.approx(p, abs=1e-9)

    def test_error_rate_upper_bound_anchor(self):
        # crossing of the default attack curve with the defendable limit
        assert error_rate_upper_bound() == pytest.approx(0.0661868653, abs=2e-4)

    def test_upper_bound_saturates_at_left_edge(self):
        # an attack that always beats the limit pins the bound at lo
        assert error_rate_upper_bound(attack_info=lambda e: 1.0, lo=0.02) == 0.02

    def test_upper_bound_no_crossing(self):
        with pytest.raises(NoRoot):
            error_rate_upper_bound(attack_info=lambda e: 0.0)


class TestBudgetFormulas:
    def test_min_initial_secret_bits_anchor(self):
        assert min_initial_secret_bits(6_250_000, 1000, 61) == 50_215

    def test_min_initial_secret_scales_with_position_width(self):
        # crossing a power of two widens every transmitted position field
        # by one bit, costing exactly two bits per sampled position
        assert (
            min_initial_secret_bits(2**23, 1000, 61)
            - min_initial_secret_bits(2**23 - 1, 1000, 61)
            == 2 * 1000
        )

    def test_expected_sifted_anchor(self, reference_params):
        assert expected_sifted_len(reference_params) == 300_000.0

    def test_corrected_anchor(self, reference_params):
        n_s = expected_sifted_len(reference_params)
        assert corrected_len(n_s, 0.004) == pytest.approx(279589.278992, abs=1e-4)
        assert corrected_len(100.0, 0.9) == 0.0  # clamped

    def test_distilled_terms_decomposition(self, reference_params):
        t = distilled_terms(reference_params)
        assert t.corrected == pytest.approx(279589.278992, abs=1e-4)
        assert t.beamsplit == pytest.approx(95238.095238, abs=1e-4)
        assert t.probe_attack == pytest.approx(60593.191717, abs=1e-4)
        assert t.five_sigma == pytest.approx(2458.645648, abs=1e-4)
        assert t.pa_compression == pytest.approx(33.748047, abs=1e-6)
        assert t.total == pytest.approx(121265.5983, abs=1e-2)
        assert t.total == t.corrected - t.beamsplit - t.probe_attack \
            - t.five_sigma - t.pa_compression

    def test_distilled_len_matches_terms(self, reference_params):
        assert distilled_len(reference_params) == distilled_terms(reference_params).total

    def test_rate_increases_with_n(self, reference_params):
        # fixed costs amortize: distilled bits per pulse grow with N
        rates = [
            distilled_len(replace(reference_params, n_pulses=n)) / n
            for n in (10_000, 100_000, 1_000_000, 6_250_000)
        ]
        assert rates == sorted(rates)

    def test_params_validate_tag_length(self):
        with pytest.raises(ValueError):
            BudgetParams(
                mu=0.8, eta_tl=0.63, eta_bob=0.35, eta_det=0.55,
                eps=0.004, eps_max=0.07, delta=1e-10, s=1000,
                a=30,  # too short for delta=1e-10
                n_pulses=1000,
            )

    def test_mu_warning(self, reference_params):
        with pytest.warns(UserWarning):
            distilled_len(replace(reference_params, mu=1.2))


class TestOptimization:
    def test_lossier_line_prefers_weaker_pulses(self, reference_params):
        # a lossier transmission line inflates the passive-tap penalty,
        # pushing the best intensity down
        lossy = replace(reference_params, eta_tl=0.2, eta=None)
        mu_lossy, _ = optimize_intensity(lossy)
        mu_ref, _ = optimize_intensity(reference_params)
        assert mu_lossy < mu_ref

    def test_all_zero(self, reference_params):
        dead = replace(reference_params, eps=0.3)  # error correction eats it all
        with pytest.raises(AllZero):
            optimize_intensity(dead)

    def test_ties_go_to_smaller_mu(self, reference_params):
        mu, rate = optimize_intensity(reference_params, mu_grid=[0.8, 0.8])
        assert mu == 0.8 and rate > 0

    def test_break_even_monotone_in_eps_max(self, reference_params):
        lo = break_even_pulses(reference_params)
        hi = break_even_pulses(replace(reference_params, eps_max=0.1))
        assert hi > lo

    def test_break_even_floor_with_zero_consumption(self, reference_params):
        n = break_even_pulses(
            reference_params, n_lo=2, consumption=lambda *a: 0
        )
        assert n == 2

    def test_break_even_never(self, reference_params):
        dead = replace(reference_params, eps=0.3)
        with pytest.raises(NeverBreaksEven):
            break_even_pulses(dead, n_hi=10_000_000)

    def test_break_even_is_a_crossing(self, reference_params):
        n_star = break_even_pulses(reference_params)

        def net(n):
            p = replace(reference_params, n_pulses=n)
            return distilled_len(p) - min_initial_secret_bits(
                n, reference_params.s, reference_params.a
            )

        assert net(n_star) >= 0
        assert net(int(n_star * 0.9)) < net(n_star)
