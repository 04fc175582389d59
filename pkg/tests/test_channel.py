"""Channel simulation tests.

Statistical assertions use four-sigma margins around binomial
expectations at fixed seeds; structural assertions (passive adversaries
leaving the honest view untouched, draw-layout determinism) are exact.
"""

import io
import math

import numpy as np
import pytest

from qident.budget import BudgetParams, binary_entropy
from qident.channel import (
    ChannelParams,
    EveParams,
    EveStrategy,
    UnsupportedStrategy,
    beamsplit_know_prob,
    detection_probability,
    expected_sifted_count,
    run_qkd,
    sift,
    transcript_rows,
    write_transcript_csv,
)

N = 100_000
PARAMS = ChannelParams(n_pulses=N)


def within_4_sigma(count, n, p):
    return abs(count - n * p) <= 4.0 * math.sqrt(n * p * (1.0 - p)) + 1e-9


class TestParams:
    def test_detection_probability(self):
        p = detection_probability(PARAMS)
        eta = 0.63 * 0.35 * 0.55
        assert p == pytest.approx(-math.expm1(-eta * 0.8), rel=1e-12)
        assert 0.0 < p < 1.0

    def test_pinned_eta_wins(self):
        pinned = ChannelParams(n_pulses=10, eta=0.12)
        assert pinned.eta_overall == 0.12

    def test_from_budget_carries_pinned_eta(self):
        ch = ChannelParams.from_budget(BudgetParams.reference())
        assert ch.eta_overall == 0.12
        assert ch.n_pulses == 6_250_000
        assert ch.mu == 0.8

    def test_expected_sifted_count(self):
        assert expected_sifted_count(PARAMS) == pytest.approx(
            0.5 * N * detection_probability(PARAMS)
        )

    def test_validation(self):
        with pytest.raises(ValueError):
            ChannelParams(n_pulses=0)
        with pytest.raises(ValueError):
            ChannelParams(n_pulses=10, mu=0.0)
        with pytest.raises(ValueError):
            ChannelParams(n_pulses=10, eta_tl=1.5)
        with pytest.raises(ValueError):
            ChannelParams(n_pulses=10, eps=0.5)

    def test_eve_validation(self):
        with pytest.raises(ValueError):
            EveParams(fraction=1.5)
        with pytest.raises(ValueError):
            EveParams(strategy=EveStrategy.PER_BIT_GUESS)  # no guess_prob
        with pytest.raises(ValueError):
            EveParams(strategy=EveStrategy.PER_BIT_GUESS, guess_prob=0.4)
        with pytest.raises(ValueError):
            EveParams(tap_know_prob=1.2)


class TestHonestRun:
    def test_detection_and_sift_counts(self):
        run = run_qkd(PARAMS, seed=1)
        p = detection_probability(PARAMS)
        assert within_4_sigma(run.n_detected, N, p)
        assert within_4_sigma(run.n_sifted, N, 0.5 * p)

    def test_intrinsic_error_rate(self):
        run = run_qkd(PARAMS, seed=2)
        assert within_4_sigma(run.error_count, run.n_sifted, PARAMS.eps)

    def test_mismatched_basis_detections_are_fair_coins(self):
        run = run_qkd(PARAMS, seed=3)
        mask = run.bob_detected & (run.alice_bases != run.bob_bases)
        agree = int((run.alice_bits[mask] == run.bob_bits[mask]).sum())
        assert within_4_sigma(agree, int(mask.sum()), 0.5)

    def test_deterministic_by_seed(self):
        a, b = run_qkd(PARAMS, seed=9), run_qkd(PARAMS, seed=9)
        assert np.array_equal(a.bob_bits, b.bob_bits)
        assert np.array_equal(a.bob_detected, b.bob_detected)
        c = run_qkd(PARAMS, seed=10)
        assert not np.array_equal(a.alice_bits, c.alice_bits)

    def test_sifted_views_align(self):
        run = run_qkd(PARAMS, seed=4)
        assert len(run.alice_sifted) == len(run.bob_sifted) == run.n_sifted
        assert run.alice_sifted.hamming(run.bob_sifted) == run.error_count


class TestInterceptResend:
    def test_error_rate_scales_with_fraction(self):
        eps = PARAMS.eps
        for f, seed in ((0.0, 11), (0.5, 12), (1.0, 13)):
            eve = EveParams(strategy=EveStrategy.INTERCEPT_RESEND, fraction=f)
            run = run_qkd(PARAMS, seed=seed, eve=eve)
            want = (1.0 - f) * eps + f * (eps / 2.0 + 0.25)
            assert within_4_sigma(run.error_count, run.n_sifted, want), f

    def test_zero_fraction_identical_to_clean(self):
        clean = run_qkd(PARAMS, seed=14)
        idle = run_qkd(
            PARAMS,
            seed=14,
            eve=EveParams(strategy=EveStrategy.INTERCEPT_RESEND, fraction=0.0),
        )
        assert np.array_equal(clean.bob_bits, idle.bob_bits)

    def test_no_information_figure(self):
        eve = EveParams(strategy=EveStrategy.INTERCEPT_RESEND)
        run = run_qkd(ChannelParams(n_pulses=1000), seed=15, eve=eve)
        with pytest.raises(UnsupportedStrategy):
            run.eve_information_bits()


class TestPassiveAdversaries:
    def test_invisible_to_bob(self):
        clean = run_qkd(PARAMS, seed=5)
        for eve in (
            EveParams(strategy=EveStrategy.BEAMSPLIT),
            EveParams(strategy=EveStrategy.PER_BIT_GUESS, guess_prob=0.6),
        ):
            tapped = run_qkd(PARAMS, seed=5, eve=eve)
            assert np.array_equal(clean.alice_bits, tapped.alice_bits)
            assert np.array_equal(clean.bob_bases, tapped.bob_bases)
            assert np.array_equal(clean.bob_detected, tapped.bob_detected)
            assert np.array_equal(clean.bob_bits, tapped.bob_bits)

    def test_none_knows_nothing(self):
        run = run_qkd(PARAMS, seed=6)
        assert run.eve_information_bits() == 0.0
        assert run.eve_known_sifted().sum() == 0

    def test_beamsplit_knowledge_rate(self):
        eve = EveParams(strategy=EveStrategy.BEAMSPLIT)
        run = run_qkd(PARAMS, seed=7, eve=eve)
        know_p = beamsplit_know_prob(PARAMS, eve)
        assert know_p == pytest.approx(0.8 / (4.0 * 0.63))
        known = int(run.eve_known_sifted().sum())
        assert within_4_sigma(known, run.n_sifted, know_p)
        assert run.eve_information_bits() == known

    def test_beamsplit_override_hook(self):
        eve = EveParams(strategy=EveStrategy.BEAMSPLIT, tap_know_prob=0.5)
        assert beamsplit_know_prob(PARAMS, eve) == 0.5
        run = run_qkd(PARAMS, seed=8, eve=eve)
        assert within_4_sigma(run.eve_information_bits(), run.n_sifted, 0.5)

    def test_beamsplit_probability_saturates(self):
        eve = EveParams(strategy=EveStrategy.BEAMSPLIT)
        leaky = ChannelParams(n_pulses=10, eta_tl=0.01)
        assert beamsplit_know_prob(leaky, eve) == 1.0

    def test_per_bit_guess_information(self):
        eve = EveParams(strategy=EveStrategy.PER_BIT_GUESS, guess_prob=0.6)
        run = run_qkd(PARAMS, seed=9, eve=eve)
        want = run.n_sifted * (1.0 - binary_entropy(0.6))
        assert run.eve_information_bits() == pytest.approx(want, rel=1e-12)


class TestSift:
    def test_matches_run_views(self):
        run = run_qkd(PARAMS, seed=16)
        idx, alice, bob = sift(run)
        assert np.array_equal(idx, run.sifted_idx)
        assert alice == run.alice_sifted
        assert bob == run.bob_sifted

    def test_exclusion(self):
        run = run_qkd(PARAMS, seed=17)
        sample = run.sifted_idx[:100]
        idx, alice, bob = sift(run, exclude=sample)
        assert idx.size == run.n_sifted - 100
        assert not np.isin(idx, sample).any()
        assert len(alice) == len(bob) == idx.size
        assert np.array_equal(
            np.sort(np.concatenate([idx, sample])), run.sifted_idx
        )


class TestTranscript:
    def test_rows_cover_every_pulse(self):
        run = run_qkd(ChannelParams(n_pulses=500), seed=18)
        rows = list(transcript_rows(run))
        assert len(rows) == 500
        for pulse, a_bit, a_basis, b_basis, det, b_bit in rows:
            assert a_bit in (0, 1) and a_basis in (0, 1) and b_basis in (0, 1)
            if det:
                assert b_bit in (0, 1)
            else:
                assert b_bit == ""

    def test_csv_shape(self):
        run = run_qkd(ChannelParams(n_pulses=50), seed=19)
        buf = io.StringIO()
        write_transcript_csv(run, buf)
        lines = buf.getvalue().splitlines()
        assert lines[0] == "pulse,alice_bit,alice_basis,bob_basis,detected,bob_bit"
        assert len(lines) == 51
