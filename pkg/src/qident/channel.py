"""Monte-Carlo model of the lossy quantum channel used for refuelling.

One run sends n_pulses weak coherent pulses.  Alice draws a uniform bit
and basis per pulse; Bob draws a basis and detects each pulse with
probability 1 - exp(-eta * mu).  Detected pulses where the bases match
form the sifted set; matched detections flip with the intrinsic error
rate, mismatched detections yield a fair coin.  Everything is driven by
independent child streams of one seed, and the draw layout is fixed so
that passive eavesdropping leaves Bob's view bit-identical to a clean
run at the same seed.

Eavesdropper models:

* NONE - clean channel.
* INTERCEPT_RESEND - Eve measures a fraction of pulses in random bases
  and resends what she saw.  Resent pulses picked up in the wrong basis
  give Bob a fair coin, so a full intercept adds 25 percentage points of
  sifted error.
* BEAMSPLIT - passive multi-photon tap.  No disturbance; each sifted bit
  is known to Eve with probability fraction * mu / (4 * eta_tl), the
  multi-photon share that the line loss hands an adversary sitting at
  the transmitter output.
* PER_BIT_GUESS - abstract adversary who guesses each sifted bit with a
  fixed success probability; bookkeeping for deception-bound studies,
  no channel effect.
"""

from __future__ import annotations

import csv
import enum
import math
from dataclasses import dataclass

import numpy as np

from .budget import BudgetParams, binary_entropy
from .core import BitString, QidentError, make_rng, spawn_streams

__all__ = [
    "UnsupportedStrategy",
    "EveStrategy",
    "EveParams",
    "ChannelParams",
    "detection_probability",
    "expected_sifted_count",
    "QkdRun",
    "run_qkd",
    "sift",
    "transcript_rows",
    "write_transcript_csv",
]


class UnsupportedStrategy(QidentError):
    """No defined information accounting for this eavesdropping model."""


class EveStrategy(enum.Enum):
    NONE = "none"
    INTERCEPT_RESEND = "intercept-resend"
    BEAMSPLIT = "beamsplit"
    PER_BIT_GUESS = "per-bit-guess"


@dataclass(frozen=True)
class EveParams:
    """Adversary model for one run.

    fraction: share of pulses intercepted (INTERCEPT_RESEND) or share of
    the multi-photon tap exploited (BEAMSPLIT).
    guess_prob: per-bit success probability for PER_BIT_GUESS, in
    [0.5, 1].
    tap_know_prob: test hook overriding the derived BEAMSPLIT per-bit
    knowledge probability.
    """

    strategy: EveStrategy = EveStrategy.NONE
    fraction: float = 1.0
    guess_prob: float | None = None
    tap_know_prob: float | None = None

    def __post_init__(self):
        if not 0.0 <= self.fraction <= 1.0:
            raise ValueError("fraction must lie in [0, 1]")
        if self.strategy is EveStrategy.PER_BIT_GUESS:
            if self.guess_prob is None or not 0.5 <= self.guess_prob <= 1.0:
                raise ValueError("PER_BIT_GUESS needs guess_prob in [0.5, 1]")
        if self.tap_know_prob is not None and not 0.0 <= self.tap_know_prob <= 1.0:
            raise ValueError("tap_know_prob must lie in [0, 1]")


@dataclass(frozen=True)
class ChannelParams:
    """Physical parameters of one refuelling run."""

    n_pulses: int
    mu: float = 0.8
    eta_tl: float = 0.63
    eta_bob: float = 0.35
    eta_det: float = 0.55
    eps: float = 0.004
    eta: float | None = None  # pinned overall efficiency; else the product

    def __post_init__(self):
        if self.n_pulses < 1:
            raise ValueError("n_pulses must be positive")
        if self.mu <= 0:
            raise ValueError("mu must be positive")
        for name in ("eta_tl", "eta_bob", "eta_det"):
            v = getattr(self, name)
            if not 0.0 < v <= 1.0:
                raise ValueError(f"{name} must lie in (0, 1]")
        if not 0.0 <= self.eps < 0.5:
            raise ValueError("eps must lie in [0, 0.5)")
        if self.eta is not None and not 0.0 < self.eta <= 1.0:
            raise ValueError("eta must lie in (0, 1]")

    @property
    def eta_overall(self) -> float:
        if self.eta is not None:
            return self.eta
        return self.eta_tl * self.eta_bob * self.eta_det

    @classmethod
    def from_budget(cls, params: BudgetParams) -> "ChannelParams":
        return cls(
            n_pulses=int(params.n_pulses),
            mu=params.mu,
            eta_tl=params.eta_tl,
            eta_bob=params.eta_bob,
            eta_det=params.eta_det,
            eps=params.eps,
            eta=params.eta,
        )


def detection_probability(params: ChannelParams) -> float:
    """Poissonian click probability 1 - exp(-eta * mu)."""
    return -math.expm1(-params.eta_overall * params.mu)


def expected_sifted_count(params: ChannelParams) -> float:
    """Half the expected detections survive basis sifting."""
    return 0.5 * params.n_pulses * detection_probability(params)


class QkdRun:
    """Complete transcript of one simulated run.

    Per-pulse arrays cover all n_pulses slots; bob_bits is only
    meaningful where bob_detected is set.
    """

    def __init__(
        self,
        params: ChannelParams,
        eve: EveParams,
        alice_bits: np.ndarray,
        alice_bases: np.ndarray,
        bob_bases: np.ndarray,
        bob_detected: np.ndarray,
        bob_bits: np.ndarray,
        eve_known: np.ndarray | None,
    ):
        self.params = params
        self.eve = eve
        self.alice_bits = alice_bits
        self.alice_bases = alice_bases
        self.bob_bases = bob_bases
        self.bob_detected = bob_detected
        self.bob_bits = bob_bits
        self._eve_known = eve_known
        self.sifted_idx = np.flatnonzero(bob_detected & (alice_bases == bob_bases))

    @property
    def n_detected(self) -> int:
        return int(self.bob_detected.sum())

    @property
    def n_sifted(self) -> int:
        return int(self.sifted_idx.size)

    @property
    def alice_sifted(self) -> BitString:
        return BitString(self.alice_bits[self.sifted_idx])

    @property
    def bob_sifted(self) -> BitString:
        return BitString(self.bob_bits[self.sifted_idx])

    @property
    def error_count(self) -> int:
        idx = self.sifted_idx
        return int((self.alice_bits[idx] != self.bob_bits[idx]).sum())

    @property
    def error_rate(self) -> float:
        if self.n_sifted == 0:
            return 0.0
        return self.error_count / self.n_sifted

    def eve_known_sifted(self) -> np.ndarray:
        """Boolean mask over the sifted set: bits Eve knows outright.
        Only the BEAMSPLIT model tracks such a mask."""
        if self._eve_known is None:
            return np.zeros(self.n_sifted, dtype=bool)
        return self._eve_known[self.sifted_idx]

    def eve_information_bits(self) -> float:
        """Adversary knowledge of the sifted string, in bits.

        NONE gives 0; BEAMSPLIT counts tapped-and-matched bits;
        PER_BIT_GUESS charges 1 - H2(guess_prob) per sifted bit.  An
        intercept-resend adversary is detected through the error rate,
        not tolerated, so no knowledge figure is defined for it.
        """
        s = self.eve.strategy
        if s is EveStrategy.NONE:
            return 0.0
        if s is EveStrategy.BEAMSPLIT:
            return float(self.eve_known_sifted().sum())
        if s is EveStrategy.PER_BIT_GUESS:
            return self.n_sifted * (1.0 - binary_entropy(self.eve.guess_prob))
        raise UnsupportedStrategy(
            f"no information accounting for {s.value}; disturbance models "
            "are handled by the error estimate"
        )


def beamsplit_know_prob(params: ChannelParams, eve: EveParams) -> float:
    """Per-pulse probability that a passive tap learns the bit."""
    if eve.tap_know_prob is not None:
        return eve.tap_know_prob
    return min(1.0, eve.fraction * params.mu / (4.0 * params.eta_tl))


def run_qkd(
    params: ChannelParams,
    seed: int | np.random.Generator = 0,
    eve: EveParams = EveParams(),
) -> QkdRun:
    """Simulate one run.

    Alice, Bob and Eve each get their own child stream with a fixed
    draw layout, so Bob's arrays for a given seed are identical under
    NONE, BEAMSPLIT and PER_BIT_GUESS, and identification-side results
    never depend on whether a passive adversary was modelled.
    """
    n = params.n_pulses
    rng = seed if isinstance(seed, np.random.Generator) else make_rng(seed)
    rng_alice, rng_bob, rng_eve = spawn_streams(rng, 3)

    alice_bits = rng_alice.integers(0, 2, n, dtype=np.uint8)
    alice_bases = rng_alice.integers(0, 2, n, dtype=np.uint8)

    bob_bases = rng_bob.integers(0, 2, n, dtype=np.uint8)
    u_det = rng_bob.random(n)
    u_noise = rng_bob.random(n)
    coin = rng_bob.integers(0, 2, n, dtype=np.uint8)

    detected = u_det < detection_probability(params)
    matched = alice_bases == bob_bases

    # matched detections start as Alice's bit plus intrinsic noise;
    # mismatched detections are a fair coin
    flip = u_noise < params.eps
    bob_bits = np.where(matched, alice_bits ^ flip.astype(np.uint8), coin)

    eve_known: np.ndarray | None = None
    if eve.strategy is EveStrategy.INTERCEPT_RESEND:
        intercepted = rng_eve.random(n) < eve.fraction
        eve_bases = rng_eve.integers(0, 2, n, dtype=np.uint8)
        # Eve resends in her basis: when it matches Alice's the pulse is
        # faithful, otherwise Bob's matched-basis outcome is a fair coin
        # (reuse the noise draw as the coin: flip Alice's bit at 1/2)
        garbled = intercepted & (eve_bases != alice_bases) & matched
        refl = u_noise < 0.5
        bob_bits = np.where(
            garbled, alice_bits ^ refl.astype(np.uint8), bob_bits
        ).astype(np.uint8)
    elif eve.strategy is EveStrategy.BEAMSPLIT:
        eve_known = rng_eve.random(n) < beamsplit_know_prob(params, eve)

    bob_bits = np.where(detected, bob_bits, 0).astype(np.uint8)

    return QkdRun(
        params=params,
        eve=eve,
        alice_bits=alice_bits,
        alice_bases=alice_bases,
        bob_bases=bob_bases,
        bob_detected=detected,
        bob_bits=bob_bits,
        eve_known=eve_known,
    )


def sift(run: QkdRun, exclude=None) -> tuple[np.ndarray, BitString, BitString]:
    """Matched-basis detected positions and both parties' bits there.

    exclude drops the given pulse positions (e.g. the error-estimation
    sample) from the result.
    """
    idx = run.sifted_idx
    if exclude is not None:
        exclude = np.asarray(exclude, dtype=np.int64)
        idx = idx[~np.isin(idx, exclude)]
    return idx, BitString(run.alice_bits[idx]), BitString(run.bob_bits[idx])


def transcript_rows(run: QkdRun):
    """Per-pulse debug rows: (pulse, alice_bit, alice_basis, bob_basis,
    detected, bob_bit); bob_bit is blank when the pulse went undetected."""
    for i in range(run.params.n_pulses):
        det = bool(run.bob_detected[i])
        yield (
            i,
            int(run.alice_bits[i]),
            int(run.alice_bases[i]),
            int(run.bob_bases[i]),
            int(det),
            int(run.bob_bits[i]) if det else "",
        )


def write_transcript_csv(run: QkdRun, fp) -> None:
    writer = csv.writer(fp, lineterminator="\n")
    writer.writerow(
        ["pulse", "alice_bit", "alice_basis", "bob_basis", "detected", "bob_bit"]
    )
    writer.writerows(transcript_rows(run))
