"""Three-pass mutual identification over a channel the adversary can
read but not usefully jam.

Both parties hold a synchronized stack of secret triads.  A session
burns exactly one triad: the initiator transmits the first part, the
responder answers with the second, the initiator closes with the third.
Each receiver compares what arrived against its own copy and accepts
when the Hamming distance is at most the tolerance k, chosen just above
the expected noise n_is * eps.  A used triad is never reused, even when
the session aborts, so replaying an observed pass is worthless: the
other side has already moved on to the next triad.

An impostor owns no valid triads.  It fabricates (or replays) its
transmissions and blindly accepts whatever it receives, since it has
nothing to check against; the honest party's tolerance test is what
stops it.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from .core import (
    BitString,
    PoolExhausted,
    SecretPool,
    Triad,
    make_rng,
    pointer_sync,
    random_bitstring,
    strict_ceil,
)

__all__ = [
    "Role",
    "IdentOutcome",
    "Protocol1Params",
    "Party1State",
    "Protocol1Result",
    "compare_with_tolerance",
    "make_shared_triads",
    "triads_from_pool",
    "fabricated_triads",
    "run_protocol1",
    "run_trials",
    "eve_impersonation_trial",
    "eve_impersonation_frequency",
    "expected_success_probability",
    "impostor_pass_probability",
]


class Role(enum.Enum):
    ALICE = "alice"  # initiator: sends parts 1 and 3
    BOB = "bob"  # responder: sends part 2


class IdentOutcome(enum.Enum):
    SUCCESS = "success"
    ABORT_PASS1 = "abort-pass1"
    ABORT_PASS2 = "abort-pass2"
    ABORT_PASS3 = "abort-pass3"


@dataclass(frozen=True)
class Protocol1Params:
    """Sequence length and design channel error rate."""

    n_is: int = 50
    eps: float = 0.01

    def __post_init__(self):
        if self.n_is < 1:
            raise ValueError("n_is must be positive")
        if not 0.0 <= self.eps < 0.5:
            raise ValueError("eps must lie in [0, 0.5)")

    @property
    def k(self) -> int:
        """Accept at Hamming distance up to k, the smallest integer
        strictly above the expected noise."""
        return strict_ceil(self.n_is * self.eps)

    @property
    def triad_bits(self) -> int:
        return 3 * self.n_is


def compare_with_tolerance(a: BitString, b: BitString, k: int) -> bool:
    """True iff the strings agree except for at most k positions."""
    if k < 0:
        raise ValueError("tolerance must be non-negative")
    return a.hamming(b) <= k


@dataclass
class Party1State:
    """One side's view: a triad stack and the index of the first unused
    triad.  An impostor (honest=False) carries fabricated triads and
    performs no checks."""

    triads: list[Triad]
    role: Role
    pointer: int = 0
    honest: bool = True

    @property
    def remaining(self) -> int:
        return len(self.triads) - self.pointer

    def next_triad(self) -> Triad:
        if self.pointer >= len(self.triads):
            raise PoolExhausted(
                f"{self.role.value} has no unused identification triads"
            )
        t = self.triads[self.pointer]
        self.pointer += 1
        return t

    def accepts(self, received: BitString, own: BitString, k: int) -> bool:
        if not self.honest:
            return True  # nothing to check against
        return compare_with_tolerance(received, own, k)


def make_shared_triads(
    n_triads: int, params: Protocol1Params, rng: np.random.Generator
) -> list[Triad]:
    """Fresh random triads; hand the same list object's copies to both
    parties to model an established shared secret."""
    return [
        Triad(
            random_bitstring(params.n_is, rng),
            random_bitstring(params.n_is, rng),
            random_bitstring(params.n_is, rng),
        )
        for _ in range(n_triads)
    ]


def triads_from_pool(
    pool: SecretPool, n_triads: int, params: Protocol1Params
) -> list[Triad]:
    """Carve triads out of a shared secret pool (3 * n_is bits each)."""
    out = []
    for _ in range(n_triads):
        out.append(
            Triad(
                pool.consume(params.n_is),
                pool.consume(params.n_is),
                pool.consume(params.n_is),
            )
        )
    return out


def fabricated_triads(
    n_triads: int, params: Protocol1Params, rng: np.random.Generator
) -> list[Triad]:
    """What an impostor brings: random guesses, one per session."""
    return make_shared_triads(n_triads, params, rng)


@dataclass
class Protocol1Result:
    outcome: IdentOutcome
    distances: dict[int, int]
    alice_pointer: int
    bob_pointer: int
    bits_consumed: int
    transcript: list[tuple[int, str, BitString, bool]] = field(default_factory=list)

    @property
    def success(self) -> bool:
        return self.outcome is IdentOutcome.SUCCESS


def _transmit(
    bits: BitString, eps: float, rng: np.random.Generator
) -> BitString:
    """Binary symmetric channel: each bit flips independently at eps."""
    if eps <= 0.0:
        return bits
    noise = (rng.random(len(bits)) < eps).astype(np.uint8)
    return BitString(bits.bits ^ noise)


def run_protocol1(
    alice: Party1State,
    bob: Party1State,
    params: Protocol1Params,
    rng: np.random.Generator | int = 0,
    channel_eps: float | None = None,
) -> Protocol1Result:
    """One identification session.

    Pointers are synchronized first (both adopt the maximum), then one
    triad is consumed on each side whatever the outcome.  channel_eps
    defaults to the design error rate in params.
    """
    rng = rng if isinstance(rng, np.random.Generator) else make_rng(rng)
    eps = params.eps if channel_eps is None else channel_eps
    k = params.k

    synced = pointer_sync(alice.pointer, bob.pointer)
    alice.pointer = synced
    bob.pointer = synced
    if alice.remaining < 1 or bob.remaining < 1:
        raise PoolExhausted("no unused identification triads after sync")

    ta = alice.next_triad()
    tb = bob.next_triad()
    transcript: list[tuple[int, str, BitString, bool]] = []
    distances: dict[int, int] = {}

    def finish(outcome: IdentOutcome) -> Protocol1Result:
        return Protocol1Result(
            outcome=outcome,
            distances=distances,
            alice_pointer=alice.pointer,
            bob_pointer=bob.pointer,
            bits_consumed=params.triad_bits,
            transcript=transcript,
        )

    # pass 1: Alice -> Bob, first part
    r1 = _transmit(ta.is1, eps, rng)
    ok = bob.accepts(r1, tb.is1, k)
    distances[1] = r1.hamming(tb.is1)
    transcript.append((1, "A->B", r1, ok))
    if not ok:
        return finish(IdentOutcome.ABORT_PASS1)

    # pass 2: Bob -> Alice, second part
    r2 = _transmit(tb.is2, eps, rng)
    ok = alice.accepts(r2, ta.is2, k)
    distances[2] = r2.hamming(ta.is2)
    transcript.append((2, "B->A", r2, ok))
    if not ok:
        return finish(IdentOutcome.ABORT_PASS2)

    # pass 3: Alice -> Bob, third part
    r3 = _transmit(ta.is3, eps, rng)
    ok = bob.accepts(r3, tb.is3, k)
    distances[3] = r3.hamming(tb.is3)
    transcript.append((3, "A->B", r3, ok))
    if not ok:
        return finish(IdentOutcome.ABORT_PASS3)

    return finish(IdentOutcome.SUCCESS)


def run_trials(
    params: Protocol1Params,
    n_trials: int,
    seed: int = 0,
    impostor: str | None = None,
    channel_eps: float | None = None,
) -> dict[IdentOutcome, int]:
    """Outcome counts over independent single-triad sessions.

    impostor replaces one side ("initiator" or "responder") with a
    fabricating adversary holding no valid triads.
    """
    if impostor not in (None, "initiator", "responder"):
        raise ValueError("impostor must be None, 'initiator' or 'responder'")
    rng = make_rng(seed)
    counts = {o: 0 for o in IdentOutcome}
    for _ in range(n_trials):
        shared = make_shared_triads(1, params, rng)
        if impostor == "initiator":
            alice = Party1State(fabricated_triads(1, params, rng), Role.ALICE, honest=False)
            bob = Party1State(shared, Role.BOB)
        elif impostor == "responder":
            alice = Party1State(shared, Role.ALICE)
            bob = Party1State(fabricated_triads(1, params, rng), Role.BOB, honest=False)
        else:
            alice = Party1State(list(shared), Role.ALICE)
            bob = Party1State(list(shared), Role.BOB)
        result = run_protocol1(alice, bob, params, rng, channel_eps)
        counts[result.outcome] += 1
    return counts


def eve_impersonation_trial(
    eve_bit_probs, params: Protocol1Params, rng: np.random.Generator
) -> bool:
    """One Monte-Carlo impersonation attempt against a single sequence.

    Eve guesses each bit of a fresh random sequence independently with
    the given per-bit success probabilities; the trial succeeds when her
    guess passes the tolerance test.
    """
    probs = np.asarray(eve_bit_probs, dtype=float)
    if probs.shape != (params.n_is,):
        raise ValueError(f"need exactly {params.n_is} per-bit probabilities")
    if probs.min() < 0.0 or probs.max() > 1.0:
        raise ValueError("probabilities must lie in [0, 1]")
    true_is = random_bitstring(params.n_is, rng)
    wrong = (rng.random(params.n_is) >= probs).astype(np.uint8)
    guess = BitString(true_is.bits ^ wrong)
    return compare_with_tolerance(guess, true_is, params.k)


def eve_impersonation_frequency(
    eve_bit_probs,
    params: Protocol1Params,
    n_trials: int,
    rng: np.random.Generator | int = 0,
    chunk: int = 100_000,
) -> float:
    """Vectorized success frequency of eve_impersonation_trial over
    n_trials attempts."""
    rng = rng if isinstance(rng, np.random.Generator) else make_rng(rng)
    probs = np.asarray(eve_bit_probs, dtype=float)
    if probs.ndim != 1 or probs.size != params.n_is:
        raise ValueError(f"need exactly {params.n_is} per-bit probabilities")
    k = params.k
    hits = 0
    done = 0
    while done < n_trials:
        m = min(chunk, n_trials - done)
        wrong_counts = (rng.random((m, params.n_is)) >= probs).sum(axis=1)
        hits += int((wrong_counts <= k).sum())
        done += m
    return hits / n_trials


def expected_success_probability(
    params: Protocol1Params, channel_eps: float | None = None
) -> float:
    """Honest-case success rate: all three passes survive the noise."""
    eps = params.eps if channel_eps is None else channel_eps
    per_pass = float(stats.binom.cdf(params.k, params.n_is, eps))
    return per_pass**3


def impostor_pass_probability(params: Protocol1Params) -> float:
    """Chance a fabricated sequence slips under the tolerance of one
    check: the binomial half-chance tail."""
    return float(stats.binom.cdf(params.k, params.n_is, 0.5))
