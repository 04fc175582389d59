"""Mutual identification with secret-key refuelling over a public channel.

One session consumes part of the shared secret pool to authenticate
three classical messages about a fresh quantum transmission, and - when
the estimated error rate is acceptable - distils the remaining sifted
bits into new shared secret that is appended to both pools.

Message flow (kinds in parentheses; B is the photon receiver):

    B -> A  POSITIONS (1)        2s detected positions, authenticated
    A -> B  BASES_AND_BITS (2)   A's basis and bit at each, authenticated
    B -> A  FINAL_VERDICT (3)    accept flag + mismatch count k, authenticated
    B -> A  BASIS_ANNOUNCE (5)   all detected positions with B's bases
    A -> B  COINCIDENCE (6)      basis-match mask over the announced list
            (interactive parity error correction, in process)
    A -> B  PA_SEED (7)          seed of the final compression hash
    either  ABORT (4)

Identification is mutual: each party proves possession of the pool by
authenticating at least one message, and every verification failure
aborts the session.  Authentication keys are drawn from the pool in
message order by both parties alike, and a key is consumed even when
the message it protects is rejected, so no key is ever reused.

Error estimation: B samples 2s detected positions blind to basis
matching; A discloses her basis and bit for each; B counts k mismatches
among the s_real basis-matched ones and accepts when k / s_real is at
most the Bayesian limit for a sample of s_real.  A repeats the same
threshold test once the basis announcement lets her count s_real
herself; a failed re-check (or any tampering with the unauthenticated
plumbing, kinds 5-7) can only spoil the refuelling, never forge an
identification.

The refuelled key length is the distilled-key budget evaluated at the
estimated error rate; refuelling is refused when that is non-positive
or exceeds the actually available sifted bits minus error-correction
leakage.

Wire format: 1 byte kind, 4-byte big-endian payload bit count, payload
zero-padded to whole bytes, then an 8-byte big-endian tag on kinds 1-3.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field, replace

import numpy as np

from . import auth
from .budget import BudgetParams, distilled_len, min_initial_secret_bits
from .channel import ChannelParams, EveParams, EveStrategy, QkdRun, run_qkd
from .core import (
    BitString,
    PoolExhausted,
    QidentError,
    SecretPool,
    make_rng,
    pack_uints,
    pointer_sync,
    random_bitstring,
    spawn_streams,
    strict_ceil,
    unpack_uints,
)
from .estimation import NoSolution, solve_eps_limit

__all__ = [
    "MsgKind",
    "WireMessage",
    "WireFormatError",
    "NonConvergence",
    "InsufficientDetections",
    "AdversaryScript",
    "Protocol2Result",
    "message_bit_lengths",
    "planned_key_consumption",
    "default_pool_bits",
    "select_subset_positions",
    "compute_out_len",
    "error_correct",
    "privacy_amplify",
    "sifting_mitm_script",
    "run_protocol2",
]


class MsgKind(enum.IntEnum):
    POSITIONS = 1
    BASES_AND_BITS = 2
    FINAL_VERDICT = 3
    ABORT = 4
    BASIS_ANNOUNCE = 5
    COINCIDENCE = 6
    PA_SEED = 7


AUTHENTICATED_KINDS = (MsgKind.POSITIONS, MsgKind.BASES_AND_BITS, MsgKind.FINAL_VERDICT)


class WireFormatError(QidentError):
    """Byte stream is not a well-formed wire message."""


class NonConvergence(QidentError):
    """Parity error correction failed to produce matching strings."""


class InsufficientDetections(QidentError):
    """Fewer detections than the error-estimation sample needs."""


@dataclass(frozen=True)
class WireMessage:
    kind: MsgKind
    payload: BitString
    tag: int | None = None

    def __post_init__(self):
        if (self.tag is not None) != (self.kind in AUTHENTICATED_KINDS):
            raise ValueError(f"kind {self.kind} has wrong tag presence")

    def to_bytes(self) -> bytes:
        head = bytes([self.kind]) + len(self.payload).to_bytes(4, "big")
        body = self.payload.to_bytes()
        tail = auth.tag_to_bytes(self.tag) if self.tag is not None else b""
        return head + body + tail

    @classmethod
    def from_bytes(cls, data: bytes) -> "WireMessage":
        if len(data) < 5:
            raise WireFormatError("truncated header")
        try:
            kind = MsgKind(data[0])
        except ValueError:
            raise WireFormatError(f"unknown message kind {data[0]}") from None
        n_bits = int.from_bytes(data[1:5], "big")
        n_body = (n_bits + 7) // 8
        n_tag = auth.TAG_BYTES if kind in AUTHENTICATED_KINDS else 0
        if len(data) != 5 + n_body + n_tag:
            raise WireFormatError("length field disagrees with frame size")
        payload = BitString.from_bytes(data[5 : 5 + n_body], n_bits)
        tag = auth.tag_from_bytes(data[5 + n_body :]) if n_tag else None
        return cls(kind, payload, tag)


@dataclass(frozen=True)
class AdversaryScript:
    """Complete adversary for one session: a quantum-channel model plus
    an optional classical tamper hook that may rewrite any wire message
    in transit (returning None leaves the message alone)."""

    eve: EveParams = EveParams()
    tamper: object | None = None
    name: str = ""


# -- message sizing and key accounting --------------------------------


def position_field_bits(n_pulses: int) -> int:
    """Width of one position field: strict_ceil(log2(n_pulses))."""
    return strict_ceil(math.log2(n_pulses))


def message_bit_lengths(n_pulses: int, s: int) -> dict[MsgKind, int]:
    """Payload bit lengths of the three authenticated messages."""
    w = position_field_bits(n_pulses)
    return {
        MsgKind.POSITIONS: 2 * s * w,
        MsgKind.BASES_AND_BITS: 4 * s,
        MsgKind.FINAL_VERDICT: 32,
    }


def planned_key_consumption(n_pulses: int, s: int) -> int:
    """Pool bits the three authentication keys consume, barring the
    ~2**-61 per-word rejection: word size times words_needed per message.

    Slightly above min_initial_secret_bits because each key covers whole
    encoding words (sentinel and group padding) rather than bare
    payload-plus-tag.
    """
    return sum(
        auth.WORD_BITS * auth.words_needed(n_bits)
        for n_bits in message_bit_lengths(n_pulses, s).values()
    )


def default_pool_bits(n_pulses: int, s: int) -> int:
    """Initial pool size used when the caller does not specify one:
    planned consumption plus eight words of rejection slack."""
    return planned_key_consumption(n_pulses, s) + 8 * auth.WORD_BITS


def select_subset_positions(
    detected_positions: np.ndarray, two_s: int, rng: np.random.Generator
) -> np.ndarray:
    """Uniform sorted sample of two_s detected positions, drawn blind to
    basis matching.  Raises InsufficientDetections when the run produced
    fewer detections than that."""
    detected_positions = np.asarray(detected_positions, dtype=np.int64)
    if detected_positions.size < two_s:
        raise InsufficientDetections(
            f"{detected_positions.size} detections cannot seed a "
            f"{two_s}-position sample"
        )
    return np.sort(rng.choice(detected_positions, size=two_s, replace=False))


# -- payload builders / parsers ----------------------------------------


def _build_positions(positions: np.ndarray, w: int) -> BitString:
    return pack_uints(positions, w)


def _parse_positions(payload: BitString, w: int, s: int, n_pulses: int) -> np.ndarray:
    if len(payload) != 2 * s * w:
        raise WireFormatError("sample message has wrong length")
    pos = unpack_uints(payload, w)
    if pos.size and (pos.max() >= n_pulses or np.any(np.diff(pos) <= 0)):
        raise WireFormatError("sample positions not strictly increasing in range")
    return pos


def _build_bases_bits(bases: np.ndarray, bits: np.ndarray) -> BitString:
    out = np.empty(2 * bases.size, dtype=np.uint8)
    out[0::2] = bases
    out[1::2] = bits
    return BitString(out)


def _parse_bases_bits(payload: BitString, s: int) -> tuple[np.ndarray, np.ndarray]:
    if len(payload) != 4 * s:
        raise WireFormatError("basis-and-bit message has wrong length")
    arr = payload.bits
    return arr[0::2].copy(), arr[1::2].copy()


def _build_verdict(accept: bool, k: int) -> BitString:
    if not 0 <= k < (1 << 16):
        raise ValueError("mismatch count does not fit in 16 bits")
    return (
        BitString.from01("1" if accept else "0")
        + BitString.zeros(15)
        + pack_uints([k], 16)
    )


def _parse_verdict(payload: BitString) -> tuple[bool, int]:
    if len(payload) != 32:
        raise WireFormatError("verdict message has wrong length")
    if payload[1:16].count_ones():
        raise WireFormatError("verdict reserved bits must be zero")
    return bool(payload[0]), int(unpack_uints(payload[16:32], 16)[0])


def _build_announce(positions: np.ndarray, bases: np.ndarray, w: int) -> BitString:
    n = positions.size
    rows = np.zeros((n, w + 1), dtype=np.uint8)
    shifts = np.arange(w - 1, -1, -1, dtype=np.int64)
    rows[:, :w] = (positions[:, None].astype(np.int64) >> shifts) & 1
    rows[:, w] = bases
    return BitString(rows.reshape(-1))


def _parse_announce(
    payload: BitString, w: int, n_pulses: int
) -> tuple[np.ndarray, np.ndarray]:
    if len(payload) % (w + 1):
        raise WireFormatError("announcement length not a whole number of entries")
    rows = payload.bits.reshape(-1, w + 1)
    weights = (1 << np.arange(w - 1, -1, -1, dtype=np.int64))
    pos = rows[:, :w].astype(np.int64) @ weights
    if pos.size and (pos.max() >= n_pulses or np.any(np.diff(pos) <= 0)):
        raise WireFormatError("announced positions not strictly increasing in range")
    return pos, rows[:, w].copy()


# -- interactive error correction --------------------------------------


def _bisect_fix(diff: np.ndarray, order: np.ndarray, bob: np.ndarray) -> int:
    """Binary-search one flipped bit inside an odd-parity segment.

    diff is bob ^ alice over the full string, order the segment's
    positions.  Returns the number of parity comparisons spent.
    """
    lo, hi = 0, order.size
    spent = 0
    while hi - lo > 1:
        mid = (lo + hi) // 2
        spent += 1
        if diff[order[lo:mid]].sum() & 1:
            hi = mid
        else:
            lo = mid
    j = order[lo]
    bob[j] ^= 1
    diff[j] ^= 1
    return spent + 1  # +1 for the segment's own parity announcement


def error_correct(
    alice: np.ndarray,
    bob: np.ndarray,
    eps_hint: float,
    rng,
    max_passes: int = 30,
    verify_rounds: int = 64,
    max_fixups: int = 256,
) -> tuple[np.ndarray, np.ndarray, int]:
    """Interactive parity error correction; returns (alice's string,
    corrected bob copy, parity bits disclosed).

    Phase 1: shuffled blocks of about 0.73/eps_hint bits exchange
    parities; odd blocks are repaired by bisection.  Block size doubles
    per pass until a pass is clean.  Phase 2: random-subset parities
    must match verify_rounds times in a row, each mismatch triggering
    one more bisection repair, which leaves a residual mismatch
    probability of at most 2**-verify_rounds.  Gives up with
    NonConvergence when the pass or fix-up caps are exceeded.
    """
    if alice.shape != bob.shape or alice.ndim != 1:
        raise ValueError("need two equal-length bit vectors")
    n = alice.size
    if n == 0:
        return alice.copy(), bob.copy(), 0
    bob = bob.copy()
    diff = (alice ^ bob).astype(np.uint8)
    leak = 0

    block = max(2, int(round(0.73 / max(eps_hint, 1.0 / n))))
    clean = False
    for _ in range(max_passes):
        order = rng.permutation(n)
        starts = np.arange(0, n, block)
        sums = np.add.reduceat(diff[order], starts)
        leak += starts.size
        odd = np.nonzero(sums & 1)[0]
        for b in odd:
            seg = order[starts[b] : starts[b] + block]
            leak += _bisect_fix(diff, seg, bob)
        if odd.size == 0:
            clean = True
            break
        block = min(n, block * 2)
    if not clean:
        raise NonConvergence(f"no clean pass within {max_passes} passes")

    streak = 0
    fixups = 0
    while streak < verify_rounds:
        mask = rng.random(n) < 0.5
        leak += 1
        if diff[mask].sum() & 1:
            subset = np.nonzero(mask)[0]
            leak += _bisect_fix(diff, subset, bob)
            streak = 0
            fixups += 1
            if fixups > max_fixups:
                raise NonConvergence("verification keeps finding mismatches")
        else:
            streak += 1
    return alice.copy(), bob, leak


# -- privacy amplification ---------------------------------------------


def _pack_bits_padded(bits: np.ndarray, n_bytes: int) -> np.ndarray:
    out = np.zeros(n_bytes, dtype=np.uint8)
    packed = np.packbits(bits)
    out[: packed.size] = packed
    return out


def privacy_amplify(bits: BitString, out_len: int, seed: BitString) -> BitString:
    """Compress bits to out_len via a random Toeplitz matrix over GF(2).

    The matrix diagonals are the bits of a generator seeded from the
    seed payload, so both parties reproduce the same matrix from the
    short announced seed.  An empty seed is an explicit test hook that
    returns the first out_len bits unchanged.
    """
    n_in = len(bits)
    if not 0 <= out_len <= n_in:
        raise ValueError("out_len must be in [0, input length]")
    if out_len == 0:
        return BitString.zeros(0)
    if len(seed) == 0:
        return bits[:out_len]
    rng = make_rng(int.from_bytes(seed.to_bytes(), "big"))
    diag = rng.integers(0, 2, size=n_in + out_len - 1, dtype=np.uint8)

    # T[i, j] = diag[(n_in - 1) + i - j]; row i is diag[i : i + n_in]
    # against the reversed input, so the product is 8 strided
    # byte-aligned sliding-window passes over packed arrays.
    n_bytes = (n_in + 7) // 8
    x = _pack_bits_padded(bits.bits[::-1], n_bytes)
    d_len = n_bytes + (out_len + 7) // 8 + 1
    shifted = [
        _pack_bits_padded(diag[s : s + 8 * d_len], d_len) for s in range(8)
    ]
    out = np.empty(out_len, dtype=np.uint8)
    chunk = 4096
    for s in range(8):
        rows = np.arange(s, out_len, 8)
        if rows.size == 0:
            continue
        view = np.lib.stride_tricks.as_strided(
            shifted[s],
            shape=(rows.size, n_bytes),
            strides=(1, 1),
            writeable=False,
        )
        acc = np.empty(rows.size, dtype=np.int64)
        for lo in range(0, rows.size, chunk):
            part = view[lo : lo + chunk] & x
            acc[lo : lo + chunk] = np.bitwise_count(part).sum(axis=1)
        out[rows] = (acc & 1).astype(np.uint8)
    return BitString(out)


def compute_out_len(params: BudgetParams, eps_est: float) -> int:
    """Refuelled key length: the distilled-key budget at the estimated
    error rate, rounded down."""
    return int(math.floor(distilled_len(replace(params, eps=eps_est))))


# -- adversary scripts ---------------------------------------------------


def sifting_mitm_script(seed: int = 0) -> AdversaryScript:
    """Full man-in-the-middle who runs the photon exchange separately
    with each party and then forges the classical messages.

    The quantum side is a full intercept-resend; the classical side
    rewrites every authenticated payload with random content and a
    random tag, which is the best a key-less middle party can do.  The
    honest parties defeat it at the first tag verification (or, were
    tags somehow guessed, at the error-rate verdict).
    """
    rng = make_rng(seed)

    def tamper(msg: WireMessage) -> WireMessage | None:
        if msg.kind not in AUTHENTICATED_KINDS:
            return None
        forged = random_bitstring(len(msg.payload), rng)
        tag = int(rng.integers(0, auth.M61, dtype=np.int64))
        return WireMessage(msg.kind, forged, tag)

    return AdversaryScript(
        eve=EveParams(strategy=EveStrategy.INTERCEPT_RESEND, fraction=1.0),
        tamper=tamper,
        name="sifting-mitm",
    )


# -- the session --------------------------------------------------------


@dataclass
class Protocol2Result:
    identified: bool
    aborted_at: str | None
    refueled: bool
    refuel_reason: str | None
    s_real: int
    k: int
    eps_est: float | None
    verdict_accept: bool
    alice_recheck: bool
    n_sifted: int
    n_key: int
    leak: int
    out_len: int
    consumed_alice: int
    consumed_bob: int
    alice_pool: SecretPool = field(repr=False)
    bob_pool: SecretPool = field(repr=False)
    distilled: BitString | None = field(repr=False, default=None)
    transcript: list[WireMessage] = field(repr=False, default_factory=list)

    @property
    def gained(self) -> int:
        return self.out_len if self.refueled else 0

    @property
    def net(self) -> int:
        return self.gained - self.consumed_alice


def _send(msg: WireMessage, tamper, transcript: list[WireMessage]) -> WireMessage:
    """Serialize, optionally tamper in transit, reparse at the receiver."""
    if tamper is not None:
        out = tamper(msg)
        if out is not None:
            msg = out
    msg = WireMessage.from_bytes(msg.to_bytes())
    transcript.append(msg)
    return msg


def run_protocol2(
    params: BudgetParams,
    seed=None,
    adversary: AdversaryScript | None = None,
    alice_pool: SecretPool | None = None,
    bob_pool: SecretPool | None = None,
    initial_pool_bits: int | None = None,
    pa_seed_bits: int = 128,
) -> Protocol2Result:
    """Simulate one full identification-plus-refuelling session.

    seed drives everything (quantum run, sampling, error correction,
    compression seed).  Callers may hand in the two parties' existing
    pools (they must mirror each other); pointers are synchronized
    first, and the session refuses to start on less than the minimum
    secret budget.  Without explicit pools, both parties start from
    identical fresh pools of initial_pool_bits random bits (default:
    planned consumption plus slack).
    """
    if adversary is None:
        adversary = AdversaryScript()
    eve, tamper = adversary.eve, adversary.tamper
    if params.a != auth.WORD_BITS:
        raise ValueError(
            f"authentication tag width {params.a} does not match the "
            f"{auth.WORD_BITS}-bit production field"
        )
    if (alice_pool is None) != (bob_pool is None):
        raise ValueError("provide both pools or neither")
    root = make_rng(seed)
    pool_rng, qkd_rng, proto_rng = spawn_streams(root, 3)

    n = params.n_pulses
    s = params.s
    w = position_field_bits(n)
    lengths = message_bit_lengths(n, s)
    if alice_pool is None:
        if initial_pool_bits is None:
            initial_pool_bits = default_pool_bits(n, s)
        shared = random_bitstring(initial_pool_bits, pool_rng)
        alice_pool, bob_pool = SecretPool(shared), SecretPool(shared)

    synced = pointer_sync(alice_pool.pointer, bob_pool.pointer)
    alice_pool.advance_to(synced)
    bob_pool.advance_to(synced)
    b_min = min_initial_secret_bits(n, s, params.a)
    if alice_pool.remaining < b_min or bob_pool.remaining < b_min:
        raise PoolExhausted(
            f"pools hold {min(alice_pool.remaining, bob_pool.remaining)} "
            f"unused bits, the session floor is {b_min}"
        )

    run: QkdRun = run_qkd(ChannelParams.from_budget(params), qkd_rng, eve)
    transcript: list[WireMessage] = []

    state = {
        "identified": False,
        "aborted_at": None,
        "refueled": False,
        "refuel_reason": None,
        "s_real": 0,
        "k": 0,
        "eps_est": None,
        "verdict_accept": False,
        "alice_recheck": False,
        "n_key": 0,
        "leak": 0,
        "out_len": 0,
        "distilled": None,
    }
    consumed_start = alice_pool.pointer

    def finish() -> Protocol2Result:
        return Protocol2Result(
            identified=state["identified"],
            aborted_at=state["aborted_at"],
            refueled=state["refueled"],
            refuel_reason=state["refuel_reason"],
            s_real=state["s_real"],
            k=state["k"],
            eps_est=state["eps_est"],
            verdict_accept=state["verdict_accept"],
            alice_recheck=state["alice_recheck"],
            n_sifted=run.n_sifted,
            n_key=state["n_key"],
            leak=state["leak"],
            out_len=state["out_len"],
            consumed_alice=alice_pool.pointer - consumed_start,
            consumed_bob=bob_pool.pointer - consumed_start,
            alice_pool=alice_pool,
            bob_pool=bob_pool,
            distilled=state["distilled"],
            transcript=transcript,
        )

    def abort(where: str) -> Protocol2Result:
        state["aborted_at"] = where
        transcript.append(WireMessage(MsgKind.ABORT, BitString.zeros(0)))
        return finish()

    det_idx = np.nonzero(run.bob_detected)[0]

    # authentication keys, drawn in message order by both parties alike
    def draw_keys(kind: MsgKind) -> tuple[tuple[int, ...], tuple[int, ...]]:
        n_words = auth.words_needed(lengths[kind])
        ka, _ = auth.key_from_pool(alice_pool, n_words)
        kb, _ = auth.key_from_pool(bob_pool, n_words)
        return ka, kb

    # B -> A: sample positions
    sample = select_subset_positions(det_idx, 2 * s, proto_rng)
    key_a, key_b = draw_keys(MsgKind.POSITIONS)
    payload = _build_positions(sample, w)
    msg = _send(
        WireMessage(MsgKind.POSITIONS, payload, auth.authenticate(payload, key_b)),
        tamper,
        transcript,
    )
    if not auth.verify(msg.payload, msg.tag, key_a):
        return abort("positions-auth")
    try:
        sample_at_alice = _parse_positions(msg.payload, w, s, n)
    except WireFormatError:
        return abort("positions-structure")

    # A -> B: her bases and bits at the sampled positions
    key_a, key_b = draw_keys(MsgKind.BASES_AND_BITS)
    payload = _build_bases_bits(
        run.alice_bases[sample_at_alice], run.alice_bits[sample_at_alice]
    )
    msg = _send(
        WireMessage(MsgKind.BASES_AND_BITS, payload, auth.authenticate(payload, key_a)),
        tamper,
        transcript,
    )
    if not auth.verify(msg.payload, msg.tag, key_b):
        return abort("bases-bits-auth")
    try:
        a_bases, a_bits = _parse_bases_bits(msg.payload, s)
    except WireFormatError:
        return abort("bases-bits-structure")

    # B compares at basis coincidences and renders the verdict
    matched = run.bob_bases[sample] == a_bases
    s_real = int(matched.sum())
    k = int((run.bob_bits[sample][matched] != a_bits[matched]).sum())
    state["s_real"], state["k"] = s_real, k
    accept = False
    if s_real > 0:
        state["eps_est"] = k / s_real
        try:
            accept = k / s_real <= solve_eps_limit(s_real, params.delta, params.eps_max)
        except NoSolution:
            accept = False
    state["verdict_accept"] = accept

    # B -> A: verdict
    key_a, key_b = draw_keys(MsgKind.FINAL_VERDICT)
    payload = _build_verdict(accept, k)
    msg = _send(
        WireMessage(MsgKind.FINAL_VERDICT, payload, auth.authenticate(payload, key_b)),
        tamper,
        transcript,
    )
    if not auth.verify(msg.payload, msg.tag, key_a):
        return abort("verdict-auth")
    try:
        accept_at_alice, k_at_alice = _parse_verdict(msg.payload)
    except WireFormatError:
        return abort("verdict-structure")

    # every authentication key verified: the peers are identified
    state["identified"] = True
    if not (accept and accept_at_alice):
        state["refuel_reason"] = "verdict-reject"
        return finish()

    # B -> A: all detected positions and bases (plumbing, unauthenticated)
    msg = _send(
        WireMessage(
            MsgKind.BASIS_ANNOUNCE, _build_announce(det_idx, run.bob_bases[det_idx], w)
        ),
        tamper,
        transcript,
    )
    try:
        ann_pos, ann_bases = _parse_announce(msg.payload, w, n)
    except WireFormatError:
        state["refuel_reason"] = "announce-structure"
        return finish()

    # A re-applies the acceptance test with her own view of s_real
    in_sample = np.isin(ann_pos, sample_at_alice)
    alice_matched = run.alice_bases[ann_pos] == ann_bases
    s_real_at_alice = int((in_sample & alice_matched).sum())
    recheck = False
    if s_real_at_alice > 0:
        try:
            recheck = (
                k_at_alice / s_real_at_alice
                <= solve_eps_limit(s_real_at_alice, params.delta, params.eps_max)
            )
        except NoSolution:
            recheck = False
    state["alice_recheck"] = recheck
    if not recheck:
        state["refuel_reason"] = "alice-recheck"
        return finish()

    # A -> B: coincidence mask over the announced list
    msg = _send(
        WireMessage(MsgKind.COINCIDENCE, BitString(alice_matched.astype(np.uint8))),
        tamper,
        transcript,
    )
    mask_at_bob = msg.payload.bits.astype(bool)
    if mask_at_bob.size != det_idx.size:
        state["refuel_reason"] = "coincidence-structure"
        return finish()

    # the refuelling key: basis-matched positions outside the disclosed sample
    alice_key_pos = ann_pos[alice_matched & ~in_sample]
    bob_key_pos = det_idx[mask_at_bob & ~np.isin(det_idx, sample)]
    alice_key = run.alice_bits[alice_key_pos]
    bob_key = run.bob_bits[bob_key_pos]
    state["n_key"] = int(alice_key.size)
    if alice_key.size != bob_key.size or alice_key.size == 0:
        state["refuel_reason"] = "no-key-bits"
        return finish()

    eps_est = state["eps_est"]
    try:
        _, bob_corrected, leak = error_correct(
            alice_key, bob_key, max(eps_est, 1e-4), proto_rng
        )
    except NonConvergence:
        state["refuel_reason"] = "ec-nonconvergence"
        return finish()
    state["leak"] = leak

    out_len = compute_out_len(params, eps_est)
    state["out_len"] = out_len
    if out_len <= 0:
        state["refuel_reason"] = "budget-nonpositive"
        return finish()
    if out_len > alice_key.size - leak:
        state["refuel_reason"] = "budget-exceeds-available"
        return finish()

    # A -> B: compression seed
    msg = _send(
        WireMessage(MsgKind.PA_SEED, random_bitstring(pa_seed_bits, proto_rng)),
        tamper,
        transcript,
    )
    alice_new = privacy_amplify(BitString(alice_key), out_len, msg.payload)
    bob_new = privacy_amplify(BitString(bob_corrected), out_len, msg.payload)
    if alice_new != bob_new:
        state["refuel_reason"] = "key-mismatch"
        return finish()

    alice_pool.refuel(alice_new)
    bob_pool.refuel(bob_new)
    state["refueled"] = True
    state["distilled"] = alice_new
    return finish()
