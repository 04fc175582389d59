"""Unconditionally secure message authentication from shared secret bits.

A message is encoded as a vector c of d elements of GF(p) whose first
element is the constant 1; the key is a uniform vector r of the same
length; the tag is the inner product r . c mod p.  For any two distinct
messages and any observed tag, exactly p**(d - 1) keys remain
consistent, so a substitution forgery succeeds with probability exactly
1/p regardless of the forger's computing power.

Production modulus is the Mersenne prime 2**61 - 1: one key word is 61
bits, a 739-word key is 45,079 bits, and messages up to 45,017 bits are
accepted.

Bit-exact message encoding
--------------------------
Let w = p.bit_length() (61 for the production modulus).  The message
bits are split big-endian into w-bit groups, the last group zero-padded.
Group values below p - 1 map to one word each.  The two group values
that cannot travel as-is - all ones (congruent to 0 mod p for the
Mersenne modulus, hence ambiguous) and p - 1 itself, which is reserved
as the escape marker ESC - are emitted as the two-word escape sequence
(ESC, value - (p - 1)).  The word vector is the constant 1, then the
groups, then zero words up to d.  An empty message is therefore
(1, 0, 0, ...).  Zero padding makes the map injective per message
length, not globally; decode_message takes the length as context, and
protocol messages have kind-fixed lengths.
"""

from __future__ import annotations

import math

import numpy as np

from .core import BitString, PoolExhausted, QidentError, SecretPool

__all__ = [
    "M61",
    "WORD_BITS",
    "PRODUCTION_WORDS",
    "PRODUCTION_KEY_BITS",
    "AuthParams",
    "MessageTooLong",
    "DecodeError",
    "BadKey",
    "words_needed",
    "max_message_bits",
    "encode_message",
    "decode_message",
    "key_from_pool",
    "key_from_bits",
    "tag_message",
    "authenticate",
    "verify",
    "tag_to_bytes",
    "tag_from_bytes",
    "format_vector_line",
    "parse_vector_line",
]

M61 = (1 << 61) - 1
WORD_BITS = 61
PRODUCTION_WORDS = 739
PRODUCTION_KEY_BITS = PRODUCTION_WORDS * WORD_BITS  # 45_079

TAG_BYTES = 8


class MessageTooLong(QidentError):
    """Message (after escaping) does not fit in the word budget."""


class DecodeError(QidentError):
    """Word vector is not a valid encoding of any message of this length."""


class BadKey(QidentError):
    """Key vector has the wrong length or an out-of-range word."""


def _is_prime(n: int) -> bool:
    # deterministic Miller-Rabin for anything this module will ever see
    if n < 2:
        return False
    for q in (2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37):
        if n % q == 0:
            return n == q
    d, r = n - 1, 0
    while d % 2 == 0:
        d //= 2
        r += 1
    for base in (2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37):
        x = pow(base, d, n)
        if x in (1, n - 1):
            continue
        for _ in range(r - 1):
            x = x * x % n
            if x == n - 1:
                break
        else:
            return False
    return True


def _check_modulus(p: int) -> int:
    if p < 2 or not _is_prime(p):
        raise ValueError(f"modulus {p} is not prime")
    return p.bit_length()


def _check_encoding_modulus(p: int) -> int:
    # the escape sequence (p-1, v-(p-1)) must itself fit in the field:
    # max group value 2**w - 1 needs 2**w - p <= p - 1.  Among primes
    # only p = 2 fails; tagging still works there, bit encoding does not.
    w = _check_modulus(p)
    if (1 << w) > 2 * p - 1:
        raise ValueError(f"modulus {p} cannot carry the escape encoding")
    return w


class AuthParams:
    """Field modulus p (prime) and word count d (>= 2) of one key."""

    __slots__ = ("p", "d")

    def __init__(self, p: int = M61, d: int = PRODUCTION_WORDS):
        _check_modulus(p)
        if d < 2:
            raise ValueError("need at least two words (sentinel + payload)")
        self.p = p
        self.d = d

    @property
    def word_bits(self) -> int:
        return self.p.bit_length()

    @property
    def key_bits(self) -> int:
        """Nominal key length; rejection may consume slightly more."""
        return self.d * self.word_bits

    @property
    def max_message_bits(self) -> int:
        return max_message_bits(self.d, self.p)

    def __repr__(self) -> str:
        return f"AuthParams(p={self.p}, d={self.d})"

    def __eq__(self, other) -> bool:
        return isinstance(other, AuthParams) and (self.p, self.d) == (other.p, other.d)


def words_needed(n_bits: int, p: int = M61) -> int:
    """Smallest word count whose cap admits an n_bits message:
    one sentinel word plus ceil((n_bits + 1) / w) groups, at least two.

    Escapes can enlarge a specific message beyond this (probability
    about d * 2**(1-w) for uniform data); encode_message raises
    MessageTooLong in that case rather than overrunning the key.
    """
    w = _check_encoding_modulus(p)
    if n_bits < 0:
        raise ValueError("n_bits must be non-negative")
    return max(2, 1 + math.ceil((n_bits + 1) / w))


def max_message_bits(n_words: int, p: int = M61) -> int:
    """Longest accepted message: w * (n_words - 1) - 1 bits.

    45,017 bits at the production parameterization.
    """
    w = _check_encoding_modulus(p)
    if n_words < 2:
        raise ValueError("need at least two words (sentinel + payload)")
    return w * (n_words - 1) - 1


def _group_values(bits: BitString, w: int) -> list[int]:
    """Big-endian w-bit group values, the last group zero-padded."""
    padded = bits.bits.tolist()
    padded += [0] * (-len(padded) % w)
    out = []
    for i in range(0, len(padded), w):
        v = 0
        for b in padded[i : i + w]:
            v = (v << 1) | b
        out.append(v)
    return out


def encode_message(bits: BitString, n_words: int, p: int = M61) -> tuple[int, ...]:
    """Encode a message as exactly n_words field elements; see module
    docstring for the bit-exact layout."""
    w = _check_encoding_modulus(p)
    if n_words < 2:
        raise ValueError("need at least two words (sentinel + payload)")
    if len(bits) > max_message_bits(n_words, p):
        raise MessageTooLong(
            f"{len(bits)} bits exceed the {max_message_bits(n_words, p)}-bit cap"
        )
    esc = p - 1
    out = [1]
    for v in _group_values(bits, w):
        if v >= esc:
            out.append(esc)
            out.append(v - esc)
        else:
            out.append(v)
    if len(out) > n_words:
        raise MessageTooLong(
            f"{len(bits)} bits need {len(out)} words after escaping, "
            f"only {n_words} available"
        )
    out.extend([0] * (n_words - len(out)))
    return tuple(out)


def decode_message(words, msg_len: int, p: int = M61) -> BitString:
    """Invert encode_message for a message of known length msg_len.

    Message lengths are fixed per protocol message kind, so the length
    is context, not payload.  Every structural property of the encoding
    is checked; violations raise DecodeError.
    """
    w = _check_encoding_modulus(p)
    if msg_len < 0:
        raise ValueError("msg_len must be non-negative")
    words = tuple(int(x) for x in words)
    if any(x < 0 or x >= p for x in words):
        raise DecodeError("word out of field range")
    if not words or words[0] != 1:
        raise DecodeError("missing sentinel word")
    esc = p - 1
    n_groups = math.ceil(msg_len / w)
    values = []
    i = 1
    while len(values) < n_groups:
        if i >= len(words):
            raise DecodeError("word vector too short for this message length")
        v = words[i]
        if v == esc:
            if i + 1 >= len(words):
                raise DecodeError("dangling escape marker")
            v = esc + words[i + 1]
            if v > (1 << w) - 1:
                raise DecodeError("escaped value out of group range")
            i += 2
        else:
            i += 1
        values.append(v)
    if any(x != 0 for x in words[i:]):
        raise DecodeError("nonzero padding words")
    bits = np.zeros(n_groups * w, dtype=np.uint8)
    for g, v in enumerate(values):
        for j in range(w):
            bits[g * w + j] = (v >> (w - 1 - j)) & 1
    if bits[msg_len:].any():
        raise DecodeError("nonzero padding bits")
    return BitString(bits[:msg_len])


def _draw_words(next_value, n_words: int, p: int, w: int) -> tuple[tuple[int, ...], int]:
    # rejection keeps the words exactly uniform on [0, p); for the
    # Mersenne modulus only the all-ones group is ever rejected
    out: list[int] = []
    consumed = 0
    while len(out) < n_words:
        v = next_value()
        consumed += w
        if v < p:
            out.append(v)
    return tuple(out), consumed


def _bits_value(bits: BitString) -> int:
    v = 0
    for b in bits.bits.tolist():
        v = (v << 1) | b
    return v


def key_from_pool(
    pool: SecretPool, n_words: int, p: int = M61
) -> tuple[tuple[int, ...], int]:
    """Consume w-bit groups from the shared pool until n_words valid key
    words are drawn; returns (key, bits consumed).  Both parties run
    this on identical pools, so they reject the same groups and consume
    the same number of bits.  Raises PoolExhausted when the pool runs
    dry mid-draw."""
    w = _check_modulus(p)
    return _draw_words(lambda: _bits_value(pool.consume(w)), n_words, p, w)


def key_from_bits(
    bits: BitString, n_words: int, p: int = M61
) -> tuple[tuple[int, ...], int]:
    """key_from_pool against a fixed bit supply; returns (key, bits
    consumed).  Raises PoolExhausted if the supply runs out before
    n_words words survive rejection."""
    w = _check_modulus(p)
    pos = 0

    def next_value() -> int:
        nonlocal pos
        if pos + w > len(bits):
            raise PoolExhausted(
                f"{len(bits)} bits exhausted before {n_words} words drawn"
            )
        v = _bits_value(bits[pos : pos + w])
        pos += w
        return v

    return _draw_words(next_value, n_words, p, w)


def _check_key(key, n_words: int, p: int) -> tuple[int, ...]:
    key = tuple(int(x) for x in key)
    if len(key) != n_words:
        raise BadKey(f"key has {len(key)} words, message vector has {n_words}")
    if any(x < 0 or x >= p for x in key):
        raise BadKey("key word out of field range")
    return key


def tag_message(key, msg_words, p: int = M61) -> int:
    """Inner product of key and message vectors over GF(p); exact
    big-integer arithmetic, no overflow at any word size."""
    msg_words = tuple(int(x) for x in msg_words)
    key = _check_key(key, len(msg_words), p)
    return sum(r * c for r, c in zip(key, msg_words)) % p


def authenticate(bits: BitString, key, p: int = M61) -> int:
    """Tag for a message given a key vector (its length sets the word
    budget)."""
    return tag_message(key, encode_message(bits, len(tuple(key)), p), p)


def verify(bits: BitString, tag: int, key, p: int = M61) -> bool:
    """True iff tag matches the message under this key."""
    try:
        return authenticate(bits, key, p) == int(tag)
    except MessageTooLong:
        return False


def tag_to_bytes(tag: int) -> bytes:
    """Tag as a fixed 8-byte big-endian field (61 significant bits,
    top 3 bits zero)."""
    if not 0 <= tag < M61:
        raise ValueError("tag out of range for the production modulus")
    return int(tag).to_bytes(TAG_BYTES, "big")


def tag_from_bytes(data: bytes) -> int:
    if len(data) != TAG_BYTES:
        raise ValueError(f"tag field must be {TAG_BYTES} bytes")
    tag = int.from_bytes(data, "big")
    if tag >= M61:
        raise ValueError("tag exceeds the production modulus")
    return tag


# -- test-vector file format -------------------------------------------
#
# One vector per line, whitespace-separated:
#   p  d  key_digits_hex  msg  tag_hex
# key_digits_hex concatenates all d key words as fixed-width hex
# (ceil(w/4) digits each); msg is BitString text ("<bits>:<hex>");
# tag_hex is the tag value in the same fixed width.


def _hex_width(p: int) -> int:
    return (p.bit_length() + 3) // 4


def format_vector_line(params: AuthParams, key, msg: BitString, tag: int) -> str:
    key = _check_key(key, params.d, params.p)
    width = _hex_width(params.p)
    key_hex = "".join(f"{x:0{width}x}" for x in key)
    return f"{params.p} {params.d} {key_hex} {msg.to_text()} {tag:0{width}x}"


def parse_vector_line(line: str) -> tuple[AuthParams, tuple[int, ...], BitString, int]:
    fields = line.split()
    if len(fields) != 5:
        raise ValueError("expected: p d key_digits_hex msg tag_hex")
    p, d = int(fields[0]), int(fields[1])
    params = AuthParams(p, d)
    width = _hex_width(p)
    key_hex = fields[2]
    if len(key_hex) != d * width:
        raise ValueError(f"key field must be {d * width} hex digits")
    key = tuple(int(key_hex[i * width : (i + 1) * width], 16) for i in range(d))
    key = _check_key(key, d, p)
    msg = BitString.from_text(fields[3])
    tag = int(fields[4], 16)
    if not 0 <= tag < p:
        raise ValueError("tag out of field range")
    return params, key, msg, tag
