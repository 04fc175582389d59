"""Bayesian certification of the channel error rate from a public
sample.

A sample of s sifted bits is compared in public; k mismatches give the
point estimate k/s.  With a flat prior the posterior over the true
error rate is Beta(k + 1, s - k + 1), and the quantity that matters is
the posterior tail above a ceiling eps_max: accept only when that tail
is at most the failure budget delta.  solve_eps_limit inverts the test,
returning the largest observed rate that still certifies the ceiling.

The tail is computed two independent ways: the regularized incomplete
Beta function (mirrored to the lower tail so nothing cancels), and
direct log-space quadrature of the posterior density.  Tests hold the
two routes together to 1e-9 relative.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from scipy import integrate, special

from .core import QidentError

__all__ = [
    "NoSolution",
    "NumericalFailure",
    "EstimationParams",
    "likelihood",
    "estimate_from_subset",
    "posterior_tail",
    "posterior_tail_quadrature",
    "solve_eps_limit",
    "acceptable_error_count",
]


class NoSolution(QidentError):
    """No observed rate certifies the ceiling; the sample is too small
    for this (eps_max, delta) pair."""


class NumericalFailure(QidentError):
    """Quadrature failed to reach the demanded relative accuracy."""


@dataclass(frozen=True)
class EstimationParams:
    """Sample size and acceptance budget for one error estimate."""

    s: int = 1000
    eps_max: float = 0.07
    delta: float = 1e-10

    def __post_init__(self):
        if self.s < 1:
            raise ValueError("s must be positive")
        if not 0.0 < self.eps_max < 1.0:
            raise ValueError("eps_max must lie in (0, 1)")
        if not 0.0 < self.delta < 1.0:
            raise ValueError("delta must lie in (0, 1)")

    @property
    def two_s(self) -> int:
        """Sample plus key positions requested from the sifted string."""
        return 2 * self.s

    def eps_limit(self, resolution: float = 1e-5) -> float:
        return solve_eps_limit(self.s, self.delta, self.eps_max, resolution)


def likelihood(k: int, s: int, eps: float) -> float:
    """Binomial probability of k mismatches in s comparisons at true
    error rate eps; evaluated in log-space so large s cannot underflow
    the intermediate terms."""
    if not 0 <= k <= s:
        raise ValueError("need 0 <= k <= s")
    if not 0.0 <= eps <= 1.0:
        raise ValueError("eps must lie in [0, 1]")
    if eps == 0.0:
        return 1.0 if k == 0 else 0.0
    if eps == 1.0:
        return 1.0 if k == s else 0.0
    log_choose = (
        math.lgamma(s + 1) - math.lgamma(k + 1) - math.lgamma(s - k + 1)
    )
    return math.exp(log_choose + k * math.log(eps) + (s - k) * math.log1p(-eps))


def estimate_from_subset(alice_bits, bob_bits) -> tuple[int, float]:
    """Mismatch count and point estimate from the two disclosed sample
    strings.  Raises LengthMismatch if the strings differ in length."""
    k = alice_bits.hamming(bob_bits)
    return k, k / len(alice_bits)


def posterior_tail(s: float, eps_est: float, eps_max: float) -> float:
    """Posterior probability that the true error rate exceeds eps_max
    given s comparisons with observed rate eps_est, flat prior.

    Uses the mirror identity of the regularized incomplete Beta so the
    tiny tail is computed directly rather than as 1 minus something
    close to 1.
    """
    if s <= 0:
        raise ValueError("s must be positive")
    if not 0.0 <= eps_est <= 1.0:
        raise ValueError("eps_est must lie in [0, 1]")
    if not 0.0 < eps_max < 1.0:
        raise ValueError("eps_max must lie in (0, 1)")
    alpha = s * eps_est + 1.0
    beta = s * (1.0 - eps_est) + 1.0
    return float(special.betainc(beta, alpha, 1.0 - eps_max))


def posterior_tail_quadrature(
    s: float, eps_est: float, eps_max: float, rel_tol: float = 1e-9
) -> float:
    """posterior_tail by direct quadrature of the normalized posterior
    density, as an independent cross-check of the Beta-function route.

    The density is evaluated in log-space relative to its value at
    eps_max, which keeps the integrand in floating range even when the
    tail mass is far below double precision of the total."""
    if s <= 0:
        raise ValueError("s must be positive")
    if not 0.0 <= eps_est <= 1.0:
        raise ValueError("eps_est must lie in [0, 1]")
    if not 0.0 < eps_max < 1.0:
        raise ValueError("eps_max must lie in (0, 1)")
    a = s * eps_est + 1.0
    b = s * (1.0 - eps_est) + 1.0

    def log_density(x: float) -> float:
        if x <= 0.0 or x >= 1.0:
            return -math.inf
        return (a - 1.0) * math.log(x) + (b - 1.0) * math.log1p(-x)

    log_norm = special.betaln(a, b)
    ref = log_density(eps_max)

    def integrand(x: float) -> float:
        ld = log_density(x)
        return math.exp(ld - ref) if ld > -math.inf else 0.0

    # mode inside the tail means the bulk of the mass sits there; split
    # the interval so quad sees the peak
    mode = (a - 1.0) / (a + b - 2.0) if a + b > 2.0 else eps_max
    points = [mode] if eps_max < mode < 1.0 else None
    val, err = integrate.quad(integrand, eps_max, 1.0, points=points, limit=200)
    if val > 0.0 and err > rel_tol * val * 1e3:
        raise NumericalFailure(
            f"quadrature error {err:g} too large for value {val:g}"
        )
    log_tail = math.log(val) + ref - log_norm if val > 0.0 else -math.inf
    return math.exp(log_tail)


def solve_eps_limit(
    s: int, delta: float, eps_max: float, resolution: float = 1e-5
) -> float:
    """Largest observed error rate that still certifies the ceiling:
    max eps_est with posterior_tail(s, eps_est, eps_max) <= delta.

    Bisection to the given resolution; the returned value is the
    certified lower end of the final bracket, so the acceptance test it
    induces is never optimistic.  Comparisons run in log-space.
    Raises NoSolution when even a clean sample (eps_est = 0) fails.
    """
    if not 0.0 < delta < 1.0:
        raise ValueError("delta must lie in (0, 1)")
    log_delta = math.log(delta)

    def ok(eps_est: float) -> bool:
        tail = posterior_tail(s, eps_est, eps_max)
        if tail == 0.0:
            return True
        return math.log(tail) <= log_delta

    if not ok(0.0):
        raise NoSolution(
            f"sample of {s} cannot certify eps_max={eps_max} at delta={delta}"
        )
    lo, hi = 0.0, eps_max
    if ok(hi):
        return hi
    while hi - lo > resolution:
        mid = 0.5 * (lo + hi)
        if ok(mid):
            lo = mid
        else:
            hi = mid
    return lo


def acceptable_error_count(s: int, delta: float, eps_max: float) -> int:
    """Largest mismatch count k that passes the certification test on a
    sample of s bits."""
    limit = solve_eps_limit(s, delta, eps_max)
    k = math.floor(limit * s)
    # the bisection returns a conservative edge; admit the next integer
    # when it certifies too
    while k + 1 <= s and posterior_tail(s, (k + 1) / s, eps_max) <= delta:
        k += 1
    while k > 0 and posterior_tail(s, k / s, eps_max) > delta:
        k -= 1
    return k
