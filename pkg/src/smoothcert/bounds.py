"""One-sided confidence bounds on the top-class and runner-up probabilities.

The top class gets the usual Clopper-Pearson lower bound. The runner-up bound
generalizes Clopper-Pearson over every non-top class at once: the smallest p
for which the summed lower tails of all non-top counts stay within the
remaining significance budget. A union bound over the non-top classes makes
it a valid upper bound for whichever class is truly the runner-up.
"""

from dataclasses import dataclass
from typing import Sequence

from .special import binom_tail_ge, binom_tail_le

__all__ = [
    "SignificanceSplit",
    "BoundPair",
    "cp_lower",
    "cp_upper",
    "runnerup_upper",
    "runnerup_tail_sum",
    "bound_pair",
]

BISECT_TOL = 1e-12
BISECT_MAX_ITER = 200


@dataclass(frozen=True)
class SignificanceSplit:
    """Total budget ``alpha``; ``alpha_prime`` goes to the top-class bound."""

    alpha: float
    alpha_prime: float

    def __post_init__(self):
        if not 0.0 < self.alpha < 1.0:
            raise ValueError(f"alpha must lie in (0, 1), got {self.alpha!r}")
        if not 0.0 <= self.alpha_prime <= self.alpha:
            raise ValueError(
                f"alpha_prime must lie in [0, alpha={self.alpha}], got {self.alpha_prime!r}")

    @property
    def remaining(self) -> float:
        return max(self.alpha - self.alpha_prime, 0.0)


@dataclass(frozen=True)
class BoundPair:
    p_lower: float
    p_upper: float
    # True when p_upper was set by the deterministic cap 1 - p_lower.
    capped: bool


def _check_count(k: int, n: int) -> None:
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    if not 0 <= k <= n:
        raise ValueError(f"count {k} outside [0, n={n}]")


def cp_lower(k: int, n: int, alpha: float) -> float:
    """Clopper-Pearson one-sided lower bound: sup{p : P(Bin(n,p) >= k) <= alpha}.

    The returned value is the lower end of the final bisection bracket, so it
    always satisfies the defining inequality (never anti-conservative).
    """
    _check_count(k, n)
    if not 0.0 < alpha < 1.0:
        raise ValueError(f"alpha must lie in (0, 1), got {alpha!r}")
    if k == 0:
        return 0.0
    lo, hi = 0.0, 1.0
    for _ in range(BISECT_MAX_ITER):
        if hi - lo <= BISECT_TOL:
            break
        mid = 0.5 * (lo + hi)
        if binom_tail_ge(k, n, mid) <= alpha:
            lo = mid
        else:
            hi = mid
    return lo


def cp_upper(k: int, n: int, alpha: float) -> float:
    """Clopper-Pearson one-sided upper bound: inf{p : P(Bin(n,p) <= k) <= alpha}."""
    return runnerup_upper([k], n, alpha)


def runnerup_tail_sum(counts: Sequence[int], n: int, p: float) -> float:
    """Sum over classes of P(Bin(n, p) <= count); non-increasing in p."""
    return sum(binom_tail_le(int(c), n, p) for c in counts)


def runnerup_upper(counts: Sequence[int], n: int, alpha_rem: float) -> float:
    """Upper bound on the runner-up probability from the non-top ``counts``.

    ``n`` is the full sample size, top class included. Returns 1.0 when the
    budget is zero or too small for any p in [0, 1] to qualify.
    """
    counts = [int(c) for c in counts]
    if not counts:
        raise ValueError("runnerup_upper needs at least one non-top count")
    for c in counts:
        _check_count(c, n)
    if alpha_rem <= 0.0:
        return 1.0
    if runnerup_tail_sum(counts, n, 1.0) > alpha_rem:
        return 1.0
    # The sum at p=0 equals len(counts) >= 1 > alpha_rem.
    lo, hi = 0.0, 1.0
    for _ in range(BISECT_MAX_ITER):
        if hi - lo <= BISECT_TOL:
            break
        mid = 0.5 * (lo + hi)
        if runnerup_tail_sum(counts, n, mid) <= alpha_rem:
            hi = mid
        else:
            lo = mid
    return hi


def bound_pair(counts: Sequence[int], top: int, split: SignificanceSplit) -> BoundPair:
    """Top-class lower bound and runner-up upper bound at one budget split.

    The runner-up bound is capped at ``1 - p_lower`` since p_B <= 1 - p_A
    holds deterministically.
    """
    counts = [int(c) for c in counts]
    if len(counts) < 2:
        raise ValueError("need counts for at least two classes")
    if not 0 <= top < len(counts):
        raise ValueError(f"top class {top} out of range for {len(counts)} classes")
    n = sum(counts)
    if split.alpha_prime > 0.0:
        p_lower = cp_lower(counts[top], n, split.alpha_prime)
    else:
        p_lower = 0.0
    rest = counts[:top] + counts[top + 1:]
    raw_upper = runnerup_upper(rest, n, split.remaining)
    cap = 1.0 - p_lower
    if raw_upper >= cap:
        return BoundPair(p_lower, cap, True)
    return BoundPair(p_lower, raw_upper, False)
