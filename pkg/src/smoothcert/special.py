"""Scalar special functions: standard normal cdf/quantile and binomial tails.

Binomial tails go through the regularized incomplete beta function, which is
evaluated with a modified-Lentz continued fraction.
"""

import math

__all__ = [
    "ConvergenceError",
    "std_normal_cdf",
    "std_normal_pdf",
    "std_normal_quantile",
    "betainc",
    "binom_tail_le",
    "binom_tail_ge",
]

_SQRT2 = math.sqrt(2.0)
_INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)

BETACF_MAX_ITER = 2000  # ~sqrt(n) terms near the mean; covers n up to 1e6
BETACF_TOL = 1e-14
_TINY = 1e-300


class ConvergenceError(ArithmeticError):
    """An iterative evaluation did not reach its tolerance."""


def _clamp01(v: float) -> float:
    return 0.0 if v < 0.0 else 1.0 if v > 1.0 else v


def std_normal_cdf(z: float) -> float:
    return _clamp01(0.5 * math.erfc(-z / _SQRT2))


def std_normal_pdf(z: float) -> float:
    return _INV_SQRT_2PI * math.exp(-0.5 * z * z)


# Acklam's rational approximation, relative error ~1.15e-9 before refinement.
_A = (-3.969683028665376e01, 2.209460984245205e02, -2.759285104469687e02,
      1.383577518672690e02, -3.066479806614716e01, 2.506628277459239e00)
_B = (-5.447609879822406e01, 1.615858368580409e02, -1.556989798598866e02,
      6.680131188771972e01, -1.328068155288572e01)
_C = (-7.784894002430293e-03, -3.223964580411365e-01, -2.400758277161838e00,
      -2.549732539343734e00, 4.374664141464968e00, 2.938163982698783e00)
_D = (7.784695709041462e-03, 3.224671290700398e-01, 2.445134137142996e00,
      3.754408661907416e00)
_P_LOW = 0.02425


def _acklam(p: float) -> float:
    if p < _P_LOW:
        q = math.sqrt(-2.0 * math.log(p))
        return ((((((_C[0] * q + _C[1]) * q + _C[2]) * q + _C[3]) * q + _C[4]) * q + _C[5])
                / ((((_D[0] * q + _D[1]) * q + _D[2]) * q + _D[3]) * q + 1.0))
    q = p - 0.5
    r = q * q
    return ((((((_A[0] * r + _A[1]) * r + _A[2]) * r + _A[3]) * r + _A[4]) * r + _A[5]) * q
            / (((((_B[0] * r + _B[1]) * r + _B[2]) * r + _B[3]) * r + _B[4]) * r + 1.0))


def std_normal_quantile(p: float) -> float:
    """Inverse of :func:`std_normal_cdf` on the open interval (0, 1).

    Rational approximation refined by one Newton step on the cdf. For
    p > 0.5 the result is mirrored from 1 - p, which is exact in binary
    floating point there, so q(1 - p) == -q(p) holds bit-for-bit.
    """
    if not 0.0 < p < 1.0:
        raise ValueError(f"quantile requires 0 < p < 1, got {p!r}")
    if p > 0.5:
        return -_lower_quantile(1.0 - p)
    return _lower_quantile(p)


def _lower_quantile(p: float) -> float:
    x = _acklam(p)
    return x - (0.5 * math.erfc(-x / _SQRT2) - p) / std_normal_pdf(x)


def _betacf(a: float, b: float, x: float) -> float:
    qab = a + b
    qap = a + 1.0
    qam = a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    if abs(d) < _TINY:
        d = _TINY
    d = 1.0 / d
    h = d
    for m in range(1, BETACF_MAX_ITER + 1):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        if abs(d) < _TINY:
            d = _TINY
        c = 1.0 + aa / c
        if abs(c) < _TINY:
            c = _TINY
        d = 1.0 / d
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        if abs(d) < _TINY:
            d = _TINY
        c = 1.0 + aa / c
        if abs(c) < _TINY:
            c = _TINY
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < BETACF_TOL:
            return h
    raise ConvergenceError(
        f"incomplete beta continued fraction did not converge (a={a}, b={b}, x={x})")


_STIRLING_MIN = 15.0
_LOG_2PI = math.log(2.0 * math.pi)


def _stirling_tail(z: float) -> float:
    # lgamma(z) - [(z - 0.5) log z - z + 0.5 log 2pi]; truncation < 3e-14 for z >= 15
    iz = 1.0 / z
    iz2 = iz * iz
    return iz * (1.0 / 12.0 - iz2 * (1.0 / 360.0 - iz2 * (1.0 / 1260.0 - iz2 / 1680.0)))


def _log_beta_front(a: float, b: float, x: float) -> float:
    """log[x^a (1-x)^b / B(a, b)] without cancelling large lgamma terms."""
    log_x, log_1mx = math.log(x), math.log1p(-x)
    if min(a, b) >= _STIRLING_MIN:
        s = a + b
        common = (0.5 * math.log(a * b / s) - 0.5 * _LOG_2PI
                  + _stirling_tail(s) - _stirling_tail(a) - _stirling_tail(b))
        u = (x * s - a) / a
        v = ((1.0 - x) * s - b) / b
        if u > -0.5 and v > -0.5:
            # Near the mode a/(a+b) the first-order terms cancel exactly.
            return common - a * (u - math.log1p(u)) - b * (v - math.log1p(v))
        return common + a * (log_x + math.log(s / a)) + b * (log_1mx + math.log(s / b))
    if max(a, b) >= _STIRLING_MIN:
        big, small = max(a, b), min(a, b)
        powers = a * log_x + b * log_1mx
        return (powers + (big - 0.5) * math.log1p(small / big)
                + small * math.log(big + small) - small
                + _stirling_tail(big + small) - _stirling_tail(big) - math.lgamma(small))
    return math.lgamma(a + b) - math.lgamma(a) - math.lgamma(b) + a * log_x + b * log_1mx


def betainc(a: float, b: float, x: float) -> float:
    """Regularized incomplete beta function I_x(a, b) for a, b > 0."""
    if a <= 0.0 or b <= 0.0:
        raise ValueError("betainc requires a > 0 and b > 0")
    if not 0.0 <= x <= 1.0:
        raise ValueError(f"betainc requires 0 <= x <= 1, got {x!r}")
    if x == 0.0:
        return 0.0
    if x == 1.0:
        return 1.0
    log_front = _log_beta_front(a, b, x)
    if x < (a + 1.0) / (a + b + 2.0):
        return _clamp01(math.exp(log_front) * _betacf(a, b, x) / a)
    return _clamp01(1.0 - math.exp(log_front) * _betacf(b, a, 1.0 - x) / b)


def _check_binom(k: int, n: int, p: float) -> None:
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    if k > n:
        raise ValueError(f"k={k} exceeds n={n}")
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"p must lie in [0, 1], got {p!r}")


def binom_tail_le(k: int, n: int, p: float) -> float:
    """P(Bin(n, p) <= k) = I_{1-p}(n-k, k+1)."""
    _check_binom(k, n, p)
    if k < 0:
        return 0.0
    if k == n:
        return 1.0
    if p == 0.0:
        return 1.0
    if p == 1.0:
        return 0.0
    return betainc(n - k, k + 1, 1.0 - p)


def binom_tail_ge(k: int, n: int, p: float) -> float:
    """P(Bin(n, p) >= k) = I_p(k, n-k+1), the complement of ``binom_tail_le(k-1, n, p)``."""
    _check_binom(k, n, p)
    if k <= 0:
        return 1.0
    if p == 0.0:
        return 0.0
    if p == 1.0:
        return 1.0
    return betainc(k, n - k + 1, p)
