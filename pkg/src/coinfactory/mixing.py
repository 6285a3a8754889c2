"""Hypergeometric mixing of coefficient rows.

Mixing a row of approximation coefficients down to a smaller row is the
combinatorial heart of the estimator: with

    w(n, m, k, i) = C(n-m, k-i) * C(m, i) / C(n, k)

the mixed coefficient H_n(m, k) = sum_i w(n, m, k, i) * c(m, i) averages the
size-m row over the sub-counts i a size-m uniform subsample of a size-n sample
with k successes can produce.  Telescoping increments
H_n(m, k) - H_n(m-1, k) are what the estimator divides by survival weights.

Everything has two numeric routes: an exact path over `fractions.Fraction`
(used by the validators and oracles, n up to a few dozen) and a float path
(log-gamma binomials for large indices, exact comb ratios when small, weights
summed in increasing-i order with compensated accumulation).

Coefficient rows enter as plain callables `c(m, i) -> value`, so this module
depends on no scheme type.
"""

from __future__ import annotations

import functools
from fractions import Fraction
from math import comb, exp, lgamma

from .errors import DomainError

__all__ = [
    "support",
    "hyper_weight",
    "hyper_weight_exact",
    "mixed_coefficient",
    "mixed_coefficient_exact",
    "increment",
    "increment_exact",
    "identity_residual",
    "cached_rows",
]

# exact comb ratios below this are cheap and avoid any rounding at desk scale
_EXACT_COMB_LIMIT = 200


def _comb0(n: int, k: int) -> int:
    """Binomial with the zero convention outside 0 <= k <= n."""
    if k < 0 or k > n or n < 0:
        return 0
    return comb(n, k)


def _check_mix_args(n: int, m: int, k: int) -> None:
    if not 0 <= m <= n:
        raise DomainError(f"subsample size m={m} must satisfy 0 <= m <= n={n}")
    if not 0 <= k <= n:
        raise DomainError(f"success count k={k} must satisfy 0 <= k <= n={n}")


def support(n: int, m: int, k: int) -> tuple[int, int]:
    """Inclusive range of subsample success counts with positive weight."""
    _check_mix_args(n, m, k)
    return max(0, k - (n - m)), min(k, m)


def hyper_weight(n: int, m: int, k: int, i: int) -> float:
    """Probability that a uniform size-m subsample holds i of the k successes.

    Returns 0.0 for i inside [0, k] but outside the feasible range; i outside
    [0, k] is a domain error.
    """
    _check_mix_args(n, m, k)
    if not 0 <= i <= k:
        raise DomainError(f"subcount i={i} must lie in [0, k={k}]")
    lo, hi = max(0, k - (n - m)), min(k, m)
    if i < lo or i > hi:
        return 0.0
    if n <= _EXACT_COMB_LIMIT:
        return comb(n - m, k - i) * comb(m, i) / comb(n, k)
    return exp(_lg_comb(n - m, k - i) + _lg_comb(m, i) - _lg_comb(n, k))


def hyper_weight_exact(n: int, m: int, k: int, i: int) -> Fraction:
    """Exact rational value of hyper_weight."""
    _check_mix_args(n, m, k)
    if not 0 <= i <= k:
        raise DomainError(f"subcount i={i} must lie in [0, k={k}]")
    return Fraction(_comb0(n - m, k - i) * _comb0(m, i), comb(n, k))


def _lg_comb(n: int, k: int) -> float:
    return lgamma(n + 1) - lgamma(k + 1) - lgamma(n - k + 1)


def mixed_coefficient(coeff, n: int, m: int, k: int) -> float:
    """Weighted average sum_i w(n, m, k, i) * coeff(m, i), float path.

    Weights are accumulated in increasing i with Kahan compensation; at desk
    scale the weights themselves are exact comb ratios.
    """
    lo, hi = support(n, m, k)
    total = 0.0
    comp = 0.0
    for i in range(lo, hi + 1):
        term = hyper_weight(n, m, k, i) * float(coeff(m, i))
        y = term - comp
        t = total + y
        comp = (t - total) - y
        total = t
    return total


def mixed_coefficient_exact(coeff, n: int, m: int, k: int) -> Fraction:
    """Exact rational mixed coefficient; `coeff` must return rationals."""
    lo, hi = support(n, m, k)
    den = comb(n, k)
    acc = Fraction(0)
    for i in range(lo, hi + 1):
        w = _comb0(n - m, k - i) * _comb0(m, i)
        acc += w * Fraction(coeff(m, i))
    return acc / den


def increment(coeff, n: int, m: int, k: int) -> float:
    """Telescoping step H_n(m, k) - H_n(m-1, k), float path."""
    if m < 1:
        raise DomainError(f"increment needs m >= 1, got {m}")
    return mixed_coefficient(coeff, n, m, k) - mixed_coefficient(coeff, n, m - 1, k)


def increment_exact(coeff, n: int, m: int, k: int) -> Fraction:
    """Telescoping step, exact path."""
    if m < 1:
        raise DomainError(f"increment needs m >= 1, got {m}")
    return mixed_coefficient_exact(coeff, n, m, k) - mixed_coefficient_exact(
        coeff, n, m - 1, k
    )


def identity_residual(n: int, m: int, k: int, i: int) -> Fraction:
    """Exact residual of the weight-shuffling identity behind the telescoping.

    For 1 <= m <= n, 0 <= k <= n, 0 <= i <= k the combination

        C(n-m, k-i) C(m, i) (m-i)/m
      + C(n-m, k-i-1) C(m, i+1) (i+1)/m
      - C(n-m+1, k-i) C(m-1, i)

    vanishes identically; the residual is returned as an exact rational
    (integer arithmetic throughout, single division by m at the end).
    """
    if m < 1:
        raise DomainError(f"identity needs m >= 1, got {m}")
    _check_mix_args(n, m, k)
    if not 0 <= i <= k:
        raise DomainError(f"subcount i={i} must lie in [0, k={k}]")
    a = _comb0(n - m, k - i) * _comb0(m, i) * (m - i)
    b = _comb0(n - m, k - i - 1) * _comb0(m, i + 1) * (i + 1)
    c = _comb0(n - m + 1, k - i) * _comb0(m - 1, i)
    return Fraction(a + b - m * c, m)


def cached_rows(coeff, maxsize: int = 4096):
    """Opt-in memo for a coefficient row callable.

    The default evaluation path recomputes coefficients on demand; wrap a row
    function with this when a scan revisits the same (m, i) cells many times.
    """
    return functools.cache(coeff) if maxsize is None else functools.lru_cache(maxsize)(coeff)
