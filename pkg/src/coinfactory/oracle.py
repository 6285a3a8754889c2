"""Independent verification oracles.

Everything the estimator relies on is recomputed here along routes that
share as little code as possible with the production paths:

  * mixing weights by subset enumeration and by the swapped-roles closed
    form, against the production formula, in exact rationals;
  * conditional means of mixed rows under a known coin bias, against the
    row's squeeze polynomial, in exact rationals;
  * conditional means of the full estimate, against the telescoped survival
    form with high-precision survival weights;
  * signs of every telescoping increment, exactly, which is the pathwise
    nonnegativity certificate;
  * the base-term start bound, exactly;
  * a certified two-sided bracket for the estimator's expectation that
    accounts for the mass the truncation cap never shows.

Oracles return OracleReport values and never repair what they find.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from itertools import combinations
from typing import Sequence

import mpmath

from . import mixing
from .approx import CoefficientScheme, bernstein_eval_exact
from .errors import DivergenceError, DomainError
from .estimator import EstimatorConfig, psi_value
from .report import CheckResult, OracleReport

__all__ = [
    "subset_weight_exact",
    "dual_weight_exact",
    "verify_mixing_weights",
    "binomial_pmf_exact",
    "conditional_row_mean_exact",
    "verify_conditional_row_means",
    "expected_estimate_given_budget",
    "verify_estimate_conditional_mean",
    "verify_increment_signs",
    "verify_start_bound",
    "BracketResult",
    "truncated_expectation_bracket",
]

_ENUM_LIMIT = 20


# ---------------------------------------------------------------------------
# mixing weights, three ways


def subset_weight_exact(n: int, m: int, k: int, i: int) -> Fraction:
    """Weight by brute force: enumerate every size-m subset of n positions.

    The k successes sit in the first k positions; the weight of i is the
    fraction of subsets holding exactly i of them.  Exponential in n, so
    guarded to n <= 20.
    """
    if n > _ENUM_LIMIT:
        raise DomainError(f"enumeration limited to n <= {_ENUM_LIMIT}, got {n}")
    if not (0 <= m <= n and 0 <= k <= n and 0 <= i <= k):
        raise DomainError(f"bad weight arguments ({n}, {m}, {k}, {i})")
    hits = 0
    total = 0
    for chosen in combinations(range(n), m):
        total += 1
        if sum(1 for c in chosen if c < k) == i:
            hits += 1
    return Fraction(hits, total)


def dual_weight_exact(n: int, m: int, k: int, i: int) -> Fraction:
    """Weight with the roles of subsample and successes swapped."""
    if not (0 <= m <= n and 0 <= k <= n and 0 <= i <= k):
        raise DomainError(f"bad weight arguments ({n}, {m}, {k}, {i})")

    def comb0(a: int, b: int) -> int:
        return math.comb(a, b) if 0 <= b <= a else 0

    return Fraction(comb0(k, i) * comb0(n - k, m - i), math.comb(n, m))


def verify_mixing_weights(n_max: int, enum_max: int = 12) -> OracleReport:
    """Production weights vs the swapped form, enumeration, and moments."""
    dual_checked = dual_viol = 0
    enum_checked = enum_viol = 0
    moment_checked = moment_viol = 0
    for n in range(1, n_max + 1):
        for m in range(0, n + 1):
            for k in range(0, n + 1):
                total = Fraction(0)
                mean = Fraction(0)
                for i in range(0, k + 1):
                    w = mixing.hyper_weight_exact(n, m, k, i)
                    dual_checked += 1
                    if w != dual_weight_exact(n, m, k, i):
                        dual_viol += 1
                    if n <= enum_max:
                        enum_checked += 1
                        if w != subset_weight_exact(n, m, k, i):
                            enum_viol += 1
                    total += w
                    mean += i * w
                moment_checked += 1
                if total != 1 or mean != Fraction(m * k, n):
                    moment_viol += 1
    checks = (
        CheckResult(
            name="weights_match_swapped_form",
            passed=dual_viol == 0,
            checked=dual_checked,
            violations=dual_viol,
        ),
        CheckResult(
            name="weights_match_enumeration",
            passed=enum_viol == 0,
            checked=enum_checked,
            violations=enum_viol,
            detail={"enum_max": enum_max},
        ),
        CheckResult(
            name="weights_normalize_with_exact_mean",
            passed=moment_viol == 0,
            checked=moment_checked,
            violations=moment_viol,
        ),
    )
    return OracleReport(subject=f"mixing_weights:n<={n_max}", checks=checks)


# ---------------------------------------------------------------------------
# conditional means, exact route


def binomial_pmf_exact(n: int, s: int, x: Fraction) -> Fraction:
    if not (0 <= s <= n):
        raise DomainError(f"count {s} outside 0..{n}")
    x = Fraction(x)
    if not 0 <= x <= 1:
        raise DomainError(f"bias {x} outside [0, 1]")
    return math.comb(n, s) * x**s * (1 - x) ** (n - s)


def conditional_row_mean_exact(
    scheme: CoefficientScheme, L: int, m: int, x: Fraction, side: str = "lower"
) -> Fraction:
    """E over S ~ Binomial(L, x) of the row-m mix of an L-coin sample."""
    row = scheme.lower_exact if side == "lower" else scheme.upper_exact
    acc = Fraction(0)
    for s in range(L + 1):
        acc += binomial_pmf_exact(L, s, x) * mixing.mixed_coefficient_exact(
            row, L, m, s
        )
    return acc


def verify_conditional_row_means(
    scheme: CoefficientScheme,
    L_max: int,
    xs: Sequence[Fraction],
    sides: Sequence[str] = ("lower", "upper"),
) -> OracleReport:
    """Mixing a row over a random sample must average to the row's own
    squeeze polynomial at the coin bias, exactly, for every sample size."""
    checks = []
    for side in sides:
        row = scheme.lower_exact if side == "lower" else scheme.upper_exact
        checked = viol = 0
        worst_at = None
        lo_m = scheme.valid_from
        for L in range(max(lo_m, 1), L_max + 1):
            for m in range(lo_m, L + 1):
                coeffs = [row(m, i) for i in range(m + 1)]
                for x in xs:
                    want = bernstein_eval_exact(coeffs, Fraction(x))
                    got = conditional_row_mean_exact(scheme, L, m, x, side)
                    checked += 1
                    if got != want:
                        viol += 1
                        if worst_at is None:
                            worst_at = (L, m, str(x))
        checks.append(
            CheckResult(
                name=f"{side}_row_mean_equals_squeeze_polynomial",
                passed=viol == 0,
                checked=checked,
                violations=viol,
                detail={"L_max": L_max, "first_violation": worst_at},
            )
        )
    return OracleReport(subject=f"conditional_row_means:{scheme.label}", checks=tuple(checks))


# ---------------------------------------------------------------------------
# conditional mean of the full estimate


def _survival_mp(lam: float, k: int, m: int) -> mpmath.mpf:
    return mpmath.zeta(lam, m) / mpmath.zeta(lam, k)


def _mp_from_fraction(q: Fraction) -> mpmath.mpf:
    return mpmath.mpf(q.numerator) / mpmath.mpf(q.denominator)


def _squeeze_values_exact(
    config: EstimatorConfig, x: Fraction, through: int
) -> list[Fraction]:
    """g[m] for m = k-1 .. through, as exact rationals (lower side)."""
    scheme = config.scheme
    k = config.law.k
    out = []
    for m in range(k - 1, through + 1):
        coeffs = [scheme.lower_exact(m, i) for i in range(m + 1)]
        out.append(bernstein_eval_exact(coeffs, x))
    return out


def expected_estimate_given_budget(
    config: EstimatorConfig, L: int, x: Fraction, dps: int = 30
) -> float:
    """Reference E[psi | budget = L] via the telescoped survival form."""
    if L < config.law.k:
        raise DomainError(f"budget {L} below start index {config.law.k}")
    law = config.law
    k = law.k
    gs = _squeeze_values_exact(config, Fraction(x), L)
    with mpmath.workdps(dps):
        acc = _mp_from_fraction(gs[0])
        for m in range(k, L + 1):
            step = _mp_from_fraction(gs[m - k + 1] - gs[m - k])
            acc += step / _survival_mp(law.lam, k, m)
        return float(acc)


def verify_estimate_conditional_mean(
    config: EstimatorConfig,
    budgets: Sequence[int],
    xs: Sequence[Fraction],
    tol: float = 1e-9,
    dps: int = 30,
) -> OracleReport:
    """Average the production estimate over all head counts of a known-bias
    sample; must match the telescoped reference within tol."""
    checked = viol = 0
    worst = 0.0
    worst_at = None
    for L in budgets:
        for x in xs:
            xf = float(x)
            direct = 0.0
            for s in range(L + 1):
                w = math.comb(L, s) * xf**s * (1.0 - xf) ** (L - s)
                if w:
                    direct += w * psi_value(config, L, s)
            ref = expected_estimate_given_budget(config, L, Fraction(x), dps)
            err = abs(direct - ref)
            checked += 1
            if err > worst:
                worst, worst_at = err, (L, str(x))
            if err > tol:
                viol += 1
    checks = (
        CheckResult(
            name="estimate_conditional_mean_matches_reference",
            passed=viol == 0,
            checked=checked,
            violations=viol,
            worst=worst,
            detail={"tol": tol, "worst_at": worst_at},
        ),
    )
    return OracleReport(
        subject=f"estimate_conditional_mean:{config.scheme.label}", checks=checks
    )


# ---------------------------------------------------------------------------
# pathwise sign structure


def verify_increment_signs(
    scheme: CoefficientScheme, start: int, n_max: int
) -> OracleReport:
    """Exact signs for every budget, head count, and row.

    Lower-side increments must be >= 0 and the base row must sit in [0, 1];
    upper-side increments must be <= 0.  Together these pin the estimate to
    [0, infinity) pathwise (and the upper variant to (-infinity, 1]) for
    every budget the scan covers, independent of the survival weights.
    """
    k = start
    if k < scheme.min_start_index():
        raise DomainError(
            f"start {k} below the scheme's smallest admissible start "
            f"{scheme.min_start_index()}"
        )
    lower_checked = lower_viol = 0
    upper_checked = upper_viol = 0
    base_checked = base_viol = 0
    worst_lower = None
    for L in range(k, n_max + 1):
        for S in range(L + 1):
            prev_lo = mixing.mixed_coefficient_exact(scheme.lower_exact, L, k - 1, S)
            prev_hi = mixing.mixed_coefficient_exact(scheme.upper_exact, L, k - 1, S)
            base_checked += 1
            if not (0 <= prev_lo and prev_hi <= 1):
                base_viol += 1
            for m in range(k, L + 1):
                cur_lo = mixing.mixed_coefficient_exact(scheme.lower_exact, L, m, S)
                cur_hi = mixing.mixed_coefficient_exact(scheme.upper_exact, L, m, S)
                d_lo = cur_lo - prev_lo
                d_hi = cur_hi - prev_hi
                lower_checked += 1
                if worst_lower is None or d_lo < worst_lower:
                    worst_lower = d_lo
                if d_lo < 0:
                    lower_viol += 1
                upper_checked += 1
                if d_hi > 0:
                    upper_viol += 1
                prev_lo, prev_hi = cur_lo, cur_hi
    checks = (
        CheckResult(
            name="base_rows_inside_unit_interval",
            passed=base_viol == 0,
            checked=base_checked,
            violations=base_viol,
        ),
        CheckResult(
            name="lower_increments_nonnegative",
            passed=lower_viol == 0,
            checked=lower_checked,
            violations=lower_viol,
            worst=float(worst_lower) if worst_lower is not None else None,
        ),
        CheckResult(
            name="upper_increments_nonpositive",
            passed=upper_viol == 0,
            checked=upper_checked,
            violations=upper_viol,
        ),
    )
    return OracleReport(
        subject=f"increment_signs:{scheme.label}:start={k}", checks=checks
    )


def verify_start_bound(
    scheme: CoefficientScheme, start: int, n_max: int
) -> OracleReport:
    """Base term bound: the start row's mix stays below 1 - c/(4 start)."""
    if scheme.curvature is None:
        raise DomainError("start bound check needs a curvature-backed scheme")
    c = scheme.source.second_deriv_bound_exact
    if c is None:
        raise DomainError("start bound check needs an exact curvature value")
    bound = 1 - c / (4 * start)
    checked = viol = 0
    worst = None
    for L in range(start, n_max + 1):
        for S in range(L + 1):
            val = mixing.mixed_coefficient_exact(scheme.lower_exact, L, start - 1, S)
            margin = bound - val
            checked += 1
            if worst is None or margin < worst:
                worst = margin
            if margin < 0:
                viol += 1
    checks = (
        CheckResult(
            name="base_term_below_start_bound",
            passed=viol == 0,
            checked=checked,
            violations=viol,
            worst=float(worst) if worst is not None else None,
            detail={"bound": str(bound), "start": start, "n_max": n_max},
        ),
    )
    return OracleReport(subject=f"start_bound:{scheme.label}", checks=checks)


# ---------------------------------------------------------------------------
# truncated-expectation bracket


@dataclass(frozen=True)
class BracketResult:
    """Certified two-sided bracket for the estimator's expectation."""

    lo: float
    hi: float
    ell_max: int
    tail_mass: float
    detail: dict

    @property
    def width(self) -> float:
        return self.hi - self.lo

    def contains(self, value: float) -> bool:
        return self.lo <= value <= self.hi


_BRACKET_SLACK = 1e-10


def truncated_expectation_bracket(
    config: EstimatorConfig, x: Fraction, ell_max: int, dps: int = 40
) -> BracketResult:
    """Bracket E[psi] using only budgets up to ell_max.

    The lower edge is the visible-mass sum sum_{l<=ell_max} pmf(l) E[psi|l],
    a true lower bound because the estimate is pathwise nonnegative.  The
    upper edge adds what the invisible tail can carry:

        P(L > ell_max) * E[psi | ell_max]
      + sum_{m > ell_max} (step ceiling at m)

    where the per-row step ceiling c/(8(m-1)^2) + c/(4 m(m-1)) comes from
    the curvature bound through the one-step subsample coupling; its tail
    sums in closed form to (c/8) zeta(2, ell_max) + (c/4)/ell_max.  A
    curvature-free scheme has no such ceiling and no convergent tail
    estimate, which is reported as DivergenceError.

    Squeeze values are exact rationals; survival weights and the zeta tail
    are evaluated at `dps` digits; both edges are widened by a 1e-10 slack
    dominating every conversion error.
    """
    scheme = config.scheme
    law = config.law
    k = law.k
    if scheme.curvature is None or scheme.source.second_deriv_bound_exact is None:
        raise DivergenceError(
            "the invisible-tail ceiling needs a curvature bound; a table "
            "scheme's step sizes have no summable envelope"
        )
    if not scheme.has_exact:
        raise DomainError("bracket needs a scheme with exact rows")
    if ell_max < k:
        raise DomainError(f"ell_max {ell_max} below start index {k}")
    if ell_max > law.cap:
        raise DomainError(f"ell_max {ell_max} beyond law cap {law.cap}")
    x = Fraction(x)
    c = scheme.source.second_deriv_bound_exact
    gs = _squeeze_values_exact(config, x, ell_max)
    with mpmath.workdps(dps):
        zk = mpmath.zeta(law.lam, k)
        cond = _mp_from_fraction(gs[0])
        lo = mpmath.mpf(0)
        for ell in range(k, ell_max + 1):
            step = _mp_from_fraction(gs[ell - k + 1] - gs[ell - k])
            cond += step / (mpmath.zeta(law.lam, ell) / zk)
            lo += mpmath.mpf(ell) ** (-law.lam) / zk * cond
        tail_mass = mpmath.zeta(law.lam, ell_max + 1) / zk
        c_mp = _mp_from_fraction(c)
        tail_steps = c_mp / 8 * mpmath.zeta(2, ell_max) + c_mp / (4 * ell_max)
        hi = lo + tail_mass * cond + tail_steps
        lo_f = float(lo) - _BRACKET_SLACK
        hi_f = float(hi) + _BRACKET_SLACK
        detail = {
            "x": str(x),
            "lam": law.lam,
            "start": k,
            "visible_conditional_mean": float(cond),
            "tail_step_budget": float(tail_steps),
            "dps": dps,
        }
        return BracketResult(
            lo=lo_f,
            hi=hi_f,
            ell_max=ell_max,
            tail_mass=float(tail_mass),
            detail=detail,
        )
