"""Coefficient schemes: two-sided Bernstein-coefficient approximations.

A target function f on [0, 1] with 0 < f < 1 and a certified curvature bound
c >= sup|f''| yields, for each row size n, lower and upper coefficient rows

    a(n, i) = f(i/n) - c/(4n)          b(n, i) = f(i/n) + c/(4n)

whose Bernstein polynomials squeeze f from below and above.  The rows are
*consistent*: mixing a row down to a smaller row (see `mixing`) never exceeds
the smaller row's own coefficients, which is exactly what makes the
estimator's telescoping increments one-sided.  Rows are certified from the
smallest index where a >= 0 and b <= 1, i.e. from

    valid_from = ceil(c / (4 * min(f_min, 1 - f_max)))

and the estimator's start index must be at least valid_from + 1.  A zero
curvature bound certifies every row from index 1; row 0 is then the trivial
pair (0, 1) so the estimator's base term is defined (its value never affects
the estimate because the first survival weight is one).

Schemes also come from coefficient table files (`n k a b` per line, exact
rationals), validated on load by the same exact-arithmetic consistency scan
the oracles use.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Optional, Sequence

import mpmath

from . import mixing
from .errors import DomainError, SchemeValidationError, TableFormatError, WindowError
from .report import CheckResult, OracleReport

__all__ = [
    "FunctionSpec",
    "CoefficientScheme",
    "BernsteinPolynomial",
    "preset",
    "PRESET_LABELS",
    "lower_coeff",
    "upper_coeff",
    "lower_coeff_exact",
    "upper_coeff_exact",
    "min_support_index",
    "scheme_from_function",
    "bernstein_eval",
    "bernstein_eval_exact",
    "lower_polynomial",
    "upper_polynomial",
    "validate_consistency",
    "load_coefficient_table",
    "save_coefficient_table",
]

_GRID_POINTS = 1024
_GRID_SLACK = 1e-9

# fixed precision for the rational view of irrational targets
_EXACT_DIGITS = 50
_EXACT_DEN = 10 ** _EXACT_DIGITS


# ---------------------------------------------------------------------------
# target functions


@dataclass(frozen=True, eq=False)
class FunctionSpec:
    """A target function with user-certified range and curvature bounds.

    evaluate            f itself, float path
    f_min, f_max        certified range bounds, 0 < f_min <= f <= f_max < 1
    second_deriv_bound  certified c >= sup|f''| (0 allowed)
    evaluate_exact      optional exact twin on rational points
    second_deriv_bound_exact  exact (or fixed-precision rationalized) curvature
    mean_family         optional closed-form family tag for fast subsample
                        means, one of "affine", "quadratic", "sin2pi"
    mean_params         float parameters for the family
    """

    label: str
    evaluate: Callable[[float], float]
    f_min: float
    f_max: float
    second_deriv_bound: float
    evaluate_exact: Optional[Callable[[Fraction], Fraction]] = None
    second_deriv_bound_exact: Optional[Fraction] = None
    mean_family: Optional[str] = None
    mean_params: tuple = ()

    def __post_init__(self):
        if not (0.0 < self.f_min <= self.f_max < 1.0):
            raise DomainError(
                f"range bounds must satisfy 0 < f_min <= f_max < 1, "
                f"got [{self.f_min}, {self.f_max}]"
            )
        if not (self.second_deriv_bound >= 0.0):
            raise DomainError("curvature bound must be >= 0")
        lo = self.f_min - _GRID_SLACK
        hi = self.f_max + _GRID_SLACK
        for j in range(_GRID_POINTS + 1):
            p = j / _GRID_POINTS
            v = self.evaluate(p)
            if not (lo <= v <= hi):
                raise DomainError(
                    f"certified range [{self.f_min}, {self.f_max}] fails at "
                    f"x={p}: f(x)={v}"
                )


def _rationalize(value: mpmath.mpf) -> Fraction:
    return Fraction(int(mpmath.floor(value * _EXACT_DEN)), _EXACT_DEN)


def _curvature_sq_pi() -> Fraction:
    # rounded up: the rational stand-in must still dominate sup|f''|
    with mpmath.workdps(_EXACT_DIGITS + 15):
        return Fraction(int(mpmath.floor(mpmath.pi ** 2 * _EXACT_DEN)) + 1, _EXACT_DEN)


_TRIG_EXACT_CACHE: dict[tuple[int, int], Fraction] = {}


def _trig_exact(q: Fraction) -> Fraction:
    key = (q.numerator, q.denominator)
    hit = _TRIG_EXACT_CACHE.get(key)
    if hit is None:
        with mpmath.workdps(_EXACT_DIGITS + 15):
            v = (2 + mpmath.sin(2 * mpmath.pi * mpmath.mpf(key[0]) / key[1])) / 4
        hit = _TRIG_EXACT_CACHE[key] = _rationalize(v)
    return hit


# preset evaluators are module-level functions, not lambdas, so specs and
# estimator configs built on them pickle for worker fan-out


def _eval_const13(x: float) -> float:
    return 1.0 / 3.0


def _eval_const13_exact(q: Fraction) -> Fraction:
    return Fraction(1, 3)


def _eval_lin(x: float) -> float:
    return 0.25 + 0.5 * x


def _eval_lin_exact(q: Fraction) -> Fraction:
    return Fraction(1, 4) + Fraction(1, 2) * Fraction(q)


def _eval_quad(x: float) -> float:
    return (2.0 + x * x) / 8.0


def _eval_quad_exact(q: Fraction) -> Fraction:
    q = Fraction(q)
    return (2 + q * q) / Fraction(8)


def _eval_trig(x: float) -> float:
    return (2.0 + math.sin(2.0 * math.pi * x)) / 4.0


def _build_presets() -> dict[str, FunctionSpec]:
    presets = {
        "const13": FunctionSpec(
            label="const13",
            evaluate=_eval_const13,
            f_min=1.0 / 3.0,
            f_max=1.0 / 3.0,
            second_deriv_bound=0.0,
            evaluate_exact=_eval_const13_exact,
            second_deriv_bound_exact=Fraction(0),
            mean_family="affine",
            mean_params=(1.0 / 3.0, 0.0),
        ),
        "lin": FunctionSpec(
            label="lin",
            evaluate=_eval_lin,
            f_min=0.25,
            f_max=0.75,
            second_deriv_bound=0.0,
            evaluate_exact=_eval_lin_exact,
            second_deriv_bound_exact=Fraction(0),
            mean_family="affine",
            mean_params=(0.25, 0.5),
        ),
        "quad": FunctionSpec(
            label="quad",
            evaluate=_eval_quad,
            f_min=0.25,
            f_max=0.375,
            second_deriv_bound=0.25,
            evaluate_exact=_eval_quad_exact,
            second_deriv_bound_exact=Fraction(1, 4),
            mean_family="quadratic",
            mean_params=(0.25, 0.0, 0.125),
        ),
        "trig": FunctionSpec(
            label="trig",
            evaluate=_eval_trig,
            f_min=0.25,
            f_max=0.75,
            second_deriv_bound=float(mpmath.pi ** 2),
            evaluate_exact=_trig_exact,
            second_deriv_bound_exact=_curvature_sq_pi(),
            mean_family="sin2pi",
            mean_params=(0.5, 0.25),
        ),
    }
    return presets


_PRESETS = _build_presets()
PRESET_LABELS = tuple(sorted(_PRESETS))


def preset(label: str) -> FunctionSpec:
    """Look up a built-in target function by label."""
    try:
        return _PRESETS[label]
    except KeyError:
        raise DomainError(
            f"unknown preset {label!r}; available: {', '.join(PRESET_LABELS)}"
        ) from None


# ---------------------------------------------------------------------------
# curvature-shifted coefficient rows


def _check_row_args(n: int, i: int) -> None:
    if n < 1:
        raise DomainError(f"row size must be >= 1, got {n}")
    if not 0 <= i <= n:
        raise DomainError(f"cell index i={i} outside row 0..{n}")


def lower_coeff(spec: FunctionSpec, n: int, i: int) -> float:
    """Lower coefficient f(i/n) - c/(4n)."""
    _check_row_args(n, i)
    return spec.evaluate(i / n) - spec.second_deriv_bound / (4.0 * n)


def upper_coeff(spec: FunctionSpec, n: int, i: int) -> float:
    """Upper coefficient f(i/n) + c/(4n)."""
    _check_row_args(n, i)
    return spec.evaluate(i / n) + spec.second_deriv_bound / (4.0 * n)


def _require_exact(spec: FunctionSpec):
    if spec.evaluate_exact is None or spec.second_deriv_bound_exact is None:
        raise DomainError(f"function spec {spec.label!r} carries no exact path")


def lower_coeff_exact(spec: FunctionSpec, n: int, i: int) -> Fraction:
    _check_row_args(n, i)
    _require_exact(spec)
    return spec.evaluate_exact(Fraction(i, n)) - spec.second_deriv_bound_exact / (4 * n)


def upper_coeff_exact(spec: FunctionSpec, n: int, i: int) -> Fraction:
    _check_row_args(n, i)
    _require_exact(spec)
    return spec.evaluate_exact(Fraction(i, n)) + spec.second_deriv_bound_exact / (4 * n)


def min_support_index(spec: FunctionSpec) -> int:
    """Smallest admissible start index for the estimator built on this spec.

    Start index k needs every row from k-1 up to stay inside [0, 1], which
    pins k - 1 >= c / (4 * min(f_min, 1 - f_max)).
    """
    margin = min(spec.f_min, 1.0 - spec.f_max)
    if spec.second_deriv_bound == 0.0:
        return 1
    if spec.second_deriv_bound_exact is not None:
        # margins of the presets are exactly representable floats
        ratio = spec.second_deriv_bound_exact / (4 * Fraction(margin))
        return 1 + math.ceil(ratio)
    v = spec.second_deriv_bound / (4.0 * margin)
    return 1 + math.ceil(v * (1.0 - 8.0 * 2.2e-16))


# ---------------------------------------------------------------------------
# scheme objects


@dataclass(frozen=True, eq=False)
class CoefficientScheme:
    """Two-sided coefficient rows with certified window and flags.

    Rows are exposed through `lower`/`upper` (float) and `lower_exact`/
    `upper_exact` (rational; None when a custom spec has no exact path).
    Indices below `valid_from` (or above `n_max` for table schemes) raise
    WindowError.  Instances are immutable and safe to share across workers.
    """

    label: str
    valid_from: int
    certifies_lower_bound: bool
    certifies_upper_bound: bool
    n_max: Optional[int] = None
    source: Optional[FunctionSpec] = None
    _rows: Optional[dict] = field(default=None, repr=False)

    def __post_init__(self):
        if (self.source is None) == (self._rows is None):
            raise DomainError(
                "a scheme needs exactly one row provider: a function spec "
                "or a coefficient table"
            )
        if self.valid_from < 0:
            raise DomainError(f"valid_from must be >= 0, got {self.valid_from}")

    # -- window -------------------------------------------------------------

    def _check_window(self, n: int) -> None:
        if n < self.valid_from:
            raise WindowError(
                f"row {n} below certified window of scheme {self.label!r} "
                f"(valid from {self.valid_from})"
            )
        if self.n_max is not None and n > self.n_max:
            raise WindowError(
                f"row {n} above certified window of scheme {self.label!r} "
                f"(valid through {self.n_max})"
            )

    def _cell(self, n: int, i: int) -> None:
        self._check_window(n)
        if not 0 <= i <= n:
            raise DomainError(f"cell index i={i} outside row 0..{n}")

    # -- rows ---------------------------------------------------------------

    def lower(self, n: int, i: int) -> float:
        self._cell(n, i)
        if self._rows is not None:
            return float(self._rows[n][i][0])
        if n == 0:
            return 0.0
        return lower_coeff(self.source, n, i)

    def upper(self, n: int, i: int) -> float:
        self._cell(n, i)
        if self._rows is not None:
            return float(self._rows[n][i][1])
        if n == 0:
            return 1.0
        return upper_coeff(self.source, n, i)

    @property
    def has_exact(self) -> bool:
        if self._rows is not None:
            return True
        return self.source.evaluate_exact is not None

    def lower_exact(self, n: int, i: int) -> Fraction:
        self._cell(n, i)
        if self._rows is not None:
            return self._rows[n][i][0]
        if n == 0:
            return Fraction(0)
        return lower_coeff_exact(self.source, n, i)

    def upper_exact(self, n: int, i: int) -> Fraction:
        self._cell(n, i)
        if self._rows is not None:
            return self._rows[n][i][1]
        if n == 0:
            return Fraction(1)
        return upper_coeff_exact(self.source, n, i)

    # -- derived quantities -------------------------------------------------

    @property
    def curvature(self) -> Optional[float]:
        """Curvature bound when rows come from a function spec, else None."""
        return None if self.source is None else self.source.second_deriv_bound

    def row_gap(self, n: int) -> float:
        """max_i (upper - lower) on row n."""
        self._check_window(n)
        if self._rows is None:
            if n == 0:
                return 1.0
            return self.source.second_deriv_bound / (2.0 * n)
        return float(max(b - a for a, b in self._rows[n].values()))

    def min_start_index(self) -> int:
        return self.valid_from + 1

    def describe(self) -> dict:
        return {
            "label": self.label,
            "valid_from": self.valid_from,
            "n_max": self.n_max,
            "certifies_lower_bound": self.certifies_lower_bound,
            "certifies_upper_bound": self.certifies_upper_bound,
            "curvature": self.curvature,
        }


def scheme_from_function(spec: FunctionSpec) -> CoefficientScheme:
    """Build the curvature-shifted scheme for a target function."""
    if spec.second_deriv_bound == 0.0:
        valid_from = 0
    else:
        valid_from = min_support_index(spec) - 1
    zero_curv = spec.second_deriv_bound == 0.0
    return CoefficientScheme(
        label=spec.label,
        valid_from=valid_from,
        certifies_lower_bound=True,
        certifies_upper_bound=zero_curv,
        source=spec,
    )


# ---------------------------------------------------------------------------
# Bernstein polynomials


@dataclass(frozen=True)
class BernsteinPolynomial:
    """Coefficients on the Bernstein basis of the given degree."""

    degree: int
    coefficients: tuple

    def __post_init__(self):
        if self.degree < 0 or len(self.coefficients) != self.degree + 1:
            raise DomainError(
                f"need degree+1 coefficients, got {len(self.coefficients)} "
                f"for degree {self.degree}"
            )

    def __call__(self, x: float) -> float:
        return bernstein_eval(self.coefficients, x)


def bernstein_eval(coefficients: Sequence, x: float) -> float:
    """De Casteljau evaluation; stays inside [min c, max c] by construction."""
    if not 0.0 <= x <= 1.0:
        raise DomainError(f"evaluation point {x} outside [0, 1]")
    work = [float(c) for c in coefficients]
    n = len(work)
    if n == 0:
        raise DomainError("empty coefficient row")
    for level in range(n - 1):
        for j in range(n - 1 - level):
            work[j] = work[j] + x * (work[j + 1] - work[j])
    return work[0]


def bernstein_eval_exact(coefficients: Sequence[Fraction], x: Fraction) -> Fraction:
    """Exact basis-sum evaluation at a rational point."""
    x = Fraction(x)
    if not 0 <= x <= 1:
        raise DomainError(f"evaluation point {x} outside [0, 1]")
    n = len(coefficients) - 1
    if n < 0:
        raise DomainError("empty coefficient row")
    acc = Fraction(0)
    for j, c in enumerate(coefficients):
        acc += Fraction(c) * math.comb(n, j) * x**j * (1 - x) ** (n - j)
    return acc


def lower_polynomial(scheme: CoefficientScheme, n: int) -> BernsteinPolynomial:
    """Degree-n lower squeeze polynomial of the scheme."""
    return BernsteinPolynomial(n, tuple(scheme.lower(n, i) for i in range(n + 1)))


def upper_polynomial(scheme: CoefficientScheme, n: int) -> BernsteinPolynomial:
    return BernsteinPolynomial(n, tuple(scheme.upper(n, i) for i in range(n + 1)))


# ---------------------------------------------------------------------------
# consistency validation


def validate_consistency(
    scheme: CoefficientScheme, n_max: int, use_exact: bool = True
) -> OracleReport:
    """Exact scan of the inequalities the estimator's one-sidedness rests on.

    For every valid_from <= m <= n <= n_max and every cell k:

      * lower rows never exceed their own mixes:  a(n,k) - H_n(m,k) >= 0
      * upper rows never fall below theirs:       mix_b(n,k) - b(n,k) >= 0
      * rows are ordered inside [0, 1]:           0 <= a(n,k) <= b(n,k) <= 1

    Residuals are exact rationals when the scheme has an exact path (the
    float fallback uses a 1e-12 slack and is flagged in the report detail).
    """
    lo_n = scheme.valid_from
    hi_n = n_max if scheme.n_max is None else min(n_max, scheme.n_max)
    if hi_n < lo_n:
        raise DomainError(f"scan range empty: valid_from={lo_n}, n_max={hi_n}")
    exact = use_exact and scheme.has_exact
    if exact:
        lower_row = scheme.lower_exact
        upper_row = scheme.upper_exact
        mix = mixing.mixed_coefficient_exact
        slack = Fraction(0)
    else:
        lower_row = scheme.lower
        upper_row = scheme.upper
        mix = mixing.mixed_coefficient
        slack = 1e-12

    range_checked = 0
    range_viol = 0
    range_worst = None
    for n in range(max(lo_n, 1), hi_n + 1):
        for k in range(n + 1):
            a = lower_row(n, k)
            b = upper_row(n, k)
            range_checked += 1
            margin = min(a, b - a, 1 - b)
            if range_worst is None or margin < range_worst:
                range_worst = margin
            if margin < -slack:
                range_viol += 1

    lower_checked = lower_viol = 0
    upper_checked = upper_viol = 0
    lower_worst = None
    upper_worst = None
    lower_worst_at = upper_worst_at = None
    for n in range(lo_n, hi_n + 1):
        for m in range(lo_n, n + 1):
            for k in range(n + 1):
                res_lo = lower_row(n, k) - mix(lower_row, n, m, k)
                lower_checked += 1
                if lower_worst is None or res_lo < lower_worst:
                    lower_worst, lower_worst_at = res_lo, (n, m, k)
                if res_lo < -slack:
                    lower_viol += 1
                res_hi = mix(upper_row, n, m, k) - upper_row(n, k)
                upper_checked += 1
                if upper_worst is None or res_hi < upper_worst:
                    upper_worst, upper_worst_at = res_hi, (n, m, k)
                if res_hi < -slack:
                    upper_viol += 1

    mode = "exact" if exact else "float"
    checks = (
        CheckResult(
            name="rows_inside_unit_interval",
            passed=range_viol == 0,
            checked=range_checked,
            violations=range_viol,
            worst=float(range_worst),
            detail={"mode": mode, "n_max": hi_n},
        ),
        CheckResult(
            name="lower_rows_dominate_mixes",
            passed=lower_viol == 0,
            checked=lower_checked,
            violations=lower_viol,
            worst=float(lower_worst),
            detail={"mode": mode, "worst_at": lower_worst_at, "n_max": hi_n},
        ),
        CheckResult(
            name="upper_rows_below_mixes",
            passed=upper_viol == 0,
            checked=upper_checked,
            violations=upper_viol,
            worst=float(upper_worst),
            detail={"mode": mode, "worst_at": upper_worst_at, "n_max": hi_n},
        ),
    )
    return OracleReport(subject=f"scheme:{scheme.label}", checks=checks)


# ---------------------------------------------------------------------------
# coefficient table files


def save_coefficient_table(scheme: CoefficientScheme, path, n_max: int) -> None:
    """Write rows valid_from..n_max as `n k a b` lines with exact rationals."""
    hi = n_max if scheme.n_max is None else min(n_max, scheme.n_max)
    with open(path, "w", encoding="ascii") as fh:
        fh.write(f"# coefficient table: {scheme.label}\n")
        fh.write("# columns: n k lower upper (rationals p/q)\n")
        for n in range(scheme.valid_from, hi + 1):
            for i in range(n + 1):
                a = scheme.lower_exact(n, i)
                b = scheme.upper_exact(n, i)
                fh.write(f"{n} {i} {a.numerator}/{a.denominator} "
                         f"{b.numerator}/{b.denominator}\n")


def _parse_rational(tok: str, where: str) -> Fraction:
    try:
        return Fraction(tok)
    except (ValueError, ZeroDivisionError) as exc:
        raise TableFormatError(f"{where}: bad rational {tok!r}") from exc


def load_coefficient_table(
    path, validate: bool = True, label: Optional[str] = None
) -> CoefficientScheme:
    """Read a coefficient table; validate consistency over its full range.

    With validate=True (default) a failing scan raises SchemeValidationError
    carrying the report; validate=False loads with both certificates off so
    the caller can run validate_consistency itself.
    """
    rows: dict[int, dict[int, tuple[Fraction, Fraction]]] = {}
    with open(path, "r", encoding="ascii") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            parts = line.split()
            where = f"{path}:{lineno}"
            if len(parts) != 4:
                raise TableFormatError(f"{where}: expected 'n k lower upper'")
            try:
                n, i = int(parts[0]), int(parts[1])
            except ValueError as exc:
                raise TableFormatError(f"{where}: bad indices") from exc
            if n < 0 or not 0 <= i <= n:
                raise TableFormatError(f"{where}: indices out of range")
            a = _parse_rational(parts[2], where)
            b = _parse_rational(parts[3], where)
            if i in rows.setdefault(n, {}):
                raise TableFormatError(f"{where}: duplicate cell ({n}, {i})")
            rows[n][i] = (a, b)
    if not rows:
        raise TableFormatError(f"{path}: no coefficient rows")
    n_lo, n_hi = min(rows), max(rows)
    for n in range(n_lo, n_hi + 1):
        if n not in rows or sorted(rows[n]) != list(range(n + 1)):
            raise TableFormatError(
                f"{path}: row {n} incomplete (need all cells 0..{n})"
            )
    for n, cells in rows.items():
        for i, (a, b) in cells.items():
            if not (0 <= a <= b <= 1):
                raise TableFormatError(
                    f"{path}: cell ({n}, {i}) violates 0 <= lower <= upper <= 1"
                )
    scheme = CoefficientScheme(
        label=label or f"table:{path}",
        valid_from=n_lo,
        certifies_lower_bound=False,
        certifies_upper_bound=False,
        n_max=n_hi,
        _rows=rows,
    )
    if not validate:
        return scheme
    report = validate_consistency(scheme, n_max=n_hi)
    if not report.passed:
        raise SchemeValidationError(
            f"coefficient table {path} failed consistency validation", report
        )
    return CoefficientScheme(
        label=scheme.label,
        valid_from=n_lo,
        certifies_lower_bound=True,
        certifies_upper_bound=True,
        n_max=n_hi,
        _rows=rows,
    )
