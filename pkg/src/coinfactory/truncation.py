"""Zeta-truncated law for the random evaluation index.

The estimator evaluates its telescoping sum up to a random index L with

    P(L = n) = n**(-lam) / Z(lam, k)      for n >= k, zero below,

where Z(lam, k) = sum_{j>=k} j**(-lam) is the shifted (Hurwitz) zeta value and
lam > 1, k >= 1.  Survival probabilities P(L >= n) = Z(lam, n) / Z(lam, k)
divide the telescoping increments, so they must be reproducible to near machine
precision; everything here is deterministic.

Zeta values are computed by direct head summation plus an integral enclosure of
the tail.  Because x**(-lam) is convex, the trapezoid comparison bounds the
tail from below and the midpoint comparison from above:

    I(M) + M**(-lam)/2  <=  sum_{m>=M} m**(-lam)  <=  I(M - 1/2),

with I(t) = t**(1-lam)/(lam-1).  The enclosure width decays like
lam * M**(-lam-1)/8, so a 1e-12 tolerance needs only ~3e4 head terms even at
lam = 1.5.

Sampling is by inversion on a lazily grown prefix table: exactly one uniform
per draw, smallest n with CDF(n) >= u.  A hard cap aborts pathological walks.
"""

from __future__ import annotations

import math
import threading
from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError, TruncationCapError

__all__ = [
    "hurwitz_zeta",
    "hurwitz_zeta_bracket",
    "TruncationLaw",
    "DEFAULT_LAMBDA",
    "DEFAULT_CAP",
    "DEFAULT_ZETA_TOL",
]

DEFAULT_LAMBDA = 2.0
DEFAULT_CAP = 10_000_000
DEFAULT_ZETA_TOL = 1e-12

# prefix tables grow by whole chunks; compensation is applied per chunk
_CHUNK = 1 << 16


def _check_law_args(lam: float, k: int) -> None:
    if not (isinstance(k, (int, np.integer)) and k >= 1):
        raise DomainError(f"start index k must be an integer >= 1, got {k!r}")
    if not (lam > 1.0 and math.isfinite(lam)):
        raise DomainError(f"tail exponent lam must be finite and > 1, got {lam!r}")


def _zeta_with_bracket(lam: float, k: int, tol: float) -> tuple[float, float, float]:
    """Return (estimate, lo, hi) with true value in [lo, hi] and hi-lo <= 2*tol."""
    _check_law_args(lam, k)
    if not (tol > 0.0):
        raise DomainError(f"tolerance must be positive, got {tol!r}")

    # pick the tail cutoff M so the enclosure width is below tol
    M = max(k, 16)
    while True:
        width = (
            ((M - 0.5) ** (1.0 - lam) - M ** (1.0 - lam)) / (lam - 1.0)
            - 0.5 * M ** (-lam)
        )
        if width <= 0.9 * tol or M > 1 << 34:
            break
        M *= 2

    head = math.fsum(j ** (-lam) for j in range(k, M))
    tail_lo = M ** (1.0 - lam) / (lam - 1.0) + 0.5 * M ** (-lam)
    tail_hi = (M - 0.5) ** (1.0 - lam) / (lam - 1.0)
    # fsum is correctly rounded; allow one ulp of slack on the head
    slack = 4.0 * np.finfo(float).eps * head
    lo = head + tail_lo - slack
    hi = head + tail_hi + slack
    return 0.5 * (lo + hi), lo, hi


def hurwitz_zeta(lam: float, k: int, tol: float = DEFAULT_ZETA_TOL) -> float:
    """Shifted zeta sum_{j>=k} j**(-lam), within tol of the true value."""
    return _zeta_with_bracket(lam, k, tol)[0]


def hurwitz_zeta_bracket(
    lam: float, k: int, tol: float = DEFAULT_ZETA_TOL
) -> tuple[float, float]:
    """Certified enclosure [lo, hi] of the shifted zeta value."""
    _, lo, hi = _zeta_with_bracket(lam, k, tol)
    return lo, hi


@dataclass(eq=False)
class TruncationLaw:
    """Truncated power-law distribution of the evaluation index.

    Immutable in its parameters; the prefix table is an internal cache grown
    lazily under a lock (shared instances are safe across threads, and each
    forked worker grows its own copy).
    """

    lam: float = DEFAULT_LAMBDA
    k: int = 1
    cap: int = DEFAULT_CAP
    zeta_tol: float = DEFAULT_ZETA_TOL

    _norm: float = field(init=False, repr=False)
    _norm_bracket: tuple[float, float] = field(init=False, repr=False)
    _prefix: np.ndarray = field(init=False, repr=False)
    _prefix_len: int = field(init=False, repr=False)
    _carry_parts: list = field(init=False, repr=False)
    _lock: threading.Lock = field(init=False, repr=False)

    def __post_init__(self):
        _check_law_args(self.lam, self.k)
        self.k = int(self.k)
        if self.cap < self.k:
            raise DomainError(f"cap {self.cap} lies below the start index {self.k}")
        est, lo, hi = _zeta_with_bracket(self.lam, self.k, self.zeta_tol)
        if not (est > 0.0):
            raise DomainError("normalizer underflowed; lam is too large for floats")
        self._norm = est
        self._norm_bracket = (lo, hi)
        self._prefix = np.empty(0, dtype=np.float64)
        self._prefix_len = 0
        self._carry_parts = []  # exact running base, re-summed with fsum per chunk
        self._lock = threading.Lock()

    # -- law values ---------------------------------------------------------

    @property
    def normalizer(self) -> float:
        return self._norm

    @property
    def normalizer_bracket(self) -> tuple[float, float]:
        return self._norm_bracket

    def pmf(self, n: int) -> float:
        """P(L = n); zero below the start index."""
        if n < 1:
            raise DomainError(f"index must be >= 1, got {n}")
        if n < self.k:
            return 0.0
        return n ** (-self.lam) / self._norm

    def survival(self, n: int) -> float:
        """P(L >= n) for n >= k; equals 1.0 exactly at n == k.

        Values are floored at pmf(n), which the true survival always
        dominates, so deep-tail cancellation can never return zero.
        """
        if n < self.k:
            raise DomainError(f"survival index {n} below start index {self.k}")
        if n == self.k:
            return 1.0
        if n > self.cap + 1:
            raise DomainError(f"survival index {n} beyond cap {self.cap}")
        self._ensure(n - self.k)  # prefix through n-1
        raw = (self._norm - self._prefix[n - 1 - self.k]) / self._norm
        return max(float(raw), n ** (-self.lam) / self._norm)

    def survival_slice(self, lo: int, hi: int) -> np.ndarray:
        """Vector of P(L >= n) for n = lo..hi (inclusive), lo >= k, hi <= cap."""
        if lo < self.k:
            raise DomainError(f"lower index {lo} below start index {self.k}")
        if hi > self.cap:
            raise DomainError(f"upper index {hi} beyond cap {self.cap}")
        if hi < lo:
            return np.empty(0, dtype=np.float64)
        out = np.empty(hi - lo + 1, dtype=np.float64)
        start = lo
        if lo == self.k:
            out[0] = 1.0
            start = lo + 1
        if start <= hi:
            self._ensure(hi - self.k)
            seg = self._prefix[start - 1 - self.k : hi - self.k]
            vals = (self._norm - seg) / self._norm
            floor = np.arange(start, hi + 1, dtype=np.float64) ** (-self.lam)
            np.maximum(vals, floor / self._norm, out=out[start - lo :])
        return out

    def survival_view(self, L: int) -> np.ndarray:
        """Vector of P(L >= n) for n = k..L (inclusive), one numpy array."""
        if L < self.k:
            raise DomainError(f"upper index {L} below start index {self.k}")
        return self.survival_slice(self.k, L)

    def sample(self, u: float) -> int:
        """Smallest n >= k with CDF(n) >= u.  Consumes exactly the one uniform."""
        if not (0.0 <= u < 1.0):
            raise DomainError(f"uniform draw must lie in [0, 1), got {u!r}")
        target = u * self._norm
        idx = int(np.searchsorted(self._prefix[: self._prefix_len], target, side="left"))
        while idx >= self._prefix_len:
            if self._prefix_len >= self.cap - self.k + 1:
                cdf_at_cap = self._prefix[self._prefix_len - 1] / self._norm
                raise TruncationCapError(u, self.cap, float(cdf_at_cap))
            self._ensure(min(2 * max(self._prefix_len, _CHUNK), self.cap - self.k + 1))
            idx = int(
                np.searchsorted(self._prefix[: self._prefix_len], target, side="left")
            )
        return self.k + idx

    # -- cache --------------------------------------------------------------

    def _ensure(self, count: int) -> None:
        """Grow the prefix table to cover at least `count` entries.

        Entry i holds sum_{j=k}^{k+i} j**(-lam).  Chunks are cumsummed in
        float64 on top of an fsum-exact base, so absolute error stays below
        ~chunk * eps regardless of table length.
        """
        if count <= self._prefix_len:
            return
        with self._lock:
            while self._prefix_len < count:
                lo = self.k + self._prefix_len
                hi = min(lo + _CHUNK, self.k + (self.cap - self.k + 1))
                if lo >= hi:
                    break
                terms = np.arange(lo, hi, dtype=np.float64) ** (-self.lam)
                base = math.fsum(self._carry_parts)
                if self._prefix_len > 0:
                    # keep the table monotone across the chunk seam
                    base = max(base, float(self._prefix[self._prefix_len - 1]))
                block = base + np.cumsum(terms)
                self._carry_parts.append(float(np.sum(terms)))
                new_len = self._prefix_len + (hi - lo)
                if new_len > len(self._prefix):
                    grown = np.empty(
                        max(new_len, 2 * len(self._prefix), _CHUNK), dtype=np.float64
                    )
                    grown[: self._prefix_len] = self._prefix[: self._prefix_len]
                    self._prefix = grown
                self._prefix[self._prefix_len : new_len] = block
                self._prefix_len = new_len

    # -- pickling (caches are per-process; locks are not picklable) ---------

    def __getstate__(self):
        return {
            "lam": self.lam,
            "k": self.k,
            "cap": self.cap,
            "zeta_tol": self.zeta_tol,
        }

    def __setstate__(self, state):
        self.lam = state["lam"]
        self.k = state["k"]
        self.cap = state["cap"]
        self.zeta_tol = state["zeta_tol"]
        self.__post_init__()

    # -- description --------------------------------------------------------

    def describe(self) -> dict:
        return {
            "lam": self.lam,
            "k": self.k,
            "cap": self.cap,
            "zeta_tol": self.zeta_tol,
            "normalizer": self._norm,
        }
