"""Closed-form subsample-mean rows for the built-in target families.

For a drawn sample of size L with s successes, the estimator needs the
hypergeometric mean of f(I/m) for every row size m up to L.  The naive
sweep is O(L^2) in the support sizes and cannot run at heavy-tail scale;
for the built-in families the mean collapses:

  affine      c0 + c1 t            mean is c0 + c1 s/L for every row
  quadratic   c0 + c1 t + c2 t^2   subsample variance identity
  sin2pi      off + amp sin(2pi t) factorial-moment series for E[z^I]

The sin2pi series: with z = exp(2 pi i / m) and ff the falling factorial,

    E[z^I] = sum_j C(m, j) ff(s, j) / ff(L, j) (z - 1)^j

terminates at j = min(m, s); the terms decay faster than (2 pi s / L)^j / j!
so a relative 1e-17 exit fires after a few dozen terms at any scale.  A
numba kernel covers the hot path with a vectorized numpy twin as fallback;
the two agree to rounding but not bit for bit (their exit tests differ in
shape), and a given environment always picks the same one, so determinism
per installed environment holds.

Generic schemes without a family tag fall back to `mixing.mixed_coefficient`
row by row; that path is only viable at desk scale.
"""

from __future__ import annotations

import math

import numpy as np

from .errors import DomainError

__all__ = ["HAVE_NUMBA", "sin_imag_rows", "quad_mean_rows", "affine_mean"]

try:
    from numba import njit

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    HAVE_NUMBA = False

    def njit(*args, **kwargs):
        def wrap(fn):
            return fn

        return wrap


# |term|^2 thresholds: relative to the accumulator, plus an absolute floor
# so the loop still exits when the accumulator sits near zero
_REL_EXIT = 1e-34
_ABS_EXIT = 1e-44


@njit(cache=True, fastmath=False)
def _sin_imag_numba(L, s, m_lo, m_hi, out):  # pragma: no cover - numba path
    for idx in range(m_hi - m_lo + 1):
        m = m_lo + idx
        half = math.sin(math.pi / m)
        zr = -2.0 * half * half
        zi = math.sin(2.0 * math.pi / m)
        tr = 1.0
        ti = 0.0
        ar = 1.0
        ai = 0.0
        jmax = min(m, s)
        for j in range(jmax):
            scale = ((m - j) * (s - j)) / ((j + 1.0) * (L - j))
            pr = scale * (tr * zr - ti * zi)
            pi_ = scale * (tr * zi + ti * zr)
            tr = pr
            ti = pi_
            ar += tr
            ai += ti
            tt = tr * tr + ti * ti
            if tt < _REL_EXIT * (ar * ar + ai * ai) or tt < _ABS_EXIT:
                break
        out[idx] = ai


def _sin_imag_numpy(L, s, m_lo, m_hi, out):
    m = np.arange(m_lo, m_hi + 1, dtype=np.float64)
    half = np.sin(np.pi / m)
    zr = -2.0 * half * half
    zi = np.sin(2.0 * np.pi / m)
    tr = np.ones_like(m)
    ti = np.zeros_like(m)
    ar = np.ones_like(m)
    ai = np.zeros_like(m)
    jmax = np.minimum(m, float(s))
    j_hi = int(min(m_hi, s))
    for j in range(j_hi):
        scale = np.where(j < jmax, ((m - j) * (s - j)) / ((j + 1.0) * (L - j)), 0.0)
        pr = scale * (tr * zr - ti * zi)
        pi_ = scale * (tr * zi + ti * zr)
        tr = pr
        ti = pi_
        ar += tr
        ai += ti
        tt = float(np.max(tr * tr + ti * ti))
        if tt < _ABS_EXIT:
            break
    out[:] = ai


def sin_imag_rows(L: int, s: int, m_lo: int, m_hi: int) -> np.ndarray:
    """Im E[z^I] for z = exp(2 pi i / m), I ~ subsample counts, m = m_lo..m_hi.

    The sinusoid row mean is then offset + amplitude * (this value).
    """
    if m_lo < 1 or m_hi > L or m_hi < m_lo:
        raise DomainError(f"bad row range {m_lo}..{m_hi} for sample size {L}")
    if not 0 <= s <= L:
        raise DomainError(f"success count {s} outside 0..{L}")
    out = np.empty(m_hi - m_lo + 1, dtype=np.float64)
    if HAVE_NUMBA:
        _sin_imag_numba(L, s, m_lo, m_hi, out)
    else:
        _sin_imag_numpy(L, s, m_lo, m_hi, out)
    return out


def quad_mean_rows(
    c0: float, c1: float, c2: float, L: int, s: int, m_lo: int, m_hi: int
) -> np.ndarray:
    """Mean of c0 + c1 (I/m) + c2 (I/m)^2 over subsample counts, m = m_lo..m_hi.

    Uses E[(I/m)^2] = p^2 + p(1-p)(L-m) / (m(L-1)) with p = s/L.
    """
    if m_lo < 1 or m_hi > L or m_hi < m_lo:
        raise DomainError(f"bad row range {m_lo}..{m_hi} for sample size {L}")
    if not 0 <= s <= L:
        raise DomainError(f"success count {s} outside 0..{L}")
    p = s / L
    base = c0 + c1 * p
    if L == 1:
        # single-coin sample: every admissible row reproduces it exactly
        return np.full(m_hi - m_lo + 1, base + c2 * p * p, dtype=np.float64)
    m = np.arange(m_lo, m_hi + 1, dtype=np.float64)
    var_over_m2 = p * (1.0 - p) * (L - m) / (m * (L - 1.0))
    return base + c2 * (p * p + var_over_m2)


def affine_mean(c0: float, c1: float, L: int, s: int) -> float:
    """Mean of c0 + c1 (I/m): independent of the row size."""
    if not 0 <= s <= L or L < 1:
        raise DomainError(f"bad sample ({L}, {s})")
    return c0 + c1 * (s / L)
