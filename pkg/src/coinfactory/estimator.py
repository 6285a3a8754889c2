"""Debiased truncated estimator: unbiased ψ(L, S) from a random coin budget.

A draw samples a budget L from the truncation law (one uniform), consumes
exactly L coins with S heads, and evaluates

    ψ = R(k-1) + sum_{m=k}^{L} [R(m) - R(m-1)] / P(L >= m)

where R(m) is the scheme's row-m coefficient mixed over a uniform size-m
subsample of the coins and k is the law's start index.  Conditioned on L the
value is unbiased for the row-L squeeze polynomial at the coin bias, so over
the law it is unbiased for the limit; with a consistent lower scheme every
telescoping increment is nonnegative, which keeps ψ >= 0 pathwise.  ψ may
exceed one unless the scheme pins both sides; values above one are reported,
never clamped.

Row means R(m) use closed forms for the built-in families (`rowmeans`) and
the generic hypergeometric mix otherwise.  Heavy-tailed laws make L huge, so
row sweeps run in fixed-size chunks with survival weights served straight
from the law's prefix table.
"""

from __future__ import annotations

import math
import multiprocessing
import os
from dataclasses import dataclass, field
from typing import Optional, Sequence, Union

import numpy as np

from . import mixing, rowmeans
from .approx import CoefficientScheme
from .errors import (
    CertificationError,
    DomainError,
    ReplayExhaustedError,
    TruncationCapError,
)
from .truncation import TruncationLaw

__all__ = [
    "CoinSource",
    "RandomCoins",
    "ReplayCoins",
    "EstimatorConfig",
    "EstimateOutcome",
    "psi_value",
    "draw",
    "factory_coin",
    "run_replicates",
    "run_factory",
]

_CHUNK_ROWS = 1 << 19
_GENERIC_ROW_LIMIT = 20_000
_MEMO_MAX = 1 << 18


# ---------------------------------------------------------------------------
# coin sources


class CoinSource:
    """Supplies coin flips as 0/1 arrays; tracks how many were consumed."""

    consumed: int = 0

    def take(self, n: int) -> np.ndarray:
        raise NotImplementedError


class RandomCoins(CoinSource):
    """Bernoulli coins with known bias, backed by a numpy Generator."""

    def __init__(self, x: float, generator: np.random.Generator):
        if not 0.0 <= x <= 1.0:
            raise DomainError(f"coin bias must lie in [0, 1], got {x}")
        self.x = float(x)
        self.generator = generator
        self.consumed = 0

    def take(self, n: int) -> np.ndarray:
        if n < 0:
            raise DomainError(f"cannot take {n} coins")
        flips = (self.generator.random(n) < self.x).astype(np.uint8)
        self.consumed += n
        return flips


class ReplayCoins(CoinSource):
    """Replays a fixed coin record; raises when the record runs out."""

    def __init__(self, bits: Union[Sequence[int], np.ndarray]):
        arr = np.asarray(bits, dtype=np.uint8)
        if arr.ndim != 1 or (arr.size and arr.max() > 1):
            raise DomainError("replay record must be a flat sequence of 0/1")
        self._bits = arr
        self._pos = 0
        self.consumed = 0

    @classmethod
    def from_text(cls, text: str) -> "ReplayCoins":
        """Parse ASCII 0/1 characters; whitespace of any kind is ignored."""
        cleaned = [ch for ch in text if not ch.isspace()]
        bad = sorted({ch for ch in cleaned if ch not in "01"})
        if bad:
            raise DomainError(f"replay text holds non-bit characters: {bad}")
        return cls(np.frombuffer("".join(cleaned).encode("ascii"), dtype=np.uint8) - ord("0"))

    @classmethod
    def from_file(cls, path) -> "ReplayCoins":
        with open(path, "r", encoding="ascii") as fh:
            return cls.from_text(fh.read())

    @property
    def remaining(self) -> int:
        return self._bits.size - self._pos

    def take(self, n: int) -> np.ndarray:
        if n < 0:
            raise DomainError(f"cannot take {n} coins")
        if n > self.remaining:
            raise ReplayExhaustedError(
                f"replay record exhausted: need {n} coins, {self.remaining} left"
            )
        out = self._bits[self._pos : self._pos + n]
        self._pos += n
        self.consumed += n
        return out


# ---------------------------------------------------------------------------
# configuration


@dataclass(frozen=True, eq=False)
class EstimatorConfig:
    """A scheme, a truncation law, and the estimator side, checked together.

    The law's start index must leave the base row inside the scheme's
    certified window, the chosen side must carry the scheme's consistency
    certificate, and a finite-table scheme must cover every budget the law
    can emit.
    """

    scheme: CoefficientScheme
    law: TruncationLaw
    variant: str = "lower"

    def __post_init__(self):
        if self.variant not in ("lower", "upper"):
            raise DomainError(f"variant must be 'lower' or 'upper', got {self.variant!r}")
        need = self.scheme.min_start_index()
        if self.law.k < need:
            raise DomainError(
                f"law start index {self.law.k} below the smallest admissible "
                f"start {need} for scheme {self.scheme.label!r}"
            )
        if self.variant == "lower" and not self.scheme.certifies_lower_bound:
            raise CertificationError(
                f"scheme {self.scheme.label!r} carries no lower consistency "
                "certificate; a lower-side estimator would be uncontrolled"
            )
        if self.variant == "upper" and not self.scheme.certifies_upper_bound:
            raise CertificationError(
                f"scheme {self.scheme.label!r} carries no upper consistency "
                "certificate; an upper-side estimator would be uncontrolled"
            )
        if self.scheme.n_max is not None and self.law.cap > self.scheme.n_max:
            raise DomainError(
                f"law cap {self.law.cap} exceeds the table's last row "
                f"{self.scheme.n_max}; lower the cap to the table range"
            )

    def describe(self) -> dict:
        d = {"variant": self.variant}
        d.update({f"scheme_{k}": v for k, v in self.scheme.describe().items()})
        d.update({f"law_{k}": v for k, v in self.law.describe().items()})
        return d


@dataclass(frozen=True)
class EstimateOutcome:
    """One draw: budget, head count, estimate, and the coins it consumed."""

    L: int
    S: int
    psi: float
    coins_used: int


# ---------------------------------------------------------------------------
# the estimate itself


def _family(config: EstimatorConfig):
    src = config.scheme.source
    if src is None:
        return None, ()
    return src.mean_family, src.mean_params


def _psi_by_rows(config: EstimatorConfig, L: int, S: int) -> float:
    """Chunked telescoping sweep over rows k-1 .. L."""
    law = config.law
    scheme = config.scheme
    k = law.k
    family, params = _family(config)
    sign = -1.0 if config.variant == "lower" else 1.0
    curv = scheme.curvature

    def family_rows(lo: int, hi: int) -> np.ndarray:
        if family == "quadratic":
            c0, c1, c2 = params
            vals = rowmeans.quad_mean_rows(c0, c1, c2, L, S, lo, hi)
        else:
            off, amp = params
            vals = off + amp * rowmeans.sin_imag_rows(L, S, lo, hi)
        if curv:
            vals += sign * curv / (4.0 * np.arange(lo, hi + 1, dtype=np.float64))
        return vals

    if family in ("quadratic", "sin2pi"):
        rows = family_rows
    else:
        if L > _GENERIC_ROW_LIMIT:
            raise DomainError(
                f"scheme {scheme.label!r} has no closed-form row family and "
                f"the drawn budget {L} is too large for the generic sweep; "
                "cap the law or use a family-tagged target"
            )
        row_fn = scheme.lower if config.variant == "lower" else scheme.upper

        def rows(lo: int, hi: int) -> np.ndarray:
            return np.array(
                [mixing.mixed_coefficient(row_fn, L, m, S) for m in range(lo, hi + 1)]
            )

    base = float(rows(k - 1, k - 1)[0])
    total = base
    prev = base
    for lo in range(k, L + 1, _CHUNK_ROWS):
        hi = min(lo + _CHUNK_ROWS - 1, L)
        vals = rows(lo, hi)
        surv = law.survival_slice(lo, hi)
        diffs = np.empty(hi - lo + 1, dtype=np.float64)
        diffs[0] = vals[0] - prev
        if hi > lo:
            np.subtract(vals[1:], vals[:-1], out=diffs[1:])
        total += float(np.sum(diffs / surv))
        prev = float(vals[-1])
    return total


def psi_value(config: EstimatorConfig, L: int, S: int) -> float:
    """The estimate for a sample of size L with S heads; pure in (L, S)."""
    if L < config.law.k:
        raise DomainError(f"budget {L} below the law's start index {config.law.k}")
    if L > config.law.cap:
        raise DomainError(f"budget {L} beyond the law's cap {config.law.cap}")
    if not 0 <= S <= L:
        raise DomainError(f"head count {S} outside 0..{L}")
    family, params = _family(config)
    if family == "affine":
        # zero curvature: every row mean equals f(S/L) and the telescoping
        # collapses because the first survival weight is exactly one
        return rowmeans.affine_mean(params[0], params[1], L, S)
    return _psi_by_rows(config, L, S)


# ---------------------------------------------------------------------------
# draws


def draw(
    config: EstimatorConfig,
    coins: CoinSource,
    u: Optional[float] = None,
    force_L: Optional[int] = None,
) -> EstimateOutcome:
    """One full draw: sample the budget, consume that many coins, estimate.

    `force_L` bypasses the budget draw (no uniform consumed) for replay and
    analysis; the forced value must be a budget the law could emit.
    """
    if force_L is not None:
        L = int(force_L)
        if L < config.law.k or L > config.law.cap:
            raise DomainError(
                f"forced budget {L} outside the law's range "
                f"[{config.law.k}, {config.law.cap}]"
            )
    else:
        if u is None:
            raise DomainError("draw needs a uniform when force_L is not given")
        L = config.law.sample(u)
    before = coins.consumed
    bits = coins.take(L)
    S = int(np.sum(bits, dtype=np.int64))
    psi = psi_value(config, L, S)
    return EstimateOutcome(L=L, S=S, psi=psi, coins_used=coins.consumed - before)


def factory_coin(
    config: EstimatorConfig, coins: CoinSource, u: float, v: float
) -> tuple[int, EstimateOutcome]:
    """Emit one output coin with success probability equal to the target.

    Requires a scheme certified on both sides with coinciding rows, which is
    what pins ψ into [0, 1] pathwise; the output bit is 1 when v < ψ.
    """
    if not (
        config.scheme.certifies_lower_bound and config.scheme.certifies_upper_bound
    ):
        raise CertificationError(
            f"scheme {config.scheme.label!r} is not certified on both sides; "
            "the estimate is not a probability pathwise"
        )
    if _max_row_gap(config.scheme) > 0:
        raise CertificationError(
            f"scheme {config.scheme.label!r} has separated rows; the estimate "
            "can leave [0, 1] pathwise, so it cannot drive an output coin"
        )
    if not 0.0 <= v < 1.0:
        raise DomainError(f"flip uniform must lie in [0, 1), got {v!r}")
    outcome = draw(config, coins, u)
    return (1 if v < outcome.psi else 0), outcome


def _max_row_gap(scheme: CoefficientScheme) -> float:
    if scheme.curvature is not None:
        return scheme.curvature
    hi = scheme.n_max
    return max(scheme.row_gap(n) for n in range(scheme.valid_from, hi + 1))


# ---------------------------------------------------------------------------
# replicate engine


def _count_heads(gen: np.random.Generator, L: int, x: float) -> int:
    s = 0
    left = L
    while left > 0:
        n = min(left, 1 << 20)
        s += int(np.count_nonzero(gen.random(n) < x))
        left -= n
    return s


def _rep_generator(seed: int, rep: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence((seed, rep))))


def _run_block(
    config: EstimatorConfig,
    x: float,
    seed: int,
    rep_lo: int,
    rep_hi: int,
    on_cap: str,
    factory: bool,
    memo: dict,
) -> np.ndarray:
    fields = [("rep", np.int64), ("L", np.int64), ("S", np.int64), ("psi", np.float64)]
    if factory:
        fields.append(("bit", np.int8))
    out = np.zeros(rep_hi - rep_lo, dtype=np.dtype(fields))
    for j, rep in enumerate(range(rep_lo, rep_hi)):
        gen = _rep_generator(seed, rep)
        u = float(gen.random())
        row = out[j]
        row["rep"] = rep
        try:
            L = config.law.sample(u)
        except TruncationCapError:
            if on_cap == "raise":
                raise
            row["L"] = -1
            row["S"] = -1
            row["psi"] = np.nan
            if factory:
                row["bit"] = -1
            continue
        S = _count_heads(gen, L, x)
        key = (L, S)
        psi = memo.get(key)
        if psi is None:
            psi = psi_value(config, L, S)
            if len(memo) < _MEMO_MAX:
                memo[key] = psi
        row["L"] = L
        row["S"] = S
        row["psi"] = psi
        if factory:
            v = float(gen.random())
            row["bit"] = 1 if v < psi else 0
    return out


# forked workers read the job from module state; nothing is pickled, so
# configs built on closures still fan out
_JOB = None


def _worker_block(args):
    lo, hi = args
    config, x, seed, on_cap, factory = _JOB
    return _run_block(config, x, seed, lo, hi, on_cap, factory, {})


def _parallel_blocks(config, x, seed, reps, on_cap, factory, workers):
    global _JOB
    step = max(1, math.ceil(reps / (workers * 4)))
    bounds = [(lo, min(lo + step, reps)) for lo in range(0, reps, step)]
    _JOB = (config, x, seed, on_cap, factory)
    try:
        ctx = multiprocessing.get_context("fork")
        with ctx.Pool(processes=workers) as pool:
            blocks = pool.map(_worker_block, bounds)
    finally:
        _JOB = None
    return np.concatenate(blocks)


def _summarize(records: np.ndarray, config, x, seed, on_cap, factory) -> dict:
    ok = records["L"] >= 0
    psi = records["psi"][ok]
    n_ok = int(np.count_nonzero(ok))
    cap_hits = int(records.shape[0] - n_ok)
    summary = {
        "reps": int(records.shape[0]),
        "x": float(x),
        "seed": int(seed),
        "on_cap": on_cap,
        "cap_hits": cap_hits,
        "capped_reps": [int(r) for r in records["rep"][~ok][:20]],
        "coins_total": int(np.sum(records["L"][ok], dtype=np.int64)),
        "mean": float(np.mean(psi)) if n_ok else None,
        "se": float(np.std(psi, ddof=1) / math.sqrt(n_ok)) if n_ok > 1 else None,
        "min_psi": float(np.min(psi)) if n_ok else None,
        "max_psi": float(np.max(psi)) if n_ok else None,
        "psi_above_one": int(np.count_nonzero(psi > 1.0)),
    }
    if factory:
        bits = records["bit"][ok]
        summary["bit_mean"] = float(np.mean(bits)) if n_ok else None
        summary["bit_se"] = (
            float(math.sqrt(max(summary["bit_mean"] * (1 - summary["bit_mean"]), 0.0) / n_ok))
            if n_ok
            else None
        )
    summary["config"] = config.describe()
    return summary


def _run_engine(config, x, reps, seed, workers, on_cap, factory):
    if not 0.0 <= x <= 1.0:
        raise DomainError(f"coin bias must lie in [0, 1], got {x}")
    if reps < 1:
        raise DomainError(f"need at least one replicate, got {reps}")
    if on_cap not in ("raise", "count"):
        raise DomainError(f"on_cap must be 'raise' or 'count', got {on_cap!r}")
    workers = max(1, int(workers))
    if workers > 1 and hasattr(os, "fork"):
        records = _parallel_blocks(config, x, seed, reps, on_cap, factory, workers)
    else:
        records = _run_block(config, x, seed, 0, reps, on_cap, factory, {})
    return records, _summarize(records, config, x, seed, on_cap, factory)


def run_replicates(
    config: EstimatorConfig,
    x: float,
    reps: int,
    seed: int,
    workers: int = 1,
    on_cap: str = "raise",
):
    """Run seeded replicates; byte-identical for any worker count.

    Replicate r draws its own generator from (seed, r), so the records
    depend only on (config, x, seed, reps).  Returns (records, summary):
    records is a structured array over rep/L/S/psi with capped replicates
    marked by L = -1 and a NaN estimate, and the summary aggregates in
    replicate order.
    """
    return _run_engine(config, x, reps, seed, workers, on_cap, factory=False)


def run_factory(
    config: EstimatorConfig,
    x: float,
    flips: int,
    seed: int,
    workers: int = 1,
    on_cap: str = "raise",
):
    """Emit seeded output coins; same determinism contract as run_replicates."""
    if not (
        config.scheme.certifies_lower_bound and config.scheme.certifies_upper_bound
    ) or _max_row_gap(config.scheme) > 0:
        raise CertificationError(
            f"scheme {config.scheme.label!r} cannot drive output coins; it "
            "must be certified on both sides with coinciding rows"
        )
    return _run_engine(config, x, flips, seed, workers, on_cap, factory=True)
