"""Symbolize price series into binary strings at every aggregation level.

At level l, sample j (1-based), the subsampled series s_j, s_{j+l}, s_{j+2l},
... is scanned pairwise: an up-move emits 1, a down-move emits 0, an exact
tie emits nothing.  All comparisons are exact integer comparisons.  The
median-balanced variant replaces the tie point (ratio 1) with the day's
median ratio, computed with exact rational arithmetic.
"""
from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .bits import BitString, write_bit_file

__all__ = [
    "symbolize",
    "median_symbolize",
    "build_grid",
    "concat_month",
    "AggregationGrid",
    "MonthlyString",
    "grid_cell_count",
    "write_monthly_bits",
    "read_monthly_sidecar",
]

UP_IS_ONE = "up1"
DOWN_IS_ONE = "up0"


def _check_prices(prices) -> np.ndarray:
    a = np.asarray(prices, dtype=np.int64)
    if a.size and a.min() <= 0:
        raise ValueError("prices must be strictly positive")
    return a


def subsample(prices: np.ndarray, level: int, sample: int) -> np.ndarray:
    """Values at 1-based indices sample, sample+level, sample+2*level, ..."""
    if not (1 <= sample <= level):
        raise ValueError(f"sample must be in [1, {level}]")
    return prices[sample - 1 :: level]


def symbolize(prices, level: int = 1, sample: int = 1, ratio_direction: str = UP_IS_ONE) -> BitString:
    """Directional bits of the (level, sample) subsampled series.

    Emits one bit per strict price change between consecutive subsampled
    points; equal prices emit nothing.  Returns the empty string when the
    series is too short to compare (fewer than sample+level prices).
    """
    a = _check_prices(prices)
    sub = subsample(a, level, sample)
    if sub.size < 2:
        return BitString()
    new, old = sub[1:], sub[:-1]
    keep = new != old
    if ratio_direction == UP_IS_ONE:
        bits = (new > old)[keep]
    elif ratio_direction == DOWN_IS_ONE:
        bits = (new < old)[keep]
    else:
        raise ValueError(f"unknown ratio direction {ratio_direction!r}")
    return BitString(bits.astype(np.uint8))


def _exact_median_classify(num: np.ndarray, den: np.ndarray) -> np.ndarray:
    """Classify each ratio num/den against the median ratio.

    Returns -1 below, 0 tied with, +1 above the median.  Comparisons are
    exact: int64 cross-multiplication when products cannot overflow, else
    Fraction arithmetic.
    """
    n = num.size
    order = np.lexsort((den, num * 1.0 / den))
    # float keys can mis-order only near-equal ratios; verify and fall back
    small = int(max(num.max(initial=1), den.max(initial=1))).bit_length() * 2 + 2 < 63
    if small:
        key_n, key_d = num[order], den[order]
        ok = np.all(key_n[:-1] * key_d[1:] <= key_n[1:] * key_d[:-1])
        if not ok:
            small = False
    if not small:
        fracs = sorted(Fraction(int(a), int(b)) for a, b in zip(num, den))
        if n % 2:
            med = fracs[n // 2]
        else:
            med = (fracs[n // 2 - 1] + fracs[n // 2]) / 2
        out = np.empty(n, dtype=np.int8)
        for i, (a, b) in enumerate(zip(num, den)):
            r = Fraction(int(a), int(b))
            out[i] = -1 if r < med else (1 if r > med else 0)
        return out
    if n % 2:
        m_n, m_d = int(key_n[n // 2]), int(key_d[n // 2])
    else:
        a, b = int(key_n[n // 2 - 1]), int(key_d[n // 2 - 1])
        c, d = int(key_n[n // 2]), int(key_d[n // 2])
        m_n, m_d = a * d + c * b, 2 * b * d
    if int(num.max()) * m_d < 2**62 and int(den.max()) * abs(m_n) < 2**62:
        lhs = num.astype(np.int64) * np.int64(m_d)
        rhs = den.astype(np.int64) * np.int64(m_n)
        return np.sign(lhs - rhs).astype(np.int8)
    med = Fraction(m_n, m_d)
    out = np.empty(n, dtype=np.int8)
    for i, (a, b) in enumerate(zip(num, den)):
        r = Fraction(int(a), int(b))
        out[i] = -1 if r < med else (1 if r > med else 0)
    return out


def median_symbolize(prices, level: int = 1, sample: int = 1, ratio_direction: str = UP_IS_ONE) -> BitString:
    """Offline balanced variant: bits relative to the median subsampled ratio.

    Ratios exactly equal to the median are skipped, mirroring the tie skip of
    the online rule; with distinct ratios the output is balanced within one.
    """
    a = _check_prices(prices)
    sub = subsample(a, level, sample)
    if sub.size < 2:
        return BitString()
    num, den = sub[1:], sub[:-1]
    cls = _exact_median_classify(num, den)
    keep = cls != 0
    if ratio_direction == UP_IS_ONE:
        bits = (cls[keep] > 0).astype(np.uint8)
    elif ratio_direction == DOWN_IS_ONE:
        bits = (cls[keep] < 0).astype(np.uint8)
    else:
        raise ValueError(f"unknown ratio direction {ratio_direction!r}")
    return BitString(bits)


def grid_cell_count(max_level: int) -> int:
    return max_level * (max_level + 1) // 2


@dataclass(frozen=True)
class AggregationGrid:
    """All (level, sample) bit strings derived from one day's prices."""

    max_level: int
    cells: dict[tuple[int, int], BitString]
    ticker: str = ""
    date: str = ""

    def cell(self, level: int, sample: int) -> BitString:
        return self.cells[(level, sample)]

    def __len__(self) -> int:
        return len(self.cells)


def build_grid(
    prices,
    max_level: int = 100,
    ticker: str = "",
    date: str = "",
    median: bool = False,
    ratio_direction: str = UP_IS_ONE,
) -> AggregationGrid:
    """Grid of symbolize(prices, l, j) for all l <= max_level, j <= l."""
    if max_level < 1:
        raise ValueError("max_level must be >= 1")
    fn = median_symbolize if median else symbolize
    cells = {
        (lvl, j): fn(prices, lvl, j, ratio_direction)
        for lvl in range(1, max_level + 1)
        for j in range(1, lvl + 1)
    }
    return AggregationGrid(max_level=max_level, cells=cells, ticker=ticker, date=date)


@dataclass(frozen=True)
class MonthlyString:
    """Calendar-ordered concatenation of one (level, sample) cell over a month."""

    ticker: str
    month: str
    level: int
    sample: int
    bits: BitString
    day_boundaries: tuple[int, ...] = field(default_factory=tuple)  # start offset per day
    ratio_direction: str = UP_IS_ONE

    def __len__(self) -> int:
        return len(self.bits)


def concat_month(
    grids: list[AggregationGrid],
    level: int,
    sample: int,
    ticker: str = "",
    month: str = "",
    ratio_direction: str = UP_IS_ONE,
) -> MonthlyString:
    """Concatenate per-day cells in the given order; no bit crosses a day."""
    tickers = {g.ticker for g in grids if g.ticker}
    if ticker:
        tickers.add(ticker)
    if len(tickers) > 1:
        raise ValueError(f"mixed tickers in month: {sorted(tickers)}")
    if any(g.max_level < level for g in grids):
        raise ValueError("a day grid does not reach the requested level")
    parts, bounds, off = [], [], 0
    for g in grids:
        cell = g.cell(level, sample)
        bounds.append(off)
        off += len(cell)
        parts.append(cell)
    return MonthlyString(
        ticker=ticker or (next(iter(tickers)) if tickers else ""),
        month=month,
        level=level,
        sample=sample,
        bits=BitString.concat(parts),
        day_boundaries=tuple(bounds),
        ratio_direction=ratio_direction,
    )


def write_monthly_bits(ms: MonthlyString, directory: str | os.PathLike) -> tuple[str, str]:
    """One ASCII bit file per (ticker, month, level, sample) plus JSON sidecar."""
    os.makedirs(directory, exist_ok=True)
    stem = f"{ms.ticker}_{ms.month}_L{ms.level:03d}_j{ms.sample:03d}"
    bit_path = os.path.join(directory, stem + ".bits")
    meta_path = os.path.join(directory, stem + ".json")
    write_bit_file(bit_path, ms.bits)
    meta = {
        "ticker": ms.ticker,
        "month": ms.month,
        "level": ms.level,
        "sample": ms.sample,
        "length": len(ms.bits),
        "day_boundaries": list(ms.day_boundaries),
        "ratio_direction": ms.ratio_direction,
    }
    with open(meta_path, "w") as fh:
        json.dump(meta, fh, indent=1)
    return bit_path, meta_path


def read_monthly_sidecar(path: str | os.PathLike) -> dict:
    with open(path) as fh:
        return json.load(fh)
