"""Entropy-based randomness statistics and the arithmetic-mean balance test.

Two chi-square statistics drive the entropy tests: the block-entropy deficit
over non-overlapping k-blocks, and the relative entropy between observed
(prefix, next-symbol) frequencies and their product distribution over
overlapping k-windows.  Block length k is n-adaptive.
"""
from __future__ import annotations

import math

import numpy as np

from .special import chi2_sf, normal_two_sided_p

__all__ = [
    "block_length",
    "shannon_entropy_statistic",
    "kl_independence_statistic",
    "arithmetic_mean_statistic",
]


def block_length(n: int, override: int | None = None) -> int:
    """Block length k = round(0.5 * log2(n)), ties rounded up, at least 1."""
    if override is not None:
        return max(1, int(override))
    if n < 4:
        raise ValueError("need at least 4 bits to choose a block length")
    k = math.floor(0.5 * math.log2(n) + 0.5)
    return max(1, k)


def _window_codes(bits: np.ndarray, k: int) -> np.ndarray:
    """Integer codes of all overlapping k-windows (no wraparound)."""
    n = bits.size
    codes = np.zeros(n - k + 1, dtype=np.int64)
    for i in range(k):
        codes = (codes << 1) | bits[i : n - k + 1 + i]
    return codes


def shannon_entropy_statistic(bits: np.ndarray, k: int | None = None) -> tuple[float, int, int]:
    """Block-entropy deficit statistic: 2*Nb*(k*ln2 - H_hat).

    Returns (statistic, degrees of freedom, k).  Null: chi-square with
    2^k - 1 degrees of freedom.
    """
    bits = np.asarray(bits, dtype=np.uint8)
    n = bits.size
    kk = block_length(n) if k is None else k
    if n < 2 * kk:
        raise ValueError(f"need at least {2 * kk} bits for block length {kk}")
    nb = n // kk
    blocks = bits[: nb * kk].reshape(nb, kk)
    codes = blocks.dot(1 << np.arange(kk - 1, -1, -1, dtype=np.int64))
    freq = np.bincount(codes, minlength=2**kk).astype(float)
    probs = freq[freq > 0] / nb
    h_hat = -float(np.sum(probs * np.log(probs)))
    y1 = 2.0 * nb * (kk * math.log(2.0) - h_hat)
    return max(0.0, y1), 2**kk - 1, kk


def kl_independence_statistic(bits: np.ndarray, k: int | None = None) -> tuple[float, int, int]:
    """Relative-entropy independence statistic over overlapping k-windows.

    Counts f[i, j] of ((k-1)-bit prefix i, next symbol j); the statistic is
    2 * sum f * ln(No * f / (row * col)) with 0*ln(0) = 0.  Null: chi-square
    with 2^(k-1) - 1 degrees of freedom.
    """
    bits = np.asarray(bits, dtype=np.uint8)
    n = bits.size
    kk = block_length(n) if k is None else k
    if kk < 2:
        kk = 2
    if n < kk + 1:
        raise ValueError(f"need at least {kk + 1} bits for block length {kk}")
    codes = _window_codes(bits, kk)
    n_o = codes.size
    table = np.bincount(codes, minlength=2**kk).astype(float).reshape(2 ** (kk - 1), 2)
    row = table.sum(axis=1, keepdims=True)
    col = table.sum(axis=0, keepdims=True)
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = n_o * table / (row * col)
        terms = np.where(table > 0, table * np.log(np.where(table > 0, ratio, 1.0)), 0.0)
    y2 = 2.0 * float(terms.sum())
    return max(0.0, y2), 2 ** (kk - 1) - 1, kk


def arithmetic_mean_statistic(bits: np.ndarray) -> tuple[float, float]:
    """Balance statistic Z = (2/sqrt(N)) * |c - N/2|, c = zero count.

    Returns (Z, p) with p the folded normal tail erfc(Z/sqrt(2)).
    """
    bits = np.asarray(bits, dtype=np.uint8)
    n = bits.size
    if n < 1:
        raise ValueError("need at least one bit")
    zeros = n - int(bits.sum())
    z = 2.0 / math.sqrt(n) * abs(zeros - n / 2.0)
    return z, float(normal_two_sided_p(z))


def shannon_entropy_p(bits: np.ndarray, k: int | None = None) -> tuple[float, float, int]:
    y1, df, kk = shannon_entropy_statistic(bits, k)
    return y1, float(chi2_sf(y1, df)), kk


def kl_independence_p(bits: np.ndarray, k: int | None = None) -> tuple[float, float, int]:
    y2, df, kk = kl_independence_statistic(bits, k)
    return y2, float(chi2_sf(y2, df)), kk
