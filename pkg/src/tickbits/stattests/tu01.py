"""Whole-string test kernels in the style of the Alphabit/Rabbit batteries.

These are native reimplementations built around the same observables
(overlapping pattern frequencies, block Hamming weights and their serial
dependence, lagged agreement counts, extreme run lengths).  Exact finite
distributions are used wherever they exist (lagged XOR counts are exactly
binomial, the longest head run has a computable distribution); where only
an asymptotic tail exists, small-sample cases fall back on a seeded
simulated null so their p-values stay calibrated at every admissible
string length.
"""
from __future__ import annotations

import hashlib
import math
from functools import lru_cache

import numpy as np

from .special import binom_mid_p_upper, chi2_sf, normal_sf

__all__ = [
    "multinomial_bits_over",
    "hamming_weight",
    "hamming_correlation",
    "hamming_independence",
    "autocorrelation",
    "longest_head_run",
    "run_length_distribution",
]

_ASYMPTOTIC_TERMS = 64  # blocks/terms needed before normal / chi-square tails
_DENSE_RATIO = 2.0  # windows per pattern cell needed for the psi-square form
_POISSON_MAX_MEAN = 60.0  # exact compound pmf below, normal above
_TABLE_ROWS = 100_000


def _seed_for(key: str) -> int:
    return int.from_bytes(hashlib.blake2s(key.encode()).digest()[:8], "little")


_NULL_TABLES: dict[tuple, np.ndarray] = {}


def _null_table(key: tuple, simulate) -> np.ndarray:
    """Sorted null sample of a statistic, built once per parameter set."""
    if key not in _NULL_TABLES:
        rng = np.random.Generator(np.random.PCG64(_seed_for("|".join(map(str, key)))))
        _NULL_TABLES[key] = np.sort(simulate(rng, _TABLE_ROWS))
    return _NULL_TABLES[key]


def _table_p_upper(table: np.ndarray, obs: float) -> float:
    """Mid-rank upper-tail p of an observation against a sorted null sample."""
    m = table.size
    lo = int(np.searchsorted(table, obs, side="left"))
    hi = int(np.searchsorted(table, obs, side="right"))
    greater = m - hi
    equal = hi - lo
    return (greater + 0.5 * equal + 0.5) / (m + 1)


def _window_codes(bits: np.ndarray, width: int, cyclic: bool) -> np.ndarray:
    n = bits.size
    ext = np.concatenate([bits, bits[: width - 1]]) if cyclic else bits
    count = n if cyclic else n - width + 1
    codes = np.zeros(count, dtype=np.int64)
    for i in range(width):
        codes = (codes << 1) | ext[i : i + count]
    return codes


# ---------------------------------------------------------------------------


@lru_cache(maxsize=256)
def _polya_aeppli_cdf(lam_clusters: float, c_max: int) -> np.ndarray:
    """CDF of a geometric-Poisson sum: Poisson(lam_clusters) clusters, each of
    Geometric(1/2) size (support 1, 2, ...)."""
    pmf = np.zeros(c_max + 1)
    log_half = math.log(0.5)
    m_max = c_max
    log_pois = -lam_clusters
    for m in range(0, m_max + 1):
        if m > 0:
            log_pois += math.log(lam_clusters) - math.log(m)
        if log_pois < -745:
            if m > lam_clusters:
                break
            continue
        pois = math.exp(log_pois)
        if m == 0:
            pmf[0] += pois
            continue
        # negative binomial over extra extensions j: C(j+m-1, j) (1/2)^(m+j)
        log_nb = m * log_half
        for j in range(0, c_max - m + 1):
            if j > 0:
                log_nb += math.log((j + m - 1) / j) + log_half
            pmf[m + j] += pois * math.exp(log_nb)
    return np.cumsum(pmf)


def multinomial_bits_over(bits: np.ndarray, L: int) -> tuple[float, float, dict]:
    """Overlapping L-bit pattern frequencies against equiprobability.

    Dense regime (two or more windows per pattern cell): psi-square
    difference between orders L and L-1 over cyclic windows, chi-square with
    2^(L-1) degrees of freedom.  Sparse regime: the collision count of
    overlapping windows.  Collisions between overlapping windows arrive in
    geometric clusters (a collision at lag d survives one more step with
    probability 1/2), so the null is the geometric-Poisson compound rather
    than a plain Poisson; at moderate cell occupancy that compound widens
    the null and the test becomes conservative, never anti-conservative.
    """
    bits = np.asarray(bits, dtype=np.uint8)
    n = bits.size
    cells = 1 << L
    if n < L + 1:
        raise ValueError("string shorter than the pattern width")
    if n >= _DENSE_RATIO * cells:
        psi = []
        for width in (L, L - 1):
            if width == 0:
                psi.append(0.0)
                continue
            counts = np.bincount(_window_codes(bits, width, cyclic=True), minlength=1 << width)
            psi.append((1 << width) / n * float((counts.astype(float) ** 2).sum()) - n)
        stat = max(0.0, psi[0] - psi[1])
        df = 1 << (L - 1)
        return stat, float(chi2_sf(stat, df)), {"regime": "dense", "df": df}
    codes = _window_codes(bits, L, cyclic=False)
    n_o = codes.size
    distinct = np.unique(codes).size
    collisions = n_o - distinct
    log_miss = n_o * math.log1p(-1.0 / cells)
    expected_distinct = cells * -math.expm1(log_miss)
    lam = max(n_o - expected_distinct, 1e-12)
    diag = {"regime": "sparse", "collisions": collisions, "expected_collisions": lam}
    if lam <= _POISSON_MAX_MEAN:
        c_max = int(lam + 12.0 * math.sqrt(3.0 * lam) + 30)
        cdf = _polya_aeppli_cdf(lam / 2.0, max(c_max, collisions + 1))
        c = min(collisions, cdf.size - 1)
        below = cdf[c - 1] if c >= 1 else 0.0
        at = cdf[c] - below
        p = 1.0 - below - 0.5 * at
        return float(collisions), min(1.0, max(0.0, float(p))), diag
    z = (collisions - lam) / math.sqrt(3.0 * lam)
    return float(collisions), float(normal_sf(z)), diag


def _weight_bins(L: int, blocks: int) -> tuple[np.ndarray, np.ndarray]:
    """Weight-category edges with expected count >= 5 per bin."""
    pmf = np.array([math.comb(L, w) for w in range(L + 1)], dtype=float) / 2.0**L
    edges = [0]
    acc = 0.0
    for w in range(L + 1):
        acc += pmf[w] * blocks
        if acc >= 5.0 and w < L:
            edges.append(w + 1)
            acc = 0.0
    probs = np.add.reduceat(pmf, edges)
    if probs[-1] * blocks < 5.0 and len(edges) > 1:
        edges = edges[:-1]
        probs = np.add.reduceat(pmf, edges)
    return np.array(edges[1:]), probs


def _weight_chi2(weights: np.ndarray, L: int, edges: np.ndarray, probs: np.ndarray) -> float | np.ndarray:
    blocks = weights.shape[-1]
    cats = np.searchsorted(edges, weights, side="right")
    if weights.ndim == 1:
        obs = np.bincount(cats, minlength=probs.size).astype(float)
        return float((((obs - blocks * probs) ** 2) / (blocks * probs)).sum())
    offset = np.arange(weights.shape[0])[:, None] * probs.size
    obs = np.bincount((cats + offset).ravel(), minlength=weights.shape[0] * probs.size)
    obs = obs.reshape(weights.shape[0], probs.size).astype(float)
    return (((obs - blocks * probs) ** 2) / (blocks * probs)).sum(axis=1)


def hamming_weight(bits: np.ndarray, L: int = 32) -> tuple[float, float, dict]:
    """Distribution of block Hamming weights against Binomial(L, 1/2)."""
    bits = np.asarray(bits, dtype=np.uint8)
    m = bits.size // L
    if m < 2:
        raise ValueError("need at least two blocks")
    weights = bits[: m * L].reshape(m, L).sum(axis=1)
    edges, probs = _weight_bins(L, m)
    stat = _weight_chi2(weights, L, edges, probs)
    diag = {"blocks": m, "bins": probs.size}
    if m >= _ASYMPTOTIC_TERMS:
        return stat, float(chi2_sf(stat, probs.size - 1)), diag
    table = _null_table(
        ("hw", L, m),
        lambda rng, rows: _weight_chi2(rng.binomial(L, 0.5, size=(rows, m)), L, edges, probs),
    )
    return stat, _table_p_upper(table, stat), diag


def _block_deviations(bits: np.ndarray, L: int) -> np.ndarray:
    m = bits.size // L
    if m < 2:
        raise ValueError("need at least two blocks")
    return bits[: m * L].reshape(m, L).sum(axis=1).astype(float) - L / 2.0


def hamming_correlation(bits: np.ndarray, L: int) -> tuple[float, float, dict]:
    """Serial product of successive block weight deviations (lag one)."""
    u = _block_deviations(np.asarray(bits, dtype=np.uint8), L)
    terms = u.size - 1
    stat = float((u[:-1] * u[1:]).sum())
    diag = {"blocks": u.size, "terms": terms}
    if terms >= _ASYMPTOTIC_TERMS:
        z = stat / math.sqrt(terms * (L / 4.0) ** 2)
        return stat, float(normal_sf(z)), diag

    def simulate(rng, rows):
        w = rng.binomial(L, 0.5, size=(rows, terms + 1)).astype(float) - L / 2.0
        return (w[:, :-1] * w[:, 1:]).sum(axis=1)

    table = _null_table(("hc", L, terms), simulate)
    return stat, _table_p_upper(table, stat), diag


def hamming_independence(bits: np.ndarray, L: int) -> tuple[float, float, dict]:
    """Product of weight deviations over disjoint successive block pairs."""
    u = _block_deviations(np.asarray(bits, dtype=np.uint8), L)
    pairs = u.size // 2
    stat = float((u[0 : 2 * pairs : 2] * u[1 : 2 * pairs : 2]).sum())
    diag = {"blocks": u.size, "pairs": pairs}
    if pairs >= _ASYMPTOTIC_TERMS:
        z = stat / math.sqrt(pairs * (L / 4.0) ** 2)
        return stat, float(normal_sf(z)), diag

    def simulate(rng, rows):
        w = rng.binomial(L, 0.5, size=(rows, 2 * pairs)).astype(float) - L / 2.0
        return (w[:, 0::2] * w[:, 1::2]).sum(axis=1)

    table = _null_table(("hi", L, pairs), simulate)
    return stat, _table_p_upper(table, stat), diag


def autocorrelation(bits: np.ndarray, d: int) -> tuple[float, float, dict]:
    """Lag-d disagreement count; exactly Binomial(n-d, 1/2) under the null."""
    bits = np.asarray(bits, dtype=np.uint8)
    n = bits.size
    if n <= d:
        raise ValueError("string shorter than the lag")
    x = bits[: n - d] ^ bits[d:]
    c = int(x.sum())
    return float(c), binom_mid_p_upper(c, n - d, 0.5), {"lag": d, "trials": n - d}


@lru_cache(maxsize=4096)
def _prob_no_run(r: int, n: int) -> float:
    """P(longest run of ones < r) in n iid fair bits, by transfer matrix."""
    if r <= 0:
        return 0.0
    if r > n:
        return 1.0
    mat = np.zeros((r, r))
    mat[:, 0] = 0.5
    for s in range(r - 1):
        mat[s, s + 1] = 0.5
    vec = np.zeros(r)
    vec[0] = 1.0
    e = n
    base = mat
    while e:
        if e & 1:
            vec = vec @ base
        base = base @ base
        e >>= 1
    return float(vec.sum())


def longest_head_run(bits: np.ndarray) -> tuple[float, float, dict]:
    """Longest run of ones against its exact null distribution (mid-p)."""
    bits = np.asarray(bits, dtype=np.uint8)
    n = bits.size
    if n < 2:
        raise ValueError("need at least two bits")
    if bits.any():
        padded = np.concatenate([[0], bits, [0]])
        changes = np.flatnonzero(np.diff(padded.astype(np.int8)))
        lengths = changes[1::2] - changes[0::2]
        longest = int(lengths.max())
    else:
        longest = 0
    below = _prob_no_run(longest, n)
    below_next = _prob_no_run(longest + 1, n)
    p = 1.0 - 0.5 * (below + below_next)
    return float(longest), min(1.0, max(0.0, p)), {"longest": longest}


def run_length_distribution(bits: np.ndarray) -> tuple[float, float, dict]:
    """Run lengths (both symbols pooled) against Geometric(1/2)."""
    bits = np.asarray(bits, dtype=np.uint8)
    if bits.size < 2:
        raise ValueError("need at least two bits")
    boundaries = np.flatnonzero(np.diff(bits.astype(np.int8)))
    lengths = np.diff(np.concatenate([[-1], boundaries, [bits.size - 1]]))
    r = lengths.size
    if r < 20:
        # degenerate strings: almost-constant input, call it maximally non-random
        return float(r), 0.0, {"runs": r, "note": "too few runs for the length test"}
    max_cat = max(1, min(int(math.log2(r / 5.0)), 30))
    probs = np.array([2.0 ** -(j + 1) for j in range(max_cat)] + [2.0**-max_cat])
    cats = np.minimum(lengths - 1, max_cat)
    obs = np.bincount(cats, minlength=max_cat + 1).astype(float)
    expected = r * probs
    stat = float(((obs - expected) ** 2 / expected).sum())
    return stat, float(chi2_sf(stat, max_cat)), {"runs": r, "bins": max_cat + 1}
