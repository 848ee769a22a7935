"""Per-substring test kernels and their battery-level aggregation.

Each kernel maps a matrix of equal-length substrings (one row per substring)
to one or more streams of per-substring p-values computed from the published
closed-form statistics.  A whole string is tested by splitting it into
substrings, computing the block p-values, and aggregating them two ways:

* pass proportion, scored against an exact binomial whose success rate is
  the kernel's true block-level rejection rate under ideal input, and
* a chi-square uniformity check over ten null-quantile bins.

Both checks are calibrated against the kernel's finite-sample null
distribution, estimated once per kernel by a seeded simulation (the
published chi-square/normal tails are only asymptotic at these substring
lengths, and several block statistics are visibly discrete).  Reported
p-values are Bonferroni-scaled so the test-level rejection rate stays at
the working significance level.
"""
from __future__ import annotations

import hashlib
import math
import os
from dataclasses import dataclass

import numpy as np

from .special import binom_sf, chi2_sf, erfc

__all__ = [
    "NIST_KERNELS",
    "block_p_streams",
    "battery_aggregate",
    "BatteryOutcome",
    "MIN_SEQUENCES",
]

MIN_SEQUENCES = 55  # substrings required before the aggregation is meaningful
_TABLE_ROWS_SMALL = 400_000  # null-table simulations for 128-bit kernels
_TABLE_ROWS_LARGE = 150_000  # for 1000-bit kernels (DFT, templates)
_SIM_CHUNK = 50_000

_SQRT2 = math.sqrt(2.0)


def _pow2_weights(m: int) -> np.ndarray:
    return 1 << np.arange(m - 1, -1, -1, dtype=np.int64)


def _pattern_counts(blocks: np.ndarray, m: int) -> np.ndarray:
    """Counts of each m-bit pattern per row, windows wrapping cyclically."""
    s, t = blocks.shape
    if m == 0:
        return np.full((s, 1), t, dtype=np.int64)
    ext = np.concatenate([blocks, blocks[:, : m - 1]], axis=1) if m > 1 else blocks
    codes = np.zeros((s, t), dtype=np.int64)
    for i in range(m):
        codes = (codes << 1) | ext[:, i : i + t]
    offset = np.arange(s, dtype=np.int64)[:, None] * (1 << m)
    counts = np.bincount((codes + offset).ravel(), minlength=s << m)
    return counts.reshape(s, 1 << m)


# ---------------------------------------------------------------------------
# kernels: blocks (S, t) uint8 -> [(stream name, statistics, p-values)]


def k_frequency(blocks: np.ndarray, params: dict):
    t = blocks.shape[1]
    ones = blocks.sum(axis=1, dtype=np.int64)
    z = np.abs(2 * ones - t) / math.sqrt(t)
    return [("freq", z, erfc(z / _SQRT2))]


def k_block_frequency(blocks: np.ndarray, params: dict):
    t = blocks.shape[1]
    m = int(params.get("M", 20))
    j = t // m
    pi = blocks[:, : j * m].reshape(-1, j, m).mean(axis=2)
    chi2 = 4.0 * m * ((pi - 0.5) ** 2).sum(axis=1)
    return [("blockfreq", chi2, chi2_sf(chi2, j))]


def k_runs(blocks: np.ndarray, params: dict):
    t = blocks.shape[1]
    pi = blocks.mean(axis=1)
    v = 1 + (np.diff(blocks.astype(np.int8), axis=1) != 0).sum(axis=1)
    tau = 2.0 / math.sqrt(t)
    pq = pi * (1.0 - pi)
    with np.errstate(divide="ignore", invalid="ignore"):
        p = erfc(np.abs(v - 2.0 * t * pq) / (2.0 * math.sqrt(2.0 * t) * np.where(pq > 0, pq, 1.0)))
    p = np.where(np.abs(pi - 0.5) >= tau, 0.0, p)
    return [("runs", v.astype(float), p)]


_BYTE_MAX_RUN = None


def _byte_max_run_lut() -> np.ndarray:
    global _BYTE_MAX_RUN
    if _BYTE_MAX_RUN is None:
        lut = np.zeros(256, dtype=np.int64)
        for b in range(256):
            best = cur = 0
            for i in range(8):
                cur = cur + 1 if (b >> i) & 1 else 0
                best = max(best, cur)
            lut[b] = best
        _BYTE_MAX_RUN = lut
    return _BYTE_MAX_RUN


_LONGEST_RUN_PI = np.array([0.2148, 0.3672, 0.2305, 0.1875])  # M=8 categories <=1,2,3,>=4


def k_longest_run(blocks: np.ndarray, params: dict):
    s, t = blocks.shape
    m = 8  # block partition used at substring length 128
    nblk = t // m
    chunks = blocks[:, : nblk * m].reshape(s, nblk, m)
    byte_vals = chunks.dot(1 << np.arange(m - 1, -1, -1, dtype=np.int64))
    max_runs = _byte_max_run_lut()[byte_vals]
    cats = np.clip(max_runs, 1, 4) - 1
    counts = np.stack([(cats == c).sum(axis=1) for c in range(4)], axis=1)
    expected = nblk * _LONGEST_RUN_PI
    chi2 = ((counts - expected) ** 2 / expected).sum(axis=1)
    return [("longestrun", chi2, chi2_sf(chi2, 3))]


def _phi(z: float) -> float:
    return 0.5 * math.erfc(-z / _SQRT2)


_CUSUM_CACHE: dict[tuple[int, int], float] = {}


def _cusum_p(t: int, z: int) -> float:
    key = (t, z)
    if key not in _CUSUM_CACHE:
        zs = z / math.sqrt(t)
        lo1 = math.floor((-t / z + 1) / 4)
        hi1 = math.floor((t / z - 1) / 4)
        lo2 = math.floor((-t / z - 3) / 4)
        term1 = sum(_phi((4 * k + 1) * zs) - _phi((4 * k - 1) * zs) for k in range(lo1, hi1 + 1))
        term2 = sum(_phi((4 * k + 3) * zs) - _phi((4 * k + 1) * zs) for k in range(lo2, hi1 + 1))
        _CUSUM_CACHE[key] = min(1.0, max(0.0, 1.0 - term1 + term2))
    return _CUSUM_CACHE[key]


def k_cumulative_sums(blocks: np.ndarray, params: dict):
    t = blocks.shape[1]
    x = blocks.astype(np.int64) * 2 - 1
    streams = []
    for name, data in (("cusum_fwd", x), ("cusum_rev", x[:, ::-1])):
        z = np.abs(np.cumsum(data, axis=1)).max(axis=1)
        p = np.array([_cusum_p(t, int(v)) for v in z])
        streams.append((name, z.astype(float), p))
    return streams


def k_dft(blocks: np.ndarray, params: dict):
    s, t = blocks.shape
    x = blocks.astype(np.float64) * 2.0 - 1.0
    mods = np.abs(np.fft.rfft(x, axis=1))[:, : t // 2]
    threshold = math.sqrt(t * math.log(1.0 / 0.05))
    n1 = (mods < threshold).sum(axis=1)
    d = (n1 - 0.95 * t / 2.0) / math.sqrt(t * 0.95 * 0.05 / 4.0)
    return [("dft", d, erfc(np.abs(d) / _SQRT2))]


def k_non_overlapping_template(blocks: np.ndarray, params: dict):
    s, t = blocks.shape
    m = int(params.get("m", 9))
    template = params.get("template", "000000001")
    j = int(params.get("J", 8))
    mblk = t // j
    tcode = int(template, 2)
    trimmed = blocks[:, : j * mblk].reshape(s * j, mblk)
    codes = np.zeros((s * j, mblk - m + 1), dtype=np.int64)
    for i in range(m):
        codes = (codes << 1) | trimmed[:, i : i + mblk - m + 1]
    rows, cols = np.nonzero(codes == tcode)
    w = np.zeros(s * j, dtype=np.int64)
    # greedy non-overlapping count within each block
    if rows.size:
        start = 0
        for r in np.unique(rows):
            idx = np.searchsorted(rows, r, side="left")
            end = np.searchsorted(rows, r, side="right")
            positions = cols[idx:end]
            last = -m
            cnt = 0
            for pos in positions:
                if pos >= last + m:
                    cnt += 1
                    last = pos
            w[r] = cnt
    w = w.reshape(s, j)
    mu = (mblk - m + 1) / 2.0**m
    var = mblk * (1.0 / 2.0**m - (2.0 * m - 1.0) / 2.0 ** (2 * m))
    chi2 = ((w - mu) ** 2 / var).sum(axis=1)
    return [("notm", chi2, chi2_sf(chi2, j))]


def _phi_entropy(blocks: np.ndarray, m: int) -> np.ndarray:
    t = blocks.shape[1]
    counts = _pattern_counts(blocks, m).astype(float)
    with np.errstate(divide="ignore", invalid="ignore"):
        c = counts / t
        terms = np.where(counts > 0, c * np.log(np.where(counts > 0, c, 1.0)), 0.0)
    return terms.sum(axis=1)


def k_approximate_entropy(blocks: np.ndarray, params: dict):
    t = blocks.shape[1]
    m = int(params.get("m", 5))
    apen = _phi_entropy(blocks, m) - _phi_entropy(blocks, m + 1)
    chi2 = 2.0 * t * (math.log(2.0) - apen)
    chi2 = np.maximum(chi2, 0.0)
    return [("apen", chi2, chi2_sf(chi2, 2**m))]


def _psi_sq(blocks: np.ndarray, m: int) -> np.ndarray:
    if m <= 0:
        return np.zeros(blocks.shape[0])
    t = blocks.shape[1]
    counts = _pattern_counts(blocks, m).astype(float)
    return (2.0**m / t) * (counts**2).sum(axis=1) - t


def k_serial(blocks: np.ndarray, params: dict):
    m = int(params.get("m", 2))
    psi_m = _psi_sq(blocks, m)
    psi_1 = _psi_sq(blocks, m - 1)
    psi_2 = _psi_sq(blocks, m - 2)
    d1 = np.maximum(psi_m - psi_1, 0.0)
    d2 = np.maximum(psi_m - 2 * psi_1 + psi_2, 0.0)
    return [
        ("serial_d1", d1, chi2_sf(d1, 2 ** (m - 1))),
        ("serial_d2", d2, chi2_sf(d2, 2 ** (m - 2))),
    ]


NIST_KERNELS = {
    "Frequency": k_frequency,
    "BlockFrequency": k_block_frequency,
    "Runs": k_runs,
    "LongestRunOfOnes": k_longest_run,
    "CumulativeSums": k_cumulative_sums,
    "DFT": k_dft,
    "NonOverlappingTemplate": k_non_overlapping_template,
    "ApproximateEntropy": k_approximate_entropy,
    "Serial": k_serial,
}


def block_p_streams(test_id: str, blocks: np.ndarray, params: dict):
    """Per-substring statistics and p-values for one kernel."""
    blocks = np.ascontiguousarray(np.asarray(blocks, dtype=np.uint8))
    return NIST_KERNELS[test_id](blocks, params)


# ---------------------------------------------------------------------------
# null tables and aggregation


def _table_seed(key: str) -> int:
    return int.from_bytes(hashlib.blake2s(key.encode()).digest()[:8], "little")


_NULL_TABLES: dict[tuple, dict[str, np.ndarray]] = {}
_TABLE_CACHE_VERSION = 1


def _params_key(params: dict) -> tuple:
    return tuple(sorted((k, str(v)) for k, v in params.items()))


def _cache_dir() -> str:
    base = os.environ.get("TICKBITS_CACHE", os.path.join(os.path.expanduser("~"), ".cache", "tickbits"))
    return base


def null_tables(test_id: str, t: int, params: dict) -> dict[str, np.ndarray]:
    """Sorted simulated block p-values per stream, under iid fair bits.

    Built once per (kernel, substring length, parameters) with a seed derived
    from the key, so every process reproduces the same tables; a per-user
    disk cache skips the rebuild across processes.
    """
    key = (test_id, t, _params_key(params))
    if key in _NULL_TABLES:
        return _NULL_TABLES[key]
    digest = hashlib.blake2s(f"v{_TABLE_CACHE_VERSION}|{key}".encode()).hexdigest()[:20]
    cache_path = os.path.join(_cache_dir(), f"nulltable_{test_id}_{digest}.npz")
    if os.path.exists(cache_path):
        with np.load(cache_path) as payload:
            tables = {name: payload[name] for name in payload.files}
        _NULL_TABLES[key] = tables
        return tables
    rows = _TABLE_ROWS_LARGE if t >= 1000 else _TABLE_ROWS_SMALL
    rng = np.random.Generator(np.random.PCG64(_table_seed(f"{test_id}|{t}|{key[2]}")))
    collected: dict[str, list[np.ndarray]] = {}
    done = 0
    while done < rows:
        chunk = min(_SIM_CHUNK, rows - done)
        sims = rng.integers(0, 2, size=(chunk, t), dtype=np.uint8)
        for name, _, ps in block_p_streams(test_id, sims, params):
            collected.setdefault(name, []).append(np.asarray(ps, dtype=np.float64))
        done += chunk
    tables = {name: np.sort(np.concatenate(parts)) for name, parts in collected.items()}
    _NULL_TABLES[key] = tables
    try:
        os.makedirs(_cache_dir(), exist_ok=True)
        tmp = cache_path + f".tmp{os.getpid()}"
        with open(tmp, "wb") as fh:
            np.savez(fh, **tables)
        os.replace(tmp, cache_path)
    except OSError:
        pass
    return tables


@dataclass(frozen=True)
class BatteryOutcome:
    statistic: float
    p_values: tuple[float, ...]
    diagnostics: dict


def calibrated_block_pvalues(test_id: str, blocks: np.ndarray, params: dict) -> dict[str, np.ndarray]:
    """Finite-sample block p-values: mid-rank of each analytic block p in the
    kernel's simulated null.  Uniform under iid fair bits at any substring
    length, unlike the raw asymptotic formulas for some parameter choices."""
    t = blocks.shape[1]
    tables = null_tables(test_id, t, params)
    out: dict[str, np.ndarray] = {}
    for name, _, ps in block_p_streams(test_id, blocks, params):
        table = tables[name]
        m = table.size
        lo = np.searchsorted(table, ps, side="left")
        hi = np.searchsorted(table, ps, side="right")
        out[name] = (lo + 0.5 * (hi - lo) + 0.5) / (m + 1)
    return out


def _uniformity(ps: np.ndarray, table: np.ndarray) -> tuple[float, float]:
    """Chi-square of observed block p's against ten null-quantile bins.

    Bin edges are values of the simulated null, so the expected bin masses
    absorb any discreteness of the block statistic.  Only the lowest bin can
    come out empty (an atom spanning the first decile); it is merged into
    its neighbour so extreme observed p-values still count.
    """
    m = table.size
    cuts = np.unique(table[np.arange(1, 10) * m // 10])
    while cuts.size:
        q = np.diff(np.concatenate([[0], np.searchsorted(table, cuts, side="left"), [m]])) / m
        if q[0] > 0:
            break
        cuts = cuts[1:]
    if cuts.size == 0:
        return 0.0, 1.0
    obs = np.bincount(np.searchsorted(cuts, ps, side="right"), minlength=q.size).astype(float)
    expected = ps.size * q
    chi2 = float(((obs - expected) ** 2 / expected).sum())
    return chi2, float(chi2_sf(chi2, q.size - 1))


def battery_aggregate(test_id: str, bits: np.ndarray, t: int, params: dict, alpha: float) -> BatteryOutcome | None:
    """Aggregate a whole string's block p-values; None when too short."""
    bits = np.asarray(bits, dtype=np.uint8)
    s = bits.size // t
    if s < MIN_SEQUENCES:
        return None
    blocks = bits[: s * t].reshape(s, t)
    streams = block_p_streams(test_id, blocks, params)
    tables = null_tables(test_id, t, params)
    p_components: list[float] = []
    diag: dict = {"substrings": s, "t": t}
    stats: list[float] = []
    for name, st, ps in streams:
        table = tables[name]
        chi2, unif_p = _uniformity(np.asarray(ps, dtype=np.float64), table)
        q_fail = max(float(np.searchsorted(table, alpha, side="left")) / table.size, 1.0 / table.size)
        failures = int((np.asarray(ps) < alpha).sum())
        prop_p = binom_sf(failures, s, q_fail)
        p_components.extend([unif_p, prop_p])
        stats.append(chi2)
        diag[name] = {
            "uniformity_chi2": chi2,
            "uniformity_p": unif_p,
            "failures": failures,
            "expected_failure_rate": q_fail,
            "proportion_p": prop_p,
        }
    k = len(p_components)
    adjusted = tuple(min(1.0, k * p) for p in p_components)
    return BatteryOutcome(statistic=stats[0], p_values=adjusted, diagnostics=diag)
