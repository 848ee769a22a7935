"""Reference randomness sources for calibration and the sanity harness.

Deterministic sources only: a documented 64-bit mixer (SplitMix64) stands in
for the OS entropy device, the Mobius sign sequence provides the
number-theoretic source, and raw bit files cover hardware generators.  For
symbolization, bit-emitting sources are accumulated into +/-1 random walks,
because directly comparing independent draws yields the descent process of a
random permutation (lag-one correlation -1/3), which no battery should
certify; walk increments reproduce the intended iid bits at every level.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .bits import BitString, read_bit_file

__all__ = [
    "GeneratorSpec",
    "ValueStream",
    "splitmix64",
    "prng_stream",
    "prng_bits",
    "mobius_sieve",
    "mobius_stream",
    "file_bits",
    "persistent_walk",
    "value_stream",
]

_MASK = (1 << 64) - 1
_GAMMA = 0x9E3779B97F4A7C15


@dataclass(frozen=True)
class GeneratorSpec:
    """A named, fully seeded randomness source."""

    kind: str  # documented-prng | mobius | file-bits | persistent-walk
    seed: int = 0
    path: str = ""
    rho: float = 0.5
    tick: int = 1
    start_price: int = 100_000
    zero_prob: float = 0.0
    up_bias: float = 0.5

    def label(self) -> str:
        if self.kind == "documented-prng":
            return f"prng(seed={self.seed})"
        if self.kind == "persistent-walk":
            return f"walk(seed={self.seed},rho={self.rho})"
        if self.kind == "file-bits":
            return f"file({self.path})"
        return self.kind


@dataclass(frozen=True)
class ValueStream:
    """Ordered positive values ready for ratio symbolization."""

    values: np.ndarray
    kind: str = ""

    def __post_init__(self):
        v = np.asarray(self.values)
        if v.size and v.min() <= 0:
            raise ValueError("value streams must be strictly positive")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    def __len__(self) -> int:
        return int(self.values.size)


def splitmix64(seed: int, n: int) -> np.ndarray:
    """First n outputs of the SplitMix64 recurrence (fixed published constants)."""
    if n < 1:
        raise ValueError("n must be >= 1")
    state = (np.arange(1, n + 1, dtype=np.uint64) * np.uint64(_GAMMA) + np.uint64(seed & _MASK))
    z = state
    z = (z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
    z = (z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
    return z ^ (z >> np.uint64(31))


def prng_stream(seed: int, n: int) -> ValueStream:
    """n uniform 64-bit words as positive values (zero mapped to one)."""
    words = splitmix64(seed, n)
    values = np.where(words == 0, np.uint64(1), words)
    return ValueStream(values=values, kind="documented-prng")


def prng_bits(seed: int, n_bits: int) -> BitString:
    """n iid fair bits: SplitMix64 words unpacked most-significant-bit first."""
    n_words = (n_bits + 63) // 64
    words = splitmix64(seed, n_words)
    bits = np.unpackbits(words.view(np.uint8).reshape(-1, 8)[:, ::-1], axis=1)
    return BitString(bits.ravel()[:n_bits])


def mobius_sieve(n_max: int) -> np.ndarray:
    """mu(n) for n = 0..n_max via a vectorized multiplicative sieve."""
    if n_max < 1:
        raise ValueError("n_max must be >= 1")
    mu = np.ones(n_max + 1, dtype=np.int8)
    residual = np.arange(n_max + 1, dtype=np.int64)
    is_comp = np.zeros(n_max + 1, dtype=bool)
    mu[0] = 0
    for p in range(2, int(math.isqrt(n_max)) + 1):
        if is_comp[p]:
            continue
        is_comp[p * p :: p] = True
        mu[p::p] *= -1
        residual[p::p] //= p
        p2 = p * p
        mu[p2::p2] = 0
        step = p2
        while step <= n_max:
            residual[step::step] //= p
            step *= p
    # leftover factor > sqrt(n_max) is a single prime
    mu[residual > 1] *= -1
    mu[0] = 0
    return mu


def mobius_stream(n_max: int) -> BitString:
    """Signs of mu(n) for n <= n_max, zeros discarded, +1 -> 1, -1 -> 0."""
    mu = mobius_sieve(n_max)[1:]
    nz = mu[mu != 0]
    return BitString((nz > 0).astype(np.uint8))


def file_bits(path: str) -> BitString:
    """Bits from a file: ASCII '0'/'1' text or raw bytes, MSB first."""
    return read_bit_file(path)


def persistent_walk(
    seed: int,
    n: int,
    rho: float = 0.5,
    tick: int = 1,
    start_price: int = 100_000,
    zero_prob: float = 0.0,
    up_bias: float = 0.5,
) -> ValueStream:
    """Tick-size price path whose step sign repeats with probability rho.

    A non-repeating step flips the sign, so the lag-one sign autocorrelation
    is 2*rho - 1.  With probability zero_prob a step is a zero move (price
    unchanged, sign memory kept), exercising the tie-skip path downstream.
    up_bias != 0.5 skews the repeat probabilities so the stationary up-move
    fraction equals up_bias while preserving rho's meaning at 0.5.  Paths
    that would cross zero are clamped one tick above it.
    """
    if not (0.0 <= rho <= 1.0):
        raise ValueError("rho must lie in [0, 1]")
    if tick <= 0 or start_price <= 0:
        raise ValueError("tick and start price must be positive")
    rng = np.random.Generator(np.random.PCG64(seed))
    u_repeat = rng.random(n)
    first_up = rng.random() < up_bias
    zeros = rng.random(n) < zero_prob if zero_prob > 0 else np.zeros(n, dtype=bool)
    if up_bias == 0.5:
        flips = (u_repeat >= rho).astype(np.int64)
        flips[0] = 0
        parity = np.cumsum(flips) & 1
        signs = np.where(parity == 0, 1, -1) * (1 if first_up else -1)
    else:
        flip_up = 2.0 * (1.0 - rho) * (1.0 - up_bias)  # leave an up-run
        flip_dn = 2.0 * (1.0 - rho) * up_bias
        if not (0.0 <= flip_up <= 1.0 and 0.0 <= flip_dn <= 1.0):
            raise ValueError("rho and up_bias are incompatible")
        signs = np.empty(n, dtype=np.int64)
        s = 1 if first_up else -1
        for i in range(n):
            if u_repeat[i] < (flip_up if s > 0 else flip_dn):
                s = -s
            signs[i] = s
    steps = np.where(zeros, 0, signs) * tick
    path = start_price + np.cumsum(steps)
    if (path < tick).any():
        warnings.warn("persistent walk touched zero; clamping to one tick")
        path = np.maximum(path, tick)
    return ValueStream(values=path, kind="persistent-walk")


def _walk_from_bits(bits: np.ndarray, kind: str) -> ValueStream:
    steps = bits.astype(np.int64) * 2 - 1
    offset = steps.size + 1
    return ValueStream(values=offset + np.cumsum(steps), kind=kind)


def value_stream(spec: GeneratorSpec, n: int) -> ValueStream:
    """n positive values from a generator, ready for grid symbolization."""
    if spec.kind == "documented-prng":
        return _walk_from_bits(prng_bits(spec.seed, n).bits, "documented-prng")
    if spec.kind == "mobius":
        # ~60.8% of integers are squarefree; oversample then check
        n_max = int(n / 0.6079) + 1000
        bits = mobius_stream(n_max).bits
        while bits.size < n:
            n_max = int(n_max * 1.2) + 1000
            bits = mobius_stream(n_max).bits
        return _walk_from_bits(bits[:n], "mobius")
    if spec.kind == "file-bits":
        bits = file_bits(spec.path).bits
        if bits.size < n:
            raise ValueError(f"generator {spec.label()} provides {bits.size} bits, need {n}")
        return _walk_from_bits(bits[:n], "file-bits")
    if spec.kind == "persistent-walk":
        return persistent_walk(
            spec.seed, n, spec.rho, spec.tick, spec.start_price, spec.zero_prob, spec.up_bias
        )
    raise ValueError(f"unknown generator kind {spec.kind!r}")
