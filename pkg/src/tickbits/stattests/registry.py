"""The registered test battery: specs, dispatch, and the JSON catalog."""
from __future__ import annotations

import json
import os

import numpy as np

from . import entropy as ent
from . import tu01
from .nist import MIN_SEQUENCES, battery_aggregate
from .types import Alpha, TestResult, TestSpec, make_result, make_skip

__all__ = [
    "default_registry",
    "registry_by_id",
    "select_tests",
    "run_test",
    "run_battery",
    "write_catalog",
    "read_catalog",
]

_NIST_T = 128
_NIST_T_LONG = 1000


def default_registry() -> list[TestSpec]:
    """Every in-scope test with its fixed parameters."""
    specs: list[TestSpec] = []

    def add(id_, category, tail, min_length, **params):
        specs.append(TestSpec(id=id_, category=category, tail=tail, min_length=min_length, params=params))

    # substring-aggregated tests (per-substring kernels + battery aggregation)
    nist_min = _NIST_T * MIN_SEQUENCES
    long_min = _NIST_T_LONG * MIN_SEQUENCES
    add("Frequency", "frequency", "one", nist_min, kind="nist", t=_NIST_T)
    add("BlockFrequency", "frequency", "one", nist_min, kind="nist", t=_NIST_T, M=20)
    add("CumulativeSums", "random-walk", "one", nist_min, kind="nist", t=_NIST_T)
    add("Runs", "pattern", "one", nist_min, kind="nist", t=_NIST_T)
    add("LongestRunOfOnes", "pattern", "one", nist_min, kind="nist", t=_NIST_T, M=8)
    add("DFT", "spectral", "one", long_min, kind="nist", t=_NIST_T_LONG)
    add(
        "NonOverlappingTemplate",
        "pattern",
        "one",
        long_min,
        kind="nist",
        t=_NIST_T_LONG,
        m=9,
        J=8,
        template="000000001",
    )
    add("ApproximateEntropy", "entropy-complexity", "one", nist_min, kind="nist", t=_NIST_T, m=5)
    add("Serial", "pattern", "one", nist_min, kind="nist", t=_NIST_T, m=2)

    # whole-string tests
    add("ShannonEntropy", "entropy-complexity", "one", 100, kind="whole")
    add("KL", "entropy-complexity", "one", 100, kind="whole")
    add("ArithmeticMean", "frequency", "one", 8, kind="whole")
    for L in (2, 4, 8, 16):
        add(f"MultinomialBitsOverlapping_L{L}", "frequency", "two", 500, kind="whole", L=L)
    add("HammingWeight_L32", "frequency", "two", 500, kind="whole", L=32)
    for L in (32, 64, 128):
        add(f"HammingCorrelation_L{L}", "pattern", "two", 500, kind="whole", L=L)
    for L in (16, 32, 64):
        add(f"HammingIndependence_L{L}", "pattern", "two", 500, kind="whole", L=L)
    for d in (1, 2):
        add(f"AutoCorrelation_d{d}", "pattern", "two", 500, kind="whole", d=d)
    add("LongestHeadRun", "pattern", "two", 500, kind="whole")
    add("Run", "pattern", "two", 500, kind="whole")
    return specs


def registry_by_id(specs: list[TestSpec] | None = None) -> dict[str, TestSpec]:
    return {s.id: s for s in (specs or default_registry())}


def select_tests(
    specs: list[TestSpec],
    include: list[str] | None = None,
    exclude: list[str] | None = None,
) -> list[TestSpec]:
    known = {s.id for s in specs}
    for name in (include or []) + (exclude or []):
        if name not in known:
            raise KeyError(f"unknown test id {name!r}")
    out = [s for s in specs if (not include or s.id in include)]
    if exclude:
        out = [s for s in out if s.id not in exclude]
    return out


def _run_whole(spec: TestSpec, bits: np.ndarray) -> tuple[float, float, dict]:
    p = spec.params
    tid = spec.id
    if tid == "ShannonEntropy":
        stat, pv, k = ent.shannon_entropy_p(bits)
        return stat, pv, {"k": k}
    if tid == "KL":
        stat, pv, k = ent.kl_independence_p(bits)
        return stat, pv, {"k": k}
    if tid == "ArithmeticMean":
        stat, pv = ent.arithmetic_mean_statistic(bits)
        return stat, pv, {}
    if tid.startswith("MultinomialBitsOverlapping"):
        return tu01.multinomial_bits_over(bits, p["L"])
    if tid.startswith("HammingWeight"):
        return tu01.hamming_weight(bits, p["L"])
    if tid.startswith("HammingCorrelation"):
        return tu01.hamming_correlation(bits, p["L"])
    if tid.startswith("HammingIndependence"):
        return tu01.hamming_independence(bits, p["L"])
    if tid.startswith("AutoCorrelation"):
        return tu01.autocorrelation(bits, p["d"])
    if tid == "LongestHeadRun":
        return tu01.longest_head_run(bits)
    if tid == "Run":
        return tu01.run_length_distribution(bits)
    raise KeyError(f"no kernel for test id {tid!r}")


def run_test(spec: TestSpec, bits, alpha: Alpha | float = Alpha()) -> TestResult:
    """Dispatch one registered test; strings below min_length are skipped."""
    a = alpha if isinstance(alpha, Alpha) else Alpha(float(alpha))
    arr = np.asarray(getattr(bits, "bits", bits), dtype=np.uint8)
    n = int(arr.size)
    if n < spec.min_length:
        return make_skip(spec, n, f"length {n} below minimum {spec.min_length}")
    if spec.params.get("kind") == "nist":
        t = spec.params["t"]
        kernel_params = {k: v for k, v in spec.params.items() if k not in ("kind", "t")}
        outcome = battery_aggregate(spec.id, arr, t, kernel_params, a.value)
        if outcome is None:
            return make_skip(spec, n, f"fewer than {MIN_SEQUENCES} substrings of {t} bits")
        used = (n // t) * t
        return make_result(spec, outcome.statistic, outcome.p_values, used, a, outcome.diagnostics)
    stat, pv, diag = _run_whole(spec, arr)
    return make_result(spec, stat, (pv,), n, a, diag)


def run_battery(bits, specs: list[TestSpec], alpha: Alpha | float = Alpha()) -> list[TestResult]:
    """One result (or skip) per spec, in spec order."""
    return [run_test(spec, bits, alpha) for spec in specs]


def write_catalog(path: str | os.PathLike, specs: list[TestSpec] | None = None) -> None:
    specs = specs or default_registry()
    payload = [
        {
            "id": s.id,
            "category": s.category,
            "params": {k: v for k, v in s.params.items() if k != "kind"},
            "tail": s.tail,
            "min_length": s.min_length,
        }
        for s in specs
    ]
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=1)


def read_catalog(path: str | os.PathLike) -> list[dict]:
    with open(path) as fh:
        return json.load(fh)
