"""Calibration harness: exclude tests that misfire on reference generators.

For each generator and string length, the full aggregation grid (all
(level, sample) cells) is built from the generator's value stream and every
registered test runs on every cell.  Failure fractions are pooled per
(test, length) across generators; a test whose pooled fraction strictly
exceeds the threshold is excluded for that length, as is a test that never
produced a usable result there.
"""
from __future__ import annotations

import csv
import json
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .bitcore import symbolize
from .rngsrc import GeneratorSpec, value_stream
from .stattests import Alpha, REJECT, SKIP, TestSpec, default_registry, run_test

__all__ = [
    "CANONICAL_LENGTHS",
    "SanityEntry",
    "SanityReport",
    "LengthClass",
    "run_sanity",
    "apply_exclusions",
    "RegistryFilter",
    "verdict_from_counts",
]

CANONICAL_LENGTHS = (50_000, 100_000, 500_000, 1_000_000)
DEFAULT_THRESHOLD = 0.02

VALID = "valid"
EXCLUDED = "excluded"

REASON_RATE = "failure-rate"
REASON_NEVER_RAN = "never-ran"


def verdict_from_counts(failures: int, total: int, threshold: float = DEFAULT_THRESHOLD) -> tuple[str, str]:
    """Strict comparison: excluded only when the fraction exceeds the threshold."""
    if total == 0:
        return EXCLUDED, REASON_NEVER_RAN
    if failures / total > threshold:
        return EXCLUDED, REASON_RATE
    return VALID, ""


@dataclass(frozen=True)
class SanityEntry:
    test_id: str
    length: int
    failures: int
    total: int
    verdict: str
    reason: str = ""

    @property
    def fraction(self) -> float:
        return self.failures / self.total if self.total else 0.0


@dataclass
class SanityReport:
    entries: list[SanityEntry]
    alpha: float
    threshold: float
    pooled: bool
    generators: list[str] = field(default_factory=list)
    per_generator: dict = field(default_factory=dict)  # (gen, test, length) -> [fail, total]

    def entry(self, test_id: str, length: int) -> SanityEntry:
        for e in self.entries:
            if e.test_id == test_id and e.length == length:
                return e
        raise KeyError((test_id, length))

    def excluded(self, length: int) -> list[SanityEntry]:
        return [e for e in self.entries if e.length == length and e.verdict == EXCLUDED]

    def to_csv(self, path: str | os.PathLike) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["test_id", "length", "failures", "total", "fraction", "verdict", "reason"])
            for e in sorted(self.entries, key=lambda e: (e.length, e.test_id)):
                w.writerow([e.test_id, e.length, e.failures, e.total, f"{e.fraction:.6f}", e.verdict, e.reason])

    def write_exclusions(self, path: str | os.PathLike) -> None:
        payload = {
            "alpha": self.alpha,
            "threshold": self.threshold,
            "pooled": self.pooled,
            "generators": self.generators,
            "lengths": {
                str(length): {
                    "excluded": [
                        {"test_id": e.test_id, "reason": e.reason, "fraction": round(e.fraction, 6)}
                        for e in self.excluded(length)
                    ]
                }
                for length in sorted({e.length for e in self.entries})
            },
        }
        with open(path, "w") as fh:
            json.dump(payload, fh, indent=1)


def _grid_counts(
    values: np.ndarray,
    specs: list[TestSpec],
    alpha: float,
    max_level: int,
) -> dict[str, list[int]]:
    """Run every test over every (level, sample) cell of one value stream."""
    counts: dict[str, list[int]] = {s.id: [0, 0] for s in specs}
    a = Alpha(alpha)
    for level in range(1, max_level + 1):
        for j in range(1, level + 1):
            bits = symbolize(values, level, j)
            for spec in specs:
                r = run_test(spec, bits, a)
                if r.decision == SKIP:
                    continue
                counts[spec.id][1] += 1
                if r.decision == REJECT:
                    counts[spec.id][0] += 1
    return counts


def _sanity_task(args):
    spec_dict, length, spec_ids, alpha, max_level = args
    gen = GeneratorSpec(**spec_dict)
    registry = [s for s in default_registry() if s.id in spec_ids]
    values = value_stream(gen, length).values
    return gen.label(), length, _grid_counts(values, registry, alpha, max_level)


def run_sanity(
    generators: list[GeneratorSpec],
    lengths: list[int] = list(CANONICAL_LENGTHS),
    registry: list[TestSpec] | None = None,
    alpha: float = 0.01,
    max_level: int = 100,
    threshold: float = DEFAULT_THRESHOLD,
    pooled: bool = True,
    jobs: int = 1,
) -> SanityReport:
    """Pooled (or per-generator worst-case) failure fractions and verdicts.

    Raises ValueError naming the generator when it cannot produce the
    requested number of values.
    """
    if not generators:
        raise ValueError("need at least one generator")
    specs = registry or default_registry()
    spec_ids = [s.id for s in specs]
    tasks = [
        (gen.__dict__, int(length), spec_ids, alpha, max_level)
        for gen in generators
        for length in lengths
    ]
    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=min(jobs, len(tasks))) as pool:
            outputs = list(pool.map(_sanity_task, tasks))
    else:
        outputs = [_sanity_task(t) for t in tasks]

    per_generator: dict = {}
    for label, length, counts in outputs:
        for tid, (fails, total) in counts.items():
            per_generator[(label, tid, length)] = [fails, total]

    entries: list[SanityEntry] = []
    for length in lengths:
        for spec in specs:
            if pooled:
                fails = sum(per_generator[(g.label(), spec.id, length)][0] for g in generators)
                total = sum(per_generator[(g.label(), spec.id, length)][1] for g in generators)
                verdict, reason = verdict_from_counts(fails, total, threshold)
            else:
                # worst case across generators: any generator over threshold excludes
                worst = (0, 0)
                verdict, reason = VALID, ""
                for g in generators:
                    f, t = per_generator[(g.label(), spec.id, length)]
                    v, r = verdict_from_counts(f, t, threshold)
                    if v == EXCLUDED:
                        verdict, reason = v, r
                    if t and (worst[1] == 0 or f / t > worst[0] / worst[1]):
                        worst = (f, t)
                fails, total = worst
            entries.append(
                SanityEntry(spec.id, int(length), fails, total, verdict, reason)
            )
    return SanityReport(
        entries=entries,
        alpha=alpha,
        threshold=threshold,
        pooled=pooled,
        generators=[g.label() for g in generators],
        per_generator=per_generator,
    )


@dataclass(frozen=True)
class LengthClass:
    """Ticker to canonical string-length class."""

    mapping: dict[str, int]

    def __post_init__(self):
        for ticker, length in self.mapping.items():
            if length not in CANONICAL_LENGTHS:
                raise ValueError(f"{ticker}: {length} is not a canonical length")

    @classmethod
    def from_observed(cls, observed: dict[str, int]) -> "LengthClass":
        """Assign each ticker the geometrically nearest canonical length."""
        mapping = {}
        for ticker, n in observed.items():
            mapping[ticker] = min(CANONICAL_LENGTHS, key=lambda c: abs(np.log(c) - np.log(max(n, 1))))
        return cls(mapping)

    def length_for(self, ticker: str) -> int:
        if ticker not in self.mapping:
            raise KeyError(f"unknown ticker {ticker!r}")
        return self.mapping[ticker]


@dataclass(frozen=True)
class RegistryFilter:
    """Removes (test, length-class) exclusions from a ticker's battery."""

    excluded: dict[int, dict[str, str]]  # length -> test_id -> reason
    length_class: LengthClass

    def allowed(self, ticker: str, test_id: str) -> bool:
        length = self.length_class.length_for(ticker)
        return test_id not in self.excluded.get(length, {})

    def filter_specs(self, ticker: str, specs: list[TestSpec]) -> list[TestSpec]:
        return [s for s in specs if self.allowed(ticker, s.id)]

    def reason(self, ticker: str, test_id: str) -> str | None:
        length = self.length_class.length_for(ticker)
        return self.excluded.get(length, {}).get(test_id)


def apply_exclusions(report: SanityReport, length_class: LengthClass) -> RegistryFilter:
    """Skipped-never-ran entries are excluded with their own reason code."""
    excl: dict[int, dict[str, str]] = {}
    for e in report.entries:
        if e.verdict == EXCLUDED:
            excl.setdefault(e.length, {})[e.test_id] = e.reason or REASON_RATE
    needed = set(length_class.mapping.values())
    covered = {e.length for e in report.entries}
    missing = needed - covered
    if missing:
        raise ValueError(f"sanity report does not cover length classes {sorted(missing)}")
    return RegistryFilter(excluded=excl, length_class=length_class)


def filter_from_exclusion_file(path: str | os.PathLike, length_class: LengthClass) -> RegistryFilter:
    with open(path) as fh:
        payload = json.load(fh)
    excl: dict[int, dict[str, str]] = {}
    for length_s, info in payload.get("lengths", {}).items():
        excl[int(length_s)] = {e["test_id"]: e.get("reason", REASON_RATE) for e in info.get("excluded", [])}
    needed = set(length_class.mapping.values())
    missing = needed - set(excl.keys() | {int(k) for k in payload.get("lengths", {})})
    if missing:
        raise ValueError(f"exclusion file does not cover length classes {sorted(missing)}")
    return RegistryFilter(excluded=excl, length_class=length_class)
