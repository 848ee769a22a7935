"""Test descriptors, results, and the accept/reject decision kernel."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any

__all__ = ["Alpha", "TestSpec", "TestResult", "decide", "PASS", "REJECT", "SKIP"]

PASS = "pass"
REJECT = "reject"
SKIP = "skip"

ONE_TAILED = "one"
TWO_TAILED = "two"

CATEGORIES = ("frequency", "pattern", "entropy-complexity", "spectral", "random-walk")


@dataclass(frozen=True)
class Alpha:
    """Significance level for every decision in a run."""

    value: float = 0.01

    def __post_init__(self):
        if not (0.0 < self.value < 1.0):
            raise ValueError("alpha must lie strictly between 0 and 1")


def decide(p: float, tail: str, alpha: Alpha | float = Alpha()) -> str:
    """One-tailed: pass iff p >= a.  Two-tailed: pass iff a/2 <= p <= 1 - a/2."""
    a = alpha.value if isinstance(alpha, Alpha) else float(alpha)
    if not (0.0 < a < 1.0):
        raise ValueError("alpha must lie strictly between 0 and 1")
    if not (0.0 <= p <= 1.0):
        raise ValueError(f"p-value {p} outside [0, 1]")
    if tail == ONE_TAILED:
        return PASS if p >= a else REJECT
    if tail == TWO_TAILED:
        return PASS if (a / 2.0 <= p <= 1.0 - a / 2.0) else REJECT
    raise ValueError(f"unknown tail type {tail!r}")


@dataclass(frozen=True)
class TestSpec:
    """A registered randomness test and its fixed parameters."""

    id: str
    category: str
    tail: str
    min_length: int
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.category not in CATEGORIES:
            raise ValueError(f"unknown category {self.category!r}")
        if self.tail not in (ONE_TAILED, TWO_TAILED):
            raise ValueError(f"unknown tail {self.tail!r}")
        if self.min_length <= 0:
            raise ValueError("min_length must be positive")


@dataclass(frozen=True)
class TestResult:
    spec_id: str
    statistic: float | None
    p_values: tuple[float, ...]
    decision: str
    n_bits_used: int
    diagnostics: dict[str, Any] = field(default_factory=dict)

    @property
    def p(self) -> float | None:
        """The decision-relevant p-value (minimum of those reported)."""
        return min(self.p_values) if self.p_values else None

    @property
    def skipped(self) -> bool:
        return self.decision == SKIP


def make_result(spec: TestSpec, statistic, p_values, n_bits: int, alpha, diagnostics=None) -> TestResult:
    ps = tuple(min(1.0, max(0.0, float(p))) for p in p_values)
    return TestResult(
        spec_id=spec.id,
        statistic=None if statistic is None else float(statistic),
        p_values=ps,
        decision=decide(min(ps), spec.tail, alpha),
        n_bits_used=n_bits,
        diagnostics=diagnostics or {},
    )


def make_skip(spec: TestSpec, n_bits: int, reason: str) -> TestResult:
    return TestResult(
        spec_id=spec.id,
        statistic=None,
        p_values=(),
        decision=SKIP,
        n_bits_used=n_bits,
        diagnostics={"skip_reason": reason},
    )
