"""Randomness-test battery: decision kernel, entropy tests, substring-aggregated
tests, and whole-string tests, all reporting p-values under one contract."""

from .entropy import (
    arithmetic_mean_statistic,
    block_length,
    kl_independence_p,
    kl_independence_statistic,
    shannon_entropy_p,
    shannon_entropy_statistic,
)
from .registry import (
    default_registry,
    read_catalog,
    registry_by_id,
    run_battery,
    run_test,
    select_tests,
    write_catalog,
)
from .types import PASS, REJECT, SKIP, Alpha, TestResult, TestSpec, decide

__all__ = [
    "Alpha",
    "TestSpec",
    "TestResult",
    "decide",
    "PASS",
    "REJECT",
    "SKIP",
    "block_length",
    "shannon_entropy_statistic",
    "shannon_entropy_p",
    "kl_independence_statistic",
    "kl_independence_p",
    "arithmetic_mean_statistic",
    "default_registry",
    "registry_by_id",
    "select_tests",
    "run_test",
    "run_battery",
    "write_catalog",
    "read_catalog",
]
