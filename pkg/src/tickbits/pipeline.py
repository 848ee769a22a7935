"""End-to-end orchestration: day files -> monthly bit strings -> battery ->
result tables, boxplot summaries, and certified bit export.

Results are plain CSV plus a JSON manifest (config hash, code version); rows
are computed in any order, then sorted and formatted identically regardless
of the parallelism degree, so runs are byte-reproducible.
"""
from __future__ import annotations

import csv
import glob
import hashlib
import json
import math
import os
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from . import __version__
from .bitcore import UP_IS_ONE, median_symbolize, symbolize
from .bits import BitString, write_bit_file
from .ingest import read_day_file
from .sanity import LengthClass, RegistryFilter, filter_from_exclusion_file
from .stattests import Alpha, REJECT, SKIP, TestSpec, default_registry, run_test, select_tests

__all__ = [
    "RunConfig",
    "ResultRow",
    "ResultSet",
    "run_month",
    "summarize",
    "export_bits",
    "compare_variants",
    "ExportRefused",
    "BoxplotRow",
]

P_FLOOR_DEFAULT = 1e-300


@dataclass(frozen=True)
class RunConfig:
    tickers: tuple[str, ...]
    months: tuple[str, ...]
    data_dir: str
    out_dir: str = "."
    max_level: int = 100
    alpha: float = 0.01
    include_tests: tuple[str, ...] = ()
    exclude_tests: tuple[str, ...] = ()
    exclusions_path: str = ""
    length_class: dict | None = None  # ticker -> canonical length; inferred when absent
    ratio_direction: str = UP_IS_ONE
    median_variant: bool = False
    jobs: int = 1
    missing_day_fatal: bool = False
    p_floor: float = P_FLOOR_DEFAULT

    def __post_init__(self):
        for name in ("tickers", "months", "include_tests", "exclude_tests"):
            object.__setattr__(self, name, tuple(getattr(self, name)))
        if self.max_level < 1:
            raise ValueError("max_level must be >= 1")
        if not self.months:
            raise ValueError("months must be nonempty")

    def canonical(self) -> dict:
        d = asdict(self)
        d["tickers"] = list(self.tickers)
        d["months"] = list(self.months)
        d["include_tests"] = list(self.include_tests)
        d["exclude_tests"] = list(self.exclude_tests)
        return d

    def hash(self) -> str:
        return hashlib.sha256(json.dumps(self.canonical(), sort_keys=True).encode()).hexdigest()[:16]


@dataclass(frozen=True)
class ResultRow:
    ticker: str
    month: str
    test_id: str
    level: int
    sample: int
    n_bits: int
    statistic: float | None
    p_value: float | None
    neg_log10_p: float | None
    decision: str

    def key(self):
        return (self.ticker, self.month, self.test_id, self.level, self.sample)


@dataclass
class ResultSet:
    rows: list[ResultRow]
    config: RunConfig

    def sorted_rows(self) -> list[ResultRow]:
        return sorted(self.rows, key=lambda r: r.key())

    def to_csv(self, path: str | os.PathLike) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(
                ["ticker", "month", "test_id", "level", "sample", "n_bits", "statistic", "p_value", "neg_log10_p", "decision"]
            )
            for r in self.sorted_rows():
                w.writerow(
                    [
                        r.ticker,
                        r.month,
                        r.test_id,
                        r.level,
                        r.sample,
                        r.n_bits,
                        "" if r.statistic is None else f"{r.statistic:.10g}",
                        "" if r.p_value is None else f"{r.p_value:.12g}",
                        "" if r.neg_log10_p is None else f"{r.neg_log10_p:.8g}",
                        r.decision,
                    ]
                )

    def write_manifest(self, path: str | os.PathLike) -> None:
        payload = {
            "tool_version": __version__,
            "config": self.config.canonical(),
            "config_hash": self.config.hash(),
            "rows": len(self.rows),
        }
        with open(path, "w") as fh:
            json.dump(payload, fh, indent=1)


def month_day_files(data_dir: str, ticker: str, month: str) -> list[str]:
    pattern = os.path.join(data_dir, ticker, f"{month}-*.csv")
    return sorted(glob.glob(pattern))


def load_month_prices(config: RunConfig, ticker: str, month: str) -> list[np.ndarray]:
    files = month_day_files(config.data_dir, ticker, month)
    if not files:
        msg = f"no day files for {ticker} {month} under {config.data_dir}"
        if config.missing_day_fatal:
            raise FileNotFoundError(msg)
        warnings.warn(msg + "; skipping")
        return []
    days = []
    for path in files:
        day = read_day_file(path)
        if day.empty:
            warnings.warn(f"empty day file {path}; skipped")
            continue
        days.append(day.prices)
    return days


def _select_specs(config: RunConfig) -> list[TestSpec]:
    return select_tests(
        default_registry(),
        include=list(config.include_tests) or None,
        exclude=list(config.exclude_tests) or None,
    )


def _neg_log10(p: float, floor: float) -> float:
    return -math.log10(max(p, floor))


def monthly_cell_bits(day_prices: list[np.ndarray], level: int, sample: int, median: bool, direction: str) -> np.ndarray:
    fn = median_symbolize if median else symbolize
    parts = [fn(p, level, sample, direction).bits for p in day_prices]
    return np.concatenate(parts) if parts else np.empty(0, dtype=np.uint8)


def _rows_for_level(
    day_prices: list[np.ndarray],
    specs: list[TestSpec],
    level: int,
    ticker: str,
    month: str,
    alpha: float,
    median: bool,
    direction: str,
    p_floor: float,
) -> list[ResultRow]:
    rows = []
    a = Alpha(alpha)
    for j in range(1, level + 1):
        bits = monthly_cell_bits(day_prices, level, j, median, direction)
        for spec in specs:
            r = run_test(spec, bits, a)
            if r.decision == SKIP:
                rows.append(ResultRow(ticker, month, spec.id, level, j, bits.size, None, None, None, SKIP))
            else:
                p = r.p
                rows.append(
                    ResultRow(
                        ticker, month, spec.id, level, j, r.n_bits_used, r.statistic, p, _neg_log10(p, p_floor), r.decision
                    )
                )
    return rows


_WORKER_CTX: dict = {}


def _level_task(args):
    (ticker, month, level) = args
    ctx = _WORKER_CTX
    return _rows_for_level(
        ctx["days"][(ticker, month)],
        ctx["specs"][(ticker, month)],
        level,
        ticker,
        month,
        ctx["alpha"],
        ctx["median"],
        ctx["direction"],
        ctx["p_floor"],
    )


def observed_level1_length(day_prices: list[np.ndarray], direction: str = UP_IS_ONE) -> int:
    return sum(symbolize(p, 1, 1, direction).bits.size for p in day_prices)


def _length_class_for(config: RunConfig, observed: dict[str, int]) -> LengthClass:
    if config.length_class:
        return LengthClass(dict(config.length_class))
    return LengthClass.from_observed(observed)


def _registry_filter(config: RunConfig, length_class: LengthClass) -> RegistryFilter | None:
    if not config.exclusions_path:
        return None
    return filter_from_exclusion_file(config.exclusions_path, length_class)


def run_month(config: RunConfig) -> ResultSet:
    """Battery over every (ticker, month, level, sample) monthly string."""
    specs_all = _select_specs(config)
    units: list[tuple[str, str]] = [(t, m) for t in config.tickers for m in config.months]
    days_by_unit: dict[tuple[str, str], list[np.ndarray]] = {}
    observed: dict[str, int] = {}
    for ticker, month in units:
        days = load_month_prices(config, ticker, month)
        days_by_unit[(ticker, month)] = days
        if days:
            observed[ticker] = max(
                observed.get(ticker, 0), observed_level1_length(days, config.ratio_direction)
            )
    observed = {t: n for t, n in observed.items() if n} or {t: 1 for t, _ in units}
    length_class = _length_class_for(config, observed)
    reg_filter = _registry_filter(config, length_class)
    specs_by_unit = {
        (t, m): (reg_filter.filter_specs(t, specs_all) if reg_filter else specs_all)
        for t, m in units
    }

    tasks = [
        (t, m, level)
        for (t, m) in units
        if days_by_unit[(t, m)]
        for level in range(1, config.max_level + 1)
    ]
    global _WORKER_CTX
    _WORKER_CTX = {
        "days": days_by_unit,
        "specs": specs_by_unit,
        "alpha": config.alpha,
        "median": config.median_variant,
        "direction": config.ratio_direction,
        "p_floor": config.p_floor,
    }
    try:
        if config.jobs > 1 and len(tasks) > 1:
            with ProcessPoolExecutor(max_workers=config.jobs) as pool:
                chunks = list(pool.map(_level_task, tasks, chunksize=4))
        else:
            chunks = [_level_task(t) for t in tasks]
    finally:
        _WORKER_CTX = {}
    rows = [row for chunk in chunks for row in chunk]
    return ResultSet(rows=rows, config=config)


@dataclass(frozen=True)
class BoxplotRow:
    ticker: str
    month: str
    test_id: str
    level: int
    n_samples: int
    q_min: float | None
    q1: float | None
    median: float | None
    q3: float | None
    q_max: float | None

    @property
    def skipped(self) -> bool:
        return self.n_samples == 0


def summarize(results: ResultSet) -> list[BoxplotRow]:
    """Quartiles of -log10(p) per (ticker, month, test, level), type-7 interpolation."""
    groups: dict[tuple, list[float]] = {}
    seen: set[tuple] = set()
    for r in results.rows:
        key = (r.ticker, r.month, r.test_id, r.level)
        seen.add(key)
        if r.decision != SKIP and r.neg_log10_p is not None:
            groups.setdefault(key, []).append(r.neg_log10_p)
    out = []
    for key in sorted(seen):
        vals = groups.get(key)
        if not vals:
            out.append(BoxplotRow(*key, 0, None, None, None, None, None))
            continue
        q = np.percentile(vals, [0, 25, 50, 75, 100], method="linear")
        out.append(BoxplotRow(*key, len(vals), *[float(x) for x in q]))
    return out


def write_boxplot_csv(rows: list[BoxplotRow], path: str | os.PathLike) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["ticker", "month", "test_id", "level", "n_samples", "min", "q1", "median", "q3", "max"])
        for r in rows:
            if r.skipped:
                w.writerow([r.ticker, r.month, r.test_id, r.level, 0, "", "", "", "", ""])
            else:
                w.writerow(
                    [r.ticker, r.month, r.test_id, r.level, r.n_samples]
                    + [f"{v:.8g}" for v in (r.q_min, r.q1, r.median, r.q3, r.q_max)]
                )


class ExportRefused(RuntimeError):
    def __init__(self, reasons: list[str]):
        self.reasons = reasons
        super().__init__("export refused: " + "; ".join(reasons))


def export_bits(
    config: RunConfig,
    ticker: str,
    month: str,
    level: int,
    out_path: str,
    min_level: int | None = None,
) -> dict:
    """Concatenate the level's sample strings into one certified bit file.

    The battery (after exclusions for the ticker's length class) must pass
    with zero rejections on the concatenated candidate; any rejection or a
    level below the floor refuses the export and names the failures.
    """
    if min_level is not None and level < min_level:
        raise ExportRefused([f"level {level} below required minimum {min_level}"])
    days = load_month_prices(config, ticker, month)
    if not days:
        raise ExportRefused([f"no data for {ticker} {month}"])
    parts = [
        monthly_cell_bits(days, level, j, config.median_variant, config.ratio_direction)
        for j in range(1, level + 1)
    ]
    candidate = np.concatenate([p for p in parts if p.size]) if parts else np.empty(0, np.uint8)
    observed = {ticker: observed_level1_length(days, config.ratio_direction)}
    length_class = _length_class_for(config, observed)
    reg_filter = _registry_filter(config, length_class)
    specs = _select_specs(config)
    if reg_filter:
        specs = reg_filter.filter_specs(ticker, specs)
    a = Alpha(config.alpha)
    failing = []
    certified = []
    for spec in specs:
        r = run_test(spec, candidate, a)
        if r.decision == REJECT:
            failing.append(spec.id)
        elif r.decision != SKIP:
            certified.append(spec.id)
    if failing:
        raise ExportRefused([f"battery rejection by {t}" for t in failing])
    write_bit_file(out_path, BitString(candidate))
    meta = {
        "ticker": ticker,
        "month": month,
        "level": level,
        "n_bits": int(candidate.size),
        "days": len(days),
        "bits_per_sample": [int(p.size) for p in parts],
        "alpha": config.alpha,
        "certifying_tests": certified,
        "ratio_direction": config.ratio_direction,
        "median_variant": config.median_variant,
        "config_hash": config.hash(),
        "tool_version": __version__,
    }
    with open(out_path + ".json", "w") as fh:
        json.dump(meta, fh, indent=1)
    return meta


def compare_variants(config: RunConfig, ticker: str, month: str) -> tuple[ResultSet, ResultSet]:
    """Side-by-side base and median-balanced batteries for one unit."""
    base_cfg = RunConfig(**{**config.canonical(), "tickers": (ticker,), "months": (month,), "median_variant": False})
    med_cfg = RunConfig(**{**config.canonical(), "tickers": (ticker,), "months": (month,), "median_variant": True})
    return run_month(base_cfg), run_month(med_cfg)


def read_results_csv(path: str | os.PathLike) -> list[ResultRow]:
    rows = []
    with open(path, newline="") as fh:
        for rec in csv.DictReader(fh):
            rows.append(
                ResultRow(
                    ticker=rec["ticker"],
                    month=rec["month"],
                    test_id=rec["test_id"],
                    level=int(rec["level"]),
                    sample=int(rec["sample"]),
                    n_bits=int(rec["n_bits"]),
                    statistic=float(rec["statistic"]) if rec["statistic"] else None,
                    p_value=float(rec["p_value"]) if rec["p_value"] else None,
                    neg_log10_p=float(rec["neg_log10_p"]) if rec["neg_log10_p"] else None,
                    decision=rec["decision"],
                )
            )
    return rows


def synth_month(
    data_dir: str,
    ticker: str,
    month: str,
    days: int,
    ticks_per_day: int,
    seed: int,
    rho: float = 0.5,
    tick: int = 1,
    start_price: int = 100_000,
    zero_prob: float = 0.0,
    up_bias: float = 0.5,
) -> list[str]:
    """Write a synthetic month of persistent-walk day files; returns paths."""
    from .ingest import TradeDay, write_day_file
    from .rngsrc import persistent_walk

    out_dir = os.path.join(data_dir, ticker)
    os.makedirs(out_dir, exist_ok=True)
    paths = []
    for d in range(1, days + 1):
        vs = persistent_walk(seed + d, ticks_per_day, rho, tick, start_price, zero_prob, up_bias)
        date = f"{month}-{d:02d}"
        day = TradeDay(ticker, date, vs.values.astype(np.int64))
        path = os.path.join(out_dir, f"{date}.csv")
        write_day_file(day, path)
        paths.append(path)
    return paths


def write_paired_csv(base: ResultSet, median: ResultSet, path: str | os.PathLike) -> None:
    by_key = {r.key(): r for r in median.rows}
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(
            ["ticker", "month", "test_id", "level", "sample", "base_p", "base_decision", "median_p", "median_decision"]
        )
        for r in base.sorted_rows():
            m = by_key.get(r.key())
            w.writerow(
                [
                    r.ticker, r.month, r.test_id, r.level, r.sample,
                    "" if r.p_value is None else f"{r.p_value:.12g}",
                    r.decision,
                    "" if (m is None or m.p_value is None) else f"{m.p_value:.12g}",
                    "" if m is None else m.decision,
                ]
            )
