"""Parse trade-execution records from LOBSTER-style message files.

A message file is a CSV with one order-book event per line and six fields:
time, event type, order id, size, price, direction (default column order).
Only execution events are retained; their prices, in file order, form the
day's price series.  Prices are exact integers in 1/10000 currency units so
tie detection downstream is never subject to float rounding.
"""
from __future__ import annotations

import csv
import os
import re
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "ColumnMap",
    "TradeDay",
    "ParseError",
    "parse_message_file",
    "restrict_session",
    "write_day_file",
    "read_day_file",
    "time_to_ns",
]

FIELDS = ("time", "event_type", "order_id", "size", "price", "direction")

NS_PER_SEC = 1_000_000_000


class ParseError(ValueError):
    """Malformed message-file line; carries the 1-based line number."""

    def __init__(self, path, line_no, reason):
        self.path = path
        self.line_no = line_no
        self.reason = reason
        super().__init__(f"{path}:{line_no}: {reason}")


@dataclass(frozen=True)
class ColumnMap:
    """Column positions of the six event fields plus the execution code set."""

    order: tuple[str, ...] = FIELDS
    exec_codes: frozenset[int] = frozenset({4, 5})

    def __post_init__(self):
        if sorted(self.order) != sorted(FIELDS):
            raise ValueError(f"column order must map each of {FIELDS} exactly once")
        object.__setattr__(self, "exec_codes", frozenset(int(c) for c in self.exec_codes))

    @classmethod
    def from_strings(cls, columns: str | None = None, exec_codes: str | None = None) -> "ColumnMap":
        order = tuple(c.strip() for c in columns.split(",")) if columns else FIELDS
        codes = frozenset(int(c) for c in exec_codes.split(",")) if exec_codes else frozenset({4, 5})
        return cls(order=order, exec_codes=codes)

    def index(self, name: str) -> int:
        return self.order.index(name)


@dataclass(frozen=True, eq=True)
class TradeDay:
    """One trading day's ordered execution prices for one ticker."""

    ticker: str
    date: str
    prices: np.ndarray  # int64, 1/10000 currency units, file order
    times_ns: np.ndarray | None = field(default=None, compare=False)

    def __post_init__(self):
        p = np.asarray(self.prices, dtype=np.int64)
        p.setflags(write=False)
        object.__setattr__(self, "prices", p)
        if self.times_ns is not None:
            t = np.asarray(self.times_ns, dtype=np.int64)
            t.setflags(write=False)
            object.__setattr__(self, "times_ns", t)

    def __eq__(self, other):
        if not isinstance(other, TradeDay):
            return NotImplemented
        return (
            self.ticker == other.ticker
            and self.date == other.date
            and np.array_equal(self.prices, other.prices)
        )

    @property
    def empty(self) -> bool:
        return self.prices.size == 0


def time_to_ns(text: str) -> int:
    """Seconds-after-midnight with fractional part, or HH:MM:SS[.frac], to ns."""
    text = text.strip()
    if ":" in text:
        parts = text.split(":")
        if len(parts) != 3:
            raise ValueError(f"bad time {text!r}")
        h, m = int(parts[0]), int(parts[1])
        sec_txt = parts[2]
    else:
        h = m = 0
        sec_txt = text
    if "." in sec_txt:
        whole, frac = sec_txt.split(".", 1)
        frac = (frac + "0" * 9)[:9]
    else:
        whole, frac = sec_txt, "0" * 9
    return ((h * 60 + m) * 60 + int(whole)) * NS_PER_SEC + int(frac)


_DATE_RE = re.compile(r"(\d{4}-\d{2}-\d{2})")


def _infer_from_filename(path) -> tuple[str, str]:
    stem = os.path.splitext(os.path.basename(path))[0]
    ticker = stem.split("_")[0] if "_" in stem else stem
    m = _DATE_RE.search(stem)
    return ticker, (m.group(1) if m else "")


def parse_message_file(
    path: str | os.PathLike,
    column_map: ColumnMap | None = None,
    ticker: str | None = None,
    date: str | None = None,
) -> TradeDay:
    """Single-pass parse keeping only execution events, in file order.

    Raises ParseError with the offending line number on malformed input; a
    file with no retained events yields an empty (flagged) day, not an error.
    """
    cmap = column_map or ColumnMap()
    i_time = cmap.index("time")
    i_type = cmap.index("event_type")
    i_price = cmap.index("price")
    ncols = len(FIELDS)
    exec_codes = cmap.exec_codes

    inferred_ticker, inferred_date = _infer_from_filename(path)
    prices: list[int] = []
    times: list[int] = []
    with open(path, newline="") as fh:
        for line_no, row in enumerate(csv.reader(fh), start=1):
            if not row or (len(row) == 1 and not row[0].strip()):
                continue
            if len(row) < ncols:
                raise ParseError(path, line_no, f"expected {ncols} fields, got {len(row)}")
            try:
                etype = int(row[i_type])
                if etype not in exec_codes:
                    continue
                price = int(row[i_price])
                t_ns = time_to_ns(row[i_time])
            except ParseError:
                raise
            except ValueError as exc:
                raise ParseError(path, line_no, str(exc)) from exc
            if price <= 0:
                raise ParseError(path, line_no, f"non-positive price {price}")
            prices.append(price)
            times.append(t_ns)

    return TradeDay(
        ticker=ticker or inferred_ticker,
        date=date or inferred_date,
        prices=np.array(prices, dtype=np.int64),
        times_ns=np.array(times, dtype=np.int64),
    )


def restrict_session(day: TradeDay, open_time: str = "09:30:00", close_time: str = "16:00:00") -> TradeDay:
    """Keep events with open <= time <= close (both boundaries inclusive)."""
    lo, hi = time_to_ns(open_time), time_to_ns(close_time)
    if lo >= hi:
        raise ValueError("session open must precede close")
    if day.times_ns is None:
        raise ValueError("day has no event times; cannot restrict session")
    keep = (day.times_ns >= lo) & (day.times_ns <= hi)
    return TradeDay(day.ticker, day.date, day.prices[keep], day.times_ns[keep])


def write_day_file(day: TradeDay, path: str | os.PathLike) -> None:
    """Day file: two metadata rows then one price per line."""
    with open(path, "w", newline="") as fh:
        fh.write(f"ticker,{day.ticker}\n")
        fh.write(f"date,{day.date}\n")
        for p in day.prices:
            fh.write(f"{int(p)}\n")


def read_day_file(path: str | os.PathLike) -> TradeDay:
    with open(path) as fh:
        header1 = fh.readline().strip().split(",")
        header2 = fh.readline().strip().split(",")
        if header1[0] != "ticker" or header2[0] != "date":
            raise ParseError(path, 1, "not a day file (missing ticker/date header)")
        ticker = header1[1] if len(header1) > 1 else ""
        date = header2[1] if len(header2) > 1 else ""
        prices = [int(line) for line in fh if line.strip()]
    return TradeDay(ticker, date, np.array(prices, dtype=np.int64))
