"""Canonical CSV reading and writing for transaction logs.

The format is ``day,source,destination,value_cents`` with a mandatory
header, one transaction per row, LF line endings on output.
"""
from __future__ import annotations

import csv
import io
from typing import IO, Iterable

from .core import MAX_DAYS, Transaction, WeekDataset

HEADER = ("day", "source", "destination", "value_cents")


class ParseError(ValueError):
    def __init__(self, line: int, message: str):
        super().__init__(f"line {line}: {message}")
        self.line = line


def _as_stream(source: IO[str] | str) -> IO[str]:
    return io.StringIO(source) if isinstance(source, str) else source


def iter_transactions(source: IO[str] | str) -> Iterable[Transaction]:
    """Yield transactions from a CSV stream one row at a time."""
    reader = csv.reader(_as_stream(source))
    try:
        header = next(reader)
    except StopIteration:
        raise ParseError(1, "missing header") from None
    if tuple(h.strip() for h in header) != HEADER:
        raise ParseError(1, f"expected header {','.join(HEADER)!r}, got {','.join(header)!r}")
    for row in reader:
        line = reader.line_num
        if not row:
            continue
        if len(row) != len(HEADER):
            raise ParseError(line, f"expected {len(HEADER)} columns, got {len(row)}")
        day_s, src, dst, value_s = (c.strip() for c in row)
        try:
            day = int(day_s)
        except ValueError:
            raise ParseError(line, f"malformed day {day_s!r}") from None
        try:
            value = int(value_s)
        except ValueError:
            raise ParseError(line, f"malformed value {value_s!r}") from None
        if not 0 <= day < MAX_DAYS:
            raise ParseError(line, f"day {day} out of range [0,{MAX_DAYS - 1}]")
        if not src or not dst:
            raise ParseError(line, "empty bank label")
        if src == dst:
            raise ParseError(line, f"self-loop at bank {src}")
        if value <= 0:
            raise ParseError(line, f"non-positive value {value}")
        yield Transaction(day, src, dst, value)


def parse_transactions(source: IO[str] | str) -> WeekDataset:
    """Parse a CSV transaction log into a :class:`WeekDataset`.

    Days ``0..max(day)`` are materialised; banks are the union of all
    labels seen.
    """
    return WeekDataset.from_transactions(iter_transactions(source))


def write_transactions(week: WeekDataset, out: IO[str] | None = None) -> str | None:
    """Write ``week`` as canonical CSV, rows sorted by (day, source, destination, value).

    Returns the text when ``out`` is None, otherwise writes to ``out``.
    """
    sink = io.StringIO() if out is None else out
    sink.write(",".join(HEADER) + "\n")
    for t in sorted(week.transactions()):
        sink.write(f"{t.day},{t.source},{t.destination},{t.value}\n")
    return sink.getvalue() if out is None else None


def read_file(path) -> WeekDataset:
    with open(path, newline="", encoding="utf-8") as fh:
        return parse_transactions(fh)


def write_file(week: WeekDataset, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        write_transactions(week, fh)
