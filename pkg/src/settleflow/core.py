"""Domain types and dataset-wide validation.

Money is always held as integer cents so that daily totals of order
A$10^11 sum exactly.  Bank labels are opaque strings; day indices are
ordinals within a dataset (0 = first day of the sample).
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, NamedTuple, Sequence

CENTS_PER_DOLLAR = 100
MAX_DAYS = 7


def dollars(amount: float) -> int:
    """Convert an A$ amount to integer cents (round half to even)."""
    return int(round(amount * CENTS_PER_DOLLAR))


class Transaction(NamedTuple):
    """One settled payment.  Tuple order is the canonical sort order."""

    day: int
    source: str
    destination: str
    value: int  # cents


@dataclass(frozen=True)
class TargetRate:
    annual_percent: float

    def __post_init__(self):
        if not self.annual_percent > 0:
            raise ValueError(f"target rate must be positive, got {self.annual_percent}")


class DailyTotals(NamedTuple):
    day: int
    volume: int
    total_value: int


@dataclass(frozen=True)
class WeekDataset:
    """Daily transaction logs sharing one bank label space.

    ``days[i]`` holds the transactions settled on day ``i``.  Construction
    does not validate; call :func:`validate` for a full violation list.
    """

    days: tuple[tuple[Transaction, ...], ...]
    banks: frozenset[str]

    @classmethod
    def from_transactions(
        cls,
        transactions: Iterable[Transaction],
        n_days: int | None = None,
        banks: Iterable[str] | None = None,
    ) -> "WeekDataset":
        """Group transactions by day in canonical order.

        Days ``0..max(day)`` (or ``0..n_days-1``) are materialised, so a
        day without any activity is an empty tuple.
        """
        txs = sorted(transactions)
        last = txs[-1].day if txs else -1
        if n_days is None:
            n_days = last + 1
        elif last >= n_days:
            raise ValueError(f"transaction on day {last} outside {n_days}-day dataset")
        buckets: list[list[Transaction]] = [[] for _ in range(n_days)]
        seen: set[str] = set()
        for t in txs:
            buckets[t.day].append(t)
            seen.add(t.source)
            seen.add(t.destination)
        all_banks = frozenset(seen if banks is None else set(banks) | seen)
        return cls(tuple(tuple(b) for b in buckets), all_banks)

    @property
    def n_days(self) -> int:
        return len(self.days)

    def transactions(self) -> list[Transaction]:
        return [t for day in self.days for t in day]

    def __len__(self) -> int:
        return sum(len(d) for d in self.days)

    def restrict_days(self, day_indices: Sequence[int]) -> "WeekDataset":
        """Keep the given days (renumbered 0..k-1) with the same bank set."""
        days = []
        for new, old in enumerate(day_indices):
            days.append(tuple(t._replace(day=new) for t in self.days[old]))
        return WeekDataset(tuple(days), self.banks)


def dataset_totals(week: WeekDataset) -> list[DailyTotals]:
    """Volume and exact total value for every day of the dataset."""
    return [
        DailyTotals(d, len(txs), sum(t.value for t in txs))
        for d, txs in enumerate(week.days)
    ]


def validate(week: WeekDataset) -> list[str]:
    """Return every invariant violation found in ``week``.

    An empty list means the dataset is well formed.  Validation never
    raises on bad data.
    """
    problems: list[str] = []
    if not 1 <= len(week.days) <= MAX_DAYS:
        problems.append(f"dataset has {len(week.days)} days, expected 1..{MAX_DAYS}")
    for label in sorted(week.banks):
        if not isinstance(label, str) or not label:
            problems.append(f"invalid bank label {label!r}")
    for d, txs in enumerate(week.days):
        for t in txs:
            if t.day != d:
                problems.append(f"unordered days: transaction dated day {t.day} stored under day {d}")
            if t.source == t.destination:
                problems.append(f"self-loop at day {t.day}, bank {t.source}")
            if not isinstance(t.value, int) or isinstance(t.value, bool):
                problems.append(f"non-integer value {t.value!r} at day {t.day}, {t.source}->{t.destination}")
            elif t.value <= 0:
                problems.append(f"non-positive value {t.value} at day {t.day}, {t.source}->{t.destination}")
            for bank in (t.source, t.destination):
                if bank not in week.banks:
                    problems.append(f"unknown bank {bank!r} at day {t.day}")
    return problems


class DatasetError(ValueError):
    """Raised when an operation receives a dataset that fails validation."""


def require_valid(week: WeekDataset) -> None:
    problems = validate(week)
    if problems:
        head = "; ".join(problems[:5])
        more = f" (+{len(problems) - 5} more)" if len(problems) > 5 else ""
        raise DatasetError(f"invalid dataset: {head}{more}")
