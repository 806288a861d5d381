"""Overnight and term loan identification from reversing transaction pairs.

A transaction A->B of value v1 on day d followed by B->A of value v2 on
day d+k implies the annualised rate ``100 * (365/k) * (v2 - v1) / v1``.
Pairs whose implied rate sits close to the policy target rate, and whose
principal is large enough, are classified as loans.  Within one term the
pairing is chosen greedily by closeness to the target rate, each
transaction being used at most once.
"""
from __future__ import annotations

import bisect
import csv
import io
import math
from collections import Counter, defaultdict
from dataclasses import dataclass
from typing import IO, Iterable, NamedTuple, Sequence

import numpy as np

from .core import Transaction, WeekDataset, dollars

DAYS_PER_YEAR = 365
# Deviations from the target rate are compared after rounding to this many
# decimals (percentage points) so that float noise cannot break ties.
_TIE_DECIMALS = 9

LOAN_CSV_HEADER = ("day", "lender", "borrower", "value_cents", "term_days", "rate_percent")


class DegenerateFitError(ValueError):
    pass


@dataclass(frozen=True)
class MatchParams:
    """Selection box for loan candidates.

    A pair qualifies when the first leg exceeds ``min_value`` (cents) and
    the implied rate is strictly within ``rate_band`` percentage points of
    ``target_rate``.
    """

    target_rate: float = 6.25
    rate_band: float = 0.5
    min_value: int = dollars(2e5)
    max_term_days: int = 4

    def __post_init__(self):
        if not self.target_rate > 0:
            raise ValueError("target_rate must be positive")
        if not self.rate_band > 0:
            raise ValueError("rate_band must be positive")
        if not self.min_value > 0:
            raise ValueError("min_value must be positive")
        if self.max_term_days < 1:
            raise ValueError("max_term_days must be >= 1")


@dataclass(frozen=True)
class Loan:
    lender: str
    borrower: str
    first_leg: Transaction
    second_leg: Transaction
    term_days: int
    rate: float

    @property
    def day(self) -> int:
        return self.first_leg.day

    @property
    def value(self) -> int:
        return self.first_leg.value


class LoanDayStats(NamedTuple):
    day: int
    volume: int
    value: int
    loan_fraction: float


@dataclass(frozen=True)
class LoanExtractionResult:
    loans: list[Loan]
    residual: WeekDataset
    week: WeekDataset
    params: MatchParams

    def by_term(self, term: int) -> list[Loan]:
        return [ln for ln in self.loans if ln.term_days == term]

    def day_stats(self, term: int | None = 1) -> list[LoanDayStats]:
        """Per-day loan count, first-leg value and its share of the day's total value.

        ``term=None`` pools all terms.
        """
        loans = self.loans if term is None else self.by_term(term)
        stats = []
        for d, txs in enumerate(self.week.days):
            legs = [ln.first_leg.value for ln in loans if ln.day == d]
            total = sum(t.value for t in txs)
            value = sum(legs)
            stats.append(LoanDayStats(d, len(legs), value, value / total if total else 0.0))
        return stats

    def first_legs(self, day: int) -> list[Transaction]:
        return [ln.first_leg for ln in self.loans if ln.day == day]

    def nonloans(self, day: int) -> list[Transaction]:
        """All transactions of ``day`` except loan first legs.

        Repayments (second legs) count as nonloans here, matching the
        convention that only the principal transfer is "the loan".
        """
        remaining = Counter(self.first_legs(day))
        out = []
        for t in self.week.days[day]:
            if remaining[t]:
                remaining[t] -= 1
            else:
                out.append(t)
        return out

    def loan_week(self) -> WeekDataset:
        return WeekDataset.from_transactions(
            (ln.first_leg for ln in self.loans), n_days=self.week.n_days, banks=self.week.banks
        )

    def nonloan_week(self) -> WeekDataset:
        return WeekDataset(
            tuple(tuple(self.nonloans(d)) for d in range(self.week.n_days)), self.week.banks
        )


def hypothetical_rate(v1: int, v2: int, term_days: int = 1) -> float:
    """Annualised percent rate implied by lending ``v1`` and receiving ``v2`` after ``term_days``."""
    if v1 <= 0:
        raise ValueError(f"first-leg value must be positive, got {v1}")
    if term_days < 1:
        raise ValueError(f"term must be at least one day, got {term_days}")
    return 100.0 * DAYS_PER_YEAR * (v2 - v1) / (term_days * v1)


def _reverse_index(txs: Sequence[Transaction]) -> dict[tuple[str, str], tuple[list[int], list[int]]]:
    """Map (source, destination) -> (sorted values, matching indices into ``txs``)."""
    groups: dict[tuple[str, str], list[tuple[int, int]]] = defaultdict(list)
    for j, t in enumerate(txs):
        groups[(t.source, t.destination)].append((t.value, j))
    index = {}
    for key, items in groups.items():
        items.sort()
        index[key] = ([v for v, _ in items], [j for _, j in items])
    return index


def _pairs(
    first_day: Sequence[Transaction],
    second_day: Sequence[Transaction],
    term: int,
    rate_lo: float | None,
    rate_hi: float | None,
    min_value: int | None,
    skip_first=None,
    skip_second=None,
):
    """Yield ``(i, j, rate)`` for reversing pairs with rate in the open interval (rate_lo, rate_hi).

    ``None`` bounds disable the corresponding restriction.
    """
    index = _reverse_index(second_day)
    scale = term / (100.0 * DAYS_PER_YEAR)
    for i, t1 in enumerate(first_day):
        if skip_first is not None and skip_first[i]:
            continue
        if min_value is not None and not t1.value > min_value:
            continue
        entry = index.get((t1.destination, t1.source))
        if entry is None:
            continue
        values, idx = entry
        if rate_lo is None:
            a = 0
        else:
            a = bisect.bisect_left(values, math.floor(t1.value * (1 + rate_lo * scale)) - 1)
        if rate_hi is None:
            b = len(values)
        else:
            b = bisect.bisect_right(values, math.ceil(t1.value * (1 + rate_hi * scale)) + 1)
        for pos in range(a, b):
            j = idx[pos]
            if skip_second is not None and skip_second[j]:
                continue
            r = hypothetical_rate(t1.value, values[pos], term)
            if rate_lo is not None and not r > rate_lo:
                continue
            if rate_hi is not None and not r < rate_hi:
                continue
            yield i, j, r


def _canonical_days(week: WeekDataset) -> list[list[Transaction]]:
    return [sorted(day) for day in week.days]


def candidate_pairs(
    week: WeekDataset,
    day: int,
    term: int,
    params: MatchParams,
    restricted: bool = True,
) -> list[tuple[Transaction, Transaction, float]]:
    """Reversing pairs starting on ``day`` and reversing ``term`` days later.

    With ``restricted=False`` every reversing pair is returned regardless of
    value or implied rate (the raw scatter of implied rate against value).
    """
    if day + term >= week.n_days:
        raise ValueError(f"day {day} + term {term} is outside the {week.n_days}-day dataset")
    days = _canonical_days(week)
    first, second = days[day], days[day + term]
    if restricted:
        lo = params.target_rate - params.rate_band
        hi = params.target_rate + params.rate_band
        it = _pairs(first, second, term, lo, hi, params.min_value)
    else:
        it = _pairs(first, second, term, None, None, None)
    return [(first[i], second[j], r) for i, j, r in it]


def extract_loans(week: WeekDataset, params: MatchParams = MatchParams()) -> LoanExtractionResult:
    """Identify loans term by term, overnight first, each later term on the residual.

    Within a term all candidates across the week are sorted by
    ``|r_h - r_t|``; ties prefer the higher implied rate, then the earlier
    second leg in canonical order.  Candidates touching an already used
    transaction are skipped.
    """
    if week.n_days < 2:
        raise ValueError("loan extraction needs at least two days")
    days = _canonical_days(week)
    used = [np.zeros(len(d), dtype=bool) for d in days]
    rt = params.target_rate
    lo, hi = rt - params.rate_band, rt + params.rate_band
    loans: list[Loan] = []
    for term in range(1, min(params.max_term_days, week.n_days - 1) + 1):
        cands = []
        for d in range(week.n_days - term):
            for i, j, r in _pairs(days[d], days[d + term], term, lo, hi, params.min_value,
                                  used[d], used[d + term]):
                cands.append((round(abs(r - rt), _TIE_DECIMALS), -r, d + term, j, d, i))
        cands.sort()
        for _, neg_r, d2, j, d1, i in cands:
            if used[d1][i] or used[d2][j]:
                continue
            used[d1][i] = used[d2][j] = True
            t1, t2 = days[d1][i], days[d2][j]
            loans.append(Loan(t1.source, t1.destination, t1, t2, term, -neg_r))
    loans.sort(key=lambda ln: (ln.first_leg, ln.term_days, ln.second_leg))
    residual = WeekDataset(
        tuple(tuple(t for t, u in zip(d, mask) if not u) for d, mask in zip(days, used)),
        week.banks,
    )
    return LoanExtractionResult(loans, residual, week, params)


@dataclass(frozen=True)
class ContaminationEstimate:
    in_box: int
    side_band: int
    expected_false: float

    @property
    def fraction(self) -> float:
        """Expected accidental matches as a share of the in-box pairs."""
        return self.expected_false / self.in_box if self.in_box else 0.0


def estimate_contamination(
    week: WeekDataset,
    params: MatchParams = MatchParams(),
    term: int = 1,
    result: LoanExtractionResult | None = None,
) -> ContaminationEstimate:
    """Estimate accidental in-box matches from the density of pairs beside the box.

    Two side bands of the box's own width flank it in implied rate (same
    value cut).  Only side pairs whose legs are both left unused by the
    extraction count, since an accidental match cannot claim a leg already
    taken by a better one.  Half their number is the expected count of
    accidental loans; ``in_box`` is the number of extracted loans of ``term``.
    """
    if result is None:
        result = extract_loans(week, params)
    used = {leg for ln in result.loans for leg in (ln.first_leg, ln.second_leg)}
    days = _canonical_days(week)
    rt, band = params.target_rate, params.rate_band
    side = 0
    for d in range(week.n_days - term):
        first, second = days[d], days[d + term]
        for i, j, r in _pairs(first, second, term, rt - 3 * band, rt + 3 * band, params.min_value):
            if abs(r - rt) >= band and first[i] not in used and second[j] not in used:
                side += 1
    in_box = sum(1 for ln in result.loans if ln.term_days == term)
    return ContaminationEstimate(in_box, side, side / 2.0)


@dataclass(frozen=True)
class LinearFit:
    intercept: float
    slope: float
    intercept_stderr: float = float("nan")
    slope_stderr: float = float("nan")
    n: int = 0


def rate_value_fit(loans: Sequence[Loan]) -> LinearFit:
    """Ordinary least squares of rate on ``log10(value / A$10^6)``."""
    if len(loans) < 2:
        raise DegenerateFitError("need at least two loans")
    u = np.log10(np.array([ln.value for ln in loans], dtype=float) / dollars(1e6))
    r = np.array([ln.rate for ln in loans], dtype=float)
    n = len(u)
    ubar = u.mean()
    sxx = float(np.sum((u - ubar) ** 2))
    if sxx <= 0 or np.ptp(u) == 0:
        raise DegenerateFitError("all loan values identical")
    slope = float(np.sum((u - ubar) * (r - r.mean())) / sxx)
    intercept = float(r.mean() - slope * ubar)
    if n > 2:
        resid = r - intercept - slope * u
        s2 = float(resid @ resid) / (n - 2)
        slope_se = math.sqrt(s2 / sxx)
        intercept_se = math.sqrt(s2 * (1.0 / n + ubar**2 / sxx))
    else:
        slope_se = intercept_se = float("nan")
    return LinearFit(intercept, slope, intercept_se, slope_se, n)


class RateStats(NamedTuple):
    mean: float
    std: float
    n: int


def loan_rate_stats(loans: Sequence[Loan]) -> RateStats:
    """Sample mean and standard deviation (ddof=1; 0 for a single loan) of loan rates."""
    if not loans:
        raise ValueError("no loans")
    r = np.array([ln.rate for ln in loans], dtype=float)
    std = float(r.std(ddof=1)) if len(r) > 1 else 0.0
    return RateStats(float(r.mean()), std, len(r))


class MatchScore(NamedTuple):
    true_positive: int
    false_positive: int
    false_negative: int

    @property
    def precision(self) -> float:
        found = self.true_positive + self.false_positive
        return self.true_positive / found if found else 1.0

    @property
    def recall(self) -> float:
        actual = self.true_positive + self.false_negative
        return self.true_positive / actual if actual else 1.0


def score_against_truth(
    loans: Iterable[Loan], truth: Iterable[tuple[Transaction, Transaction]]
) -> MatchScore:
    """Compare extracted (first leg, second leg) pairs with labelled ones as multisets."""
    found = Counter((ln.first_leg, ln.second_leg) for ln in loans)
    actual = Counter((a, b) for a, b in truth)
    tp = sum((found & actual).values())
    return MatchScore(tp, sum(found.values()) - tp, sum(actual.values()) - tp)


def write_loans(loans: Iterable[Loan], out: IO[str] | None = None) -> str | None:
    sink = io.StringIO() if out is None else out
    sink.write(",".join(LOAN_CSV_HEADER) + "\n")
    for ln in loans:
        sink.write(f"{ln.day},{ln.lender},{ln.borrower},{ln.value},{ln.term_days},{ln.rate:.6f}\n")
    return sink.getvalue() if out is None else None


def read_loans(source: IO[str] | str) -> list[dict]:
    """Read a loan CSV back as plain row dicts (values typed)."""
    reader = csv.DictReader(io.StringIO(source) if isinstance(source, str) else source)
    if tuple(reader.fieldnames or ()) != LOAN_CSV_HEADER:
        raise ValueError(f"unexpected loan CSV header {reader.fieldnames}")
    return [
        {
            "day": int(row["day"]),
            "lender": row["lender"],
            "borrower": row["borrower"],
            "value_cents": int(row["value_cents"]),
            "term_days": int(row["term_days"]),
            "rate_percent": float(row["rate_percent"]),
        }
        for row in reader
    ]
