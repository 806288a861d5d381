"""Synthetic RTGS weeks with a labelled overnight money market.

Each day random customer payments are drawn between banks of skewed
size, their per-bank imbalances are computed, and a money market lends
surplus reserves to deficit banks.  The loans are repaid with interest
the next day.  Every generated loan pair is recorded as ground truth.
"""
from __future__ import annotations

import csv
import dataclasses
import heapq
import io
import math
from dataclasses import dataclass
from typing import IO, Mapping, NamedTuple, Sequence

import numpy as np
from scipy import optimize

from .core import Transaction, WeekDataset, dollars
from .flowlab import ImbalanceTable

DEFAULT_DAILY_VOLUME = (19425, 27164, 24436, 25721, 26332)
# (mean, variance, proportion) of log10(value in A$) per component, per day
DEFAULT_VALUE_MIXTURES = (
    ((4.00, 1.12, 0.81), (6.68, 0.68, 0.19)),
    ((3.55, 0.72, 0.43), (5.73, 1.49, 0.57)),
    ((3.66, 0.86, 0.55), (5.86, 1.43, 0.45)),
    ((3.87, 1.01, 0.68), (6.42, 1.07, 0.32)),
    ((3.82, 0.87, 0.61), (6.12, 1.19, 0.39)),
)

TRUTH_CSV_HEADER = (
    "first_day", "lender", "borrower", "first_value_cents",
    "second_day", "second_value_cents", "term_days", "rate_percent",
)

# substream tags for np.random.default_rng([seed, day, tag])
_PAYMENTS, _MARKET_NOISE, _TRANCHES, _RATES = range(4)


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class GeneratorConfig:
    """Parameters of a synthetic week.  Money is in cents unless noted."""

    bank_count: int = 55
    big_bank_count: int = 4
    big_bank_share: float = 0.6
    # Zipf-Mandelbrot offset: weight ~ (rank + offset)^-s flattens the top
    rank_offset: float = 2.0
    daily_volume: tuple[int, ...] = DEFAULT_DAILY_VOLUME
    value_mixtures: tuple = DEFAULT_VALUE_MIXTURES
    target_rate: float = 6.25
    rate_offset: float = -0.002
    rate_value_slope: float = 0.010
    rate_noise_std: float = 0.07
    compensation_fraction: float = 1.0
    residual_noise_std: float = 0.1
    loan_min_value: int = dollars(2e5)
    # book market positions as several loans sized like the day's large payments
    split_loans: bool = True
    max_loan_value: int = dollars(1e9)
    max_payment_value: int = dollars(1e10)
    matching_policy: str = "greedy"
    seed: int = 0

    @property
    def n_days(self) -> int:
        return len(self.daily_volume)

    def check(self) -> None:
        if self.bank_count < 1:
            raise ConfigError("bank_count must be >= 1")
        if self.compensation_fraction > 0 and self.bank_count < 2:
            raise ConfigError("a money market needs at least two banks")
        if not 0 <= self.compensation_fraction <= 1:
            raise ConfigError("compensation_fraction must lie in [0, 1]")
        if not 1 <= self.n_days <= 7:
            raise ConfigError("between 1 and 7 days are supported")
        if any(v <= 0 for v in self.daily_volume):
            raise ConfigError("daily volumes must be positive")
        if len(self.value_mixtures) != self.n_days:
            raise ConfigError("need one value mixture per day")
        for mix in self.value_mixtures:
            if abs(sum(c[2] for c in mix) - 1.0) > 1e-6:
                raise ConfigError(f"mixture proportions must sum to 1: {mix}")
            if any(c[1] <= 0 for c in mix):
                raise ConfigError("mixture variances must be positive")
        if not 0 <= self.big_bank_count <= self.bank_count:
            raise ConfigError("big_bank_count out of range")
        if not 0 < self.big_bank_share < 1:
            raise ConfigError("big_bank_share must lie in (0, 1)")
        if self.rank_offset < 0:
            raise ConfigError("rank_offset must be non-negative")
        if self.residual_noise_std < 0 or self.rate_noise_std < 0:
            raise ConfigError("noise levels must be non-negative")
        if self.loan_min_value <= 0 or self.max_loan_value <= 2 * self.loan_min_value:
            raise ConfigError("need 0 < 2 * loan_min_value < max_loan_value")
        if self.max_payment_value < 1:
            raise ConfigError("max_payment_value must be positive")
        if self.matching_policy not in ("greedy", "proportional"):
            raise ConfigError(f"unknown matching policy {self.matching_policy!r}")


class TruthLoan(NamedTuple):
    first_leg: Transaction
    second_leg: Transaction
    rate: float
    term_days: int = 1


@dataclass(frozen=True)
class LabeledWeek:
    week: WeekDataset
    truth: tuple[TruthLoan, ...]
    config: GeneratorConfig

    def truth_pairs(self) -> list[tuple[Transaction, Transaction]]:
        return [(t.first_leg, t.second_leg) for t in self.truth]


def bank_labels(n: int) -> list[str]:
    """Spreadsheet-style labels A, B, ..., Z, AA, AB, ..."""
    out = []
    for i in range(n):
        label = ""
        i += 1
        while i:
            i, rem = divmod(i - 1, 26)
            label = chr(ord("A") + rem) + label
        out.append(label)
    return out


def bank_weights(config: GeneratorConfig) -> np.ndarray:
    """Zipf-Mandelbrot endpoint weights whose top ``big_bank_count`` share is ``big_bank_share``."""
    n, top = config.bank_count, config.big_bank_count
    ranks = np.arange(1, n + 1, dtype=float) + config.rank_offset
    if top == 0 or top == n:
        return np.full(n, 1.0 / n)

    def excess(s):
        w = ranks**-s
        return w[:top].sum() / w.sum() - config.big_bank_share

    if excess(0.0) >= 0:
        s = 0.0
    else:
        s = optimize.brentq(excess, 0.0, 50.0, xtol=1e-12)
    w = ranks**-s
    return w / w.sum()


def _upper_component(mixture) -> int:
    return max(range(len(mixture)), key=lambda c: mixture[c][0])


def _draw_payments(config: GeneratorConfig, day: int, labels, weights, displaced: int = 0) -> list[Transaction]:
    """The day's customer payments.

    ``displaced`` draws of the highest-mean value component are dropped,
    making room for as many loan legs of similar size.  Drops follow one
    fixed random order, so a larger ``displaced`` removes a superset.
    """
    rng = np.random.default_rng([config.seed, day, _PAYMENTS])
    mixture = config.value_mixtures[day]
    means, variances, props = (np.array(x, dtype=float) for x in zip(*mixture))
    n = config.daily_volume[day]
    comp = rng.choice(len(props), size=n, p=props / props.sum())
    u = rng.normal(means[comp], np.sqrt(variances[comp]))
    src = rng.choice(len(labels), size=n, p=weights)
    dst = rng.choice(len(labels), size=n, p=weights)
    clash = src == dst
    while clash.any():
        dst[clash] = rng.choice(len(labels), size=int(clash.sum()), p=weights)
        clash = src == dst
    cents = np.clip(np.rint(10.0 ** (u + 2)), 1, config.max_payment_value).astype(np.int64)
    keep = np.ones(n, dtype=bool)
    upper = np.flatnonzero(comp == _upper_component(mixture))
    keep[rng.permutation(upper)[:displaced]] = False
    if not keep.any():
        keep[0] = True
    return [Transaction(day, labels[s], labels[d], int(v))
            for s, d, v in zip(src[keep], dst[keep], cents[keep])]


def _imbalance_table(day: int, txs: Sequence[Transaction], labels) -> ImbalanceTable:
    out = dict.fromkeys(labels, 0)
    for t in txs:
        out[t.source] -= t.value
        out[t.destination] += t.value
    return ImbalanceTable(day, "nonloan", out)


def perturb_imbalances(table: ImbalanceTable, noise_std: float, rng: np.random.Generator) -> ImbalanceTable:
    """Scale each imbalance by ``1 + noise_std * z`` and restore an exact zero sum.

    The correction is spread in proportion to ``|imbalance|``; the
    remaining rounding cents go to the largest position.
    """
    banks = sorted(table.values)
    base = np.array([table.values[b] for b in banks], dtype=float)
    if noise_std == 0 or not base.any():
        return table
    noisy = base * (1.0 + noise_std * rng.standard_normal(len(base)))
    mag = np.abs(base)
    noisy -= noisy.sum() * mag / mag.sum()
    ints = np.rint(noisy).astype(np.int64)
    ints[int(np.argmax(mag))] -= int(ints.sum())
    return ImbalanceTable(table.day, table.kind, {b: int(v) for b, v in zip(banks, ints)})


def money_market_step(imbalances: ImbalanceTable | Mapping[str, int], config: GeneratorConfig,
                      day: int | None = None) -> list[Transaction]:
    """First legs of the loans that compensate a day's imbalances.

    Greedy policy: repeatedly pair the largest remaining surplus with the
    largest remaining deficit and book ``phi * min(surplus, deficit)``.
    Positions not exceeding ``loan_min_value`` are left uncompensated.
    The proportional policy splits every surplus across deficits in
    proportion to their size.
    """
    if isinstance(imbalances, ImbalanceTable):
        values, d = imbalances.values, imbalances.day
    else:
        values, d = imbalances, 0
    day = d if day is None else day
    if sum(values.values()) != 0:
        raise ValueError("imbalances must sum to zero")
    phi = config.compensation_fraction
    if phi == 0:
        return []
    legs = []

    def book(lender, borrower, amount):
        value = math.floor(amount * phi)
        if value > config.loan_min_value:
            legs.append(Transaction(day, lender, borrower, value))

    if config.matching_policy == "greedy":
        surplus = [(-v, b) for b, v in values.items() if v > 0]
        deficit = [(v, b) for b, v in values.items() if v < 0]
        heapq.heapify(surplus)
        heapq.heapify(deficit)
        while surplus and deficit:
            s_neg, lender = heapq.heappop(surplus)
            d_neg, borrower = heapq.heappop(deficit)
            amount = min(-s_neg, -d_neg)
            book(lender, borrower, amount)
            if -s_neg > amount:
                heapq.heappush(surplus, (s_neg + amount, lender))
            if -d_neg > amount:
                heapq.heappush(deficit, (d_neg + amount, borrower))
    elif config.matching_policy == "proportional":
        lenders = sorted((b, v) for b, v in values.items() if v > 0)
        borrowers = sorted((b, -v) for b, v in values.items() if v < 0)
        total = sum(v for _, v in borrowers)
        for lender, s in lenders:
            for borrower, need in borrowers:
                book(lender, borrower, s * need // total)
    else:
        raise ConfigError(f"unknown matching policy {config.matching_policy!r}")
    return legs


def split_tranches(leg: Transaction, config: GeneratorConfig, rng: np.random.Generator) -> list[Transaction]:
    """Break one market position into separately booked loans.

    Piece sizes are drawn like the day's large payments (the highest-mean
    value component); every piece exceeds ``loan_min_value`` and is at most
    ``max_loan_value``.  Without ``split_loans`` only the size cap applies.
    """
    if not config.split_loans:
        pieces = []
        remaining = leg.value
        while remaining > config.max_loan_value:
            pieces.append(config.max_loan_value)
            remaining -= config.max_loan_value
        if pieces and remaining <= config.loan_min_value:
            pieces[-1] -= config.loan_min_value + 1 - remaining
            remaining = config.loan_min_value + 1
        pieces.append(remaining)
        return [leg._replace(value=v) for v in pieces]
    mean, var, _ = config.value_mixtures[leg.day][_upper_component(config.value_mixtures[leg.day])]
    floor_value = 2 * config.loan_min_value
    pieces = []
    remaining = leg.value
    while remaining > 0:
        # truncated draw: clipping would create many identical legs
        for _ in range(100):
            draw = 10.0 ** (rng.normal(mean, math.sqrt(var)) + 2)
            if floor_value <= draw <= config.max_loan_value:
                break
        size = int(min(max(draw, floor_value), config.max_loan_value))
        if remaining - size <= config.loan_min_value:
            size = remaining if remaining <= config.max_loan_value else remaining // 2
        pieces.append(size)
        remaining -= size
    return [leg._replace(value=v) for v in pieces]


def loan_rate(value: int, config: GeneratorConfig, rng: np.random.Generator) -> float:
    """Draw an annual percent rate for a loan of ``value`` cents."""
    u = math.log10(value / dollars(1e6))
    return (config.target_rate + config.rate_offset + config.rate_value_slope * u
            + config.rate_noise_std * float(rng.standard_normal()))


def repayment(first_leg: Transaction, rate: float, term_days: int = 1) -> Transaction:
    """Second leg returning principal plus simple interest, rounded to the cent."""
    interest = first_leg.value * rate * term_days / (100.0 * 365)
    return Transaction(first_leg.day + term_days, first_leg.destination, first_leg.source,
                       first_leg.value + int(round(interest)))


def _market_day(config: GeneratorConfig, d: int, labels, weights, due, displaced):
    payments = _draw_payments(config, d, labels, weights, displaced)
    nonloans = payments + due
    table = _imbalance_table(d, nonloans, labels)
    noise_rng = np.random.default_rng([config.seed, d, _MARKET_NOISE])
    # the market books phi * imbalance + residual_noise_std * imbalance * z
    phi = config.compensation_fraction
    noise = config.residual_noise_std / phi if phi > 0 else 0.0
    target = perturb_imbalances(table, noise, noise_rng)
    positions = money_market_step(target, config, d)
    tranche_rng = np.random.default_rng([config.seed, d, _TRANCHES])
    first_legs = [piece for leg in positions for piece in split_tranches(leg, config, tranche_rng)]
    return nonloans, first_legs


def generate_week(config: GeneratorConfig = GeneratorConfig()) -> LabeledWeek:
    """Generate a labelled synthetic week.  Deterministic given ``config.seed``.

    Each day is generated twice: a sizing pass counts the loans the market
    would book, and the final pass draws that many fewer payments so the
    day's volume and value mixture stay near their targets.
    """
    config.check()
    labels = bank_labels(config.bank_count)
    weights = bank_weights(config)
    days: list[list[Transaction]] = [[] for _ in range(config.n_days)]
    truth: list[TruthLoan] = []
    due: list[Transaction] = []
    for d in range(config.n_days):
        displaced = len(due)
        _, sizing = _market_day(config, d, labels, weights, due, displaced)
        nonloans, first_legs = _market_day(config, d, labels, weights, due, displaced + len(sizing))
        rate_rng = np.random.default_rng([config.seed, d, _RATES])
        due = []
        for leg in first_legs:
            rate = loan_rate(leg.value, config, rate_rng)
            if d + 1 < config.n_days:
                back = repayment(leg, rate)
                due.append(back)
                truth.append(TruthLoan(leg, back, rate, 1))
        days[d] = nonloans + first_legs
    week = WeekDataset(tuple(tuple(sorted(day)) for day in days), frozenset(labels))
    truth.sort()
    return LabeledWeek(week, tuple(truth), config)


# --------------------------------------------------------------------------
# config and truth files


def _format_value(value) -> str:
    if value is None:
        return "none"
    if isinstance(value, tuple):
        return ",".join(_format_value(v) for v in value)
    if isinstance(value, bool):
        return str(value).lower()
    return repr(value) if isinstance(value, float) else str(value)


def write_config(config: GeneratorConfig, out: IO[str] | None = None) -> str | None:
    """Serialise a config as flat ``key = value`` lines."""
    sink = io.StringIO() if out is None else out
    for f in dataclasses.fields(config):
        value = getattr(config, f.name)
        if f.name == "value_mixtures":
            for d, mix in enumerate(value):
                flat = tuple(x for comp in mix for x in comp)
                sink.write(f"value_mixture.{d} = {_format_value(flat)}\n")
        else:
            sink.write(f"{f.name} = {_format_value(value)}\n")
    return sink.getvalue() if out is None else None


_INT_FIELDS = {"bank_count", "big_bank_count", "loan_min_value", "max_loan_value", "max_payment_value", "seed"}
_BOOL_FIELDS = {"split_loans"}
_STR_FIELDS = {"matching_policy"}


def parse_config(source: IO[str] | str, **overrides) -> GeneratorConfig:
    """Read a flat ``key = value`` config; unspecified keys keep their defaults.

    Blank lines and ``#`` comments are ignored; unknown keys are errors.
    """
    text = source if isinstance(source, str) else source.read()
    known = {f.name for f in dataclasses.fields(GeneratorConfig)}
    values: dict = {}
    mixtures: dict[int, tuple] = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value'")
        key, _, val = (s.strip() for s in line.partition("="))
        try:
            if key.startswith("value_mixture."):
                flat = [float(x) for x in val.split(",")]
                if len(flat) % 3:
                    raise ConfigError(f"line {lineno}: mixture needs (mean, variance, proportion) triples")
                mixtures[int(key.split(".", 1)[1])] = tuple(tuple(flat[i:i + 3]) for i in range(0, len(flat), 3))
            elif key not in known:
                raise ConfigError(f"line {lineno}: unknown key {key!r}")
            elif key == "daily_volume":
                values[key] = tuple(int(x) for x in val.split(","))
            elif val.lower() == "none":
                values[key] = None
            elif key in _INT_FIELDS:
                values[key] = int(val)
            elif key in _STR_FIELDS:
                values[key] = val
            elif key in _BOOL_FIELDS:
                if val.lower() not in ("true", "false"):
                    raise ConfigError(f"line {lineno}: {key} must be true or false")
                values[key] = val.lower() == "true"
            else:
                values[key] = float(val)
        except ValueError as exc:
            if isinstance(exc, ConfigError):
                raise
            raise ConfigError(f"line {lineno}: {exc}") from None
    if mixtures:
        if sorted(mixtures) != list(range(len(mixtures))):
            raise ConfigError("value_mixture keys must be numbered 0..n-1")
        values["value_mixtures"] = tuple(mixtures[d] for d in range(len(mixtures)))
    values.update(overrides)
    config = GeneratorConfig(**values)
    config.check()
    return config


def write_truth(truth: Sequence[TruthLoan], out: IO[str] | None = None) -> str | None:
    sink = io.StringIO() if out is None else out
    sink.write(",".join(TRUTH_CSV_HEADER) + "\n")
    for t in truth:
        a, b = t.first_leg, t.second_leg
        sink.write(f"{a.day},{a.source},{a.destination},{a.value},{b.day},{b.value},{t.term_days},{t.rate:.6f}\n")
    return sink.getvalue() if out is None else None


def read_truth(source: IO[str] | str) -> list[TruthLoan]:
    reader = csv.reader(io.StringIO(source) if isinstance(source, str) else source)
    header = next(reader, None)
    if tuple(header or ()) != TRUTH_CSV_HEADER:
        raise ValueError(f"unexpected truth CSV header {header}")
    out = []
    for row in reader:
        if not row:
            continue
        d1, lender, borrower, v1, d2, v2, term, rate = row
        first = Transaction(int(d1), lender, borrower, int(v1))
        second = Transaction(int(d2), borrower, lender, int(v2))
        out.append(TruthLoan(first, second, float(rate), int(term)))
    return out
