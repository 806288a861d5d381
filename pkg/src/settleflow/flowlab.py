"""Daily flow networks, imbalances, net flows and flow-stability diagnostics."""
from __future__ import annotations

import io
import math
from collections import defaultdict
from dataclasses import dataclass, field
from typing import IO, Iterable, Mapping, NamedTuple, Sequence

import numpy as np

from .core import CENTS_PER_DOLLAR, Transaction

FLOW_CSV_HEADER = ("day", "kind", "source", "destination", "value_cents", "tx_count")


class CorrelationError(ValueError):
    """Raised when a correlation is undefined (too few points or zero variance)."""


class Flow(NamedTuple):
    value: int
    tx_count: int


@dataclass(frozen=True)
class FlowNetwork:
    """Aggregated flows ``(source, destination) -> Flow`` for one day and kind.

    Only non-zero flows are stored.  ``banks`` lists the label space the
    network lives in, which may include banks without flows that day.
    """

    day: int
    kind: str
    edges: Mapping[tuple[str, str], Flow]
    banks: frozenset[str] = field(default_factory=frozenset)

    def __post_init__(self):
        nodes = {b for e in self.edges for b in e}
        if not nodes <= self.banks:
            object.__setattr__(self, "banks", frozenset(self.banks | nodes))

    def __len__(self):
        return len(self.edges)

    def total_value(self) -> int:
        return sum(f.value for f in self.edges.values())

    def subset(self, pairs: Iterable[tuple[str, str]]) -> "FlowNetwork":
        keep = set(pairs)
        return type(self)(self.day, self.kind, {k: v for k, v in self.edges.items() if k in keep}, self.banks)


class NetFlowNetwork(FlowNetwork):
    """Net flows: at most one direction per unordered bank pair."""


@dataclass(frozen=True)
class ImbalanceTable:
    day: int
    kind: str
    values: Mapping[str, int]

    def __getitem__(self, bank: str) -> int:
        return self.values.get(bank, 0)

    def total(self) -> int:
        return sum(self.values.values())


def aggregate_flows(
    transactions: Iterable[Transaction], kind: str = "nonloan", day: int | None = None,
    banks: Iterable[str] = (),
) -> FlowNetwork:
    """Sum values and count transactions per ordered bank pair."""
    values: dict[tuple[str, str], int] = defaultdict(int)
    counts: dict[tuple[str, str], int] = defaultdict(int)
    days = set()
    for t in transactions:
        key = (t.source, t.destination)
        values[key] += t.value
        counts[key] += 1
        days.add(t.day)
    if len(days) > 1:
        raise ValueError(f"transactions span several days: {sorted(days)}")
    if day is None:
        day = days.pop() if days else 0
    edges = {k: Flow(values[k], counts[k]) for k in sorted(values)}
    return FlowNetwork(day, kind, edges, frozenset(banks))


def imbalances(network: FlowNetwork, banks: Iterable[str] | None = None) -> ImbalanceTable:
    """Incoming minus outgoing value per bank.

    Every bank of ``network.banks`` (or of ``banks``) is present, with 0
    for banks without activity.  The table sums to zero exactly.
    """
    labels = set(network.banks if banks is None else banks)
    out: dict[str, int] = defaultdict(int)
    for (src, dst), f in network.edges.items():
        out[src] -= f.value
        out[dst] += f.value
        labels.update((src, dst))
    return ImbalanceTable(network.day, network.kind, {b: out.get(b, 0) for b in sorted(labels)})


def net_flows(network: FlowNetwork) -> NetFlowNetwork:
    """Difference of opposing flows; exact cancellations leave no edge."""
    net: dict[tuple[str, str], Flow] = {}
    seen: set[frozenset] = set()
    for (src, dst), f in network.edges.items():
        pair = frozenset((src, dst))
        if pair in seen:
            continue
        seen.add(pair)
        back = network.edges.get((dst, src), Flow(0, 0))
        diff = f.value - back.value
        count = f.tx_count + back.tx_count
        if diff > 0:
            net[(src, dst)] = Flow(diff, count)
        elif diff < 0:
            net[(dst, src)] = Flow(-diff, count)
    return NetFlowNetwork(network.day, network.kind, dict(sorted(net.items())), network.banks)


class Persistence(NamedTuple):
    persistent: frozenset
    fraction_count: float
    fraction_value_d: float
    fraction_value_d1: float


def persistence(first: FlowNetwork, second: FlowNetwork) -> Persistence:
    """Flows present on both days and the share of count and of each day's value they carry.

    ``fraction_count`` is relative to the first day's number of flows.
    """
    common = frozenset(first.edges) & frozenset(second.edges)

    def share(net):
        total = net.total_value()
        return sum(net.edges[k].value for k in common) / total if total else 0.0

    frac = len(common) / len(first.edges) if first.edges else 0.0
    return Persistence(common, frac, share(first), share(second))


def pair_enumeration(banks: Iterable[str]) -> list[tuple[str, str]]:
    """Fixed ordering of all ``B(B-1)`` ordered pairs of distinct banks."""
    labels = sorted(banks)
    return [(a, b) for a in labels for b in labels if a != b]


def flow_vector(network: FlowNetwork, banks: Iterable[str] | None = None) -> np.ndarray:
    """Dense vector of flow values (cents, as float) over :func:`pair_enumeration`."""
    pairs = pair_enumeration(network.banks if banks is None else banks)
    return np.array([network.edges[p].value if p in network.edges else 0.0 for p in pairs], dtype=float)


def flow_distance(
    first: FlowNetwork,
    second: FlowNetwork,
    persistent_only: bool = False,
    banks: Iterable[str] | None = None,
) -> float:
    """Euclidean distance between the two days' unit-normalised flow vectors.

    With ``persistent_only`` flows missing on either day are zeroed on
    both days before normalising.
    """
    labels = set(first.banks | second.banks) if banks is None else set(banks)
    a = flow_vector(first, labels)
    b = flow_vector(second, labels)
    if persistent_only:
        both = (a > 0) & (b > 0)
        a = np.where(both, a, 0.0)
        b = np.where(both, b, 0.0)
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na == 0 or nb == 0:
        raise ValueError("flow vector has zero norm")
    return float(np.linalg.norm(a / na - b / nb))


class DistanceBaseline(NamedTuple):
    mean: float
    std: float


def random_flow_distance_baseline(n: int, trials: int = 10_000, seed: int = 0) -> DistanceBaseline:
    """Monte Carlo distance between normalised vectors of i.i.d. uniform(0,1) entries."""
    if n < 2 or trials < 1:
        raise ValueError("need n >= 2 and trials >= 1")
    rng = np.random.default_rng(seed)
    dists = np.empty(trials)
    chunk = max(1, 2_000_000 // n)
    for start in range(0, trials, chunk):
        m = min(chunk, trials - start)
        a = rng.random((m, n))
        b = rng.random((m, n))
        a /= np.linalg.norm(a, axis=1, keepdims=True)
        b /= np.linalg.norm(b, axis=1, keepdims=True)
        dists[start:start + m] = np.linalg.norm(a - b, axis=1)
    std = float(dists.std(ddof=1)) if trials > 1 else 0.0
    return DistanceBaseline(float(dists.mean()), std)


def pearson(x: Sequence[float], y: Sequence[float]) -> float:
    """Sample Pearson correlation coefficient."""
    xa = np.asarray(x, dtype=float)
    ya = np.asarray(y, dtype=float)
    if xa.shape != ya.shape or xa.ndim != 1:
        raise ValueError("series must be one-dimensional and of equal length")
    if len(xa) < 2:
        raise CorrelationError("need at least two points")
    dx = xa - xa.mean()
    dy = ya - ya.mean()
    sxx, syy = float(dx @ dx), float(dy @ dy)
    if sxx <= 0 or syy <= 0:
        raise CorrelationError("zero variance: correlation undefined")
    r = float(dx @ dy) / math.sqrt(sxx * syy)
    return max(-1.0, min(1.0, r))


def _aligned(*tables: Mapping[str, float]) -> list[str]:
    labels: set[str] = set()
    for t in tables:
        labels.update(t)
    return sorted(labels)


def imbalance_correlation(loan: ImbalanceTable, nonloan: ImbalanceTable) -> float:
    """Pearson correlation of per-bank nonloan and loan imbalances for one day."""
    if loan.day != nonloan.day:
        raise ValueError("tables refer to different days")
    banks = _aligned(loan.values, nonloan.values)
    return pearson([nonloan[b] for b in banks], [loan[b] for b in banks])


def bank_turnover(network: FlowNetwork) -> dict[str, int]:
    """Incoming plus outgoing value per bank."""
    out: dict[str, int] = {b: 0 for b in network.banks}
    for (src, dst), f in network.edges.items():
        out[src] += f.value
        out[dst] += f.value
    return out


def size_tolerance_correlation(loan: ImbalanceTable, nonloan: FlowNetwork) -> float:
    """Pearson correlation of per-bank nonloan turnover and absolute loan imbalance."""
    if loan.day != nonloan.day:
        raise ValueError("inputs refer to different days")
    turnover = bank_turnover(nonloan)
    banks = _aligned(loan.values, turnover)
    return pearson([turnover.get(b, 0) for b in banks], [abs(loan[b]) for b in banks])


def flow_weights(x: Sequence[float], y: Sequence[float]) -> np.ndarray:
    """Default point weights ``log10(1 + sqrt(x*y))`` for values in A$."""
    xa = np.asarray(x, dtype=float)
    ya = np.asarray(y, dtype=float)
    return np.log10(1.0 + np.sqrt(np.clip(xa * ya, 0.0, None)))


@dataclass(frozen=True)
class OrthogonalFit:
    intercept: float
    slope: float


def weighted_orthogonal_fit(
    x: Sequence[float], y: Sequence[float], weights: Sequence[float] | None = None
) -> OrthogonalFit:
    """Line minimising the weighted sum of squared perpendicular distances.

    Weights default to :func:`flow_weights` (``x`` and ``y`` in A$), which
    emphasises large flows.  Callers fitting in log space pass weights
    computed from the raw values.
    """
    xa = np.asarray(x, dtype=float)
    ya = np.asarray(y, dtype=float)
    if len(xa) < 2 or len(xa) != len(ya):
        raise ValueError("need at least two (x, y) points")
    w = flow_weights(xa, ya) if weights is None else np.asarray(weights, dtype=float)
    if np.any(w < 0) or w.sum() <= 0:
        raise ValueError("weights must be non-negative with positive sum")
    w = w / w.sum()
    mx, my = float(w @ xa), float(w @ ya)
    dx, dy = xa - mx, ya - my
    sxx, syy, sxy = float(w @ (dx * dx)), float(w @ (dy * dy)), float(w @ (dx * dy))
    if sxx + syy <= 0:
        raise ValueError("all points coincide: orthogonal fit is degenerate")
    # major axis of the weighted scatter matrix
    evals, evecs = np.linalg.eigh(np.array([[sxx, sxy], [sxy, syy]]))
    vx, vy = evecs[:, np.argmax(evals)]
    if abs(vx) < 1e-15:
        raise ValueError("fitted line is vertical")
    slope = float(vy / vx)
    return OrthogonalFit(my - slope * mx, slope)


def write_flows(networks: Iterable[FlowNetwork], out: IO[str] | None = None) -> str | None:
    """Flow or net-flow export, one row per edge."""
    sink = io.StringIO() if out is None else out
    sink.write(",".join(FLOW_CSV_HEADER) + "\n")
    for net in networks:
        for (src, dst), f in sorted(net.edges.items()):
            sink.write(f"{net.day},{net.kind},{src},{dst},{f.value},{f.tx_count}\n")
    return sink.getvalue() if out is None else None


def to_dollars(cents) -> float:
    return cents / CENTS_PER_DOLLAR
