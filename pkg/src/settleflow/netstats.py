"""Degree statistics, assortativity and distribution fitting for net-flow networks."""
from __future__ import annotations

import math
from collections import Counter, defaultdict
from dataclasses import dataclass
from typing import Iterable, Mapping, NamedTuple, Sequence

import numpy as np
from scipy import optimize, special

from .flowlab import FlowNetwork, pearson


# --------------------------------------------------------------------------
# degrees and assortativity


class DegreeSequences(NamedTuple):
    in_degree: dict[str, int]
    out_degree: dict[str, int]


def degree_sequences(network: FlowNetwork, banks: Iterable[str] | None = None) -> DegreeSequences:
    """Count net flows terminating at / originating from each bank (zeros included)."""
    labels = sorted(set(network.banks if banks is None else banks) | {b for e in network.edges for b in e})
    indeg = dict.fromkeys(labels, 0)
    outdeg = dict.fromkeys(labels, 0)
    for src, dst in network.edges:
        outdeg[src] += 1
        indeg[dst] += 1
    return DegreeSequences(indeg, outdeg)


def _degrees(network: FlowNetwork, mode: str) -> dict[str, int]:
    seqs = degree_sequences(network)
    if mode == "in":
        return seqs.in_degree
    if mode == "out":
        return seqs.out_degree
    raise ValueError(f"mode must be 'in' or 'out', got {mode!r}")


def assortativity(network: FlowNetwork, mode: str = "in") -> float:
    """Pearson correlation of the ``mode``-degrees at source and destination over all edges."""
    deg = _degrees(network, mode)
    if len(network.edges) < 2:
        raise ValueError("assortativity needs at least two edges")
    src = [deg[s] for s, _ in network.edges]
    dst = [deg[d] for _, d in network.edges]
    return pearson(src, dst)


def value_by_degree(network: FlowNetwork, mode: str = "in") -> dict[int, int]:
    """Total net value attached to nodes of each degree.

    In ``"in"`` mode a node of in-degree ``d`` contributes the value of the
    net flows terminating at it; ``"out"`` uses outgoing flows.  Each edge
    therefore lands in exactly one bucket.
    """
    deg = _degrees(network, mode)
    buckets: dict[int, int] = defaultdict(int)
    for bank, d in deg.items():
        buckets[d] += 0
    for (src, dst), f in network.edges.items():
        node = dst if mode == "in" else src
        buckets[deg[node]] += f.value
    return dict(sorted(buckets.items()))


def degree_value_shares(network: FlowNetwork, mode: str = "in", low: int = 10, high: int = 17) -> tuple[float, float]:
    """Share of net value on nodes with degree <= ``low`` and >= ``high``."""
    buckets = value_by_degree(network, mode)
    total = sum(buckets.values())
    if total == 0:
        return 0.0, 0.0
    lo = sum(v for d, v in buckets.items() if d <= low)
    hi = sum(v for d, v in buckets.items() if d >= high)
    return lo / total, hi / total


# --------------------------------------------------------------------------
# Gaussian mixtures


class GmmCollapseError(RuntimeError):
    pass


@dataclass(frozen=True)
class GmmFit:
    """Mixture fitted to ``u = log10(value)``; components in ascending mean."""

    means: tuple[float, ...]
    variances: tuple[float, ...]
    proportions: tuple[float, ...]
    log_likelihood: float
    n_iter: int
    converged: bool
    history: tuple[float, ...] = ()

    @property
    def components(self) -> list[tuple[float, float, float]]:
        return list(zip(self.means, self.variances, self.proportions))


_LOG_2PI = math.log(2 * math.pi)


def _component_logpdf(x, means, variances, weights):
    # shape (n, k)
    return (
        np.log(weights)[None, :]
        - 0.5 * (_LOG_2PI + np.log(variances))[None, :]
        - 0.5 * (x[:, None] - means[None, :]) ** 2 / variances[None, :]
    )


def gmm_log_likelihood(x, means, variances, weights) -> float:
    lp = _component_logpdf(np.asarray(x, float), np.asarray(means, float),
                           np.asarray(variances, float), np.asarray(weights, float))
    return float(special.logsumexp(lp, axis=1).sum())


def responsibilities(x, fit: GmmFit) -> np.ndarray:
    lp = _component_logpdf(np.asarray(x, float), np.array(fit.means), np.array(fit.variances),
                           np.array(fit.proportions))
    return np.exp(lp - special.logsumexp(lp, axis=1, keepdims=True))


class _EmRun:
    """State of one EM start on a fixed 1-D sample."""

    def __init__(self, x, x2, means, variances, weights):
        self.x, self.x2 = x, x2
        self.means = np.array(means, dtype=float)
        self.variances = np.array(variances, dtype=float)
        self.weights = np.array(weights, dtype=float)
        self.history: list[float] = []
        self.converged = False

    def _log_terms(self):
        x = self.x
        consts = np.log(self.weights) - 0.5 * (_LOG_2PI + np.log(self.variances))
        terms = []
        for c, m, v in zip(consts, self.means, self.variances):
            d = x - m
            d *= d
            d *= -0.5 / v
            d += c
            terms.append(d)
        top = terms[0].copy()
        for t in terms[1:]:
            np.maximum(top, t, out=top)
        acc = np.zeros_like(top)
        for t in terms:
            t -= top
            np.exp(t, out=t)
            acc += t
        return terms, acc, top

    def log_likelihood(self) -> float:
        _, acc, top = self._log_terms()
        return float(np.log(acc).sum() + top.sum()) / len(self.x)

    def run(self, tol, max_iter, min_var):
        """Iterate until the per-point log-likelihood gains less than ``tol``."""
        n = len(self.x)
        resumed = bool(self.history)
        prev = self.history[-1] if resumed else -np.inf
        for it in range(max_iter):
            terms, acc, top = self._log_terms()
            if not (resumed and it == 0):
                # a resumed run re-scores parameters already in the history
                ll = float(np.log(acc).sum() + top.sum()) / n
                self.history.append(ll)
                if ll - prev < tol:
                    self.converged = True
                    return
                prev = ll
            np.reciprocal(acc, out=acc)
            nk = np.empty(len(terms))
            sx = np.empty(len(terms))
            sxx = np.empty(len(terms))
            for j, t in enumerate(terms):
                t *= acc  # responsibilities
                nk[j] = t.sum()
                sx[j] = t @ self.x
                sxx[j] = t @ self.x2
            if np.any(nk <= 0):
                raise GmmCollapseError("empty component")
            means = sx / nk
            variances = sxx / nk - means**2
            if not np.all(np.isfinite(variances)) or np.any(variances < min_var):
                raise GmmCollapseError("component variance collapsed")
            self.means, self.variances, self.weights = means, variances, nk / n
        self.converged = False
        self.history.append(self.log_likelihood())


def fit_gmm(
    values: Sequence[float],
    k: int = 2,
    seed: int = 0,
    restarts: int = 8,
    tol: float = 1e-8,
    max_iter: int = 500,
    min_var: float = 1e-12,
    screen_tol: float = 1e-5,
) -> GmmFit:
    """Fit a ``k``-component 1-D Gaussian mixture by expectation-maximisation.

    ``values`` are already log-transformed.  Each of ``restarts`` seeded
    starts runs EM until the per-point log-likelihood gains less than
    ``screen_tol``; the best one is then iterated to ``tol`` (at most
    ``max_iter`` iterations in total).  Raises :class:`GmmCollapseError`
    when every start collapses.
    """
    x = np.asarray(values, dtype=float)
    if x.ndim != 1 or len(x) < 10:
        raise ValueError("need a 1-D sample of at least 10 values")
    screen_tol = max(screen_tol, tol)
    rng = np.random.default_rng(seed)
    var0 = float(x.var())
    if var0 <= min_var:
        raise GmmCollapseError("sample has no spread")
    x2 = x * x
    runs = []
    for _ in range(restarts):
        start = np.sort(rng.choice(x, size=k, replace=False))
        run = _EmRun(x, x2, start, np.full(k, var0), np.full(k, 1.0 / k))
        try:
            run.run(screen_tol, max_iter, min_var)
        except GmmCollapseError:
            continue
        runs.append(run)
    if not runs:
        raise GmmCollapseError("all EM restarts collapsed")
    best = max(runs, key=lambda r: r.history[-1])
    if screen_tol > tol and best.converged:
        best.run(tol, max_iter - len(best.history), min_var)
    order = np.argsort(best.means)
    return GmmFit(
        tuple(float(a) for a in best.means[order]),
        tuple(float(a) for a in best.variances[order]),
        tuple(float(a) for a in best.weights[order]),
        best.history[-1] * len(x),
        len(best.history),
        best.converged,
        tuple(best.history),
    )


def sample_gmm(means, variances, proportions, size: int, rng: np.random.Generator) -> np.ndarray:
    """Draw ``size`` points from a 1-D Gaussian mixture."""
    p = np.asarray(proportions, float)
    comp = rng.choice(len(p), size=size, p=p / p.sum())
    mu = np.asarray(means, float)[comp]
    sd = np.sqrt(np.asarray(variances, float))[comp]
    return rng.normal(mu, sd)


# --------------------------------------------------------------------------
# power laws


@dataclass(frozen=True)
class PowerLawFit:
    exponent: float
    stderr: float
    fit_range: tuple[int, int]
    n_bins: int
    method: str = "lsq"


def log_bins(hist: Mapping[int, float], bins_per_decade: int = 5):
    """Integer log bins.  Returns arrays (centre, density per integer, count)."""
    n_max = max(hist)
    n_edges = int(math.ceil(math.log10(n_max + 1) * bins_per_decade)) + 1
    edges = np.unique(np.floor(np.logspace(0, math.log10(n_max + 1), n_edges + 1)).astype(int))
    edges[-1] = max(edges[-1], n_max + 1)
    centres, density, counts = [], [], []
    for a, b in zip(edges[:-1], edges[1:]):
        c = sum(cnt for n, cnt in hist.items() if a <= n < b)
        if c > 0:
            centres.append(math.sqrt(a * (b - 1)))
            density.append(c / (b - a))
            counts.append(c)
    return np.array(centres), np.array(density), np.array(counts)


def transactions_per_flow(network: FlowNetwork) -> dict[int, int]:
    """Histogram ``n -> number of flows consisting of n transactions``."""
    return dict(sorted(Counter(f.tx_count for f in network.edges.values()).items()))


def fit_power_law(
    hist: Mapping[int, float],
    log_binning: bool = True,
    bins_per_decade: int = 5,
    method: str = "lsq",
) -> PowerLawFit:
    """Fit ``N(n) ∝ n**alpha`` to a histogram of counts.

    ``method="lsq"`` regresses ``log N`` on ``log n`` over the non-empty
    (log-binned, by default) bins.  ``method="mle"`` maximises the discrete
    likelihood truncated to the observed range.
    """
    hist = {int(n): float(c) for n, c in hist.items() if c > 0}
    if any(n < 1 for n in hist):
        raise ValueError("histogram keys must be >= 1")
    if len(hist) < 3:
        raise ValueError("need at least three non-empty bins")
    lo, hi = min(hist), max(hist)
    if method == "mle":
        return _fit_power_law_mle(hist, lo, hi)
    if method != "lsq":
        raise ValueError(f"unknown method {method!r}")
    if log_binning:
        xs, ys, _ = log_bins(hist, bins_per_decade)
    else:
        xs = np.array(sorted(hist), dtype=float)
        ys = np.array([hist[n] for n in sorted(hist)], dtype=float)
    if len(xs) < 3:
        raise ValueError("need at least three non-empty bins")
    lx, ly = np.log10(xs), np.log10(ys)
    xbar = lx.mean()
    sxx = float(((lx - xbar) ** 2).sum())
    slope = float(((lx - xbar) * (ly - ly.mean())).sum() / sxx)
    resid = ly - ly.mean() - slope * (lx - xbar)
    dof = len(lx) - 2
    stderr = math.sqrt(float(resid @ resid) / dof / sxx) if dof > 0 else float("nan")
    # an exact power law has zero residual; keep the stderr invariant > 0
    stderr = max(stderr, np.finfo(float).eps)
    return PowerLawFit(slope, stderr, (lo, hi), len(lx), "lsq")


def _fit_power_law_mle(hist, lo, hi) -> PowerLawFit:
    ns = np.arange(lo, hi + 1, dtype=float)
    logn = np.log(ns)
    obs_n = np.array(list(hist), dtype=float)
    obs_c = np.array(list(hist.values()), dtype=float)
    total = obs_c.sum()
    s1 = float(obs_c @ np.log(obs_n))

    def nll(alpha):
        return -(alpha * s1 - total * special.logsumexp(alpha * logn))

    res = optimize.minimize_scalar(nll, bounds=(-6.0, 2.0), method="bounded",
                                   options={"xatol": 1e-10})
    alpha = float(res.x)
    p = np.exp(alpha * logn - special.logsumexp(alpha * logn))
    var_log = float(p @ logn**2 - (p @ logn) ** 2)
    stderr = 1.0 / math.sqrt(total * var_log)
    return PowerLawFit(alpha, stderr, (lo, hi), len(hist), "mle")


# --------------------------------------------------------------------------
# hypothesis tests


class KSResult(NamedTuple):
    statistic: float
    p_value: float


def ks_two_sample(a: Sequence[float], b: Sequence[float]) -> KSResult:
    """Two-sample Kolmogorov-Smirnov test.

    The p-value uses the asymptotic Kolmogorov distribution at
    ``(sqrt(ne) + 0.12 + 0.11/sqrt(ne)) * D`` with ``ne = na*nb/(na+nb)``.
    """
    xa = np.sort(np.asarray(a, dtype=float))
    xb = np.sort(np.asarray(b, dtype=float))
    if len(xa) == 0 or len(xb) == 0:
        raise ValueError("empty sample")
    if len(xa) < 2 or len(xb) < 2:
        raise ValueError("both samples need at least two values")
    pts = np.concatenate([xa, xb])
    cdf_a = np.searchsorted(xa, pts, side="right") / len(xa)
    cdf_b = np.searchsorted(xb, pts, side="right") / len(xb)
    d = float(np.max(np.abs(cdf_a - cdf_b)))
    ne = len(xa) * len(xb) / (len(xa) + len(xb))
    root = math.sqrt(ne)
    p = float(special.kolmogorov((root + 0.12 + 0.11 / root) * d))
    return KSResult(d, min(1.0, max(0.0, p)))


AD_EXPONENTIAL_CRITICAL_5PCT = 1.321


class ADResult(NamedTuple):
    statistic: float
    reject_at_5pct: bool


def ad_exponential_test(sample: Sequence[float]) -> ADResult:
    """Anderson-Darling test of exponentiality with the rate estimated from the data.

    Returns the small-sample corrected statistic ``A2 * (1 + 0.6/n)``,
    compared with its 5% critical value 1.321.
    """
    x = np.sort(np.asarray(sample, dtype=float))
    n = len(x)
    if n < 8:
        raise ValueError("need at least 8 observations")
    if np.any(x <= 0):
        raise ValueError("sample must be strictly positive")
    if x[0] == x[-1]:
        raise ValueError("constant sample: exponential fit is degenerate")
    z = x / x.mean()
    # log F and log(1 - F) for F = 1 - exp(-z)
    log_f = np.log(-np.expm1(-z))
    log_sf = -z
    i = np.arange(1, n + 1)
    a2 = -n - float(np.mean((2 * i - 1) * (log_f + log_sf[::-1])))
    stat = a2 * (1.0 + 0.6 / n)
    return ADResult(stat, stat > AD_EXPONENTIAL_CRITICAL_5PCT)
