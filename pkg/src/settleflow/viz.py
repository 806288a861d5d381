"""Force-directed layout, the ``others`` reduction and DOT export of flow networks."""
from __future__ import annotations

import math
from collections import defaultdict
from dataclasses import dataclass
from typing import Iterable, Mapping

import numpy as np

from .core import dollars
from .flowlab import Flow, FlowNetwork, NetFlowNetwork, imbalances

OTHERS = "others"


@dataclass(frozen=True)
class Layout:
    positions: Mapping[str, tuple[float, float]]
    k: float = 1.0
    iterations: int = 300
    seed: int = 0
    weighted: bool = False

    def __getitem__(self, node: str) -> tuple[float, float]:
        return self.positions[node]

    def distance(self, a: str, b: str) -> float:
        (xa, ya), (xb, yb) = self.positions[a], self.positions[b]
        return math.hypot(xa - xb, ya - yb)


def _spring_weights(network: FlowNetwork, nodes: list[str], weighted: bool) -> np.ndarray:
    index = {b: i for i, b in enumerate(nodes)}
    w = np.zeros((len(nodes), len(nodes)))
    for (src, dst), f in network.edges.items():
        i, j = index[src], index[dst]
        strength = math.log10(1.0 + f.value / dollars(1)) if weighted else 1.0
        w[i, j] += strength
        w[j, i] += strength
    return w


def layout_fr(
    network: FlowNetwork,
    weighted: bool = False,
    seed: int = 0,
    iterations: int = 300,
    k: float = 1.0,
) -> Layout:
    """Fruchterman-Reingold layout of ``network.banks``.

    Edges attract with ``w d^2 / k`` (``w = 1``, or ``log10(1 + value in A$)``
    when ``weighted``), all pairs repel with ``k^2 / d``; the step length
    is capped by a temperature that cools linearly to zero.
    """
    nodes = sorted(network.banks)
    n = len(nodes)
    if n == 0:
        return Layout({}, k, iterations, seed, weighted)
    if n == 1:
        return Layout({nodes[0]: (0.0, 0.0)}, k, iterations, seed, weighted)
    rng = np.random.default_rng(seed)
    side = k * math.sqrt(n)
    pos = rng.uniform(-side / 2, side / 2, size=(n, 2))
    w = _spring_weights(network, nodes, weighted)
    t0 = side / 10.0
    eps = 1e-9 * k
    for it in range(iterations):
        delta = pos[:, None, :] - pos[None, :, :]
        dist = np.sqrt((delta**2).sum(axis=-1))
        np.fill_diagonal(dist, 1.0)
        dist = np.maximum(dist, eps)
        # positive coefficient pushes i away from j
        coeff = k * k / dist**2 - w * dist / k
        np.fill_diagonal(coeff, 0.0)
        disp = (coeff[:, :, None] * delta).sum(axis=1)
        length = np.sqrt((disp**2).sum(axis=1))
        temp = t0 * (1.0 - it / iterations)
        scale = np.minimum(length, temp) / np.maximum(length, eps)
        pos += disp * scale[:, None]
    pos -= pos.mean(axis=0)
    pos = _separate(pos, k, rng)
    return Layout({b: (float(x), float(y)) for b, (x, y) in zip(nodes, pos)}, k, iterations, seed, weighted)


def _separate(pos: np.ndarray, k: float, rng: np.random.Generator) -> np.ndarray:
    """Nudge coincident nodes apart so every pair distance is positive."""
    tol = 1e-6 * k
    for _ in range(100):
        delta = pos[:, None, :] - pos[None, :, :]
        dist = np.sqrt((delta**2).sum(axis=-1))
        np.fill_diagonal(dist, np.inf)
        close = np.argwhere(dist < tol)
        if len(close) == 0:
            break
        for i in {int(i) for i, j in close if i < j}:
            pos[i] += rng.uniform(-1, 1, size=2) * 1e-3 * k
    return pos


def merge_others(network: FlowNetwork, keep: Iterable[str], label: str = OTHERS) -> NetFlowNetwork:
    """Collapse every bank outside ``keep`` into one node, preserving net flows.

    Net flows between kept banks are unchanged.  Flows between a kept bank
    and merged banks are summed with sign into one edge; flows among merged
    banks disappear.
    """
    keep = set(keep)
    if not keep:
        raise ValueError("keep set must be non-empty")
    if not keep <= network.banks:
        raise ValueError(f"unknown banks in keep set: {sorted(keep - network.banks)}")
    if label in network.banks and label not in keep:
        raise ValueError(f"merged-node label {label!r} clashes with a bank")
    merged = network.banks - keep
    signed: dict[tuple[str, str], int] = defaultdict(int)
    counts: dict[tuple[str, str], int] = defaultdict(int)
    for (src, dst), f in network.edges.items():
        a = src if src in keep else label
        b = dst if dst in keep else label
        if a == b:
            continue
        key, sign = ((a, b), 1) if a < b else ((b, a), -1)
        signed[key] += sign * f.value
        counts[key] += f.tx_count
    edges = {}
    for (a, b), v in signed.items():
        if v > 0:
            edges[(a, b)] = Flow(v, counts[(a, b)])
        elif v < 0:
            edges[(b, a)] = Flow(-v, counts[(a, b)])
    banks = frozenset(keep | ({label} if merged else set()))
    return NetFlowNetwork(network.day, network.kind, dict(sorted(edges.items())), banks)


@dataclass(frozen=True)
class DotEncoding:
    """Scale constants: inches per unit of ``log10(1 + x / A$10^6)``."""

    node_scale: float = 0.25
    min_node_width: float = 0.1
    pen_scale: float = 1.0
    min_penwidth: float = 0.25
    position_scale: float = 1.0


def _log_scale(cents: int) -> float:
    return math.log10(1.0 + abs(cents) / dollars(1e6))


def _quote(s: str) -> str:
    return '"' + s.replace("\\", "\\\\").replace('"', '\\"') + '"'


def export_dot(network: FlowNetwork, layout: Layout, encoding: DotEncoding = DotEncoding(),
               name: str = "flows") -> str:
    """DOT digraph with pinned positions.

    Node width grows with ``log10(1 + |imbalance| / A$10^6)``, fill is white
    for negative imbalance and grey otherwise; edge pen width grows with
    ``log10(1 + value / A$10^6)``.
    """
    missing = set(network.banks) - set(layout.positions)
    if missing:
        raise ValueError(f"layout lacks nodes: {sorted(missing)}")
    imb = imbalances(network)
    lines = [f"digraph {_quote(name)} {{", "  node [shape=circle, style=filled, fixedsize=true, label=\"\"];"]
    for b in sorted(network.banks):
        x, y = layout.positions[b]
        width = max(encoding.min_node_width, encoding.node_scale * _log_scale(imb[b]))
        fill = "white" if imb[b] < 0 else "grey"
        s = encoding.position_scale
        lines.append(
            f"  {_quote(b)} [pos=\"{x * s:.4f},{y * s:.4f}!\", width={width:.4f}, "
            f"fillcolor={fill}, xlabel={_quote(b)}];"
        )
    for (src, dst), f in sorted(network.edges.items()):
        pen = max(encoding.min_penwidth, encoding.pen_scale * _log_scale(f.value))
        lines.append(f"  {_quote(src)} -> {_quote(dst)} [penwidth={pen:.4f}];")
    lines.append("}")
    return "\n".join(lines) + "\n"
