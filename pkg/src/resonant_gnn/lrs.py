"""Local resonance subgraphs and the global LRS-weighted graph.

Each node's subgraph carries three weight classes whose totals reproduce
the resonance intensity of that node:

* weight 1 on every edge between two neighbours of the centre (``T_i`` of them),
* ``2 * (A^2)_{c,u}`` from the centre to every node ``u`` reachable by a
  two-walk, including a self-loop ``2 * deg_c`` on the centre (sums to ``2 p_c``),
* weight 8 on every centre-neighbour edge (sums to ``8 deg_c``).
"""
from __future__ import annotations

import csv
from dataclasses import dataclass
from functools import cached_property
from itertools import combinations

import numpy as np

from .graph import Graph, NodeStats, Pair, canonical_pair

W1, W2, W8 = "w1_neighbor_pair", "w2_two_walk", "w8_first_order"
SCALE_FLOOR = 1e-6


@dataclass(frozen=True)
class Lrs:
    center: int
    nodes: tuple[int, ...]
    w1: dict[Pair, float]
    w2: dict[Pair, float]
    w8: dict[Pair, float]

    @cached_property
    def weights(self) -> dict[Pair, float]:
        """Final per-pair weight: the sum of every class contribution."""
        out: dict[Pair, float] = {}
        for part in (self.w1, self.w2, self.w8):
            for pair, w in part.items():
                out[pair] = out.get(pair, 0.0) + w
        return dict(sorted(out.items()))

    @property
    def base_edges(self) -> list[Pair]:
        """Pairs that are edges of the underlying graph (w1 and w8 classes)."""
        return sorted(set(self.w1) | set(self.w8))

    def classes(self, pair: Pair) -> tuple[str, ...]:
        pair = canonical_pair(*pair)
        return tuple(name for name, part in ((W1, self.w1), (W2, self.w2), (W8, self.w8)) if pair in part)

    def local_adjacency(self) -> np.ndarray:
        """Weighted adjacency over ``nodes`` (centre self-loop on the diagonal)."""
        pos = {v: i for i, v in enumerate(self.nodes)}
        m = np.zeros((len(self.nodes), len(self.nodes)))
        for (u, v), w in self.weights.items():
            m[pos[u], pos[v]] += w
            if u != v:
                m[pos[v], pos[u]] += w
        return m

    @property
    def is_empty(self) -> bool:
        return not self.nodes


def extract_lrs(g: Graph, stats: NodeStats | None = None, center: int = 0, a2: np.ndarray | None = None) -> Lrs:
    """Local resonance subgraph around ``center``; empty for an isolated node."""
    if not 0 <= center < g.n:
        raise IndexError(f"center {center} outside 0..{g.n - 1}")
    nbrs = g.neighbors[center]
    if not nbrs:
        return Lrs(center, (), {}, {}, {})
    a = g.adjacency
    row = (a[center] @ a) if a2 is None else a2[center]
    w1 = {canonical_pair(u, v): 1.0 for u, v in combinations(nbrs, 2) if a[u, v]}
    w2 = {canonical_pair(center, int(u)): 2.0 * float(row[u]) for u in np.flatnonzero(row)}
    w8 = {canonical_pair(center, u): 8.0 for u in nbrs}
    nodes = sorted({center, *nbrs, *(int(u) for u in np.flatnonzero(row))})
    return Lrs(center, tuple(nodes), w1, w2, w8)


def extract_all(g: Graph) -> list[Lrs]:
    a2 = g.adjacency @ g.adjacency
    return [extract_lrs(g, None, c, a2) for c in range(g.n)]


def lrs_weight_identity(lrs: Lrs, zbar_center: float) -> float:
    """``zbar * |w1| + sum(w2) + sum(w8)``; equals the centre's resonance intensity."""
    return float(zbar_center) * len(lrs.w1) + sum(lrs.w2.values()) + sum(lrs.w8.values())


@dataclass(frozen=True)
class GlobalLrsGraph:
    weights: np.ndarray
    raw_min: float
    raw_max: float


def accumulate_lrs(g: Graph) -> np.ndarray:
    """Sum of every node's LRS weights as a symmetric N x N matrix."""
    acc = np.zeros((g.n, g.n))
    for lrs in extract_all(g):
        for (u, v), w in lrs.weights.items():
            acc[u, v] += w
            if u != v:
                acc[v, u] += w
    return acc


def min_max_scale(raw: np.ndarray, floor: float = SCALE_FLOOR) -> tuple[np.ndarray, float, float]:
    """Min-max scale the nonzero entries; the minimum maps to ``floor``, not 0."""
    support = raw != 0
    if not support.any():
        return np.zeros_like(raw), 0.0, 0.0
    vals = raw[support]
    lo, hi = float(vals.min()), float(vals.max())
    out = np.zeros_like(raw)
    if hi == lo:
        out[support] = 1.0
    else:
        out[support] = np.maximum(floor, (vals - lo) / (hi - lo))
    return out, lo, hi


def build_global_lrs(g: Graph) -> GlobalLrsGraph:
    scaled, lo, hi = min_max_scale(accumulate_lrs(g))
    return GlobalLrsGraph(scaled, lo, hi)


def random_weighted_control(g: Graph, seed: int = 0) -> np.ndarray:
    """Same edge support as ``g`` with i.i.d. uniform [0, 1) weights."""
    rng = np.random.default_rng(seed)
    w = np.zeros((g.n, g.n))
    edges = g.sorted_edges
    if edges:
        idx = np.array(edges)
        vals = rng.random(len(edges))
        w[idx[:, 0], idx[:, 1]] = vals
        w[idx[:, 1], idx[:, 0]] = vals
    return w


def pearson(x, y) -> float:
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.std() == 0 or y.std() == 0:
        return float("nan")
    return float(np.corrcoef(x, y)[0, 1])


def write_weighted_csv(weights: np.ndarray, path) -> None:
    """Upper-triangle ``u,v,w`` triples (self-loops as ``u,u,w``)."""
    iu, ju = np.nonzero(np.triu(weights))
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("u", "v", "w"))
        for u, v in zip(iu.tolist(), ju.tolist()):
            w.writerow((u, v, f"{weights[u, v]:.6g}"))


def lrs_rows(lrs: Lrs) -> list[tuple[int, int, int, float, str]]:
    """``(center, u, v, weight, classes)`` rows for CSV export."""
    return [(lrs.center, u, v, w, "+".join(lrs.classes((u, v)))) for (u, v), w in lrs.weights.items()]
