"""Edge-transmitted signals.

The signal on an edge ``(j, k)`` is what endpoint rows lose when the edge is
removed and the layer re-propagated. Re-propagation has a reference path
(build the edge-deleted adjacency and multiply) and a fast path that reuses a
single cached ``A @ zw`` and subtracts the two rearranged rows of ``zw``.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from . import numkernel as nk
from .errors import ConfigError
from .graph import Graph, Pair, canonical_pair
from .lrs import Lrs
from .numkernel import Tensor

EPSILON_HIGH = 1e-7
ANCHORINGS = ("symmetric", "single")


@dataclass
class PropagationCounter:
    """Counts global ``A @ zw`` products built for edge signals."""

    count: int = 0


@dataclass
class EdgeSignalSet:
    layer: int
    signals: dict[Pair, np.ndarray]
    provenance: str

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            for (j, k), vec in sorted(self.signals.items()):
                w.writerow([j, k, *(f"{x:.6g}" for x in vec)])


def _require_edge(g: Graph, j: int, k: int) -> None:
    if j == k or canonical_pair(j, k) not in g.edges:
        raise ConfigError(f"({j}, {k}) is not an edge of the graph")


def repropagate_oracle(g: Graph, zw, j: int, k: int) -> np.ndarray:
    """``A_without_jk @ zw`` computed from an explicitly edited adjacency."""
    _require_edge(g, j, k)
    a = np.array(g.adjacency)
    a[j, k] = a[k, j] = 0.0
    return a @ nk.as_tensor(zw).value


@dataclass
class PropagationCache:
    """``A @ zw`` computed once per layer and reused for every edge."""

    g: Graph
    zw: np.ndarray
    counter: PropagationCounter | None = None
    azw: np.ndarray = field(init=False)

    def __post_init__(self):
        self.zw = nk.as_tensor(self.zw).value
        self.azw = self.g.adjacency @ self.zw
        if self.counter is not None:
            self.counter.count += 1


def repropagate_fast(g: Graph, zw, j: int, k: int, cache: PropagationCache | None = None) -> np.ndarray:
    """``A @ zw - Q(zw; j, k)`` using a cached ``A @ zw``."""
    _require_edge(g, j, k)
    cache = PropagationCache(g, zw) if cache is None else cache
    return cache.azw - nk.row_rearrange_Q(cache.zw, j, k).value


def epsilon_signal(j: int, k: int, dim: int, seed: int = 0) -> np.ndarray:
    """Layer-0 stand-in: uniform draws in ``[0, 1e-7)`` keyed by ``(seed, j, k)``."""
    j, k = canonical_pair(j, k)
    return np.random.default_rng([seed, j, k]).uniform(0.0, EPSILON_HIGH, size=dim)


def edge_signal(z_rows, reprop_rows, layer: int, anchoring: str = "symmetric",
                edge: Pair = (0, 1), seed: int = 0) -> np.ndarray:
    """Signal carried by one edge.

    ``z_rows`` are the endpoint rows ``(z_j, z_k)`` of ``A @ zw``; ``reprop_rows``
    the same rows after deleting the edge. ``symmetric`` averages both
    directions, ``single`` keeps only what ``j`` received from ``k``.
    """
    zj, zk = (np.asarray(r, dtype=np.float64) for r in z_rows)
    if layer == 0:
        return epsilon_signal(*edge, dim=zj.shape[-1], seed=seed)
    rj, rk = (np.asarray(r, dtype=np.float64) for r in reprop_rows)
    if anchoring == "symmetric":
        return (zj + zk) / 2.0 - (rj + rk) / 2.0
    if anchoring == "single":
        return zj - rj
    raise ConfigError(f"unknown anchoring {anchoring!r}")


def edge_signal_set(g: Graph, zw, lrs: Lrs, layer: int, anchoring: str = "symmetric",
                    seed: int = 0, cache: PropagationCache | None = None,
                    oracle: bool = False) -> EdgeSignalSet:
    """Signals for every graph edge inside ``lrs`` (its w1 and w8 pairs)."""
    edges = lrs.base_edges
    zw_v = nk.as_tensor(zw).value
    if layer == 0:
        sigs = {e: epsilon_signal(*e, dim=zw_v.shape[1], seed=seed) for e in edges}
        return EdgeSignalSet(0, sigs, "oracle" if oracle else "fast")
    if not oracle and cache is None and edges:
        cache = PropagationCache(g, zw_v)
    azw = g.adjacency @ zw_v if oracle else (cache.azw if cache is not None else None)
    sigs = {}
    for j, k in edges:
        rep = repropagate_oracle(g, zw_v, j, k) if oracle else repropagate_fast(g, zw_v, j, k, cache)
        sigs[(j, k)] = edge_signal((azw[j], azw[k]), (rep[j], rep[k]), layer, anchoring, (j, k), seed)
    return EdgeSignalSet(layer, sigs, "oracle" if oracle else "fast")


def edge_index(edges) -> tuple[np.ndarray, np.ndarray]:
    arr = np.asarray(list(edges), dtype=np.intp).reshape(-1, 2)
    return arr[:, 0], arr[:, 1]


def epsilon_matrix(edges, dim: int, seed: int = 0) -> np.ndarray:
    if not len(edges):
        return np.zeros((0, dim))
    return np.vstack([epsilon_signal(j, k, dim, seed) for j, k in edges])


def edge_signals_tensor(adjacency: np.ndarray, zw: Tensor, heads: np.ndarray, tails: np.ndarray,
                        anchoring: str = "symmetric", counter: PropagationCounter | None = None) -> Tensor:
    """Differentiable fast-path signals for many edges at once (one row per edge).

    Uses one product ``A @ zw``; each edge's re-propagated endpoint rows are
    the cached rows minus the partner's ``zw`` row.
    """
    azw = nk.matmul(adjacency, zw)
    if counter is not None:
        counter.count += 1
    zj = nk.gather_rows(azw, heads)
    zk = nk.gather_rows(azw, tails)
    rj = nk.sub(zj, nk.gather_rows(zw, tails))
    if anchoring == "single":
        return nk.sub(zj, rj)
    if anchoring != "symmetric":
        raise ConfigError(f"unknown anchoring {anchoring!r}")
    rk = nk.sub(zk, nk.gather_rows(zw, heads))
    return nk.sub(nk.scale(nk.add(zj, zk), 0.5), nk.scale(nk.add(rj, rk), 0.5))
