"""Undirected graphs, structural statistics, loading, generation and edge flips."""
from __future__ import annotations

import csv
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path
from typing import Iterable

import numpy as np

from .errors import ConfigError, ParseError

OPERATORS = ("raw_adjacency", "sym_norm_selfloops")

Pair = tuple[int, int]


def canonical_pair(u: int, v: int) -> Pair:
    u, v = int(u), int(v)
    return (u, v) if u <= v else (v, u)


@dataclass(frozen=True, eq=False)
class Graph:
    """Simple undirected graph on nodes ``0..n-1``.

    ``labels`` rows are one-hot; an all-zero row marks a node whose label is
    withheld (used to check that training never reads unseen labels).
    """

    n: int
    edges: frozenset[Pair]
    features: np.ndarray | None = None
    labels: np.ndarray | None = None

    def __post_init__(self):
        if self.n < 0:
            raise ConfigError("node count must be nonnegative")
        for u, v in self.edges:
            if u == v:
                raise ConfigError(f"self-loop at node {u}")
            if not (0 <= u < v < self.n):
                raise ConfigError(f"edge ({u}, {v}) is not a canonical pair within {self.n} nodes")
        for name in ("features", "labels"):
            arr = getattr(self, name)
            if arr is None:
                continue
            arr = np.array(arr, dtype=np.float64)
            if arr.ndim != 2 or arr.shape[0] != self.n:
                raise ConfigError(f"{name} must have {self.n} rows, got shape {arr.shape}")
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        if self.labels is not None:
            sums = self.labels.sum(axis=1)
            ok = np.isin(self.labels, (0.0, 1.0)).all() and np.all((sums == 1) | (sums == 0))
            if not ok:
                raise ConfigError("label rows must be one-hot (or all-zero when withheld)")

    @classmethod
    def from_edges(cls, n: int, edges: Iterable[tuple[int, int]], features=None, labels=None) -> Graph:
        pairs = set()
        for u, v in edges:
            if int(u) == int(v):
                raise ConfigError(f"self-loop at node {u}")
            pairs.add(canonical_pair(u, v))
        return cls(n, frozenset(pairs), features, labels)

    @classmethod
    def from_adjacency(cls, adjacency, features=None, labels=None) -> Graph:
        a = np.asarray(adjacency)
        if a.ndim != 2 or a.shape[0] != a.shape[1]:
            raise ConfigError("adjacency must be square")
        if not np.array_equal(a, a.T) or np.any(np.diag(a) != 0):
            raise ConfigError("adjacency must be symmetric with zero diagonal")
        if not np.isin(a, (0, 1)).all():
            raise ConfigError("adjacency entries must be 0 or 1")
        iu, ju = np.nonzero(np.triu(a, 1))
        return cls(a.shape[0], frozenset(zip(iu.tolist(), ju.tolist())), features, labels)

    @cached_property
    def adjacency(self) -> np.ndarray:
        a = np.zeros((self.n, self.n))
        if self.edges:
            idx = np.array(sorted(self.edges))
            a[idx[:, 0], idx[:, 1]] = 1.0
            a[idx[:, 1], idx[:, 0]] = 1.0
        a.setflags(write=False)
        return a

    @cached_property
    def sorted_edges(self) -> list[Pair]:
        return sorted(self.edges)

    @cached_property
    def neighbors(self) -> list[list[int]]:
        nb: list[list[int]] = [[] for _ in range(self.n)]
        for u, v in self.sorted_edges:
            nb[u].append(v)
            nb[v].append(u)
        return [sorted(x) for x in nb]

    @property
    def num_edges(self) -> int:
        return len(self.edges)

    @property
    def num_classes(self) -> int:
        return 0 if self.labels is None else self.labels.shape[1]

    @cached_property
    def label_index(self) -> np.ndarray:
        if self.labels is None:
            raise ConfigError("graph has no labels")
        return self.labels.argmax(axis=1)

    def with_edges(self, edges: Iterable[Pair]) -> Graph:
        return Graph(self.n, frozenset(edges), self.features, self.labels)

    def with_labels(self, labels) -> Graph:
        return Graph(self.n, self.edges, self.features, labels)

    def with_features(self, features) -> Graph:
        return Graph(self.n, self.edges, features, self.labels)


@dataclass(frozen=True)
class NodeStats:
    """Per-node degree, two-walk count and neighbour-edge count.

    ``t[i]`` counts unordered pairs of neighbours of ``i`` that are adjacent
    (the triangles through ``i``); the ordered sum ``(A^3)_ii`` is ``2 * t[i]``.
    """

    deg: np.ndarray
    p: np.ndarray
    t: np.ndarray


def node_stats(g: Graph) -> NodeStats:
    a = g.adjacency
    a2 = a @ a
    deg = a.sum(axis=1)
    p = a2.sum(axis=1)
    t = np.einsum("ij,ji->i", a2, a) / 2.0
    return NodeStats(deg=deg.astype(np.int64), p=p.astype(np.int64), t=np.rint(t).astype(np.int64))


def propagation_matrix(adjacency: np.ndarray, kind: str) -> np.ndarray:
    """Propagation operator for a (possibly weighted) symmetric adjacency."""
    a = np.asarray(adjacency, dtype=np.float64)
    if kind == "raw_adjacency":
        return a.copy()
    if kind == "sym_norm_selfloops":
        a_hat = a + np.eye(a.shape[0])
        d = a_hat.sum(axis=1)
        inv_sqrt = 1.0 / np.sqrt(d)
        return inv_sqrt[:, None] * a_hat * inv_sqrt[None, :]
    raise ConfigError(f"unknown operator {kind!r}; expected one of {OPERATORS}")


def propagation_operator(g: Graph, kind: str) -> np.ndarray:
    return propagation_matrix(g.adjacency, kind)


def strength_distribution(weights) -> np.ndarray:
    return np.asarray(weights, dtype=np.float64).sum(axis=1)


@dataclass(frozen=True)
class Perturbation:
    flips: frozenset[Pair]
    budget: int

    def __post_init__(self):
        flips = frozenset(canonical_pair(u, v) for u, v in self.flips)
        object.__setattr__(self, "flips", flips)
        for u, v in flips:
            if u == v:
                raise ConfigError(f"flip targets self-pair ({u}, {u})")
        if len(flips) > self.budget:
            raise ConfigError(f"{len(flips)} flips exceed budget {self.budget}")

    @classmethod
    def of(cls, flips: Iterable[tuple[int, int]], budget: int | None = None) -> Perturbation:
        pairs = frozenset(canonical_pair(u, v) for u, v in flips)
        return cls(pairs, len(pairs) if budget is None else budget)

    def rate(self, g: Graph) -> float:
        return len(self.flips) / g.num_edges if g.num_edges else 0.0


def apply_perturbation(g: Graph, p: Perturbation) -> Graph:
    """Toggle every flipped pair; the input graph is left untouched."""
    edges = set(g.edges)
    for u, v in p.flips:
        if not (0 <= u < g.n and 0 <= v < g.n):
            raise ConfigError(f"flip ({u}, {v}) outside node range")
        edges ^= {(u, v)}
    return g.with_edges(edges)


# ---------------------------------------------------------------------------
# generation
# ---------------------------------------------------------------------------

def gen_sbm(blocks: Iterable[int], p_in: float, p_out: float, seed: int = 0,
            feature_noise: float = 0.1) -> Graph:
    """Stochastic block model with block-index labels.

    Features are the one-hot block label plus Gaussian noise of scale
    ``feature_noise``; everything is drawn from one seeded generator.
    """
    sizes = [int(b) for b in blocks]
    if not sizes or any(s <= 0 for s in sizes):
        raise ConfigError(f"blocks must be a nonempty list of positive sizes, got {sizes}")
    if not (0.0 <= p_out <= p_in <= 1.0):
        raise ConfigError(f"need 0 <= p_out <= p_in <= 1, got p_in={p_in}, p_out={p_out}")
    rng = np.random.default_rng(seed)
    block = np.repeat(np.arange(len(sizes)), sizes)
    n = block.size
    same = block[:, None] == block[None, :]
    prob = np.where(same, p_in, p_out)
    draw = rng.random((n, n))
    iu, ju = np.triu_indices(n, 1)
    keep = draw[iu, ju] < prob[iu, ju]
    edges = frozenset(zip(iu[keep].tolist(), ju[keep].tolist()))
    labels = np.eye(len(sizes))[block]
    features = labels + rng.normal(0.0, feature_noise, size=labels.shape)
    return Graph(n, edges, features, labels)


def parse_sbm_spec(spec: str) -> list[int]:
    """``"sbm:50,50"`` -> ``[50, 50]``."""
    kind, _, rest = spec.partition(":")
    if kind != "sbm" or not rest:
        raise ConfigError(f"synthetic spec must look like 'sbm:50,50', got {spec!r}")
    try:
        return [int(x) for x in rest.split(",")]
    except ValueError as exc:
        raise ConfigError(f"bad block sizes in {spec!r}") from exc


# ---------------------------------------------------------------------------
# file I/O
# ---------------------------------------------------------------------------

def _read_matrix_csv(path: Path) -> np.ndarray:
    rows = []
    width = None
    with open(path, newline="") as fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if not row or all(not c.strip() for c in row):
                continue
            try:
                vals = [float(c) for c in row]
            except ValueError as exc:
                raise ParseError(f"{path}:{lineno}: non-numeric value") from exc
            if width is None:
                width = len(vals)
            elif len(vals) != width:
                raise ParseError(f"{path}:{lineno}: expected {width} columns, got {len(vals)}")
            rows.append(vals)
    if not rows:
        raise ParseError(f"{path}: no rows")
    return np.array(rows)


def load_graph(edge_path, features_path=None, labels_path=None) -> Graph:
    """Load a whitespace-separated ``u v`` edge list plus optional CSV matrices.

    Lines starting with ``#`` (and trailing ``#`` comments) are ignored.
    Without a feature/label file, every index up to the largest one must
    appear in some edge.
    """
    edge_path = Path(edge_path)
    if not edge_path.exists():
        raise ParseError(f"{edge_path}: no such file")
    pairs: list[Pair] = []
    with open(edge_path) as fh:
        for lineno, line in enumerate(fh, start=1):
            body = line.split("#", 1)[0].strip()
            if not body:
                continue
            tok = body.split()
            if len(tok) != 2:
                raise ParseError(f"{edge_path}:{lineno}: expected 'u v', got {body!r}")
            try:
                u, v = int(tok[0]), int(tok[1])
            except ValueError as exc:
                raise ParseError(f"{edge_path}:{lineno}: node ids must be integers") from exc
            if u < 0 or v < 0:
                raise ParseError(f"{edge_path}:{lineno}: negative node id")
            if u == v:
                raise ParseError(f"{edge_path}:{lineno}: self-loop ({u}, {v})")
            pairs.append(canonical_pair(u, v))
    n_edges = 1 + max((v for _, v in pairs), default=-1)

    mats = {}
    for name, path in (("features", features_path), ("labels", labels_path)):
        if path is None:
            continue
        path = Path(path)
        if not path.exists():
            raise ParseError(f"{path}: no such file")
        mats[name] = (path, _read_matrix_csv(path))

    if mats:
        counts = {name: m.shape[0] for name, (_, m) in mats.items()}
        n = max(counts.values())
        for name, (path, m) in mats.items():
            if m.shape[0] != n or m.shape[0] < n_edges:
                need = max(n, n_edges)
                raise ParseError(f"{path}:{m.shape[0] + 1}: expected {need} rows, file has {m.shape[0]}")
    else:
        n = n_edges
        seen = np.zeros(n, dtype=bool)
        for u, v in pairs:
            seen[u] = seen[v] = True
        if not seen.all():
            missing = int(np.flatnonzero(~seen)[0])
            raise ParseError(f"{edge_path}: node indices not contiguous (node {missing} never appears)")

    labels = None
    if "labels" in mats:
        path, labels = mats["labels"]
        for i, row in enumerate(labels):
            if not (np.isin(row, (0.0, 1.0)).all() and row.sum() == 1):
                raise ParseError(f"{path}:{i + 1}: label row is not one-hot")
    features = mats["features"][1] if "features" in mats else None
    return Graph.from_edges(n, pairs, features, labels)


def save_edge_list(g: Graph, path) -> None:
    with open(path, "w") as fh:
        for u, v in g.sorted_edges:
            fh.write(f"{u} {v}\n")


def save_matrix_csv(matrix: np.ndarray, path, fmt: str = ".17g") -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        for row in np.asarray(matrix):
            w.writerow([format(float(x), fmt) for x in row])
