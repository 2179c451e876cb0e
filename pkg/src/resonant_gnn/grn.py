"""Resonance-fostering network: per-node aggregation over local resonance subgraphs.

For node ``i`` at layer ``l`` the rows ``A_Gi @ Z_Gi`` (one per LRS node) are
stacked with the LRS edges' transmitted signals (each scaled by its LRS
weight), multiplied by the shared ``W_l``, averaged, and activated. Because
averaging commutes with the shared linear map, the batched forward collapses
each node's rows into two matrix products; :func:`grn_layer` keeps the literal
row-stacking form and is used to cross-check it.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from . import numkernel as nk
from .edgesignal import (
    ANCHORINGS,
    EdgeSignalSet,
    PropagationCache,
    PropagationCounter,
    edge_index,
    edge_signal_set,
    edge_signals_tensor,
    epsilon_matrix,
)
from .errors import ConfigError, StateError
from .gcn import init_weights, loss_window_warnings, score_predictions
from .graph import Graph
from .lrs import Lrs, extract_all
from .numkernel import ACTIVATIONS, Tape, Tensor

VARIANTS = ("E_Z", "Z_E", "shuf", "Z_only")


@dataclass(frozen=True)
class GrnConfig:
    dims: tuple[int, ...]
    activation: str = "relu"
    output_activation: str = "identity"
    variant: str = "E_Z"
    anchoring: str = "symmetric"
    seed: int = 0
    learning_rate: float = 1e-3
    epochs: int = 200
    seen_rate: float = 0.6

    def __post_init__(self):
        object.__setattr__(self, "dims", tuple(int(d) for d in self.dims))
        if len(self.dims) < 2 or any(d <= 0 for d in self.dims):
            raise ConfigError(f"need at least one layer with positive dims, got {self.dims}")
        if self.variant not in VARIANTS:
            raise ConfigError(f"unknown variant {self.variant!r}; expected one of {VARIANTS}")
        if self.anchoring not in ANCHORINGS:
            raise ConfigError(f"unknown anchoring {self.anchoring!r}")
        for a in (self.activation, self.output_activation):
            if a not in ACTIVATIONS:
                raise ConfigError(f"unknown activation {a!r}")
        if not 0.0 < self.seen_rate <= 1.0:
            raise ConfigError(f"seen rate must lie in (0, 1], got {self.seen_rate}")
        if self.epochs < 0:
            raise ConfigError("epochs must be nonnegative")

    @property
    def depth(self) -> int:
        return len(self.dims) - 1

    @classmethod
    def default(cls, d_in: int, n_classes: int, depth: int = 3, hidden: int = 16, **kw) -> GrnConfig:
        if depth < 1:
            raise ConfigError("depth must be >= 1")
        return cls((d_in, *([hidden] * (depth - 1)), n_classes), **kw)

    def layer_activation(self, layer: int) -> str:
        return self.output_activation if layer == self.depth - 1 else self.activation

    def to_dict(self) -> dict:
        return {
            "dims": list(self.dims), "activation": self.activation,
            "output_activation": self.output_activation, "variant": self.variant,
            "anchoring": self.anchoring, "seed": self.seed,
            "learning_rate": self.learning_rate, "epochs": self.epochs, "seen_rate": self.seen_rate,
        }

    @classmethod
    def from_dict(cls, d: dict) -> GrnConfig:
        d = dict(d)
        d["dims"] = tuple(d["dims"])
        return cls(**d)


@dataclass
class GrnModel:
    config: GrnConfig
    weights: list[np.ndarray]
    losses: list[float] = field(default_factory=list)
    warnings: list[str] = field(default_factory=list)
    seen: np.ndarray | None = None
    unseen: np.ndarray | None = None


class GrnStructure:
    """Graph-dependent aggregation matrices, rebuilt whenever the graph changes.

    ``node_agg[i, v]`` is the weighted strength of ``v`` inside ``G_i`` (so
    ``node_agg @ Z`` sums the rows of ``A_Gi @ Z_Gi``); ``edge_agg[i, e]`` is
    the LRS weight of graph edge ``e`` inside ``G_i``.
    """

    def __init__(self, g: Graph):
        self.g = g
        self.lrs: list[Lrs] = extract_all(g)
        self.edges = g.sorted_edges
        self.heads, self.tails = edge_index(self.edges)
        pos = {e: i for i, e in enumerate(self.edges)}
        n, m = g.n, len(self.edges)
        self.node_agg = np.zeros((n, n))
        self.edge_agg = np.zeros((n, m))
        self.node_rows = np.zeros(n, dtype=np.int64)
        self.edge_rows = np.zeros(n, dtype=np.int64)
        for i, lrs in enumerate(self.lrs):
            for (u, v), w in lrs.weights.items():
                self.node_agg[i, u] += w
                if u != v:
                    self.node_agg[i, v] += w
            for e in lrs.base_edges:
                self.edge_agg[i, pos[e]] = lrs.weights[e]
            self.node_rows[i] = len(lrs.nodes)
            self.edge_rows[i] = len(lrs.base_edges)
        self._eps: dict[tuple[int, int], np.ndarray] = {}

    def inv_rows(self, with_edges: bool) -> np.ndarray:
        rows = self.node_rows + (self.edge_rows if with_edges else 0)
        out = np.zeros((self.g.n, 1))
        nz = rows > 0
        out[nz, 0] = 1.0 / rows[nz]
        return out

    @cached_property
    def adjacency(self) -> np.ndarray:
        return self.g.adjacency

    def epsilon(self, dim: int, seed: int) -> np.ndarray:
        """Layer-0 edge signals, drawn once per (dim, seed) and reused."""
        key = (dim, seed)
        if key not in self._eps:
            self._eps[key] = epsilon_matrix(self.edges, dim, seed)
        return self._eps[key]


def _features(g: Graph) -> np.ndarray:
    if g.features is None:
        raise StateError("graph has no features")
    return g.features


def forward_tensors(weights, g: Graph, config: GrnConfig, structure: GrnStructure | None = None,
                    counter: PropagationCounter | None = None) -> list[Tensor]:
    """Batched forward; returns every layer output ``Z^(1) .. Z^(K)``."""
    st = GrnStructure(g) if structure is None else structure
    use_edges = config.variant != "Z_only"
    inv_n = st.inv_rows(use_edges)
    z = nk.as_tensor(_features(g))
    prev_input = None
    outs: list[Tensor] = []
    for layer, w in enumerate(weights):
        h = nk.matmul(st.node_agg, z)
        if use_edges and st.edges:
            if layer == 0:
                e = st.epsilon(z.cols, config.seed)
            else:
                zw = nk.matmul(prev_input, weights[layer - 1])
                e = edge_signals_tensor(st.adjacency, zw, st.heads, st.tails, config.anchoring, counter)
            h = nk.add(h, nk.matmul(st.edge_agg, e))
        h = nk.mul(h, inv_n)
        prev_input = z
        z = nk.activation(nk.matmul(h, w), config.layer_activation(layer))
        outs.append(z)
    return outs


def _row_order(variant: str, n_node: int, n_edge: int, seed: int) -> np.ndarray:
    node_idx = np.arange(n_node)
    edge_idx = n_node + np.arange(n_edge)
    if variant == "Z_E":
        return np.concatenate([node_idx, edge_idx])
    if variant == "E_Z":
        return np.concatenate([edge_idx, node_idx])
    if variant == "shuf":
        return np.random.default_rng(seed).permutation(n_node + n_edge)
    if variant == "Z_only":
        return node_idx
    raise ConfigError(f"unknown variant {variant!r}")


def grn_layer(i: int, g: Graph, lrs_i: Lrs, z_prev, edge_signals: EdgeSignalSet | None, w,
              variant: str = "E_Z", activation: str = "relu", shuffle_seed: int = 0) -> Tensor:
    """One node's update, built literally as MEAN(CONCAT(rows) @ W).

    Node rows are ``A_Gi @ Z_Gi``; edge rows are the transmitted signals of
    the LRS's graph edges, each scaled by that edge's LRS weight. An empty
    LRS aggregates to the zero vector.
    """
    z_prev = nk.as_tensor(z_prev)
    w = nk.as_tensor(w)
    if z_prev.cols != w.rows:
        raise nk.ShapeError(f"features have {z_prev.cols} columns but W has {w.rows} rows")
    if lrs_i.is_empty:
        return nk.activation(nk.matmul(np.zeros((1, z_prev.cols)), w), activation)
    local = lrs_i.local_adjacency()
    node_rows = nk.matmul(local, nk.gather_rows(z_prev, list(lrs_i.nodes)))
    parts = [node_rows]
    n_edge = 0
    if variant != "Z_only":
        if edge_signals is None:
            raise ConfigError(f"variant {variant!r} needs edge signals")
        weights = lrs_i.weights
        edges = lrs_i.base_edges
        if edges:
            sig = np.vstack([np.asarray(nk.as_tensor(edge_signals.signals[e]).value).reshape(-1) for e in edges])
            scale = np.array([[weights[e]] for e in edges])
            parts.append(Tensor(sig * scale))
            n_edge = len(edges)
    stacked = nk.concat_rows(parts)
    order = _row_order(variant, node_rows.rows, n_edge, shuffle_seed)
    stacked = nk.gather_rows(stacked, order)
    return nk.activation(nk.mean_rows(nk.matmul(stacked, w)), activation)


def shuffle_seed_for(config: GrnConfig, layer: int, node: int) -> int:
    return int(np.random.SeedSequence([config.seed, layer, node]).generate_state(1)[0])


def grn_forward_literal(model: GrnModel, g: Graph, counter: PropagationCounter | None = None) -> np.ndarray:
    """Per-node reference forward (slow); edge signals are constants here."""
    cfg = model.config
    lrs_all = extract_all(g)
    z = _features(g)
    prev = None
    for layer, w in enumerate(model.weights):
        cache = None
        if cfg.variant != "Z_only" and layer > 0:
            zw = prev @ model.weights[layer - 1]
            cache = PropagationCache(g, zw, counter)
        rows = []
        for i, lrs in enumerate(lrs_all):
            sigs = None
            if cfg.variant != "Z_only":
                if layer == 0:
                    sigs = edge_signal_set(g, np.zeros((g.n, z.shape[1])), lrs, 0, cfg.anchoring, cfg.seed)
                else:
                    sigs = edge_signal_set(g, cache.zw, lrs, layer, cfg.anchoring, cfg.seed, cache=cache)
            out = grn_layer(i, g, lrs, z, sigs, w, cfg.variant, cfg.layer_activation(layer),
                            shuffle_seed_for(cfg, layer, i))
            rows.append(out.value)
        prev = z
        z = np.vstack(rows)
    return z


def grn_forward(model: GrnModel, g: Graph, structure: GrnStructure | None = None,
                counter: PropagationCounter | None = None) -> np.ndarray:
    """Final-layer output for every node (the LRS is rebuilt from ``g``)."""
    return forward_tensors(model.weights, g, model.config, structure, counter)[-1].value


def embeddings(model: GrnModel, g: Graph) -> list[np.ndarray]:
    return [z.value for z in forward_tensors(model.weights, g, model.config)]


def _round_half_up(x: float) -> int:
    return int(np.floor(x + 0.5))


def inductive_split(g: Graph, seen_rate: float, seed: int = 0) -> tuple[np.ndarray, np.ndarray]:
    """Label-stratified seen/unseen masks.

    Each class contributes ``floor(s_r * n_c)`` seen nodes; the remainder up
    to ``round(s_r * N)`` goes to the largest classes. Falls back to a plain
    uniform split (with a warning) when some class has fewer than 2 nodes.
    """
    if not 0.0 < seen_rate <= 1.0:
        raise ConfigError(f"seen rate must lie in (0, 1], got {seen_rate}")
    if g.labels is None:
        raise ConfigError("inductive split needs labels")
    rng = np.random.default_rng(seed)
    total = min(g.n, _round_half_up(seen_rate * g.n))
    seen = np.zeros(g.n, dtype=bool)
    classes = g.label_index
    counts = np.bincount(classes, minlength=g.num_classes)
    present = counts[counts > 0]
    if present.size == 0 or present.min() < 2:
        warnings.warn("a class has fewer than 2 nodes; using an unstratified split", stacklevel=2)
        seen[rng.permutation(g.n)[:total]] = True
        return seen, ~seen
    take = np.floor(seen_rate * counts).astype(int)
    order = sorted(np.flatnonzero(counts), key=lambda c: (-counts[c], c))
    extra = total - take.sum()
    for c in order:
        if extra <= 0:
            break
        if take[c] < counts[c]:
            take[c] += 1
            extra -= 1
    for c in range(g.num_classes):
        members = np.flatnonzero(classes == c)
        if members.size:
            seen[rng.permutation(members)[:take[c]]] = True
    return seen, ~seen


def _mask(mask, n: int) -> np.ndarray:
    m = np.asarray(mask)
    if m.dtype == bool:
        return m
    out = np.zeros(n, dtype=bool)
    out[m] = True
    return out


def grn_loss(weights, g: Graph, config: GrnConfig, targets: np.ndarray, row_weights: np.ndarray,
             structure: GrnStructure | None = None) -> Tensor:
    logits = forward_tensors(weights, g, config, structure)[-1]
    return nk.softmax_cross_entropy(logits, targets, row_weights)


def grn_train(config: GrnConfig, g: Graph, seen_mask=None, split_seed: int | None = None) -> GrnModel:
    """Gradient descent on cross-entropy over seen nodes only.

    Unseen labels are never read: targets are copied row by row from the
    seen set, so withholding the rest leaves the trained weights bitwise equal.
    """
    x = _features(g)
    if g.labels is None:
        raise ConfigError("training needs labels")
    if seen_mask is None:
        seen, unseen = inductive_split(g, config.seen_rate, config.seed if split_seed is None else split_seed)
    else:
        seen = _mask(seen_mask, g.n)
        unseen = ~seen
    if not seen.any():
        raise ConfigError("seen mask is empty")
    if config.dims[0] != x.shape[1] or config.dims[-1] != g.labels.shape[1]:
        raise ConfigError(f"dims {config.dims} do not match features/classes")
    idx = np.flatnonzero(seen)
    targets = np.zeros((g.n, g.labels.shape[1]))
    targets[idx] = g.labels[idx]
    if np.any(targets[idx].sum(axis=1) != 1):
        raise ConfigError("every seen node needs a label")
    row_w = seen.astype(np.float64)
    structure = GrnStructure(g)
    weights = init_weights(config.dims, config.seed)
    losses = []
    for _ in range(config.epochs):
        tape = Tape()
        ws = [tape.leaf(w) for w in weights]
        loss = grn_loss(ws, g, config, targets, row_w, structure)
        losses.append(loss.item())
        grads = nk.backward(tape, loss)
        weights = [w - config.learning_rate * grads[wt] for w, wt in zip(weights, ws)]
    model = GrnModel(config, weights, losses, seen=seen, unseen=unseen)
    model.warnings.extend(loss_window_warnings(losses))
    return model


def grn_predict(model: GrnModel, g: Graph) -> np.ndarray:
    return np.argmax(grn_forward(model, g), axis=1)


def grn_evaluate(model: GrnModel, g: Graph, mask=None) -> float:
    """Argmax accuracy over ``mask`` (ties to the lowest class index)."""
    out = grn_forward(model, g)
    m = None if mask is None else _mask(mask, g.n)
    return score_predictions(out, g, m)[1]


def neighbor_label_distribution(g: Graph) -> tuple[np.ndarray, np.ndarray]:
    if g.labels is None:
        raise ConfigError("neighbour labels needed")
    a = g.adjacency
    deg = a.sum(axis=1)
    dist = np.zeros_like(g.labels)
    has = deg > 0
    dist[has] = (a @ g.labels)[has] / deg[has, None]
    return dist, has


def unsupervised_loss(model: GrnModel, g: Graph) -> float:
    """Cross-entropy between each node's output and its neighbours' label mix.

    Averaged over nodes with at least one neighbour.
    """
    dist, has = neighbor_label_distribution(g)
    logits = grn_forward(model, g)
    return nk.softmax_cross_entropy(logits, dist, has.astype(np.float64)).item()
