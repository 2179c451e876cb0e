"""K-layer GCN: forward propagation, full-batch training and latent row sums."""
from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from . import numkernel as nk
from .errors import ConfigError, StateError
from .graph import OPERATORS, Graph, propagation_matrix
from .numkernel import ACTIVATIONS, Tape, Tensor

LOSS_WINDOW = 20


@dataclass(frozen=True)
class GcnConfig:
    """Architecture and training settings.

    ``dims`` lists ``d_0 .. d_K``; ``activations`` has one entry per layer.
    """

    dims: tuple[int, ...]
    activations: tuple[str, ...]
    operator: str = "sym_norm_selfloops"
    learning_rate: float = 0.2
    epochs: int = 200
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "dims", tuple(int(d) for d in self.dims))
        object.__setattr__(self, "activations", tuple(self.activations))
        if len(self.dims) < 2:
            raise ConfigError("a GCN needs at least one layer (two dims)")
        if any(d <= 0 for d in self.dims):
            raise ConfigError(f"layer dims must be positive, got {self.dims}")
        if len(self.activations) != self.depth:
            raise ConfigError(f"{self.depth} layers need {self.depth} activations, got {len(self.activations)}")
        for a in self.activations:
            if a not in ACTIVATIONS:
                raise ConfigError(f"unknown activation {a!r}")
        if self.operator not in OPERATORS:
            raise ConfigError(f"unknown operator {self.operator!r}")
        if self.epochs < 0:
            raise ConfigError("epochs must be nonnegative")

    @property
    def depth(self) -> int:
        return len(self.dims) - 1

    @classmethod
    def classification(cls, d_in: int, n_classes: int, depth: int = 2, hidden: int = 16, **kw) -> GcnConfig:
        """ReLU hidden layers, identity output, symmetric-normalised operator."""
        if depth < 1:
            raise ConfigError("depth must be >= 1")
        dims = (d_in, *([hidden] * (depth - 1)), n_classes)
        acts = ("relu",) * (depth - 1) + ("identity",)
        kw.setdefault("operator", "sym_norm_selfloops")
        return cls(dims, acts, **kw)

    @classmethod
    def diagnostic(cls, d_in: int, n_classes: int, depth: int = 5, hidden: int = 4, **kw) -> GcnConfig:
        """Sigmoid on every layer over the raw adjacency, no self-loops."""
        if depth < 1:
            raise ConfigError("depth must be >= 1")
        dims = (d_in, *([hidden] * (depth - 1)), n_classes)
        kw.setdefault("operator", "raw_adjacency")
        kw.setdefault("learning_rate", 1.0)
        kw.setdefault("epochs", 300)
        return cls(dims, ("sigmoid",) * depth, **kw)

    def to_dict(self) -> dict:
        return {
            "dims": list(self.dims),
            "activations": list(self.activations),
            "operator": self.operator,
            "learning_rate": self.learning_rate,
            "epochs": self.epochs,
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, d: dict) -> GcnConfig:
        return cls(tuple(d["dims"]), tuple(d["activations"]), d["operator"],
                   float(d["learning_rate"]), int(d["epochs"]), int(d["seed"]))


@dataclass
class GcnModel:
    config: GcnConfig
    weights: list[np.ndarray]
    trace: np.ndarray | None = None  # epochs x (K+1) x N row sums of Z^(k)
    losses: list[float] = field(default_factory=list)
    warnings: list[str] = field(default_factory=list)


def init_weights(dims, seed: int) -> list[np.ndarray]:
    """Glorot-uniform matrices, one per consecutive pair of dims."""
    rng = np.random.default_rng(seed)
    out = []
    for d_in, d_out in zip(dims[:-1], dims[1:]):
        s = np.sqrt(6.0 / (d_in + d_out))
        out.append(rng.uniform(-s, s, size=(d_in, d_out)))
    return out


def propagation_tensor(adjacency, kind: str) -> Tensor:
    """Tape-aware version of :func:`graph.propagation_matrix`.

    Lets gradients reach a (relaxed, real-valued) adjacency.
    """
    a = nk.as_tensor(adjacency)
    if kind == "raw_adjacency":
        return a
    if kind == "sym_norm_selfloops":
        a_hat = nk.add(a, np.eye(a.rows))
        inv_sqrt = nk.power(nk.row_sums(a_hat), -0.5)
        return nk.mul(nk.mul(a_hat, inv_sqrt), nk.transpose(inv_sqrt))
    raise ConfigError(f"unknown operator {kind!r}")


def forward_layers(op, features, weights, activations, up_to: int | None = None) -> list[Tensor]:
    """``Z^(k) = act_k(op @ Z^(k-1) @ W_k)`` for ``k = 1..up_to``."""
    z = nk.as_tensor(features)
    out = []
    n_layers = len(weights) if up_to is None else up_to
    for w, act in zip(weights[:n_layers], activations[:n_layers]):
        z = nk.activation(nk.matmul(nk.matmul(op, z), w), act)
        out.append(z)
    return out


def _require_features(g: Graph) -> np.ndarray:
    if g.features is None:
        raise StateError("graph has no features")
    return g.features


def _operator(model_or_config, g: Graph, adjacency=None) -> np.ndarray:
    cfg = model_or_config.config if isinstance(model_or_config, GcnModel) else model_or_config
    a = g.adjacency if adjacency is None else adjacency
    return propagation_matrix(a, cfg.operator)


def gcn_forward(model: GcnModel, g: Graph, up_to_layer: int | None = None, adjacency=None) -> list[np.ndarray]:
    """Layer outputs ``Z^(1) .. Z^(k)``.

    ``adjacency`` substitutes a (weighted) matrix for the graph's own, which is
    how LRS-weighted or randomly weighted graphs are fed to a trained model.
    """
    x = _require_features(g)
    k = model.config.depth if up_to_layer is None else up_to_layer
    if not 0 <= k <= model.config.depth:
        raise ConfigError(f"up_to_layer must be in [0, {model.config.depth}]")
    op = _operator(model, g, adjacency)
    zs = forward_layers(op, x, model.weights, model.config.activations, k)
    return [z.value for z in zs]


def latent_sum(z) -> np.ndarray:
    """Per-node row sum of a layer output."""
    return np.asarray(nk.as_tensor(z).value).sum(axis=1)


def _mask_array(mask, n: int) -> np.ndarray:
    m = np.zeros(n, dtype=bool)
    m[np.asarray(mask)] = True
    return m


def gcn_loss(weights, op, features, labels, mask, activations) -> Tensor:
    logits = forward_layers(op, features, weights, activations)[-1]
    return nk.softmax_cross_entropy(logits, labels, mask.astype(np.float64))


def gcn_train(config: GcnConfig, g: Graph, train_mask, adjacency=None, record_trace: bool = True) -> GcnModel:
    """Full-batch gradient descent on masked softmax cross-entropy.

    The trace holds, for every epoch, the latent row sums of ``Z^(0)..Z^(K)``
    from that epoch's forward pass (taken before the weight update).
    """
    x = _require_features(g)
    if g.labels is None:
        raise ConfigError("training needs labels")
    mask = _mask_array(train_mask, g.n) if np.asarray(train_mask).dtype != bool else np.asarray(train_mask)
    if mask.shape != (g.n,) or not mask.any():
        raise ConfigError("train mask is empty")
    if config.dims[0] != x.shape[1] or config.dims[-1] != g.labels.shape[1]:
        raise ConfigError(
            f"dims {config.dims} do not match features ({x.shape[1]}) / classes ({g.labels.shape[1]})")
    if np.any(g.labels[mask].sum(axis=1) != 1):
        raise ConfigError("every training node needs a label")

    op = propagation_matrix(g.adjacency if adjacency is None else adjacency, config.operator)
    weights = init_weights(config.dims, config.seed)
    trace = np.zeros((config.epochs, config.depth + 1, g.n)) if record_trace else None
    losses: list[float] = []
    z0 = latent_sum(x)
    for epoch in range(config.epochs):
        tape = Tape()
        ws = [tape.leaf(w) for w in weights]
        zs = forward_layers(op, x, ws, config.activations)
        loss = nk.softmax_cross_entropy(zs[-1], g.labels, mask.astype(np.float64))
        if trace is not None:
            trace[epoch, 0] = z0
            for k, z in enumerate(zs, start=1):
                trace[epoch, k] = z.value.sum(axis=1)
        losses.append(loss.item())
        grads = nk.backward(tape, loss)
        weights = [w - config.learning_rate * grads[wt] for w, wt in zip(weights, ws)]

    model = GcnModel(config, weights, trace, losses)
    model.warnings.extend(loss_window_warnings(losses))
    return model


def loss_window_warnings(losses, window: int = LOSS_WINDOW) -> list[str]:
    out = []
    for start in range(0, max(0, len(losses) - window)):
        if losses[start + window] > losses[start]:
            out.append(f"training loss rose over epochs {start}..{start + window}")
            break
    return out


def predict(model: GcnModel, g: Graph, mask=None, adjacency=None) -> tuple[np.ndarray, float]:
    """Argmax class per node (ties go to the lowest index) and masked accuracy."""
    out = gcn_forward(model, g, adjacency=adjacency)[-1]
    return score_predictions(out, g, mask)


def score_predictions(out: np.ndarray, g: Graph, mask=None) -> tuple[np.ndarray, float]:
    pred = np.argmax(out, axis=1)
    if g.labels is None:
        return pred, float("nan")
    m = np.ones(g.n, dtype=bool) if mask is None else np.asarray(mask)
    if m.dtype != bool:
        m = _mask_array(m, g.n)
    if not m.any():
        return pred, float("nan")
    return pred, float(np.mean(pred[m] == g.label_index[m]))


def with_weights(model: GcnModel, weights) -> GcnModel:
    return replace(model, weights=[np.array(w, dtype=np.float64) for w in weights])
