"""Resonance intensity, its observed counterpart, and the layer-gap diagnostic."""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError
from .gcn import GcnConfig, gcn_train
from .graph import Graph, NodeStats, node_stats

STD_GUARD = 1e-12
CONVERGENCE_WINDOW = 0.2
RESONANCE_CSV_HEADER = ("epoch", "k", "k_gap", "mean_d", "std_d")


def resonance_intensity(g: Graph, zbar, stats: NodeStats | None = None) -> np.ndarray:
    """``R_i = zbar_i * T_i + 2 p_i + 8 deg_i`` for every node."""
    stats = node_stats(g) if stats is None else stats
    zbar = np.asarray(zbar, dtype=np.float64)
    return zbar * stats.t + 2.0 * stats.p + 8.0 * stats.deg


def resonance_observed(zbar_shifted) -> np.ndarray:
    """``64 * zbar - 32`` applied to latent sums taken ``k_gap`` layers later."""
    return 64.0 * np.asarray(zbar_shifted, dtype=np.float64) - 32.0


def standardize(seq, axis: int = 0) -> np.ndarray:
    """Zero-mean, unit population-std rescaling along ``axis``.

    Sequences whose std falls below 1e-12 map to zeros.
    """
    x = np.asarray(seq, dtype=np.float64)
    if x.shape[axis] < 2:
        raise ConfigError("standardize needs at least two values")
    mean = x.mean(axis=axis, keepdims=True)
    std = x.std(axis=axis, keepdims=True)
    safe = np.where(std < STD_GUARD, 1.0, std)
    return np.where(std < STD_GUARD, 0.0, (x - mean) / safe)


@dataclass(frozen=True)
class ResonanceTrace:
    """Per-epoch ``R_def(k)`` and ``R_real(k + k_gap)``, shaped epochs x nodes."""

    r_def: np.ndarray
    r_real: np.ndarray
    k: int
    k_gap: int

    def __post_init__(self):
        if np.shape(self.r_def) != np.shape(self.r_real):
            raise ConfigError(f"sequence shapes differ: {np.shape(self.r_def)} vs {np.shape(self.r_real)}")


def diff_sequence(trace: ResonanceTrace) -> np.ndarray:
    """``|STD(R_def) - STD(R_real)|`` per epoch (and per node, column-wise)."""
    return np.abs(standardize(trace.r_def, axis=0) - standardize(trace.r_real, axis=0))


def trace_from_latents(g: Graph, latents: np.ndarray, k: int, k_gap: int, stats: NodeStats | None = None) -> ResonanceTrace:
    """Build a trace from an ``epochs x (K+1) x N`` array of latent sums."""
    depth = latents.shape[1] - 1
    if k < 0 or k_gap < 1 or k + k_gap > depth:
        raise ConfigError(f"layers k={k}, k+k_gap={k + k_gap} not available in a {depth}-layer trace")
    stats = node_stats(g) if stats is None else stats
    r_def = np.stack([resonance_intensity(g, z, stats) for z in latents[:, k]])
    r_real = resonance_observed(latents[:, k + k_gap])
    return ResonanceTrace(r_def, r_real, k, k_gap)


@dataclass
class ResonanceReport:
    rows: list[tuple[int, int, int, float, float]]
    summary: dict[tuple[int, int], tuple[float, float]]
    losses: list[float]

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(RESONANCE_CSV_HEADER)
        for epoch, k, gap, mean, std in self.rows:
            w.writerow([epoch, k, gap, f"{mean:.6g}", f"{std:.6g}"])
        return buf.getvalue()

    def late_mean(self, k: int, k_gap: int) -> float:
        return self.summary[(k, k_gap)][0]


def run_resonance_experiment(config: GcnConfig, g: Graph, ks=(0, 1), gaps=(1, 2, 3),
                             window: float = CONVERGENCE_WINDOW, train_mask=None) -> ResonanceReport:
    """Train once, then compare ``R_def(k)`` with ``R_real(k+k_gap)`` over epochs.

    ``summary[(k, k_gap)]`` is the node-mean of ``d`` averaged over the last
    ``window`` fraction of epochs, with the std of that late node-mean.
    """
    for k in ks:
        for gap in gaps:
            if k + gap > config.depth:
                raise ConfigError(f"depth {config.depth} is too shallow for k={k}, k_gap={gap}")
    if config.epochs < 2:
        raise ConfigError("need at least two epochs to standardize")
    mask = np.ones(g.n, dtype=bool) if train_mask is None else train_mask
    model = gcn_train(config, g, mask)
    stats = node_stats(g)
    rows = []
    summary = {}
    late = max(1, int(round(window * config.epochs)))
    for k in ks:
        for gap in gaps:
            d = diff_sequence(trace_from_latents(g, model.trace, k, gap, stats))
            node_mean = d.mean(axis=1)
            node_std = d.std(axis=1)
            for epoch in range(config.epochs):
                rows.append((epoch, k, gap, float(node_mean[epoch]), float(node_std[epoch])))
            tail = node_mean[-late:]
            summary[(k, gap)] = (float(tail.mean()), float(tail.std()))
    return ResonanceReport(rows, summary, model.losses)
