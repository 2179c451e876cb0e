"""Experiment grids: ASR versus depth, robustness tables and LRS-graph checks.

Every cell is a pure function of its (config, seed) and the grids can be fanned
out to a process pool; results come back in cell order regardless of the pool.
"""
from __future__ import annotations

import csv
import io
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass
from typing import Callable, Sequence

import numpy as np

from .attack import ATTACK_NOTE, ASR_TARGETS, budget_for, evaluate_attack, greedy_surrogate_attack, random_attack
from .errors import ConfigError
from .gcn import GcnConfig, gcn_train, predict
from .graph import Graph, apply_perturbation, gen_sbm, strength_distribution
from .grn import VARIANTS, GrnConfig, grn_evaluate, grn_train, inductive_split
from .lrs import build_global_lrs, pearson, random_weighted_control

GraphSource = Graph | Callable[[int], Graph]


@dataclass(frozen=True)
class SbmSource:
    """Picklable SBM factory: the graph seed is the cell seed."""

    blocks: tuple[int, ...]
    p_in: float
    p_out: float
    feature_noise: float = 0.1

    def __call__(self, seed: int) -> Graph:
        return gen_sbm(self.blocks, self.p_in, self.p_out, seed=seed, feature_noise=self.feature_noise)


def graph_for(source: GraphSource, seed: int) -> Graph:
    return source if isinstance(source, Graph) else source(seed)


def run_cells(fn, cells: Sequence, workers: int = 1) -> list:
    if workers <= 1 or len(cells) <= 1:
        return [fn(c) for c in cells]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, cells))


def fmt(x) -> str:
    if isinstance(x, (float, np.floating)):
        return f"{float(x):.6g}"
    return str(x)


def rows_to_csv(header: Sequence[str], rows: Sequence[Sequence]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([fmt(x) for x in row])
    return buf.getvalue()


def _nan_stats(values) -> tuple[float, float]:
    arr = np.asarray(values, dtype=np.float64)
    arr = arr[~np.isnan(arr)]
    if arr.size == 0:
        return float("nan"), float("nan")
    return float(arr.mean()), float(arr.std())


# ---------------------------------------------------------------------------
# ASR versus depth
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class AttackConfig:
    rate: float = 0.2
    train_rate: float = 0.1
    surrogate_hidden: int = 16
    victim_hidden: int = 16
    learning_rate: float = 0.2
    epochs: int = 200
    screen: int = 32


def _asr_cell(args) -> list[float]:
    source, seed, depths, cfg = args
    g = graph_for(source, seed)
    n_classes = g.labels.shape[1]
    d_in = g.features.shape[1]
    train, test = inductive_split(g, cfg.train_rate, seed)
    surrogate = GcnConfig.classification(d_in, n_classes, depth=2, hidden=cfg.surrogate_hidden,
                                         learning_rate=cfg.learning_rate, epochs=cfg.epochs, seed=seed)
    pert = greedy_surrogate_attack(g, surrogate, train | test, budget_for(g, cfg.rate),
                                   train_mask=train, screen=cfg.screen)
    out = []
    for depth in depths:
        victim = gcn_train(GcnConfig.classification(d_in, n_classes, depth=depth, hidden=cfg.victim_hidden,
                                                    learning_rate=cfg.learning_rate, epochs=cfg.epochs,
                                                    seed=seed), g, train, record_trace=False)
        out.append(evaluate_attack(victim, g, pert, test).asr)
    return out


@dataclass
class AsrSweep:
    depths: tuple[int, ...]
    seeds: tuple[int, ...]
    asr: np.ndarray  # seeds x depths
    config: AttackConfig

    def mean(self, depth: int) -> float:
        return _nan_stats(self.asr[:, self.depths.index(depth)])[0]

    HEADER = ("depth", "mean_asr", "std_asr", "n_seeds", "rate", "train_rate", "surrogate_depth",
              "surrogate_hidden", "victim_hidden", "learning_rate", "epochs", "screen", "attack", "targets")

    def to_csv(self) -> str:
        c = self.config
        rows = []
        for i, depth in enumerate(self.depths):
            m, s = _nan_stats(self.asr[:, i])
            rows.append((depth, m, s, len(self.seeds), c.rate, c.train_rate, 2, c.surrogate_hidden,
                         c.victim_hidden, c.learning_rate, c.epochs, c.screen, ATTACK_NOTE, ASR_TARGETS))
        return rows_to_csv(self.HEADER, rows)


def asr_vs_depth_experiment(source: GraphSource, depths=(1, 2, 3, 4, 5, 6), config: AttackConfig = AttackConfig(),
                            seeds=(0, 1, 2, 3, 4), workers: int = 1) -> AsrSweep:
    """Evasion ASR of victim GCNs of each depth against one surrogate attack per seed.

    Per seed: split nodes, train a 2-layer surrogate, compute the greedy
    perturbation once, then train a clean victim of every depth and score it
    on the perturbed graph.
    """
    if not depths:
        raise ConfigError("need at least one depth")
    cells = [(source, s, tuple(depths), config) for s in seeds]
    asr = np.array(run_cells(_asr_cell, cells, workers), dtype=np.float64).reshape(len(seeds), len(depths))
    return AsrSweep(tuple(depths), tuple(seeds), asr, config)


# ---------------------------------------------------------------------------
# robustness table
# ---------------------------------------------------------------------------

GCN_MODELS = ("gcn", "gcn_lrs", "gcn_random")
MODELS = GCN_MODELS + tuple(f"grn_{v}" for v in VARIANTS)


@dataclass(frozen=True)
class TableConfig:
    models: tuple[str, ...] = ("gcn", "grn_E_Z")
    rates: tuple[float, ...] = (0.0, 0.2)
    seen_rates: tuple[float, ...] = (0.6,)
    seeds: tuple[int, ...] = tuple(range(10))
    attack: str = "random"
    gcn_hidden: int = 16
    gcn_learning_rate: float = 0.2
    gcn_epochs: int = 200
    grn_depth: int = 3
    grn_hidden: int = 16
    grn_learning_rate: float = 1e-3
    grn_epochs: int = 200

    def __post_init__(self):
        for m in self.models:
            if m not in MODELS:
                raise ConfigError(f"unknown model {m!r}; expected one of {MODELS}")
        if self.attack not in ("random", "greedy"):
            raise ConfigError(f"unknown attack {self.attack!r}")
        for r in self.rates:
            if not 0.0 <= r <= 0.5:
                raise ConfigError(f"perturbation rate {r} outside [0, 0.5]")


def perturb(g: Graph, rate: float, seed: int, attack: str = "random", train_mask=None) -> Graph:
    """Poisoned copy of ``g``; rate 0 returns ``g`` itself."""
    if rate == 0:
        return g
    if attack == "random":
        p = random_attack(g, rate, seed)
    else:
        mask = np.ones(g.n, dtype=bool) if train_mask is None else train_mask
        surrogate = GcnConfig.classification(g.features.shape[1], g.labels.shape[1], seed=seed)
        p = greedy_surrogate_attack(g, surrogate, np.ones(g.n, dtype=bool), budget_for(g, rate), train_mask=mask)
    return apply_perturbation(g, p)


def _fit_and_score(model: str, g: Graph, seen, unseen, seed: int, cfg: TableConfig) -> tuple[float, float]:
    d_in, n_classes = g.features.shape[1], g.labels.shape[1]
    if model in GCN_MODELS:
        adjacency = None
        if model == "gcn_lrs":
            adjacency = build_global_lrs(g).weights
        elif model == "gcn_random":
            adjacency = random_weighted_control(g, seed)
        gcfg = GcnConfig.classification(d_in, n_classes, hidden=cfg.gcn_hidden,
                                        learning_rate=cfg.gcn_learning_rate, epochs=cfg.gcn_epochs, seed=seed)
        m = gcn_train(gcfg, g, seen, adjacency=adjacency, record_trace=False)
        return predict(m, g, seen, adjacency)[1], predict(m, g, unseen, adjacency)[1]
    variant = model[len("grn_"):]
    rcfg = GrnConfig.default(d_in, n_classes, depth=cfg.grn_depth, hidden=cfg.grn_hidden, variant=variant,
                             learning_rate=cfg.grn_learning_rate, epochs=cfg.grn_epochs, seed=seed)
    m = grn_train(rcfg, g, seen)
    return grn_evaluate(m, g, seen), grn_evaluate(m, g, unseen)


def _table_cell(args) -> tuple[float, float]:
    source, model, rate, seen_rate, seed, cfg = args
    clean = graph_for(source, seed)
    seen, unseen = inductive_split(clean, seen_rate, seed)
    g = perturb(clean, rate, seed, cfg.attack, seen)
    return _fit_and_score(model, g, seen, unseen, seed, cfg)


@dataclass
class RobustnessTable:
    config: TableConfig
    scores: dict  # (model, rate, seen_rate) -> array seeds x 2 (seen, unseen)

    HEADER = ("model", "rate", "seen_rate", "mean_seen_acc", "std_seen_acc", "mean_unseen_acc",
              "std_unseen_acc", "repetitions", "attack", "gcn_hidden", "gcn_learning_rate", "gcn_epochs",
              "grn_depth", "grn_hidden", "grn_learning_rate", "grn_epochs")

    def mean(self, model: str, rate: float, seen_rate: float, column: int = 1) -> float:
        return _nan_stats(self.scores[(model, rate, seen_rate)][:, column])[0]

    def to_csv(self) -> str:
        c = self.config
        attack = ATTACK_NOTE if c.attack == "greedy" else "random pair flips"
        rows = []
        for (model, rate, sr), arr in self.scores.items():
            ms, ss = _nan_stats(arr[:, 0])
            mu, su = _nan_stats(arr[:, 1])
            rows.append((model, rate, sr, ms, ss, mu, su, len(c.seeds), attack, c.gcn_hidden,
                         c.gcn_learning_rate, c.gcn_epochs, c.grn_depth, c.grn_hidden,
                         c.grn_learning_rate, c.grn_epochs))
        return rows_to_csv(self.HEADER, rows)


def robustness_table_experiment(source: GraphSource, config: TableConfig = TableConfig(),
                                workers: int = 1) -> RobustnessTable:
    """Perturb, train, and score seen/unseen accuracy for every grid cell and seed."""
    keys = [(m, r, s) for m in config.models for r in config.rates for s in config.seen_rates]
    cells = [(source, m, r, s, seed, config) for m, r, s in keys for seed in config.seeds]
    flat = run_cells(_table_cell, cells, workers)
    n = len(config.seeds)
    scores = {key: np.array(flat[i * n:(i + 1) * n], dtype=np.float64).reshape(n, 2) for i, key in enumerate(keys)}
    return RobustnessTable(config, scores)


# ---------------------------------------------------------------------------
# LRS-weighted graph versus the plain and randomly weighted graphs
# ---------------------------------------------------------------------------

def strength_correlations(g: Graph, seed: int = 0) -> tuple[float, float]:
    """Pearson correlation of strength distributions with the plain graph:
    ``(LRS-weighted, randomly weighted)``."""
    base = strength_distribution(g.adjacency)
    lrs = strength_distribution(build_global_lrs(g).weights)
    rand = strength_distribution(random_weighted_control(g, seed))
    return pearson(lrs, base), pearson(rand, base)


def config_dict(cfg) -> dict:
    out = asdict(cfg)
    return {k: list(v) if isinstance(v, tuple) else v for k, v in out.items()}

