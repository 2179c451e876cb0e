"""Structure attacks, attack success rate, and the attack-cost bound.

The gradient attack here is a greedy surrogate: a 2-layer GCN is trained on
the clean graph, and edges are flipped one at a time where the gradient of
its loss with respect to a real-valued adjacency promises the largest
increase. It stands in for heavier meta-gradient attacks.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from . import numkernel as nk
from .errors import ConfigError
from .gcn import GcnConfig, GcnModel, forward_layers, gcn_train, predict, propagation_tensor
from .graph import Graph, Perturbation, apply_perturbation
from .numkernel import Tape

ATTACK_NOTE = "greedy gradient surrogate attack (stand-in for meta-gradient attacks)"
ASR_TARGETS = "test nodes classified correctly by the clean victim"


# ---------------------------------------------------------------------------
# cost bound
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CostBound:
    n: int
    r: int
    k: int
    bound: int
    log10_bound: float
    population: int
    multiplier: int


def log10_int(x: int) -> float:
    """``log10`` of an arbitrarily large positive integer; ``-inf`` for 0."""
    if x <= 0:
        return float("-inf")
    shift = max(0, x.bit_length() - 64)
    return math.log10(x >> shift) + shift * math.log10(2)


def cost_bound(n: int, r: int, k: int) -> CostBound:
    """Upper bound on the number of perturbation sets an attacker must weigh.

    ``C(n, r)`` for ``k < 3``, otherwise ``(k - 1) * C(floor(n**(k-1) / 2), r)``.
    A budget larger than the population gives a bound of 0 (with a warning).
    """
    for name, val in (("n", n), ("r", r), ("K", k)):
        if int(val) != val or val < 1:
            raise ConfigError(f"{name} must be a positive integer, got {val}")
    n, r, k = int(n), int(r), int(k)
    if k < 3:
        population, mult = n, 1
    else:
        population, mult = n ** (k - 1) // 2, k - 1
    if r > population:
        warnings.warn(f"budget r={r} exceeds population {population}; bound is 0", stacklevel=2)
        bound = 0
    else:
        bound = mult * math.comb(population, r)
    return CostBound(n, r, k, bound, log10_int(bound), population, mult)


# ---------------------------------------------------------------------------
# perturbations
# ---------------------------------------------------------------------------

def round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


def budget_for(g: Graph, rate: float) -> int:
    return round_half_up(rate * g.num_edges)


def random_attack(g: Graph, rate: float, seed: int = 0) -> Perturbation:
    """``round(rate * |E|)`` distinct node pairs drawn uniformly and toggled."""
    if not 0.0 < rate <= 0.5:
        raise ConfigError(f"perturbation rate must lie in (0, 0.5], got {rate}")
    r = budget_for(g, rate)
    n_pairs = g.n * (g.n - 1) // 2
    if n_pairs == 0:
        raise ConfigError("graph has no node pairs to flip")
    if r > n_pairs:
        raise ConfigError(f"budget {r} exceeds the {n_pairs} available pairs")
    iu, ju = np.triu_indices(g.n, 1)
    pick = np.random.default_rng(seed).choice(n_pairs, size=r, replace=False)
    return Perturbation.of(zip(iu[pick].tolist(), ju[pick].tolist()), budget=r)


def attack_targets(g: Graph, surrogate: GcnModel, target_mask, train_mask) -> np.ndarray:
    """Soft targets for the attack loss: true labels on training nodes,
    the clean surrogate's predictions elsewhere."""
    pred, _ = predict(surrogate, g)
    targets = np.eye(g.labels.shape[1])[pred]
    train = np.asarray(train_mask, dtype=bool)
    targets[train] = g.labels[train]
    targets[~np.asarray(target_mask, dtype=bool)] = 0.0
    return targets


def surrogate_loss(model: GcnModel, adjacency, features, targets, weights) -> nk.Tensor:
    op = propagation_tensor(adjacency, model.config.operator)
    logits = forward_layers(op, features, model.weights, model.config.activations)[-1]
    return nk.softmax_cross_entropy(logits, targets, weights)


@dataclass
class GreedyTrace:
    flips: list[tuple[int, int]] = field(default_factory=list)
    losses: list[float] = field(default_factory=list)


def greedy_surrogate_attack(g: Graph, surrogate: GcnConfig | GcnModel, target_mask, budget: int,
                            train_mask=None, screen: int = 32, trace: GreedyTrace | None = None) -> Perturbation:
    """Flip up to ``budget`` pairs, one at a time, to raise the surrogate's loss.

    Each step differentiates the loss with respect to the adjacency, scores
    every pair by the first-order change its flip would cause, evaluates the
    top ``screen`` candidates exactly and keeps the best one that actually
    increases the loss. Stops early when no candidate does, so the loss is
    nondecreasing in the number of flips.
    """
    if budget < 0:
        raise ConfigError("budget must be nonnegative")
    target = np.asarray(target_mask, dtype=bool)
    train = target if train_mask is None else np.asarray(train_mask, dtype=bool)
    if isinstance(surrogate, GcnConfig):
        surrogate = gcn_train(surrogate, g, train, record_trace=False)
    x = g.features
    targets = attack_targets(g, surrogate, target, train)
    row_w = target.astype(np.float64)
    a = np.array(g.adjacency)
    flipped = np.eye(g.n, dtype=bool)
    flips: list[tuple[int, int]] = []
    current = surrogate_loss(surrogate, a, x, targets, row_w).item()
    if trace is not None:
        trace.losses.append(current)
    iu, ju = np.triu_indices(g.n, 1)
    for _ in range(budget):
        tape = Tape()
        leaf = tape.leaf(a)
        grad = nk.backward(tape, surrogate_loss(surrogate, leaf, x, targets, row_w))[leaf]
        score = (grad + grad.T) * (1.0 - 2.0 * a)
        score[flipped] = -np.inf
        cand = score[iu, ju]
        order = np.argsort(-cand, kind="stable")[:screen]
        best, best_loss = None, current
        for c in order:
            if not cand[c] > 0:
                break
            u, v = int(iu[c]), int(ju[c])
            trial = a.copy()
            trial[u, v] = trial[v, u] = 1.0 - trial[u, v]
            loss = surrogate_loss(surrogate, trial, x, targets, row_w).item()
            if loss > best_loss:
                best, best_loss = (u, v), loss
        if best is None:
            break
        u, v = best
        a[u, v] = a[v, u] = 1.0 - a[u, v]
        flipped[u, v] = flipped[v, u] = True
        flips.append(best)
        current = best_loss
        if trace is not None:
            trace.flips.append(best)
            trace.losses.append(current)
    return Perturbation.of(flips, budget=budget)


# ---------------------------------------------------------------------------
# attack success rate
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class AttackResult:
    perturbation: Perturbation
    clean_accuracy: float
    attacked_accuracy: float
    asr: float
    n_targets: int
    seeds: dict
    config: dict

    def __post_init__(self):
        if not 0.0 <= self.asr <= 1.0 and not math.isnan(self.asr):
            raise ConfigError(f"asr outside [0, 1]: {self.asr}")


def evaluate_attack(victim: GcnModel, g: Graph, perturbation: Perturbation, test_mask,
                    seeds: dict | None = None, config: dict | None = None) -> AttackResult:
    """Evasion setting: the victim keeps its weights and sees the perturbed graph.

    ASR is the fraction of test nodes correct on the clean graph that are
    misclassified after the perturbation (NaN when there are none).
    """
    test = np.asarray(test_mask, dtype=bool)
    pred_clean, acc_clean = predict(victim, g, test)
    attacked = apply_perturbation(g, perturbation)
    pred_att, acc_att = predict(victim, attacked, test)
    correct = test & (pred_clean == g.label_index)
    n_t = int(correct.sum())
    asr = float(np.mean(pred_att[correct] != g.label_index[correct])) if n_t else float("nan")
    return AttackResult(perturbation, acc_clean, acc_att, asr, n_t, dict(seeds or {}), dict(config or {}))
