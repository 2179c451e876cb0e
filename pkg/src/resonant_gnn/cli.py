"""Command-line entry point.

Every option can also come from a flat JSON config file (``--config``); flags
override file values, and a run manifest written by an earlier run is itself a
valid config file.
"""
from __future__ import annotations

import argparse
import json
import os
import subprocess
import sys
import time
from pathlib import Path

from . import __version__
from .attack import (ASR_TARGETS, ATTACK_NOTE, budget_for, cost_bound, evaluate_attack,
                     greedy_surrogate_attack, random_attack)
from .checkpoint import save_checkpoint, write_embeddings
from .errors import ConfigError, ParseError, StateError
from .experiments import (AttackConfig, SbmSource, TableConfig, asr_vs_depth_experiment, config_dict,
                          robustness_table_experiment, rows_to_csv, strength_correlations)
from .gcn import GcnConfig, gcn_forward, gcn_train, predict
from .graph import gen_sbm, load_graph, parse_sbm_spec
from .grn import GrnConfig, embeddings, grn_evaluate, grn_train, inductive_split, unsupervised_loss
from .lrs import build_global_lrs, extract_all, lrs_rows, write_weighted_csv
from .resonance import run_resonance_experiment


def _list(kind):
    def parse(value):
        if isinstance(value, (list, tuple)):
            return [kind(v) for v in value]
        text = str(value).strip()
        if not text:
            return []
        return [kind(v) for v in text.split(",")]
    parse.__name__ = f"{kind.__name__}_list"
    return parse


INTS, FLOATS, STRS = _list(int), _list(float), _list(str)

# name -> (converter, help)
OPTIONS = {
    "out": (str, "output directory (created if missing)"),
    "seed": (int, "seed for graph generation, splits and initialisation"),
    "workers": (int, "worker processes for experiment grids (default: $RESONANT_GNN_THREADS or 1)"),
    "synthetic": (str, "synthetic dataset, e.g. sbm:50,50"),
    "p_in": (float, "SBM within-block edge probability"),
    "p_out": (float, "SBM between-block edge probability"),
    "feature_noise": (float, "std of Gaussian noise added to one-hot SBM features"),
    "edges": (str, "edge-list file (whitespace 'u v' per line); overrides --synthetic"),
    "features": (str, "feature matrix CSV"),
    "labels": (str, "one-hot label matrix CSV"),
    "depth": (int, "number of layers"),
    "hidden": (int, "hidden width"),
    "lr": (float, "learning rate"),
    "epochs": (int, "training epochs"),
    "operator": (str, "propagation operator: sym_norm_selfloops or raw_adjacency"),
    "seen_rate": (float, "fraction of nodes whose labels are used in training"),
    "variant": (str, "GRN row layout: E_Z, Z_E, shuf or Z_only"),
    "anchoring": (str, "edge-signal anchoring: symmetric or single"),
    "ks": (INTS, "comma-separated source layers"),
    "gaps": (INTS, "comma-separated layer gaps"),
    "window": (float, "fraction of final epochs averaged in the summary"),
    "nodes": (INTS, "comma-separated centre nodes (default: all)"),
    "rate": (float, "perturbation rate (fraction of edge count)"),
    "attack": (str, "attack kind: greedy or random"),
    "train_rate": (float, "fraction of nodes used to train victim and surrogate"),
    "screen": (int, "candidates evaluated exactly per greedy step"),
    "depths": (INTS, "comma-separated victim depths"),
    "seeds": (INTS, "comma-separated seeds"),
    "models": (STRS, "comma-separated models"),
    "rates": (FLOATS, "comma-separated perturbation rates"),
    "seen_rates": (FLOATS, "comma-separated seen rates"),
    "grn_depth": (int, "GRN depth"),
    "grn_lr": (float, "GRN learning rate"),
    "grn_epochs": (int, "GRN epochs"),
    "n": (int, "number of nodes"),
    "r": (int, "perturbation budget"),
    "k": (int, "model depth"),
}

COMMON_DEFAULTS = {
    "out": "out", "seed": 0, "workers": None, "synthetic": "sbm:50,50", "p_in": 0.2, "p_out": 0.02,
    "feature_noise": 0.1, "edges": None, "features": None, "labels": None,
}
# structure-dominated SBM used by the attack experiments
HARD_SBM = {"p_in": 0.1, "p_out": 0.01, "feature_noise": 5.0}

COMMANDS = {
    "train-gcn": ("train a GCN and export weights, embeddings and accuracy",
                  {"depth": 2, "hidden": 16, "lr": 0.2, "epochs": 200,
                   "operator": "sym_norm_selfloops", "seen_rate": 0.6}),
    "train-grn": ("train a GRN inductively and report seen/unseen accuracy",
                  {"depth": 3, "hidden": 16, "lr": 1e-3, "epochs": 200, "variant": "E_Z",
                   "anchoring": "symmetric", "seen_rate": 0.6}),
    "diag-resonance": ("track the resonance gap across training of a sigmoid GCN",
                       {"depth": 5, "hidden": 4, "lr": 1.0, "epochs": 300, "ks": [0, 1],
                        "gaps": [1, 2, 3], "window": 0.2}),
    "extract-lrs": ("write local resonance subgraphs and the global LRS-weighted graph",
                    {"nodes": None}),
    "attack": ("perturb a graph and measure the victim's attack success rate",
               {**HARD_SBM, "rate": 0.2, "attack": "greedy", "depth": 2, "hidden": 16, "lr": 0.2,
                "epochs": 200, "train_rate": 0.1, "screen": 32}),
    "asr-sweep": ("attack success rate versus victim depth",
                  {**HARD_SBM, "depths": [1, 2, 3, 4, 5, 6], "rate": 0.2, "seeds": [0, 1, 2, 3, 4],
                   "train_rate": 0.1, "hidden": 16, "lr": 0.2, "epochs": 200, "screen": 32}),
    "cost-bound": ("print the attack-cost upper bound for n nodes, budget r, depth k",
                   {"n": None, "r": None, "k": None}),
    "robustness-table": ("seen/unseen accuracy of GCN and GRN variants under perturbation",
                         {**HARD_SBM, "models": ["gcn", "grn_E_Z"], "rates": [0.0, 0.2],
                          "seen_rates": [0.6], "seeds": list(range(10)), "attack": "random",
                          "hidden": 16, "lr": 0.2, "epochs": 200, "grn_depth": 3, "grn_lr": 1e-3,
                          "grn_epochs": 200}),
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="resonant-gnn", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", metavar="COMMAND")
    for name, (help_text, defaults) in COMMANDS.items():
        p = sub.add_parser(name, help=help_text, description=help_text, argument_default=argparse.SUPPRESS)
        p.add_argument("--config", help="JSON config file or run manifest")
        names = list(defaults) if name == "cost-bound" else [*COMMON_DEFAULTS, *defaults]
        for opt in dict.fromkeys(names):
            conv, help_opt = OPTIONS[opt]
            p.add_argument("--" + opt.replace("_", "-"), dest=opt, type=conv, help=help_opt)
    return parser


def read_config_file(path, command: str) -> dict:
    path = Path(path)
    if not path.exists():
        raise ParseError(f"{path}: no such file")
    try:
        data = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}:{exc.lineno}: {exc.msg}") from exc
    if not isinstance(data, dict):
        raise ParseError(f"{path}: config must be a JSON object")
    if "config" in data and "command" in data:
        if data["command"] != command:
            raise ConfigError(f"{path}: manifest is for {data['command']!r}, not {command!r}")
        data = data["config"]
    out = {}
    for key, value in data.items():
        key = key.replace("-", "_")
        if key not in OPTIONS:
            raise ConfigError(f"{path}: unknown config key {key!r}")
        out[key] = None if value is None else OPTIONS[key][0](value)
    return out


def resolve(command: str, ns: argparse.Namespace) -> dict:
    flags = {k: v for k, v in vars(ns).items() if k not in ("command", "config")}
    base = {} if command == "cost-bound" else dict(COMMON_DEFAULTS)
    base.update(COMMANDS[command][1])
    if getattr(ns, "config", None):
        file_cfg = read_config_file(ns.config, command)
        unknown = set(file_cfg) - set(base)
        if unknown:
            raise ConfigError(f"keys {sorted(unknown)} do not apply to {command}")
        base.update(file_cfg)
    base.update(flags)
    if base.get("workers") is None and "workers" in base:
        base["workers"] = int(os.environ.get("RESONANT_GNN_THREADS", "1"))
    return base


def version_string() -> str:
    try:
        res = subprocess.run(["git", "describe", "--always", "--dirty", "--tags"], cwd=Path(__file__).parent,
                             capture_output=True, text=True, timeout=5)
        if res.returncode == 0 and res.stdout.strip():
            return f"{__version__}+g{res.stdout.strip()}"
    except (OSError, subprocess.SubprocessError):
        pass
    return __version__


def emit_manifest(out: Path, command: str, config: dict, seeds, outputs, wall_time: float,
                  notes=()) -> Path:
    """Write ``manifest.json`` echoing the resolved config; returns its path."""
    out.mkdir(parents=True, exist_ok=True)
    manifest = {
        "command": command,
        "config": config,
        "seeds": sorted({int(s) for s in seeds}),
        "version": version_string(),
        "wall_time_s": wall_time,
        "outputs": list(outputs),
        "notes": list(notes),
    }
    path = out / "manifest.json"
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return path


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------

def load_dataset(cfg: dict):
    if cfg.get("edges"):
        return load_graph(cfg["edges"], cfg.get("features"), cfg.get("labels"))
    blocks = parse_sbm_spec(cfg["synthetic"])
    return gen_sbm(blocks, cfg["p_in"], cfg["p_out"], seed=cfg["seed"], feature_noise=cfg["feature_noise"])


def graph_source(cfg: dict):
    if cfg.get("edges"):
        return load_dataset(cfg)
    return SbmSource(tuple(parse_sbm_spec(cfg["synthetic"])), cfg["p_in"], cfg["p_out"], cfg["feature_noise"])


def _write(out: Path, name: str, text: str, outputs: list) -> None:
    (out / name).write_text(text)
    outputs.append(name)


def _losses_csv(losses) -> str:
    return rows_to_csv(("epoch", "loss"), list(enumerate(losses)))


def cmd_train_gcn(cfg, out, outputs):
    g = load_dataset(cfg)
    seen, unseen = inductive_split(g, cfg["seen_rate"], cfg["seed"])
    gcfg = GcnConfig.classification(g.features.shape[1], g.labels.shape[1], depth=cfg["depth"],
                                    hidden=cfg["hidden"], learning_rate=cfg["lr"], epochs=cfg["epochs"],
                                    seed=cfg["seed"], operator=cfg["operator"])
    model = gcn_train(gcfg, g, seen, record_trace=False)
    save_checkpoint(model, out / "gcn.ckpt")
    outputs.append("gcn.ckpt")
    write_embeddings(gcn_forward(model, g)[-1], out / "embeddings.csv")
    outputs.append("embeddings.csv")
    rows = [("train", predict(model, g, seen)[1]), ("test", predict(model, g, unseen)[1])]
    _write(out, "metrics.csv", rows_to_csv(("split", "accuracy"), rows), outputs)
    _write(out, "losses.csv", _losses_csv(model.losses), outputs)
    return [cfg["seed"]], model.warnings


def cmd_train_grn(cfg, out, outputs):
    g = load_dataset(cfg)
    rcfg = GrnConfig.default(g.features.shape[1], g.labels.shape[1], depth=cfg["depth"], hidden=cfg["hidden"],
                             variant=cfg["variant"], anchoring=cfg["anchoring"], seed=cfg["seed"],
                             learning_rate=cfg["lr"], epochs=cfg["epochs"], seen_rate=cfg["seen_rate"])
    model = grn_train(rcfg, g)
    save_checkpoint(model, out / "grn.ckpt")
    outputs.append("grn.ckpt")
    write_embeddings(embeddings(model, g)[-1], out / "embeddings.csv")
    outputs.append("embeddings.csv")
    rows = [("seen", grn_evaluate(model, g, model.seen)), ("unseen", grn_evaluate(model, g, model.unseen)),
            ("unsupervised_loss", unsupervised_loss(model, g))]
    _write(out, "metrics.csv", rows_to_csv(("metric", "value"), rows), outputs)
    _write(out, "losses.csv", _losses_csv(model.losses), outputs)
    return [cfg["seed"]], model.warnings


def cmd_diag_resonance(cfg, out, outputs):
    g = load_dataset(cfg)
    gcfg = GcnConfig.diagnostic(g.features.shape[1], g.labels.shape[1], depth=cfg["depth"], hidden=cfg["hidden"],
                                learning_rate=cfg["lr"], epochs=cfg["epochs"], seed=cfg["seed"])
    report = run_resonance_experiment(gcfg, g, ks=cfg["ks"], gaps=cfg["gaps"], window=cfg["window"])
    _write(out, "resonance.csv", report.to_csv(), outputs)
    rows = [(k, gap, m, s) for (k, gap), (m, s) in report.summary.items()]
    _write(out, "summary.csv", rows_to_csv(("k", "k_gap", "late_mean_d", "late_std_d"), rows), outputs)
    _write(out, "losses.csv", _losses_csv(report.losses), outputs)
    return [cfg["seed"]], []


def cmd_extract_lrs(cfg, out, outputs):
    g = load_dataset(cfg)
    all_lrs = extract_all(g)
    centers = range(g.n) if cfg["nodes"] is None else cfg["nodes"]
    rows = []
    for c in centers:
        if not 0 <= c < g.n:
            raise ConfigError(f"node {c} outside 0..{g.n - 1}")
        rows.extend(lrs_rows(all_lrs[c]))
    _write(out, "lrs.csv", rows_to_csv(("center", "u", "v", "weight", "classes"), rows), outputs)
    glrs = build_global_lrs(g)
    write_weighted_csv(glrs.weights, out / "global_lrs.csv")
    outputs.append("global_lrs.csv")
    corr_lrs, corr_rand = strength_correlations(g, cfg["seed"])
    stats = [("raw_min", glrs.raw_min), ("raw_max", glrs.raw_max),
             ("strength_corr_lrs", corr_lrs), ("strength_corr_random", corr_rand)]
    _write(out, "summary.csv", rows_to_csv(("metric", "value"), stats), outputs)
    return [cfg["seed"]], []


def cmd_attack(cfg, out, outputs):
    g = load_dataset(cfg)
    seed = cfg["seed"]
    train, test = inductive_split(g, cfg["train_rate"], seed)
    d_in, n_classes = g.features.shape[1], g.labels.shape[1]
    if cfg["attack"] == "greedy":
        surrogate = GcnConfig.classification(d_in, n_classes, depth=2, hidden=cfg["hidden"],
                                             learning_rate=cfg["lr"], epochs=cfg["epochs"], seed=seed)
        pert = greedy_surrogate_attack(g, surrogate, train | test, budget_for(g, cfg["rate"]),
                                       train_mask=train, screen=cfg["screen"])
        note = ATTACK_NOTE
    elif cfg["attack"] == "random":
        pert = random_attack(g, cfg["rate"], seed)
        note = "random pair flips"
    else:
        raise ConfigError(f"unknown attack {cfg['attack']!r}")
    victim = gcn_train(GcnConfig.classification(d_in, n_classes, depth=cfg["depth"], hidden=cfg["hidden"],
                                                learning_rate=cfg["lr"], epochs=cfg["epochs"], seed=seed),
                       g, train, record_trace=False)
    res = evaluate_attack(victim, g, pert, test)
    header = ("victim_depth", "rate", "budget", "flips", "clean_accuracy", "attacked_accuracy", "asr",
              "n_targets", "seed", "attack", "targets")
    row = (cfg["depth"], cfg["rate"], pert.budget, len(pert.flips), res.clean_accuracy, res.attacked_accuracy,
           res.asr, res.n_targets, seed, note, ASR_TARGETS)
    _write(out, "attack.csv", rows_to_csv(header, [row]), outputs)
    _write(out, "flips.csv", rows_to_csv(("u", "v"), sorted(pert.flips)), outputs)
    return [seed], [note]


def cmd_asr_sweep(cfg, out, outputs):
    acfg = AttackConfig(rate=cfg["rate"], train_rate=cfg["train_rate"], surrogate_hidden=cfg["hidden"],
                        victim_hidden=cfg["hidden"], learning_rate=cfg["lr"], epochs=cfg["epochs"],
                        screen=cfg["screen"])
    sweep = asr_vs_depth_experiment(graph_source(cfg), cfg["depths"], acfg, cfg["seeds"], cfg["workers"])
    _write(out, "asr.csv", sweep.to_csv(), outputs)
    per_seed = [(s, d, sweep.asr[i, j]) for i, s in enumerate(sweep.seeds) for j, d in enumerate(sweep.depths)]
    _write(out, "asr_per_seed.csv", rows_to_csv(("seed", "depth", "asr"), per_seed), outputs)
    return cfg["seeds"], [ATTACK_NOTE, f"ASR targets: {ASR_TARGETS}"]


def cmd_robustness_table(cfg, out, outputs):
    tcfg = TableConfig(models=tuple(cfg["models"]), rates=tuple(cfg["rates"]),
                       seen_rates=tuple(cfg["seen_rates"]), seeds=tuple(cfg["seeds"]), attack=cfg["attack"],
                       gcn_hidden=cfg["hidden"], gcn_learning_rate=cfg["lr"], gcn_epochs=cfg["epochs"],
                       grn_depth=cfg["grn_depth"], grn_hidden=cfg["hidden"], grn_learning_rate=cfg["grn_lr"],
                       grn_epochs=cfg["grn_epochs"])
    table = robustness_table_experiment(graph_source(cfg), tcfg, cfg["workers"])
    _write(out, "table.csv", table.to_csv(), outputs)
    notes = [ATTACK_NOTE] if tcfg.attack == "greedy" else []
    return cfg["seeds"], notes + [json.dumps(config_dict(tcfg), sort_keys=True)]


HANDLERS = {
    "train-gcn": cmd_train_gcn,
    "train-grn": cmd_train_grn,
    "diag-resonance": cmd_diag_resonance,
    "extract-lrs": cmd_extract_lrs,
    "attack": cmd_attack,
    "asr-sweep": cmd_asr_sweep,
    "robustness-table": cmd_robustness_table,
}


def run(argv=None) -> int:
    parser = build_parser()
    argv = sys.argv[1:] if argv is None else list(argv)
    if not argv:
        parser.print_usage(sys.stderr)
        return 2
    try:
        ns = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    if ns.command is None:
        parser.print_usage(sys.stderr)
        return 2
    try:
        cfg = resolve(ns.command, ns)
        if ns.command == "cost-bound":
            missing = [k for k in ("n", "r", "k") if cfg.get(k) is None]
            if missing:
                raise ConfigError(f"cost-bound needs --{', --'.join(missing)}")
            print(cost_bound(cfg["n"], cfg["r"], cfg["k"]).bound)
            return 0
        out = Path(cfg["out"])
        out.mkdir(parents=True, exist_ok=True)
        outputs: list[str] = []
        start = time.perf_counter()
        seeds, notes = HANDLERS[ns.command](cfg, out, outputs)
        emit_manifest(out, ns.command, cfg, seeds, outputs, time.perf_counter() - start, notes)
    except (ConfigError, ParseError, StateError) as exc:
        print(f"resonant-gnn: error: {exc}", file=sys.stderr)
        return 2
    print(f"wrote {', '.join(outputs)} and manifest.json to {out}")
    return 0


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
