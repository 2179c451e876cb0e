"""Resonance diagnostics, local resonance subgraphs and resonance-fostering GNNs."""
from .errors import ConfigError, ParseError, ShapeError, StateError
from .gcn import GcnConfig, GcnModel, gcn_forward, gcn_train, predict
from .graph import Graph, Perturbation, apply_perturbation, gen_sbm, load_graph, node_stats
from .grn import GrnConfig, GrnModel, grn_evaluate, grn_forward, grn_train, inductive_split
from .lrs import Lrs, build_global_lrs, extract_lrs
from .resonance import resonance_intensity, run_resonance_experiment

__version__ = "0.1.0"

__all__ = [
    "ConfigError", "GcnConfig", "GcnModel", "Graph", "GrnConfig", "GrnModel", "Lrs", "ParseError",
    "Perturbation", "ShapeError", "StateError", "apply_perturbation", "build_global_lrs", "extract_lrs",
    "gcn_forward", "gcn_train", "gen_sbm", "grn_evaluate", "grn_forward", "grn_train", "inductive_split",
    "load_graph", "node_stats", "predict", "resonance_intensity", "run_resonance_experiment",
]
