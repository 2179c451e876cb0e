"""Model checkpoints and embedding export.

A checkpoint is a text file whose first line is a JSON header (model kind,
config, weight shapes) followed by every weight matrix as CSV rows, written
with 17 significant digits so a load reproduces the weights exactly.
"""
from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np

from .errors import ParseError
from .gcn import GcnConfig, GcnModel
from .grn import GrnConfig, GrnModel

FORMAT_VERSION = 1


def save_checkpoint(model: GcnModel | GrnModel, path) -> None:
    kind = "gcn" if isinstance(model, GcnModel) else "grn"
    header = {
        "format": FORMAT_VERSION,
        "kind": kind,
        "config": model.config.to_dict(),
        "shapes": [list(w.shape) for w in model.weights],
    }
    with open(path, "w", newline="") as fh:
        fh.write(json.dumps(header, sort_keys=True) + "\n")
        w = csv.writer(fh, lineterminator="\n")
        for mat in model.weights:
            for row in mat:
                w.writerow([format(float(x), ".17g") for x in row])


def load_checkpoint(path) -> GcnModel | GrnModel:
    path = Path(path)
    if not path.exists():
        raise ParseError(f"{path}: no such file")
    with open(path, newline="") as fh:
        try:
            header = json.loads(fh.readline())
        except json.JSONDecodeError as exc:
            raise ParseError(f"{path}:1: header is not JSON") from exc
        rows = list(csv.reader(fh))
    if not isinstance(header, dict) or header.get("format") != FORMAT_VERSION \
            or header.get("kind") not in ("gcn", "grn") or "config" not in header:
        raise ParseError(f"{path}:1: unsupported checkpoint header")
    weights = []
    at = 0
    try:
        shapes = [(int(r), int(c)) for r, c in header.get("shapes", ())]
    except (TypeError, ValueError) as exc:
        raise ParseError(f"{path}:1: malformed weight shapes") from exc
    for r, c in shapes:
        block = rows[at:at + r]
        if len(block) != r or any(len(row) != c for row in block):
            raise ParseError(f"{path}:{at + 2}: weight block does not match shape {r}x{c}")
        try:
            weights.append(np.array([[float(x) for x in row] for row in block]).reshape(r, c))
        except ValueError as exc:
            raise ParseError(f"{path}:{at + 2}: non-numeric weight") from exc
        at += r
    if at != len(rows):
        raise ParseError(f"{path}:{at + 2}: trailing rows after the last weight block")
    try:
        if header["kind"] == "gcn":
            return GcnModel(GcnConfig.from_dict(header["config"]), weights)
        return GrnModel(GrnConfig.from_dict(header["config"]), weights)
    except (KeyError, TypeError, ValueError) as exc:
        raise ParseError(f"{path}:1: malformed model config ({exc})") from exc


def write_embeddings(z: np.ndarray, path) -> None:
    """``node,z0,z1,...`` rows, 6 significant digits."""
    z = np.asarray(z)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["node", *(f"z{i}" for i in range(z.shape[1]))])
        for i, row in enumerate(z):
            w.writerow([i, *(f"{x:.6g}" for x in row)])
