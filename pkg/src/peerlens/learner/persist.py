"""Versioned JSON model files.

Layout (keys sorted, floats written with shortest round-trip repr)::

    {"format": "peerlens-tree-ensemble", "version": 1, "mode": "gbt" | "rf",
     "seed": int, "n_features": int, "feature_names": [...] | null,
     "schema_fingerprint": str | null, "hyperparams": {...},
     "trees": [node, ...]}

An internal node is ``{"feature", "threshold", "missing": "left"|"right",
"gain", "grad", "cover", "left": node, "right": node}``; a leaf is
``{"leaf": score, "cover", "grad"}`` for boosted trees (score on the log-odds
scale) and ``{"leaf": positive fraction, "cover", "counts": [n0, n1]}`` for
forest trees.
"""

from __future__ import annotations

import json
import os
import tempfile
from pathlib import Path

from ._tree import Tree
from .ensemble import Hyperparams, Mode, TreeEnsembleModel

FORMAT = "peerlens-tree-ensemble"
FORMAT_VERSION = 1


class ModelFormatError(ValueError):
    """Unreadable, corrupt or incompatible model file."""

    def __init__(self, path, reason: str):
        super().__init__(f"{path}: {reason}")
        self.path = str(path)
        self.reason = reason

    def to_dict(self) -> dict:
        return {"error": "model_format", "path": self.path, "reason": self.reason}


class SchemaMismatchError(ModelFormatError):
    def to_dict(self) -> dict:
        return {"error": "schema_mismatch", "path": self.path, "reason": self.reason}


def model_to_dict(model: TreeEnsembleModel) -> dict:
    counts = model.mode is Mode.RANDOM_FOREST
    return {
        "format": FORMAT,
        "version": FORMAT_VERSION,
        "mode": model.mode.value,
        "seed": model.seed,
        "n_features": model.n_features,
        "feature_names": None if model.feature_names is None else list(model.feature_names),
        "schema_fingerprint": model.schema_fingerprint,
        "hyperparams": model.hyperparams.to_dict(),
        "trees": [t.to_node(counts=counts) for t in model.trees],
    }


def dumps(model: TreeEnsembleModel) -> str:
    return json.dumps(model_to_dict(model), sort_keys=True, separators=(",", ":"), allow_nan=False) + "\n"


def model_from_dict(doc: dict, path="<memory>") -> TreeEnsembleModel:
    if not isinstance(doc, dict) or doc.get("format") != FORMAT:
        raise ModelFormatError(path, "not a tree-ensemble model file")
    if doc.get("version") != FORMAT_VERSION:
        raise ModelFormatError(path, f"unsupported version {doc.get('version')!r}, expected {FORMAT_VERSION}")
    try:
        names = doc["feature_names"]
        model = TreeEnsembleModel(
            Mode.parse(doc["mode"]),
            tuple(Tree.from_node(t) for t in doc["trees"]),
            Hyperparams.from_dict(doc["hyperparams"]),
            int(doc["n_features"]),
            int(doc["seed"]),
            doc["schema_fingerprint"],
            None if names is None else tuple(names),
        )
    except (KeyError, TypeError, ValueError, IndexError) as exc:
        raise ModelFormatError(path, f"malformed model: {exc!r}") from None
    for t in model.trees:
        if t.feature.max(initial=-1) >= model.n_features:
            raise ModelFormatError(path, "tree splits on a feature beyond n_features")
    return model


def save(model: TreeEnsembleModel, path: str | os.PathLike) -> Path:
    """Write atomically (temporary file, then rename)."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            fh.write(dumps(model))
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return path


def load(path: str | os.PathLike, expected_fingerprint: str | None = None) -> TreeEnsembleModel:
    """Read a model file; refuse it when bound to a different schema than ``expected_fingerprint``."""
    path = Path(path)
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except (OSError, UnicodeDecodeError) as exc:
        raise ModelFormatError(path, f"cannot read: {exc}") from None
    except json.JSONDecodeError as exc:
        raise ModelFormatError(path, f"invalid JSON at line {exc.lineno} column {exc.colno}") from None
    model = model_from_dict(doc, path)
    if expected_fingerprint is not None and model.schema_fingerprint != expected_fingerprint:
        raise SchemaMismatchError(path, f"model bound to schema {model.schema_fingerprint}, "
                                        f"expected {expected_fingerprint}")
    return model
