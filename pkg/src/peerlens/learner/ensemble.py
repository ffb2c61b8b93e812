"""Random forest and gradient-boosted tree ensembles over the shared grower."""

from __future__ import annotations

import enum
import math
from dataclasses import asdict, dataclass, fields, replace

import numpy as np
from joblib import Parallel, delayed
from scipy.special import expit

from .._random import make_rng
from ._tree import Tree, grow_tree


class Mode(str, enum.Enum):
    RANDOM_FOREST = "rf"
    GRADIENT_BOOSTED = "gbt"

    @classmethod
    def parse(cls, value) -> "Mode":
        if isinstance(value, Mode):
            return value
        aliases = {"rf": cls.RANDOM_FOREST, "forest": cls.RANDOM_FOREST, "randomforest": cls.RANDOM_FOREST,
                   "gbt": cls.GRADIENT_BOOSTED, "xgb": cls.GRADIENT_BOOSTED, "boosted": cls.GRADIENT_BOOSTED,
                   "gradientboosted": cls.GRADIENT_BOOSTED}
        try:
            return aliases[str(value).lower().replace("_", "").replace("-", "")]
        except KeyError:
            raise ValueError(f"unknown mode {value!r}; use rf or gbt") from None


@dataclass(frozen=True)
class Hyperparams:
    """Ensemble settings. ``None`` fields take the mode's default on :meth:`resolve`.

    Boosted defaults: 100 rounds, depth 6, learning rate 0.3, L2 1,
    min child weight 1, no row or column subsampling. Forest defaults: 100
    trees, unlimited depth, ``sqrt(width)`` candidate features per split.
    """

    n_trees: int | None = None
    max_depth: int | None = None
    learning_rate: float = 0.3
    l2_lambda: float = 1.0
    min_child_weight: float = 1.0
    subsample: float = 1.0
    colsample: float = 1.0
    forest_features_per_split: str | int | float = "sqrt"
    bootstrap: bool = True

    def resolve(self, mode: Mode) -> "Hyperparams":
        hp = self
        if hp.n_trees is None:
            hp = replace(hp, n_trees=100)
        if hp.max_depth is None and mode is Mode.GRADIENT_BOOSTED:
            hp = replace(hp, max_depth=6)
        hp.validate()
        return hp

    def validate(self) -> None:
        if self.n_trees is not None and self.n_trees < 0:
            raise ValueError("n_trees must be >= 0")
        if self.max_depth is not None and self.max_depth < 1:
            raise ValueError("max_depth must be >= 1")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if self.l2_lambda < 0:
            raise ValueError("l2_lambda must be >= 0")
        if self.min_child_weight < 0:
            raise ValueError("min_child_weight must be >= 0")
        for name in ("subsample", "colsample"):
            v = getattr(self, name)
            if not 0 < v <= 1:
                raise ValueError(f"{name} must be in (0, 1]")
        fps = self.forest_features_per_split
        if isinstance(fps, str):
            if fps not in ("sqrt", "log2", "all"):
                raise ValueError(f"forest_features_per_split {fps!r} not in sqrt/log2/all")
        elif isinstance(fps, bool) or fps <= 0:
            raise ValueError("forest_features_per_split must be positive")

    def features_per_split(self, width: int) -> int:
        fps = self.forest_features_per_split
        if fps == "sqrt":
            k = math.isqrt(width)
        elif fps == "log2":
            k = int(math.log2(width)) if width > 1 else 1
        elif fps == "all":
            k = width
        elif isinstance(fps, float) and fps <= 1.0:
            k = int(fps * width)
        else:
            k = int(fps)
        return max(1, min(width, k))

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "Hyperparams":
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown hyperparameters {sorted(unknown)}")
        return cls(**data)


@dataclass(frozen=True, eq=False)
class TreeEnsembleModel:
    """Immutable fitted ensemble bound to one feature layout."""

    mode: Mode
    trees: tuple[Tree, ...]
    hyperparams: Hyperparams
    n_features: int
    seed: int
    schema_fingerprint: str | None = None
    feature_names: tuple[str, ...] | None = None

    def _check(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        if X.ndim == 1:
            X = X.reshape(1, -1)
        if X.ndim != 2 or X.shape[1] != self.n_features:
            raise ValueError(f"expected {self.n_features} columns, got shape {X.shape}")
        if np.isinf(X).any():
            raise ValueError("infinite feature values; use NaN for missing")
        return X

    def decision_function(self, X) -> np.ndarray:
        """Summed leaf scores (boosted) or mean leaf frequency (forest)."""
        X = self._check(X)
        if self.mode is Mode.RANDOM_FOREST:
            if not self.trees:
                raise ValueError("forest has no trees")
            total = np.zeros(len(X))
            for tree in self.trees:
                total += tree.predict(X)
            return total / len(self.trees)
        margin = np.zeros(len(X))
        for tree in self.trees:
            margin += tree.predict(X)
        return margin

    def staged_decision_function(self, X):
        """Boosted margin after each round, starting from the empty ensemble."""
        if self.mode is not Mode.GRADIENT_BOOSTED:
            raise ValueError("staged margins are defined for boosted models")
        X = self._check(X)
        margin = np.zeros(len(X))
        yield margin.copy()
        for tree in self.trees:
            margin += tree.predict(X)
            yield margin.copy()

    def predict_proba(self, X) -> np.ndarray:
        """Probability of the peering class for every row."""
        out = self.decision_function(X)
        if self.mode is Mode.GRADIENT_BOOSTED:
            return expit(out)
        return out

    def predict_label(self, X, threshold: float = 0.5) -> np.ndarray:
        return (self.predict_proba(X) >= threshold).astype(np.int64)


def _check_training(X, y) -> tuple[np.ndarray, np.ndarray]:
    X = np.asarray(X, dtype=float)
    y = np.asarray(y)
    if X.ndim != 2:
        raise ValueError("X must be 2-D")
    if len(X) != len(y):
        raise ValueError(f"{len(X)} rows but {len(y)} labels")
    if len(y) < 2:
        raise ValueError("need at least 2 training rows")
    if np.isinf(X).any():
        raise ValueError("infinite feature values; use NaN for missing")
    if not np.isin(y, (0, 1)).all():
        raise ValueError("labels must be 0/1")
    y = y.astype(np.int64)
    if y.min() == y.max():
        raise ValueError("training data holds a single class")
    return X, y


def _forest_tree(X, y, hp: Hyperparams, seed: int, t: int) -> Tree:
    rng = make_rng(seed, "forest", t)
    n, d = X.shape
    if hp.bootstrap:
        idx = rng.integers(0, n, size=n)
        Xb, yb = X[idx], y[idx]
    else:
        Xb, yb = X, y
    k = hp.features_per_split(d)

    def blocks():
        perm = rng.permutation(d)
        for start in range(0, d, k):
            yield np.sort(perm[start:start + k])

    g = yb.astype(float)
    return grow_tree(Xb, yb, g, np.ones(len(yb)), lam=0.0, max_depth=hp.max_depth,
                     min_child_weight=1.0, leaf_value=lambda G, H: G / H,
                     feature_blocks=blocks, stop_when_pure=True)


def _fit_forest(X, y, hp: Hyperparams, seed: int, n_jobs: int | None) -> tuple[Tree, ...]:
    if hp.n_trees == 0:
        raise ValueError("forest needs at least one tree")
    if n_jobs in (None, 1) or hp.n_trees == 1:
        return tuple(_forest_tree(X, y, hp, seed, t) for t in range(hp.n_trees))
    trees = Parallel(n_jobs=n_jobs)(delayed(_forest_tree)(X, y, hp, seed, t) for t in range(hp.n_trees))
    return tuple(trees)


def _fit_boosted(X, y, hp: Hyperparams, seed: int) -> tuple[Tree, ...]:
    n, d = X.shape
    margin = np.zeros(n)
    trees = []
    lam, lr = hp.l2_lambda, hp.learning_rate
    all_features = np.arange(d)
    for r in range(hp.n_trees):
        rng = make_rng(seed, "boost", r)
        p = expit(margin)
        g, h = p - y, p * (1.0 - p)
        rows = np.arange(n)
        if hp.subsample < 1.0:
            rows = np.sort(rng.choice(n, size=max(1, int(hp.subsample * n)), replace=False))
        cols = all_features
        if hp.colsample < 1.0:
            cols = np.sort(rng.choice(d, size=max(1, int(hp.colsample * d)), replace=False))
        tree = grow_tree(X[rows], y[rows], g[rows], h[rows], lam=lam, max_depth=hp.max_depth,
                         min_child_weight=hp.min_child_weight,
                         leaf_value=lambda G, H: -G / (H + lam) * lr,
                         feature_blocks=lambda: iter((cols,)), stop_when_pure=False)
        trees.append(tree)
        margin += tree.predict(X)
    return tuple(trees)


def fit(X, y, mode="gbt", hyperparams: Hyperparams | None = None, seed: int = 0,
        n_jobs: int | None = None, schema_fingerprint: str | None = None,
        feature_names=None) -> TreeEnsembleModel:
    """Train an ensemble; identical inputs and seed give an identical model."""
    mode = Mode.parse(mode)
    hp = (hyperparams or Hyperparams()).resolve(mode)
    X, y = _check_training(X, y)
    if seed < 0:
        raise ValueError("seed must be non-negative")
    if feature_names is not None and len(feature_names) != X.shape[1]:
        raise ValueError("feature_names length does not match X")
    if mode is Mode.RANDOM_FOREST:
        trees = _fit_forest(X, y, hp, seed, n_jobs)
    else:
        trees = _fit_boosted(X, y, hp, seed)
    return TreeEnsembleModel(mode, trees, hp, X.shape[1], int(seed), schema_fingerprint,
                             None if feature_names is None else tuple(feature_names))


def fit_dataset(dataset, mode="gbt", hyperparams: Hyperparams | None = None, seed: int = 0,
                n_jobs: int | None = None) -> TreeEnsembleModel:
    """:func:`fit` on a labeled ``PairDataset``, binding its fingerprint."""
    if dataset.y is None:
        raise ValueError("dataset has no labels")
    return fit(dataset.X, dataset.y, mode, hyperparams, seed, n_jobs,
               schema_fingerprint=dataset.fingerprint, feature_names=dataset.columns)


def check_binding(model: TreeEnsembleModel, dataset) -> None:
    if model.schema_fingerprint is not None and model.schema_fingerprint != dataset.fingerprint:
        raise ValueError(f"model is bound to schema {model.schema_fingerprint}, "
                         f"dataset has {dataset.fingerprint}")


def predict_proba(model: TreeEnsembleModel, rows) -> np.ndarray:
    return model.predict_proba(rows)


def predict_label(model: TreeEnsembleModel, rows, threshold: float = 0.5) -> np.ndarray:
    return model.predict_label(rows, threshold)


def logistic_loss(y, margin) -> float:
    """Mean binary log loss at the given margins, computed stably."""
    y = np.asarray(y, dtype=float)
    margin = np.asarray(margin, dtype=float)
    return float(np.mean(np.logaddexp(0.0, margin) - y * margin))
