"""Feature importance: impurity decrease, split gain, sampled Shapley values and drop curves."""

from __future__ import annotations

import os
from collections.abc import Sequence
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ._random import make_rng
from .evalx import ExperimentConfig, ExperimentResult, RunRecord, _holdout_run, _parallel, _csv_text, atomic_write_text
from .features import DROP_ORDER
from .learner import Mode, TreeEnsembleModel
from .pairset import PairDataset


@dataclass
class ImportanceReport:
    method: str
    features: list[str]
    scores: np.ndarray
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.scores = np.asarray(self.scores, dtype=float)
        if len(self.scores) != len(self.features):
            raise ValueError("one score per feature")

    def as_dict(self) -> dict[str, float]:
        return dict(zip(self.features, self.scores.tolist()))

    def ranking(self) -> list[str]:
        """Most important first; ties keep feature order."""
        order = np.argsort(-self.scores, kind="stable")
        return [self.features[i] for i in order]

    def by_base_feature(self) -> "ImportanceReport":
        """Sum the ``_a`` and ``_b`` columns of each per-AS feature."""
        totals: dict[str, float] = {}
        for name, s in zip(self.features, self.scores):
            base = name[:-2] if name.endswith(("_a", "_b")) else name
            totals[base] = totals.get(base, 0.0) + float(s)
        return ImportanceReport(self.method, list(totals), np.array(list(totals.values())), dict(self.meta))

    def write(self, directory: str | os.PathLike, name: str = "importance.csv") -> Path:
        path = Path(directory) / name
        atomic_write_text(path, _csv_text(["feature", "score"], zip(self.features, self.scores.tolist())))
        return path


def _names(model: TreeEnsembleModel, feature_names) -> list[str]:
    if feature_names is not None:
        names = list(feature_names)
    elif model.feature_names is not None:
        names = list(model.feature_names)
    else:
        names = [f"f{i}" for i in range(model.n_features)]
    if len(names) != model.n_features:
        raise ValueError("feature_names length does not match the model")
    return names


def _gain_totals(tree, n_features: int) -> np.ndarray:
    internal = tree.feature >= 0
    return np.bincount(tree.feature[internal], weights=tree.gain[internal], minlength=n_features)


def mdi_importance(model: TreeEnsembleModel, feature_names=None) -> ImportanceReport:
    """Mean decrease in Gini impurity, weighted by node sample fraction.

    Each tree's scores are normalized before averaging over trees, then the
    average is normalized again.
    """
    if model.mode is not Mode.RANDOM_FOREST:
        raise ValueError("MDI is defined for forest models; use gain_importance for boosted ones")
    total = np.zeros(model.n_features)
    for tree in model.trees:
        # stored gain is half the count-weighted Gini decrease
        imp = 2.0 * _gain_totals(tree, model.n_features) / tree.cover[0]
        s = imp.sum()
        if s > 0:
            total += imp / s
    total /= len(model.trees)
    if total.sum() <= 0:
        raise ValueError("no tree in the model has a split")
    return ImportanceReport("mdi", _names(model, feature_names), total / total.sum(),
                            {"n_trees": len(model.trees)})


def gain_importance(model: TreeEnsembleModel, feature_names=None) -> ImportanceReport:
    """Total split gain per feature over all trees, normalized."""
    total = np.zeros(model.n_features)
    for tree in model.trees:
        total += _gain_totals(tree, model.n_features)
    if total.sum() <= 0:
        raise ValueError("no tree in the model has a split")
    return ImportanceReport("gain", _names(model, feature_names), total / total.sum(),
                            {"n_trees": len(model.trees)})


# ---------------------------------------------------------------- Shapley

def _model_fn(model, link: str):
    if not isinstance(model, TreeEnsembleModel):
        return model  # plain callable on a 2-D array
    if link == "probability":
        return model.predict_proba
    if link == "margin":
        return model.decision_function
    raise ValueError(f"unknown link {link!r}")


def _permutations(rng, d: int, n: int) -> np.ndarray:
    """``n`` permutations of ``range(d)`` in antithetic pairs (each followed by its reverse)."""
    out = np.empty((n, d), dtype=np.int64)
    for i in range(0, n, 2):
        p = rng.permutation(d)
        out[i] = p
        if i + 1 < n:
            out[i + 1] = p[::-1]
    return out


def shapley_row(f, x: np.ndarray, background: np.ndarray, n_permutations: int, rng,
                fixed_background: bool = True, chunk_rows: int = 200_000) -> np.ndarray:
    """Permutation-sampling Shapley values of ``f`` at ``x``.

    With ``fixed_background`` every permutation is scored against the whole
    background set, so the values sum to ``f(x) - mean(f(background))``
    exactly. Otherwise each permutation draws one background row at random.
    """
    d = len(x)
    perms = _permutations(rng, d, n_permutations)
    rank = np.argsort(perms, axis=1)
    steps = np.arange(d + 1)
    phi = np.zeros(d)
    if fixed_background:
        bg = background
    else:
        bg_idx = rng.integers(0, len(background), size=n_permutations)
    k = len(background) if fixed_background else 1
    per_perm = (d + 1) * k
    batch = max(1, chunk_rows // per_perm)
    for start in range(0, n_permutations, batch):
        stop = min(n_permutations, start + batch)
        r = rank[start:stop]
        take_x = r[:, None, :] < steps[None, :, None]  # (p, d+1, d)
        if fixed_background:
            hybrid = np.where(take_x[:, :, None, :], x[None, None, None, :], bg[None, None, :, :])
            v = f(hybrid.reshape(-1, d)).reshape(stop - start, d + 1, k).mean(axis=2)
        else:
            z = background[bg_idx[start:stop]]
            hybrid = np.where(take_x, x[None, None, :], z[:, None, :])
            v = f(hybrid.reshape(-1, d)).reshape(stop - start, d + 1)
        delta = np.diff(v, axis=1)  # contribution of the feature added at each step
        phi += np.take_along_axis(delta, r, axis=1).sum(axis=0)
    return phi / n_permutations


def shapley_sampled(model, data, n_rows_sample: int | None, n_permutations: int, seed: int,
                    background_size: int | None = 64, link: str = "probability",
                    feature_names=None, n_jobs: int | None = None) -> ImportanceReport:
    """Mean Shapley value per feature over a seeded sample of rows.

    ``data`` is a ``PairDataset`` or a 2-D array. The background is a
    seeded sample of ``background_size`` dataset rows (``None`` draws one
    random row per permutation). ``n_rows_sample=None`` explains every row.
    """
    X = data.X if isinstance(data, PairDataset) else np.asarray(data, dtype=float)
    if feature_names is None and isinstance(data, PairDataset):
        feature_names = data.columns
    if len(X) == 0:
        raise ValueError("no rows to explain")
    if n_permutations < 1:
        raise ValueError("n_permutations must be >= 1")
    n = len(X) if n_rows_sample is None else n_rows_sample
    if not 1 <= n <= len(X):
        raise ValueError(f"n_rows_sample must be in [1, {len(X)}]")
    rows = np.sort(make_rng(seed, "shapley-rows").choice(len(X), size=n, replace=False))
    fixed = background_size is not None
    if fixed:
        b = min(background_size, len(X))
        background = X[np.sort(make_rng(seed, "shapley-background").choice(len(X), size=b, replace=False))]
    else:
        background = X
    f = _model_fn(model, link)

    def one(i):
        return shapley_row(f, X[i], background, n_permutations, make_rng(seed, "shapley", int(i)), fixed)

    phis = np.vstack(_parallel(one, rows.tolist(), n_jobs))
    if feature_names is None:
        feature_names = _names(model, None) if isinstance(model, TreeEnsembleModel) else \
            [f"f{i}" for i in range(X.shape[1])]
    base = float(np.mean(f(background))) if fixed else None
    return ImportanceReport("shapley", list(feature_names), phis.mean(axis=0),
                            {"n_rows": int(n), "n_permutations": n_permutations, "link": link,
                             "background_size": background_size, "baseline": base,
                             "mean_abs": np.abs(phis).mean(axis=0).tolist(), "rows": rows.tolist(),
                             "per_row": phis})


# -------------------------------------------------------- sequential drop

def drop_order_from_importance(report: ImportanceReport) -> list[str]:
    """Per-AS features ordered least important first (summing ``_a`` and ``_b``)."""
    base = report.by_base_feature()
    keep = [(s, i, f) for i, (f, s) in enumerate(zip(base.features, base.scores))
            if f not in ("cone_overlap", "affinity_score")]
    return [f for _, _, f in sorted(keep)]


def sequential_drop(dataset: PairDataset, drop_order: Sequence[str] = DROP_ORDER, mode="gbt",
                    seeds: Sequence[int] = (0,), cfg: ExperimentConfig | None = None,
                    max_k: int | None = None) -> ExperimentResult:
    """Drop the first ``k`` features (as ``_a``/``_b`` pairs), retrain and score, for growing ``k``.

    Steps that would leave no column are skipped and noted.
    """
    cfg = cfg or ExperimentConfig(mode=mode)
    cfg = ExperimentConfig(mode, dataset.variant.value, cfg.train_fraction, cfg.threshold,
                           cfg.hyperparams, cfg.n_jobs)
    names = set(dataset.schema.names)
    unknown = [f for f in drop_order if f not in names]
    if unknown:
        raise KeyError(f"features not in dataset: {unknown}")
    if len(set(drop_order)) != len(drop_order):
        raise ValueError("drop order repeats a feature")
    last = len(drop_order) if max_k is None else min(max_k, len(drop_order))
    runs, notes = [], []
    for k in range(last + 1):
        ds = dataset.drop_features(drop_order[:k])
        if ds.width == 0:
            notes.append(f"k={k} skipped: no columns left")
            continue
        out = _parallel(lambda s: _holdout_run(ds, cfg, s), list(seeds), cfg.n_jobs)
        kept = [f for f in dataset.schema.names if f not in set(drop_order[:k])]
        for s, (rep, extra) in zip(seeds, out):
            runs.append(RunRecord(f"drop_{k}", s, rep, {**extra, "k": k, "width": ds.width,
                                                        "last_dropped": drop_order[k - 1] if k else "",
                                                        "n_kept_features": len(kept)}))
    return ExperimentResult("sequential_drop", {**cfg.to_dict(), "drop_order": list(drop_order),
                                                "seeds": list(seeds)}, runs, notes)
