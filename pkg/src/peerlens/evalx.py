"""Metrics and experiment drivers with seed-aggregated, deterministic reports.

Every experiment is a pure function of its snapshot(s), seeds and config.
For seed ``s`` the split and the model get their own seeds derived from
``s`` (streams ``"split"`` and ``"model"``), and resampling or missing-value
injection gets one more (``"resample"``, ``"missing"``).
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import logging
import math
import os
import tempfile
import time
from collections.abc import Callable, Iterable, Sequence
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

import numpy as np
from joblib import Parallel, delayed

from ._random import derive_seed
from .features import FeatureSchema, Variant, build_feature_table
from .ingest import Snapshot
from .learner import Hyperparams, Mode, TreeEnsembleModel, check_binding, fit_dataset
from .pairset import (PairDataset, dataset_from_snapshot, disjoint_abc, graph_context, inject_missing,
                      oversample, random_holdout, smote, temporal_pairs, undersample, unknown_pairs)

log = logging.getLogger(__name__)

METRIC_NAMES = ("overall_accuracy", "balanced_accuracy", "peering_accuracy", "non_peering_accuracy",
                "f1_positive")
RESULT_FORMAT_VERSION = 1
DEFAULT_TRAIN_FRACTIONS = (0.02, 0.05, 0.1, 0.2, 0.3, 0.5, 0.7)
DEFAULT_MISSING_FRACTIONS = (0.1, 0.2, 0.3, 0.4, 0.5)
SAMPLING_ARMS = ("none", "oversample", "undersample", "smote")


# ------------------------------------------------------------------ metrics

@dataclass(frozen=True)
class EvalReport:
    """Confusion counts and the derived rates; undefined rates are ``None``."""

    n: int
    tp: int
    fp: int
    tn: int
    fn: int
    overall_accuracy: float
    balanced_accuracy: float | None
    peering_accuracy: float | None
    non_peering_accuracy: float | None
    f1_positive: float | None
    fit_seconds: float | None = None
    eval_seconds: float | None = None

    def with_timing(self, fit_seconds=None, eval_seconds=None) -> "EvalReport":
        return replace(self, fit_seconds=fit_seconds if fit_seconds is not None else self.fit_seconds,
                       eval_seconds=eval_seconds if eval_seconds is not None else self.eval_seconds)

    def metric(self, name: str) -> float | None:
        return getattr(self, name)

    def to_dict(self, timing: bool = True) -> dict:
        d = asdict(self)
        if not timing:
            d.pop("fit_seconds")
            d.pop("eval_seconds")
        return d


def _ratio(num: int, den: int) -> float | None:
    return num / den if den else None


def metrics(y_true, y_pred) -> EvalReport:
    y_true = np.asarray(y_true).ravel()
    y_pred = np.asarray(y_pred).ravel()
    if len(y_true) != len(y_pred):
        raise ValueError(f"length mismatch: {len(y_true)} labels vs {len(y_pred)} predictions")
    if len(y_true) == 0:
        raise ValueError("no rows to score")
    for name, v in (("y_true", y_true), ("y_pred", y_pred)):
        if not np.isin(v, (0, 1)).all():
            raise ValueError(f"{name} must be 0/1")
    t, p = y_true.astype(bool), y_pred.astype(bool)
    tp, fn = int((t & p).sum()), int((t & ~p).sum())
    tn, fp = int((~t & ~p).sum()), int((~t & p).sum())
    n = len(t)
    peer = _ratio(tp, tp + fn)
    non_peer = _ratio(tn, tn + fp)
    balanced = None if peer is None or non_peer is None else (peer + non_peer) / 2
    return EvalReport(n, tp, fp, tn, fn, (tp + tn) / n, balanced, peer, non_peer,
                      _ratio(2 * tp, 2 * tp + fp + fn))


def evaluate(model: TreeEnsembleModel, dataset: PairDataset, threshold: float = 0.5) -> EvalReport:
    if dataset.y is None:
        raise ValueError("dataset has no labels")
    check_binding(model, dataset)
    t0 = time.perf_counter()
    pred = model.predict_label(dataset.X, threshold)
    return metrics(dataset.y, pred).with_timing(eval_seconds=time.perf_counter() - t0)


# --------------------------------------------------------------- reporting

@dataclass(frozen=True)
class RunRecord:
    group: str
    seed: int
    report: EvalReport
    extra: dict = field(default_factory=dict)


def _std(values: list[float]) -> float:
    m = sum(values) / len(values)
    return math.sqrt(sum((v - m) ** 2 for v in values) / len(values))


@dataclass
class ExperimentResult:
    """Per-seed reports grouped by arm, with population-std aggregates."""

    name: str
    config: dict
    runs: list[RunRecord]
    notes: list[str] = field(default_factory=list)
    artifacts: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.runs:
            raise ValueError("experiment produced no runs")

    def groups(self) -> list[str]:
        seen: dict[str, None] = {}
        for r in self.runs:
            seen.setdefault(r.group, None)
        return list(seen)

    def reports(self, group: str) -> list[EvalReport]:
        return [r.report for r in self.runs if r.group == group]

    def mean(self, group: str, metric: str) -> float | None:
        vals = [v for v in (rep.metric(metric) for rep in self.reports(group)) if v is not None]
        return sum(vals) / len(vals) if vals else None

    def aggregate(self) -> list[dict]:
        rows = []
        for g in self.groups():
            reps = self.reports(g)
            for metric in METRIC_NAMES:
                vals = [v for v in (rep.metric(metric) for rep in reps) if v is not None]
                rows.append({"group": g, "metric": metric, "n_runs": len(reps), "n_defined": len(vals),
                             "mean": sum(vals) / len(vals) if vals else None,
                             "std": _std(vals) if vals else None})
        return rows


def aggregate_from_rows(rows: Iterable[dict]) -> list[dict]:
    """Recompute aggregates from stored per-seed rows (as read back from ``reports.csv``)."""
    runs = []
    for row in rows:
        vals = {k: (None if row[k] in ("", None) else float(row[k])) for k in METRIC_NAMES}
        counts = {k: int(row[k]) for k in ("n", "tp", "fp", "tn", "fn")}
        runs.append(RunRecord(row["group"], int(row["seed"]), EvalReport(**counts, **vals)))
    return ExperimentResult("recomputed", {}, runs).aggregate()


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _csv_text(header: Sequence[str], rows: Iterable[Sequence]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([_fmt(v) for v in row])
    return buf.getvalue()


def atomic_write_text(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_result(result: ExperimentResult, directory: str | os.PathLike) -> Path:
    """reports.csv, aggregate.csv and manifest.json are deterministic; wall-clock times go to timings.csv."""
    d = Path(directory)
    extra_keys = sorted({k for r in result.runs for k in r.extra})
    counts = ("n", "tp", "fp", "tn", "fn")
    header = ["experiment", "group", "seed", *counts, *METRIC_NAMES, *extra_keys]
    rows = [[result.name, r.group, r.seed, *(getattr(r.report, k) for k in counts),
             *(r.report.metric(m) for m in METRIC_NAMES), *(r.extra.get(k) for k in extra_keys)]
            for r in result.runs]
    atomic_write_text(d / "reports.csv", _csv_text(header, rows))
    agg = result.aggregate()
    atomic_write_text(d / "aggregate.csv", _csv_text(
        ["experiment", "group", "metric", "n_runs", "n_defined", "mean", "std"],
        [[result.name, a["group"], a["metric"], a["n_runs"], a["n_defined"], a["mean"], a["std"]] for a in agg]))
    atomic_write_text(d / "timings.csv", _csv_text(
        ["experiment", "group", "seed", "fit_seconds", "eval_seconds"],
        [[result.name, r.group, r.seed, r.report.fit_seconds, r.report.eval_seconds] for r in result.runs]))
    manifest = {"format_version": RESULT_FORMAT_VERSION, "experiment": result.name, "config": result.config,
                "groups": result.groups(), "n_runs": len(result.runs), "notes": result.notes,
                "files": ["reports.csv", "aggregate.csv", "timings.csv"]}
    if result.artifacts:
        manifest["artifacts"] = sorted(result.artifacts)
        for name, payload in sorted(result.artifacts.items()):
            atomic_write_text(d / f"{name}.json", json.dumps(payload, indent=1, sort_keys=True) + "\n")
    atomic_write_text(d / "manifest.json", json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return d


def read_reports(directory: str | os.PathLike) -> list[dict]:
    with open(Path(directory) / "reports.csv", newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))


# ------------------------------------------------------------- experiments

def seed_list(master: int, n: int) -> list[int]:
    """Seeds ``master, master + 1, ..., master + n - 1``."""
    if n < 1:
        raise ValueError("need at least one seed")
    return list(range(master, master + n))


@dataclass(frozen=True)
class ExperimentConfig:
    mode: str = "gbt"
    variant: str = "optimum"
    train_fraction: float = 0.5
    threshold: float = 0.5
    hyperparams: Hyperparams = field(default_factory=Hyperparams)
    n_jobs: int | None = None

    def to_dict(self) -> dict:
        d = {f.name: getattr(self, f.name) for f in fields(self) if f.name != "n_jobs"}
        d["mode"] = Mode.parse(self.mode).value
        d["variant"] = Variant.parse(self.variant).value
        d["hyperparams"] = self.hyperparams.resolve(Mode.parse(self.mode)).to_dict()
        return d


def _fit_eval(train: PairDataset, tests: dict[str, PairDataset], cfg: ExperimentConfig, seed: int,
              n_jobs: int | None = 1) -> dict[str, EvalReport]:
    t0 = time.perf_counter()
    model = fit_dataset(train, cfg.mode, cfg.hyperparams, derive_seed(seed, "model"), n_jobs=n_jobs)
    fit_s = time.perf_counter() - t0
    return {name: evaluate(model, ds, cfg.threshold).with_timing(fit_seconds=fit_s)
            for name, ds in tests.items()}


def _parallel(fn: Callable, items: Sequence, n_jobs: int | None) -> list:
    if n_jobs in (None, 1) or len(items) <= 1:
        return [fn(x) for x in items]
    return Parallel(n_jobs=n_jobs)(delayed(fn)(x) for x in items)


def _holdout_run(dataset: PairDataset, cfg: ExperimentConfig, seed: int,
                 fraction: float | None = None) -> tuple[EvalReport, dict]:
    frac = cfg.train_fraction if fraction is None else fraction
    train, test = random_holdout(dataset, frac, derive_seed(seed, "split"))
    rep = _fit_eval(train, {"test": test}, cfg, seed)["test"]
    return rep, {"n_train": len(train)}


def exp_ablation(snapshot: Snapshot, seeds: Sequence[int], cfg: ExperimentConfig = ExperimentConfig(),
                 variants: Sequence[str] = ("default", "filtered", "optimum")) -> ExperimentResult:
    """Each feature variant on the same seeds, one holdout per seed."""
    runs = []
    for v in variants:
        ds = dataset_from_snapshot(snapshot, v).dataset
        out = _parallel(lambda s: _holdout_run(ds, cfg, s), list(seeds), cfg.n_jobs)
        runs += [RunRecord(Variant.parse(v).value, s, rep, {**extra, "width": ds.width})
                 for s, (rep, extra) in zip(seeds, out)]
    res = ExperimentResult("ablation", {**cfg.to_dict(), "variants": [Variant.parse(v).value for v in variants],
                                        "seeds": list(seeds)}, runs)
    groups = res.groups()
    if "optimum" in groups and "filtered" in groups:
        o, f = res.mean("optimum", "overall_accuracy"), res.mean("filtered", "overall_accuracy")
        res.notes.append(f"optimum mean overall {o!r} {'>=' if o >= f else '<'} filtered {f!r}")
    return res


def _resample(train: PairDataset, arm: str, seed: int) -> PairDataset:
    if arm == "none":
        return train
    s = derive_seed(seed, "resample")
    if arm == "oversample":
        return oversample(train, s)
    if arm == "undersample":
        return undersample(train, s)
    if arm == "smote":
        return smote(train, 5, s)
    raise ValueError(f"unknown sampling arm {arm!r}")


def exp_sampling(snapshot: Snapshot, seeds: Sequence[int], cfg: ExperimentConfig = ExperimentConfig(),
                 arms: Sequence[str] = SAMPLING_ARMS) -> ExperimentResult:
    """Resampling arms on identical splits; resampling touches the training side only."""
    ds = dataset_from_snapshot(snapshot, cfg.variant).dataset

    def one(seed):
        train, test = random_holdout(ds, cfg.train_fraction, derive_seed(seed, "split"))
        out = []
        for arm in arms:
            tr = _resample(train, arm, seed)
            rep = _fit_eval(tr, {"test": test}, cfg, seed)["test"]
            counts = tr.label_counts()
            out.append((arm, rep, {"n_train": len(tr), "train_peer": counts["peer"],
                                   "train_non_peer": counts["non_peer"], "test_hash": test.hash_rows()[:16]}))
        return out

    per_seed = _parallel(one, list(seeds), cfg.n_jobs)
    by_arm = {arm: [] for arm in arms}
    for s, out in zip(seeds, per_seed):
        for arm, rep, extra in out:
            by_arm[arm].append(RunRecord(arm, s, rep, extra))
    runs = [r for arm in arms for r in by_arm[arm]]
    return ExperimentResult("sampling", {**cfg.to_dict(), "arms": list(arms), "seeds": list(seeds)}, runs)


def exp_train_size(snapshot: Snapshot, fractions: Sequence[float] = DEFAULT_TRAIN_FRACTIONS,
                   seeds: Sequence[int] = (0,), cfg: ExperimentConfig = ExperimentConfig()) -> ExperimentResult:
    ds = dataset_from_snapshot(snapshot, cfg.variant).dataset
    runs = []
    for f in fractions:
        out = _parallel(lambda s: _holdout_run(ds, cfg, s, f), list(seeds), cfg.n_jobs)
        runs += [RunRecord(f"train_{f!r}", s, rep, {**extra, "fraction": f}) for s, (rep, extra) in zip(seeds, out)]
    res = ExperimentResult("train_size", {**cfg.to_dict(), "fractions": list(fractions), "seeds": list(seeds)}, runs)
    means = [res.mean(f"train_{f!r}", "overall_accuracy") for f in fractions]
    for (f0, m0), (f1, m1) in zip(zip(fractions, means), zip(fractions[1:], means[1:])):
        if m1 < m0:
            res.notes.append(f"non-monotone: mean overall falls from {m0!r} at {f0!r} to {m1!r} at {f1!r}")
    return res


def exp_transfer(snapshot: Snapshot, seeds: Sequence[int], cfg: ExperimentConfig = ExperimentConfig(),
                 internal_holdout: bool = False) -> ExperimentResult:
    """Train on pairs inside one AS half (A), test on cross pairs (B) and the other half (C)."""
    ds = dataset_from_snapshot(snapshot, cfg.variant).dataset

    def one(seed):
        abc = disjoint_abc(ds, derive_seed(seed, "split"))
        train, tests = abc.A, {"B": abc.B, "C": abc.C}
        if internal_holdout:
            train, a_test = random_holdout(abc.A, cfg.train_fraction, derive_seed(seed, "holdout-A"))
            tests = {"A_holdout": a_test, **tests}
        reps = _fit_eval(train, tests, cfg, seed)
        sizes = {"n_A": len(abc.A), "n_B": len(abc.B), "n_C": len(abc.C), "n_train": len(train)}
        return reps, sizes, sorted(abc.set1)

    out = _parallel(one, list(seeds), cfg.n_jobs)
    names = (["A_holdout"] if internal_holdout else []) + ["B", "C"]
    runs = [RunRecord(name, s, reps[name], sizes) for name in names for s, (reps, sizes, _) in zip(seeds, out)]
    partitions = {str(s): set1 for s, (_, _, set1) in zip(seeds, out)}
    return ExperimentResult("transfer", {**cfg.to_dict(), "internal_holdout": internal_holdout,
                                         "seeds": list(seeds)}, runs, artifacts={"partitions": partitions})


def exp_temporal(old_snapshot: Snapshot, new_snapshot: Snapshot, seeds: Sequence[int],
                 cfg: ExperimentConfig = ExperimentConfig()) -> ExperimentResult:
    """Fit on older-snapshot rows of the new A pairs (O); test on the new A, B and C.

    Both datasets share the older snapshot's encoders so one model serves all.
    """
    old = dataset_from_snapshot(old_snapshot, cfg.variant)
    new = dataset_from_snapshot(new_snapshot, cfg.variant, schema=old.features.schema).dataset

    def one(seed):
        abc = disjoint_abc(new, derive_seed(seed, "split"))
        O = temporal_pairs(old.dataset, abc.A)
        reps = _fit_eval(O, {"A": abc.A, "B": abc.B, "C": abc.C}, cfg, seed)
        return reps, {"n_O": len(O), "n_A": len(abc.A), "n_B": len(abc.B), "n_C": len(abc.C)}

    out = _parallel(one, list(seeds), cfg.n_jobs)
    runs = [RunRecord(name, s, reps[name], sizes) for name in ("A", "B", "C") for s, (reps, sizes) in zip(seeds, out)]
    return ExperimentResult("temporal", {**cfg.to_dict(), "old_date": old_snapshot.date.isoformat(),
                                         "new_date": new_snapshot.date.isoformat(), "seeds": list(seeds)}, runs)


def exp_missing(snapshot: Snapshot, fractions: Sequence[float] = DEFAULT_MISSING_FRACTIONS,
                seeds: Sequence[int] = (0,), cfg: ExperimentConfig = ExperimentConfig()) -> ExperimentResult:
    """Blank a fraction of every column of the assembled dataset, then split, fit and score."""
    ds = dataset_from_snapshot(snapshot, cfg.variant).dataset
    runs = []
    for f in fractions:
        def one(seed):
            damaged = inject_missing(ds, f, derive_seed(seed, "missing"))
            return _holdout_run(damaged, cfg, seed)
        out = _parallel(one, list(seeds), cfg.n_jobs)
        runs += [RunRecord(f"missing_{f!r}", s, rep, {**extra, "fraction": f}) for s, (rep, extra) in zip(seeds, out)]
    return ExperimentResult("missing", {**cfg.to_dict(), "fractions": list(fractions), "seeds": list(seeds)}, runs)


@dataclass
class UnknownSummary:
    anchors: list[int]
    n_pairs: int
    n_positive: int
    rate: float | None
    per_anchor: list[dict]
    threshold: float

    def to_dict(self) -> dict:
        return asdict(self)


def default_anchors(snapshot: Snapshot, n: int = 20) -> list[int]:
    """The ``n`` common ASes with the best (lowest) AS-Rank; ties by ASN."""
    rank = snapshot.as_rank[snapshot.as_rank["asn"].isin(list(snapshot.common_asns))]
    rank = rank.assign(_r=rank["Rank"].astype("Float64").fillna(np.inf)).sort_values(["_r", "asn"])
    return [int(a) for a in rank["asn"].head(n)]


def exp_unknown(snapshot: Snapshot, model: TreeEnsembleModel, schema: FeatureSchema,
                anchors: Sequence[int] | None = None, n_anchors: int = 20,
                threshold: float = 0.5) -> UnknownSummary:
    """Predicted-peer rate over anchor pairs that have no relationship record."""
    anchors = default_anchors(snapshot, n_anchors) if anchors is None else sorted(set(int(a) for a in anchors))
    table = build_feature_table(snapshot, schema.variant, schema)
    cones = pops = None
    if schema.variant.pair_level_columns:
        cones, pops = graph_context(snapshot)
    ds = unknown_pairs(table, anchors, snapshot.graph_relationships, cones, pops)
    if len(ds) == 0:
        return UnknownSummary(anchors, 0, 0, None, [], threshold)
    check_binding(model, ds)
    labels = model.predict_label(ds.X, threshold)
    per_anchor = []
    for a in anchors:
        mask = (ds.pairs == a).any(axis=1)
        n, k = int(mask.sum()), int(labels[mask].sum())
        per_anchor.append({"asn": a, "n_pairs": n, "n_positive": k, "rate": k / n if n else None})
    return UnknownSummary(anchors, len(ds), int(labels.sum()), float(labels.mean()), per_anchor, threshold)


def result_digest(directory: str | os.PathLike) -> str:
    """Hash of the deterministic result files (timings excluded)."""
    h = hashlib.sha256()
    for name in ("reports.csv", "aggregate.csv", "manifest.json"):
        h.update((Path(directory) / name).read_bytes())
    return h.hexdigest()
