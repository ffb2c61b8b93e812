"""Labeled AS-pair datasets and the sampling/splitting machinery around them.

A pair row is ``concat(f_a, f_b)`` where ``a`` is the numerically smaller
ASN, followed by ``cone_overlap`` and ``affinity_score`` for the optimum
variant. Label 1 means the pair peers, 0 means provider-customer.
"""

from __future__ import annotations

import hashlib
import json
import logging
import math
import os
from collections.abc import Iterable, Mapping, Sequence
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
import pandas as pd
from sklearn.metrics.pairwise import nan_euclidean_distances

from ._random import make_rng
from .cone import CustomerConeIndex, PairFeature, PopIndex, build_graph, customer_cones, pair_features, pop_sets
from .features import FeatureSchema, FeatureTable, Variant, build_feature_table
from .ingest import RelationshipRecord, RelKind, Snapshot

log = logging.getLogger(__name__)

DATASET_FORMAT_VERSION = 1


@dataclass
class PairDataset:
    schema: FeatureSchema
    columns: list[str]
    kinds: list[str]
    X: np.ndarray
    y: np.ndarray | None
    pairs: np.ndarray
    snapshot_date: str | None = None
    warnings: list[str] = field(default_factory=list)

    def __post_init__(self):
        if self.X.shape != (len(self.pairs), len(self.columns)):
            raise ValueError(f"X shape {self.X.shape} does not match {len(self.pairs)} pairs x {len(self.columns)} columns")
        if self.y is not None and len(self.y) != len(self.pairs):
            raise ValueError("labels and pairs differ in length")

    def __len__(self) -> int:
        return len(self.pairs)

    @property
    def width(self) -> int:
        return len(self.columns)

    @property
    def variant(self) -> Variant:
        return self.schema.variant

    @property
    def fingerprint(self) -> str:
        blob = json.dumps([self.schema.fingerprint, self.columns], separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:16]

    def label_counts(self) -> dict[str, int]:
        if self.y is None:
            return {}
        pos = int(self.y.sum())
        return {"peer": pos, "non_peer": len(self.y) - pos}

    def subset(self, idx) -> "PairDataset":
        idx = np.asarray(idx, dtype=np.int64)
        return replace(self, X=self.X[idx], y=None if self.y is None else self.y[idx],
                       pairs=self.pairs[idx], warnings=[])

    def pair_keys(self) -> list[tuple[int, int]]:
        return [(int(a), int(b)) for a, b in self.pairs]

    def drop_features(self, names: Iterable[str]) -> "PairDataset":
        """Drop per-AS features as ``_a``/``_b`` column pairs (or pair-level columns by name)."""
        drop = set()
        for name in names:
            hits = [c for c in (f"{name}_a", f"{name}_b", name) if c in self.columns]
            if not hits:
                raise KeyError(f"feature {name!r} not in dataset")
            drop.update(hits)
        keep = [i for i, c in enumerate(self.columns) if c not in drop]
        return replace(self, columns=[self.columns[i] for i in keep], kinds=[self.kinds[i] for i in keep],
                       X=self.X[:, keep], warnings=[])

    def hash_rows(self) -> str:
        """Digest of X, y and pairs; used to check a test set is untouched."""
        h = hashlib.sha256()
        h.update(np.ascontiguousarray(self.X).tobytes())
        if self.y is not None:
            h.update(np.ascontiguousarray(self.y).tobytes())
        h.update(np.ascontiguousarray(self.pairs).tobytes())
        return h.hexdigest()


def _label(rec: RelationshipRecord) -> int:
    return 1 if rec.kind is RelKind.PEER else 0


def _rows(table: FeatureTable, pairs: Sequence[tuple[int, int]], schema: FeatureSchema,
          pair_feats: Mapping[tuple[int, int], PairFeature] | None) -> np.ndarray:
    if not pairs:
        return np.empty((0, len(schema.pair_columns())))
    a = table.rows([p[0] for p in pairs])
    b = table.rows([p[1] for p in pairs])
    parts = [a, b]
    if schema.variant.pair_level_columns:
        if pair_feats is None:
            raise ValueError("optimum variant needs pair features")
        extra = np.empty((len(pairs), 2))
        for i, key in enumerate(pairs):
            pf = pair_feats.get(key) or pair_feats[(key[1], key[0])]
            extra[i] = (pf.cone_overlap, pf.affinity_score)
        parts.append(extra)
    return np.hstack(parts)


def assemble(feature_table: FeatureTable, pair_feats: Mapping[tuple[int, int], PairFeature] | None,
             relationships: Iterable[RelationshipRecord], variant=None,
             augment: bool = False) -> PairDataset:
    """One labeled row per relationship record.

    ``augment=True`` also emits each pair in flipped orientation (``_a`` is
    then the larger ASN), for training only.
    """
    schema = feature_table.schema
    if variant is not None and Variant.parse(variant) is not schema.variant:
        raise ValueError(f"feature table is {schema.variant.value}, asked for {Variant.parse(variant).value}")
    pairs, labels, warnings = [], [], []
    for rec in relationships:
        a, b = rec.pair
        if a not in feature_table or b not in feature_table:
            warnings.append(f"pair ({a},{b}) skipped: endpoint without features")
            continue
        pairs.append((a, b))
        labels.append(_label(rec))
    if warnings:
        log.warning("%d pairs skipped for missing endpoints", len(warnings))
    X = _rows(feature_table, pairs, schema, pair_feats)
    y = np.asarray(labels, dtype=np.int64)
    pair_arr = np.asarray(pairs, dtype=np.int64).reshape(-1, 2)
    if augment and len(pairs):
        n_as = len(schema.names)
        flipped = X.copy()
        flipped[:, :n_as], flipped[:, n_as:2 * n_as] = X[:, n_as:2 * n_as], X[:, :n_as]
        X = np.vstack([X, flipped])
        y = np.concatenate([y, y])
        pair_arr = np.vstack([pair_arr, pair_arr[:, ::-1]])
    return PairDataset(schema, schema.pair_columns(), schema.pair_kinds(), X, y, pair_arr, warnings=warnings)


@dataclass
class BuiltDataset:
    dataset: PairDataset
    features: FeatureTable
    cones: CustomerConeIndex
    pops: PopIndex


def graph_context(snapshot: Snapshot, include_self: bool = True,
                  pop_mode: str = "both") -> tuple[CustomerConeIndex, PopIndex]:
    graph = build_graph(snapshot.graph_relationships)
    cones = customer_cones(graph, include_self=include_self, extra_asns=snapshot.common_asns)
    return cones, pop_sets(snapshot, pop_mode)


def dataset_from_snapshot(snapshot: Snapshot, variant, schema: FeatureSchema | None = None,
                          include_self: bool = True, pop_mode: str = "both",
                          augment: bool = False) -> BuiltDataset:
    """Feature table, cones, PoPs and the assembled dataset for one snapshot."""
    variant = Variant.parse(variant)
    table = build_feature_table(snapshot, variant, schema)
    cones, pops = graph_context(snapshot, include_self, pop_mode)
    feats = None
    if variant.pair_level_columns:
        feats = pair_features(cones, pops, [r.pair for r in snapshot.relationships])
    ds = assemble(table, feats, snapshot.relationships, variant, augment=augment)
    ds.snapshot_date = snapshot.date.isoformat()
    return BuiltDataset(ds, table, cones, pops)


# ------------------------------------------------------------------ splits

def _floor(n: int, fraction: float) -> int:
    return int(math.floor(n * fraction + 1e-9))


def holdout_indices(n: int, train_fraction: float, seed: int) -> tuple[np.ndarray, np.ndarray]:
    if not 0.0 < train_fraction < 1.0:
        raise ValueError(f"train_fraction must be in (0, 1), got {train_fraction}")
    n_train = _floor(n, train_fraction)
    if n_train == 0 or n_train == n:
        raise ValueError(f"train_fraction {train_fraction} on {n} rows leaves one side empty")
    perm = make_rng(seed, "holdout").permutation(n)
    return np.sort(perm[:n_train]), np.sort(perm[n_train:])


def random_holdout(dataset: PairDataset, train_fraction: float, seed: int) -> tuple[PairDataset, PairDataset]:
    """Uniform split with ``floor(n * train_fraction)`` training rows."""
    tr, te = holdout_indices(len(dataset), train_fraction, seed)
    return dataset.subset(tr), dataset.subset(te)


@dataclass
class AbcSplit:
    A: PairDataset
    B: PairDataset
    C: PairDataset
    set1: frozenset[int]
    set2: frozenset[int]


def partition_ases(asns: Iterable[int], seed: int) -> tuple[frozenset[int], frozenset[int]]:
    universe = np.array(sorted(set(int(a) for a in asns)), dtype=np.int64)
    perm = make_rng(seed, "abc").permutation(len(universe))
    k = math.ceil(len(universe) / 2)
    return frozenset(universe[perm[:k]].tolist()), frozenset(universe[perm[k:]].tolist())


def disjoint_abc(dataset: PairDataset, seed: int) -> AbcSplit:
    """A: both endpoints in Set 1, C: both in Set 2, B: one in each."""
    set1, set2 = partition_ases(dataset.pairs.ravel().tolist(), seed)
    in1 = np.isin(dataset.pairs, np.fromiter(set1, dtype=np.int64, count=len(set1)))
    both1 = in1.all(axis=1)
    both2 = (~in1).all(axis=1)
    cross = ~(both1 | both2)
    return AbcSplit(dataset.subset(np.flatnonzero(both1)), dataset.subset(np.flatnonzero(cross)),
                    dataset.subset(np.flatnonzero(both2)), set1, set2)


def temporal_pairs(old_dataset: PairDataset, new_A: PairDataset) -> PairDataset:
    """Rows of the older dataset whose pair also appears in ``new_A``, with old features and labels."""
    wanted = set(new_A.pair_keys())
    idx = [i for i, key in enumerate(old_dataset.pair_keys()) if key in wanted]
    if not idx:
        raise ValueError("no pair of the new dataset exists in the old one")
    return old_dataset.subset(idx)


# -------------------------------------------------------------- resampling

def _classes(train: PairDataset) -> tuple[np.ndarray, np.ndarray]:
    if train.y is None:
        raise ValueError("resampling needs labels")
    pos, neg = np.flatnonzero(train.y == 1), np.flatnonzero(train.y == 0)
    if len(pos) == 0 or len(neg) == 0:
        raise ValueError("resampling needs both classes")
    return (pos, neg) if len(pos) < len(neg) else (neg, pos)


def oversample(train: PairDataset, seed: int) -> PairDataset:
    """Duplicate minority rows (uniformly, with replacement) until classes are equal."""
    minority, majority = _classes(train)
    extra = make_rng(seed, "oversample").choice(minority, size=len(majority) - len(minority), replace=True)
    return train.subset(np.concatenate([np.arange(len(train)), np.sort(extra)]))


def undersample(train: PairDataset, seed: int) -> PairDataset:
    """Drop majority rows uniformly at random until classes are equal."""
    minority, majority = _classes(train)
    keep = make_rng(seed, "undersample").choice(majority, size=len(minority), replace=False)
    return train.subset(np.sort(np.concatenate([minority, keep])))


def smote(train: PairDataset, k_neighbors: int = 5, seed: int = 0) -> PairDataset:
    """Synthetic minority rows ``x + u * (nn - x)`` until the classes balance.

    Neighbors come from NaN-aware Euclidean distance over the numeric
    columns. Categorical and boolean columns are copied from the seed row, as
    is any column where either endpoint is missing.
    """
    minority, majority = _classes(train)
    if len(minority) <= k_neighbors:
        raise ValueError(f"minority class has {len(minority)} rows; use k_neighbors < {len(minority)}")
    n_new = len(majority) - len(minority)
    if n_new == 0:
        return train.subset(np.arange(len(train)))
    numeric = np.array([k not in ("categorical", "boolean") for k in train.kinds])
    Xm = train.X[minority]
    dist = nan_euclidean_distances(Xm[:, numeric]) if numeric.any() else np.zeros((len(minority),) * 2)
    dist = np.where(np.isnan(dist), np.inf, dist)
    np.fill_diagonal(dist, np.inf)
    neighbors = np.argsort(dist, axis=1, kind="stable")[:, :k_neighbors]
    rng = make_rng(seed, "smote")
    seeds = rng.integers(0, len(minority), size=n_new)
    picks = neighbors[seeds, rng.integers(0, k_neighbors, size=n_new)]
    u = rng.random(n_new)[:, None]
    base, other = Xm[seeds], Xm[picks]
    synth = base + u * (other - base)
    copy = ~numeric[None, :] | np.isnan(synth)
    synth = np.where(copy, base, synth)
    X = np.vstack([train.X, synth])
    y = np.concatenate([train.y, np.full(n_new, train.y[minority[0]])])
    pairs = np.vstack([train.pairs, train.pairs[minority][seeds]])
    return replace(train, X=X, y=y, pairs=pairs, warnings=[])


def inject_missing(dataset: PairDataset, fraction: float, seed: int) -> PairDataset:
    """Blank exactly ``floor(fraction * n_rows)`` entries of every column, chosen per column."""
    if not 0.0 <= fraction < 1.0:
        raise ValueError(f"fraction must be in [0, 1), got {fraction}")
    X = dataset.X.copy()
    n = len(dataset)
    k = _floor(n, fraction)
    if k:
        for j in range(X.shape[1]):
            rows = make_rng(seed, "missing", j).choice(n, size=k, replace=False)
            X[rows, j] = np.nan
    return replace(dataset, X=X, warnings=[])


# ------------------------------------------------------------ unknown pairs

def unknown_pairs(feature_table: FeatureTable, anchor_asns: Iterable[int],
                  relationships: Iterable[RelationshipRecord],
                  cones: CustomerConeIndex | None = None, pops: PopIndex | None = None) -> PairDataset:
    """Unlabeled rows for every (anchor, other) pair with no relationship record of either kind."""
    known = {r.pair for r in relationships}
    anchors = sorted(set(int(a) for a in anchor_asns))
    missing = [a for a in anchors if a not in feature_table]
    if missing:
        raise ValueError(f"anchors without features: {missing[:5]}")
    everyone = [int(a) for a in feature_table.asns]
    pairs = set()
    for a in anchors:
        for o in everyone:
            if o == a:
                continue
            key = (min(a, o), max(a, o))
            if key not in known:
                pairs.add(key)
    pairs = sorted(pairs)
    schema = feature_table.schema
    feats = None
    if schema.variant.pair_level_columns:
        if cones is None or pops is None:
            raise ValueError("optimum variant needs cones and PoPs")
        feats = pair_features(cones, pops, pairs)
    X = _rows(feature_table, pairs, schema, feats)
    return PairDataset(schema, schema.pair_columns(), schema.pair_kinds(), X, None,
                       np.asarray(pairs, dtype=np.int64).reshape(-1, 2))


# ------------------------------------------------------------------- cache

def save_dataset(dataset: PairDataset, directory: str | os.PathLike) -> Path:
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    frame = pd.DataFrame(dataset.X, columns=dataset.columns)
    frame.insert(0, "pair_label", pd.array(dataset.y if dataset.y is not None else [None] * len(dataset), dtype="Int64"))
    # feature columns already include asn_a/asn_b, so the keys get their own names
    frame.insert(0, "pair_b", dataset.pairs[:, 1])
    frame.insert(0, "pair_a", dataset.pairs[:, 0])
    frame.to_csv(d / "dataset.csv", index=False, na_rep="", float_format="%.17g", lineterminator="\n")
    (d / "schema.json").write_text(json.dumps(
        {"schema": dataset.schema.to_dict(), "columns": dataset.columns, "kinds": dataset.kinds},
        indent=2, sort_keys=True) + "\n")
    manifest = {"format_version": DATASET_FORMAT_VERSION, "variant": dataset.variant.value,
                "snapshot_date": dataset.snapshot_date, "rows": len(dataset), "width": dataset.width,
                "label_counts": dataset.label_counts(), "fingerprint": dataset.fingerprint}
    (d / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return d


def load_dataset(directory: str | os.PathLike) -> PairDataset:
    d = Path(directory)
    manifest = json.loads((d / "manifest.json").read_text())
    if manifest.get("format_version") != DATASET_FORMAT_VERSION:
        raise ValueError(f"unsupported dataset format {manifest.get('format_version')}")
    meta = json.loads((d / "schema.json").read_text())
    schema = FeatureSchema.from_dict(meta["schema"])
    frame = pd.read_csv(d / "dataset.csv", dtype={"pair_label": "Int64"}, float_precision="round_trip")
    labels = frame["pair_label"]
    y = None if labels.isna().all() and len(frame) else labels.to_numpy(np.int64)
    return PairDataset(schema, list(meta["columns"]), list(meta["kinds"]),
                       frame[meta["columns"]].to_numpy(float), y,
                       frame[["pair_a", "pair_b"]].to_numpy(np.int64), manifest.get("snapshot_date"))
