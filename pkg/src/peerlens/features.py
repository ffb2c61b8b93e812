"""Per-AS feature selection, label encoding and feature correlation.

The column lists below are fixed results of the original feature study and
are versioned with ``SCHEMA_VERSION``; they are not recomputed per run.
"""

from __future__ import annotations

import enum
import hashlib
import json
import logging
import os
from collections.abc import Mapping, Sequence
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import pandas as pd
from scipy.cluster.hierarchy import leaves_list, linkage
from scipy.spatial.distance import squareform
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .ingest import AS_RANK_KINDS, PEERINGDB_KINDS, Snapshot

log = logging.getLogger(__name__)

SCHEMA_VERSION = 1

# AS-Rank's 18 columns followed by PeeringDB's 40 minus its duplicate asn and
# its registration id: 58 - 2 = 56 columns per AS.
MERGED_FEATURES: tuple[str, ...] = tuple(AS_RANK_KINDS) + tuple(
    c for c in PEERINGDB_KINDS if c not in ("asn", "id"))

REMOVED_FEATURES: tuple[str, ...] = (
    "Clique-Member", "IXP", "Seen", "status", "policy_ratio", "info_unicast", "rir_status",
    "policy_general", "rir_status_updated", "route_server", "status_dashboard",
    "info_multicast", "policy_contracts", "info_never_via_route_servers", "info_ipv6",
)

DEFAULT_FEATURES: tuple[str, ...] = tuple(c for c in MERGED_FEATURES if c not in REMOVED_FEATURES)

FILTERED_FEATURES: tuple[str, ...] = (
    "customer", "peer", "NumberAddrs", "NumberPrefix", "total", "Rank", "NumberASNs",
    "info_prefixes4", "ix_count", "info_prefixes6", "fac_count", "provider", "asn",
    "Latitude", "created", "Longitude",
)

# least important first
DROP_ORDER: tuple[str, ...] = (
    "allow_ixp_update", "name_long", "info_type", "info_ratio", "notes", "info_types",
    "policy_url", "info_scope", "Source", "policy_locations", "aka", "asnName",
    "looking_glass", "name", "Country", "website", "poc_updated", "irr_as_set", "Org",
    "info_traffic", "netfac_updated", "netixlan_updated", "social_media", "updated",
    "org_id", "Longitude", "created", "Latitude", "asn", "provider", "fac_count",
    "info_prefixes6", "ix_count", "info_prefixes4", "NumberASNs", "Rank", "total",
    "NumberPrefix", "NumberAddrs", "peer", "customer",
)

PAIR_FEATURES: tuple[str, ...] = ("cone_overlap", "affinity_score")

_SOURCE_KINDS = {**AS_RANK_KINDS, **PEERINGDB_KINDS}
_KIND_OF = {"int": "numeric", "real": "numeric", "bool": "boolean",
            "text": "categorical", "datetime": "datetime"}
FEATURE_KINDS: dict[str, str] = {c: _KIND_OF[_SOURCE_KINDS[c]] for c in MERGED_FEATURES}
FEATURE_KINDS.update({"cone_overlap": "numeric", "affinity_score": "numeric"})


class Variant(str, enum.Enum):
    DEFAULT = "default"
    FILTERED = "filtered"
    OPTIMUM = "optimum"

    @classmethod
    def parse(cls, value) -> "Variant":
        if isinstance(value, Variant):
            return value
        try:
            return cls(str(value).lower())
        except ValueError:
            raise ValueError(f"unknown feature variant {value!r}") from None

    @property
    def per_as_columns(self) -> tuple[str, ...]:
        return DEFAULT_FEATURES if self is Variant.DEFAULT else FILTERED_FEATURES

    @property
    def pair_level_columns(self) -> tuple[str, ...]:
        return PAIR_FEATURES if self is Variant.OPTIMUM else ()


@dataclass(frozen=True)
class FeatureSchema:
    """Ordered per-AS columns with kinds and fitted categorical code maps."""

    variant: Variant
    columns: tuple[tuple[str, str], ...]
    encoders: Mapping[str, tuple[str, ...]] = field(default_factory=dict)
    version: int = SCHEMA_VERSION

    @property
    def names(self) -> list[str]:
        return [n for n, _ in self.columns]

    @property
    def kinds(self) -> dict[str, str]:
        return dict(self.columns)

    def pair_columns(self) -> list[str]:
        """Column names of a pair row: all ``_a`` columns, all ``_b`` columns, then pair-level ones."""
        names = self.names
        return ([f"{n}_a" for n in names] + [f"{n}_b" for n in names]
                + list(self.variant.pair_level_columns))

    def pair_kinds(self) -> list[str]:
        kinds = [k for _, k in self.columns]
        return kinds + kinds + [FEATURE_KINDS[c] for c in self.variant.pair_level_columns]

    def to_dict(self) -> dict:
        return {"version": self.version, "variant": self.variant.value,
                "columns": [list(c) for c in self.columns],
                "encoders": {k: list(v) for k, v in sorted(self.encoders.items())}}

    @classmethod
    def from_dict(cls, d: Mapping) -> "FeatureSchema":
        if d.get("version") != SCHEMA_VERSION:
            raise ValueError(f"unsupported schema version {d.get('version')}")
        return cls(Variant.parse(d["variant"]), tuple((n, k) for n, k in d["columns"]),
                   {k: tuple(v) for k, v in d["encoders"].items()})

    @property
    def fingerprint(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:16]


@dataclass
class FeatureTable:
    """Encoded per-AS rows; missing entries are NaN."""

    schema: FeatureSchema
    asns: np.ndarray
    values: np.ndarray
    warnings: list[str] = field(default_factory=list)

    def __post_init__(self):
        self._pos = {int(a): i for i, a in enumerate(self.asns)}

    def __contains__(self, asn) -> bool:
        return int(asn) in self._pos

    def row(self, asn: int) -> np.ndarray:
        return self.values[self._pos[int(asn)]]

    def rows(self, asns: Sequence[int]) -> np.ndarray:
        return self.values[[self._pos[int(a)] for a in asns]]

    def to_frame(self) -> pd.DataFrame:
        df = pd.DataFrame(self.values, columns=self.schema.names)
        df.insert(0, "key_asn", self.asns)
        return df


def select_features(snapshot: Snapshot, variant) -> pd.DataFrame:
    """Merged per-AS attribute table for the common ASes, restricted to ``variant``'s columns."""
    variant = Variant.parse(variant)
    common = sorted(snapshot.common_asns)
    rank = snapshot.as_rank.set_index("asn").loc[common]
    pdb = snapshot.peeringdb_net.set_index("asn").loc[common].drop(columns=["id"])
    merged = pd.concat([rank, pdb], axis=1)
    merged.insert(0, "asn", pd.array(common, dtype="Int64"))
    merged = merged.reset_index(drop=True)
    raw = merged[list(variant.per_as_columns)].copy()
    raw.attrs["variant"] = variant.value
    return raw


def _text_key(v) -> str:
    return str(v)


def fit_encoders(raw: pd.DataFrame, variant=None) -> FeatureSchema:
    """Derive column kinds and lexicographic code maps for categorical columns."""
    if raw.empty:
        raise ValueError("cannot fit encoders on an empty table")
    variant = Variant.parse(variant or raw.attrs.get("variant", "default"))
    columns = []
    encoders = {}
    for name in raw.columns:
        if name not in FEATURE_KINDS:
            raise ValueError(f"unknown feature column {name!r}")
        kind = FEATURE_KINDS[name]
        columns.append((name, kind))
        if kind == "categorical":
            vals = {_text_key(v) for v in raw[name] if not pd.isna(v)}
            encoders[name] = tuple(sorted(vals))
    return FeatureSchema(variant, tuple(columns), encoders)


def _encode_column(series: pd.Series, kind: str, codes: Mapping[str, int] | None,
                   warnings: list[str], name: str) -> np.ndarray:
    out = np.full(len(series), np.nan)
    if kind == "numeric":
        vals = pd.to_numeric(series, errors="coerce").astype("Float64")
        mask = vals.notna().to_numpy()
        out[mask] = vals[mask].astype(float).to_numpy()
    elif kind == "boolean":
        for i, v in enumerate(series):
            if not pd.isna(v):
                out[i] = 1.0 if bool(v) else 0.0
    elif kind == "datetime":
        ts = pd.to_datetime(series, utc=True, errors="coerce")
        mask = ts.notna().to_numpy()
        out[mask] = ts[mask].astype("int64").to_numpy() / 1e9
    elif kind == "categorical":
        unseen = set()
        for i, v in enumerate(series):
            if pd.isna(v):
                continue
            code = codes.get(_text_key(v))
            if code is None:
                unseen.add(_text_key(v))
            else:
                out[i] = code
        if unseen:
            msg = f"{name}: {len(unseen)} unseen categorical value(s) encoded as missing"
            log.warning(msg)
            warnings.append(msg)
    else:
        raise ValueError(f"unknown kind {kind!r}")
    return out


def encode(raw: pd.DataFrame, schema: FeatureSchema, asns: Sequence[int] | None = None) -> FeatureTable:
    """Encode ``raw`` under ``schema``. ``asns`` defaults to the table's ``asn`` column."""
    if list(raw.columns) != schema.names:
        raise ValueError(f"column mismatch: table has {list(raw.columns)}, schema expects {schema.names}")
    if asns is None:
        if "asn" not in raw.columns:
            raise ValueError("asns must be given when the table has no asn column")
        asns = raw["asn"]
    warnings: list[str] = []
    cols = []
    for name, kind in schema.columns:
        codes = {v: i for i, v in enumerate(schema.encoders.get(name, ()))} if kind == "categorical" else None
        cols.append(_encode_column(raw[name], kind, codes, warnings, name))
    values = np.column_stack(cols) if cols else np.empty((len(raw), 0))
    return FeatureTable(schema, np.asarray(asns, dtype=np.int64), values, warnings)


class FeatureEncoder(TransformerMixin, BaseEstimator):
    """Label encoder over a merged per-AS table, usable inside sklearn pipelines.

    Booleans become 0/1, categoricals become lexicographic integer codes,
    datetimes become epoch seconds, and missing values stay NaN.
    """

    def __init__(self, variant: str = "filtered"):
        self.variant = variant

    def fit(self, X: pd.DataFrame, y=None):
        self.schema_ = fit_encoders(X, self.variant)
        self.feature_names_in_ = np.asarray(self.schema_.names, dtype=object)
        self.n_features_in_ = len(self.schema_.names)
        return self

    def transform(self, X: pd.DataFrame) -> np.ndarray:
        check_is_fitted(self, "schema_")
        asns = X["asn"] if "asn" in X.columns else np.zeros(len(X), dtype=np.int64)
        return encode(X, self.schema_, asns=asns).values

    def get_feature_names_out(self, input_features=None):
        check_is_fitted(self, "schema_")
        return np.asarray(self.schema_.names, dtype=object)


def build_feature_table(snapshot: Snapshot, variant, schema: FeatureSchema | None = None) -> FeatureTable:
    raw = select_features(snapshot, variant)
    return encode(raw, schema or fit_encoders(raw, variant))


def save_feature_table(table: FeatureTable, directory: str | os.PathLike,
                       snapshot_date: str | None = None) -> Path:
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    frame = table.to_frame()
    frame.to_csv(d / "features.csv", index=False, na_rep="", float_format="%.17g",
                 lineterminator="\n")
    sidecar = {"schema": table.schema.to_dict(), "fingerprint": table.schema.fingerprint,
               "snapshot_date": snapshot_date, "n_ases": len(table.asns)}
    (d / "schema.json").write_text(json.dumps(sidecar, indent=2, sort_keys=True) + "\n")
    return d


def load_feature_table(directory: str | os.PathLike) -> FeatureTable:
    d = Path(directory)
    sidecar = json.loads((d / "schema.json").read_text())
    schema = FeatureSchema.from_dict(sidecar["schema"])
    frame = pd.read_csv(d / "features.csv", float_precision="round_trip")
    return FeatureTable(schema, frame["key_asn"].to_numpy(np.int64),
                        frame[schema.names].to_numpy(float))


# ------------------------------------------------------------- correlation

@dataclass
class CorrelationResult:
    names: list[str]
    matrix: np.ndarray
    zero_variance: list[str]
    order: list[int] | None = None

    def ordered(self) -> tuple[list[str], np.ndarray]:
        idx = self.order if self.order is not None else list(range(len(self.names)))
        return [self.names[i] for i in idx], self.matrix[np.ix_(idx, idx)]


def correlation_matrix(table: FeatureTable | np.ndarray, names: Sequence[str] | None = None,
                       cluster: bool = False) -> CorrelationResult:
    """Pearson r over pairwise-complete observations.

    A column with zero variance on the rows it shares with another column
    gets r = 0 against it and is listed in ``zero_variance`` when constant
    overall. With ``cluster=True`` an average-linkage ordering on 1 - |r| is
    attached.
    """
    if isinstance(table, FeatureTable):
        values, names = table.values, table.schema.names
    else:
        values = np.asarray(table, dtype=float)
        names = list(names) if names is not None else [f"x{i}" for i in range(values.shape[1])]
    n, d = values.shape
    if n < 2:
        raise ValueError("correlation needs at least two rows")
    present = ~np.isnan(values)
    m = np.eye(d)
    for i in range(d):
        for j in range(i + 1, d):
            both = present[:, i] & present[:, j]
            r = 0.0
            if both.sum() >= 2:
                x = values[both, i] - values[both, i].mean()
                y = values[both, j] - values[both, j].mean()
                sxx, syy = float(x @ x), float(y @ y)
                if sxx > 0 and syy > 0:
                    r = float(np.clip((x @ y) / np.sqrt(sxx * syy), -1.0, 1.0))
            m[i, j] = m[j, i] = r
    zero_var = []
    for i in range(d):
        col = values[present[:, i], i]
        if col.size < 2 or np.all(col == col[0]):
            zero_var.append(names[i])
    order = None
    if cluster and d > 1:
        dist = 1.0 - np.abs(m)
        np.fill_diagonal(dist, 0.0)
        z = linkage(squareform(dist, checks=False), method="average")
        order = [int(i) for i in leaves_list(z)]
    return CorrelationResult(list(names), m, zero_var, order)
