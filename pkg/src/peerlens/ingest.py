"""Parsers for the three public AS data sources and the Snapshot bundle.

Accepted input layouts
----------------------
AS relationships
    CAIDA serial text. ``#`` starts a comment line; data lines are
    ``ASN1|ASN2|code`` where code ``0`` is peer-to-peer and ``-1`` is
    provider-to-customer (ASN1 is the provider). Extra trailing ``|`` fields
    (the serial-2 source column) are ignored.

AS-Rank and PeeringDB net
    Structured-record text: a JSON array of objects, a JSON object wrapping
    such an array (``{"data": [...]}``, ``{"net": {"data": [...]}}``, or the
    AS-Rank GraphQL ``{"data": {"asns": {"edges": [{"node": ...}]}}}``), or
    JSON Lines with one object per line. AS-Rank objects may use either the
    canonical column names or the nested API paths listed in
    ``AS_RANK_FIELD_MAP``. A PeeringDB dump that also carries ``netfac`` and
    ``netixlan`` tables yields facility/IXP memberships per AS.

Missing values are carried as pandas missing markers (``<NA>``/``NaT``/
``None``); empty strings in text fields are treated as missing.
"""

from __future__ import annotations

import bz2
import datetime as dt
import enum
import gzip
import hashlib
import io
import json
import logging
import math
import os
from collections.abc import Iterable, Mapping
from dataclasses import dataclass, field
from pathlib import Path

import pandas as pd

log = logging.getLogger(__name__)

FIELD_MAP_VERSION = 1
SNAPSHOT_FORMAT_VERSION = 1

# canonical name -> (kind, accepted source paths in priority order)
AS_RANK_FIELD_MAP: dict[str, tuple[str, tuple[str, ...]]] = {
    "asn": ("int", ("asn",)),
    "total": ("int", ("total", "asnDegree.total")),
    "customer": ("int", ("customer", "asnDegree.customer")),
    "peer": ("int", ("peer", "asnDegree.peer")),
    "provider": ("int", ("provider", "asnDegree.provider")),
    "asnName": ("text", ("asnName",)),
    "Clique-Member": ("bool", ("Clique-Member", "cliqueMember")),
    "NumberASNs": ("int", ("NumberASNs", "cone.numberAsns")),
    "NumberPrefix": ("int", ("NumberPrefix", "cone.numberPrefixes")),
    "NumberAddrs": ("int", ("NumberAddrs", "cone.numberAddresses")),
    "Country": ("text", ("Country", "country.iso", "country")),
    "IXP": ("int", ("IXP", "ixp", "asnDegree.ixp")),
    "Latitude": ("real", ("Latitude", "latitude")),
    "Longitude": ("real", ("Longitude", "longitude")),
    "Org": ("text", ("Org", "organization.orgName", "organization.orgId")),
    "Rank": ("int", ("Rank", "rank")),
    "Seen": ("bool", ("Seen", "seen")),
    "Source": ("text", ("Source", "source")),
}

AS_RANK_KINDS: dict[str, str] = {k: v[0] for k, v in AS_RANK_FIELD_MAP.items()}

PEERINGDB_KINDS: dict[str, str] = {
    "asn": "int",
    "id": "int",
    "status": "text",
    "looking_glass": "text",
    "route_server": "text",
    "fac_count": "int",
    "netixlan_updated": "datetime",
    "info_ratio": "text",
    "policy_ratio": "bool",
    "status_dashboard": "text",
    "info_unicast": "bool",
    "rir_status": "text",
    "created": "datetime",
    "name_long": "text",
    "policy_general": "text",
    "website": "text",
    "allow_ixp_update": "bool",
    "updated": "datetime",
    "info_types": "text",
    "rir_status_updated": "datetime",
    "netfac_updated": "datetime",
    "info_traffic": "text",
    "info_multicast": "bool",
    "policy_locations": "text",
    "name": "text",
    "info_scope": "text",
    "notes": "text",
    "ix_count": "int",
    "org_id": "int",
    "policy_url": "text",
    "info_never_via_route_servers": "bool",
    "poc_updated": "datetime",
    "info_type": "text",
    "social_media": "text",
    "policy_contracts": "text",
    "info_prefixes6": "int",
    "aka": "text",
    "info_prefixes4": "int",
    "info_ipv6": "bool",
    "irr_as_set": "text",
}

_COUNT_FIELDS = ("total", "customer", "peer", "provider", "NumberASNs",
                 "NumberPrefix", "NumberAddrs", "IXP")
_TRUE = {"true", "t", "yes", "y", "1"}
_FALSE = {"false", "f", "no", "n", "0"}


class IngestError(ValueError):
    """Raised when an input cannot be turned into records at all."""


class RelKind(enum.Enum):
    PEER = 0
    PROVIDER_CUSTOMER = -1


@dataclass(frozen=True)
class RelationshipRecord:
    """One AS relationship. For PROVIDER_CUSTOMER, ``asn_a`` is the provider."""

    asn_a: int
    asn_b: int
    kind: RelKind

    def __post_init__(self):
        if self.asn_a < 1 or self.asn_b < 1:
            raise ValueError(f"ASNs must be positive: {self.asn_a}, {self.asn_b}")
        if self.asn_a == self.asn_b:
            raise ValueError(f"self relationship on AS{self.asn_a}")

    @property
    def pair(self) -> tuple[int, int]:
        return (min(self.asn_a, self.asn_b), max(self.asn_a, self.asn_b))

    def canonical(self) -> "RelationshipRecord":
        if self.kind is RelKind.PEER and self.asn_a > self.asn_b:
            return RelationshipRecord(self.asn_b, self.asn_a, self.kind)
        return self


def Peer(a: int, b: int) -> RelationshipRecord:
    return RelationshipRecord(a, b, RelKind.PEER)


def ProviderCustomer(provider: int, customer: int) -> RelationshipRecord:
    return RelationshipRecord(provider, customer, RelKind.PROVIDER_CUSTOMER)


@dataclass(frozen=True)
class ParseWarning:
    source: str
    line: int | None
    message: str


@dataclass
class RelParseResult:
    records: list[RelationshipRecord]
    warnings: list[ParseWarning]
    n_data_lines: int

    @property
    def n_malformed(self) -> int:
        return len(self.warnings)


@dataclass
class TableParseResult:
    table: pd.DataFrame
    warnings: list[ParseWarning]
    memberships: dict[int, frozenset[str]] | None = None


# ---------------------------------------------------------------- text input

def open_text(path: str | os.PathLike) -> io.TextIOBase:
    """Open a possibly gzip/bz2-compressed text file."""
    path = Path(path)
    if path.suffix == ".gz":
        return gzip.open(path, "rt", encoding="utf-8")
    if path.suffix == ".bz2":
        return bz2.open(path, "rt", encoding="utf-8")
    return open(path, encoding="utf-8")


def _lines(stream) -> Iterable[str]:
    if isinstance(stream, str):
        return stream.splitlines()
    return stream


def _read_all(stream) -> str:
    if isinstance(stream, str):
        return stream
    if hasattr(stream, "read"):
        return stream.read()
    return "\n".join(stream)


# ------------------------------------------------------------ AS relationships

def parse_as_rel(stream) -> RelParseResult:
    """Parse CAIDA serial AS-relationship text.

    Malformed data lines are reported in ``warnings`` with their 1-based line
    number; parsing always continues past them.
    """
    records: list[RelationshipRecord] = []
    warnings: list[ParseWarning] = []
    n_lines = 0
    n_data = 0
    for lineno, raw in enumerate(_lines(stream), start=1):
        n_lines += 1
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        n_data += 1
        parts = line.split("|")
        if len(parts) < 3:
            warnings.append(ParseWarning("as_rel", lineno, f"expected ASN1|ASN2|code: {line!r}"))
            continue
        try:
            a, b, code = int(parts[0]), int(parts[1]), int(parts[2])
        except ValueError:
            warnings.append(ParseWarning("as_rel", lineno, f"non-integer field: {line!r}"))
            continue
        if code not in (0, -1):
            warnings.append(ParseWarning("as_rel", lineno, f"relationship code {code} not in {{0,-1}}"))
            continue
        try:
            records.append(RelationshipRecord(a, b, RelKind(code)))
        except ValueError as exc:
            warnings.append(ParseWarning("as_rel", lineno, str(exc)))
    if n_lines == 0:
        raise IngestError("empty AS-relationship input")
    return RelParseResult(records, warnings, n_data)


# ------------------------------------------------------- structured records

def _unwrap(obj, key: str | None):
    if isinstance(obj, list):
        return obj
    if isinstance(obj, dict):
        if key and key in obj:
            return _unwrap(obj[key], None)
        if "data" in obj:
            return _unwrap(obj["data"], None)
        if "asns" in obj:
            return _unwrap(obj["asns"], None)
        if "edges" in obj:
            return [e.get("node", e) if isinstance(e, dict) else e for e in obj["edges"]]
        return [obj]
    raise IngestError(f"cannot find records in {type(obj).__name__}")


def read_records(stream, source: str, key: str | None = None):
    """Return ``(objects, line_numbers, raw_document, warnings)``.

    ``raw_document`` is the decoded top-level JSON value when the whole input
    is one JSON document, else None (JSON Lines).
    """
    text = _read_all(stream)
    if not text.strip():
        raise IngestError(f"empty {source} input")
    warnings: list[ParseWarning] = []
    try:
        doc = json.loads(text)
    except json.JSONDecodeError:
        doc = None
    if doc is not None:
        objs = _unwrap(doc, key)
        return objs, [None] * len(objs), doc, warnings
    objs, linenos = [], []
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            warnings.append(ParseWarning(source, lineno, f"invalid JSON: {exc.msg}"))
            continue
        if not isinstance(obj, dict):
            warnings.append(ParseWarning(source, lineno, "record is not an object"))
            continue
        objs.append(obj)
        linenos.append(lineno)
    return objs, linenos, None, warnings


def _lookup(obj: Mapping, path: str):
    cur = obj
    for part in path.split("."):
        if not isinstance(cur, Mapping) or part not in cur:
            return None
        cur = cur[part]
    return cur


def _to_text(v):
    if v is None:
        return None
    if isinstance(v, float) and math.isnan(v):
        return None
    if isinstance(v, (list, dict)):
        if not v:
            return None
        if isinstance(v, list) and all(isinstance(x, str) for x in v):
            return ",".join(v)
        return json.dumps(v, sort_keys=True, separators=(",", ":"))
    s = str(v)
    return s if s != "" else None


def _to_bool(v):
    if v is None or v is pd.NA:
        return None
    if isinstance(v, bool):
        return v
    if isinstance(v, (int, float)):
        if isinstance(v, float) and math.isnan(v):
            return None
        return bool(v)
    s = str(v).strip().lower()
    if s in _TRUE:
        return True
    if s in _FALSE:
        return False
    return None


def coerce_column(values, kind: str) -> pd.Series:
    """Build a typed column from raw python values under one of the five kinds."""
    values = list(values)
    if kind == "int":
        num = pd.to_numeric(pd.Series(values, dtype=object).map(
            lambda v: None if v is None or v == "" else v), errors="coerce")
        num = num.where(num.isna() | (num == num.round()))
        return num.astype("Float64").astype("Int64")
    if kind == "real":
        num = pd.to_numeric(pd.Series(values, dtype=object).map(
            lambda v: None if v is None or v == "" else v), errors="coerce")
        return num.astype("Float64")
    if kind == "bool":
        return pd.Series([_to_bool(v) for v in values], dtype="boolean")
    if kind == "datetime":
        cleaned = [None if (v is None or v == "") else v for v in values]
        return pd.Series(pd.to_datetime(pd.Series(cleaned, dtype=object), utc=True,
                                        errors="coerce", format="ISO8601"),
                         dtype="datetime64[ns, UTC]")
    if kind == "text":
        return pd.Series([_to_text(v) for v in values], dtype=object)
    raise ValueError(f"unknown column kind {kind!r}")


def build_table(rows: list[dict], kinds: Mapping[str, str]) -> pd.DataFrame:
    data = {name: coerce_column([r.get(name) for r in rows], kind)
            for name, kind in kinds.items()}
    df = pd.DataFrame(data)
    df.index = pd.RangeIndex(len(df))
    return df


def _keyed_rows(objs, linenos, source: str, extract) -> tuple[list[dict], list[ParseWarning]]:
    rows: list[dict] = []
    warnings: list[ParseWarning] = []
    seen: set[int] = set()
    for obj, lineno in zip(objs, linenos):
        if not isinstance(obj, Mapping):
            warnings.append(ParseWarning(source, lineno, "record is not an object"))
            continue
        row = extract(obj)
        asn = row.get("asn")
        try:
            asn = int(asn) if asn is not None and asn != "" else None
        except (TypeError, ValueError):
            asn = None
        if asn is None or asn < 1:
            warnings.append(ParseWarning(source, lineno, f"record rejected: missing or invalid asn {row.get('asn')!r}"))
            continue
        if asn in seen:
            warnings.append(ParseWarning(source, lineno, f"duplicate asn {asn}: kept first"))
            continue
        seen.add(asn)
        row["asn"] = asn
        rows.append(row)
    return rows, warnings


def _check_as_rank(table: pd.DataFrame, warnings: list[ParseWarning]):
    parts = table[["customer", "peer", "provider", "total"]]
    complete = parts.notna().all(axis=1)
    bad = complete & (parts["customer"] + parts["peer"] + parts["provider"] != parts["total"])
    for asn in table.loc[bad.fillna(False), "asn"]:
        warnings.append(ParseWarning("as_rank", None, f"AS{asn}: customer+peer+provider != total"))
    for name in _COUNT_FIELDS:
        neg = table[name] < 0
        for asn in table.loc[neg.fillna(False), "asn"]:
            warnings.append(ParseWarning("as_rank", None, f"AS{asn}: negative {name}"))
    low = table["Rank"] < 1
    for asn in table.loc[low.fillna(False), "asn"]:
        warnings.append(ParseWarning("as_rank", None, f"AS{asn}: Rank < 1"))


def parse_as_rank(stream) -> TableParseResult:
    """Parse AS-Rank records into a table with the 18 canonical columns."""
    objs, linenos, _, warnings = read_records(stream, "as_rank")

    def extract(obj):
        row = {}
        for name, (_, paths) in AS_RANK_FIELD_MAP.items():
            value = None
            for path in paths:
                value = _lookup(obj, path)
                if value is not None:
                    break
            row[name] = value
        return row

    rows, w = _keyed_rows(objs, linenos, "as_rank", extract)
    warnings.extend(w)
    table = build_table(rows, AS_RANK_KINDS)
    _check_as_rank(table, warnings)
    return TableParseResult(table, warnings)


def _memberships_from_dump(doc, net_table: pd.DataFrame) -> dict[int, frozenset[str]] | None:
    if not isinstance(doc, dict) or not ({"netfac", "netixlan"} & doc.keys()):
        return None
    id_to_asn = {int(i): int(a) for i, a in zip(net_table["id"], net_table["asn"])
                 if i is not pd.NA and a is not pd.NA}
    pops: dict[int, set[str]] = {int(a): set() for a in net_table["asn"]}

    def resolve(row):
        asn = row.get("local_asn") or row.get("asn")
        if asn is None and row.get("net_id") is not None:
            asn = id_to_asn.get(int(row["net_id"]))
        return int(asn) if asn is not None else None

    for key, id_field, prefix in (("netfac", "fac_id", "F"), ("netixlan", "ix_id", "X")):
        if key not in doc:
            continue
        for row in _unwrap(doc[key], None):
            asn = resolve(row)
            pid = row.get(id_field)
            if asn in pops and pid is not None:
                pops[asn].add(f"{prefix}{int(pid)}")
    return {a: frozenset(s) for a, s in pops.items()}


def parse_peeringdb_net(stream) -> TableParseResult:
    """Parse PeeringDB ``net`` records into a table with the 40 canonical columns."""
    objs, linenos, doc, warnings = read_records(stream, "peeringdb_net", key="net")
    rows, w = _keyed_rows(objs, linenos, "peeringdb_net",
                          lambda obj: {name: obj.get(name) for name in PEERINGDB_KINDS})
    warnings.extend(w)
    table = build_table(rows, PEERINGDB_KINDS)
    for name in ("created", "updated"):
        raw_present = [r.get(name) not in (None, "") for r in rows]
        for present, parsed, asn in zip(raw_present, table[name], table["asn"]):
            if present and pd.isna(parsed):
                warnings.append(ParseWarning("peeringdb_net", None, f"AS{asn}: unparseable {name}"))
    return TableParseResult(table, warnings, _memberships_from_dump(doc, table))


# ---------------------------------------------------------------- snapshot

@dataclass(eq=False)
class Snapshot:
    """Validated bundle of the three sources for one date.

    ``relationships`` holds the records retained for modeling (both endpoints
    in ``common_asns``). ``graph_relationships`` holds every valid canonical
    record and is what customer cones are computed from.
    """

    date: dt.date
    as_rank: pd.DataFrame
    peeringdb_net: pd.DataFrame
    relationships: tuple[RelationshipRecord, ...]
    common_asns: frozenset[int]
    graph_relationships: tuple[RelationshipRecord, ...] = ()
    memberships: dict[int, frozenset[str]] | None = None
    warnings: list[ParseWarning] = field(default_factory=list)

    @property
    def counts(self) -> dict[str, int]:
        n_peer = sum(r.kind is RelKind.PEER for r in self.relationships)
        return {
            "as_rank_ases": len(self.as_rank),
            "peeringdb_ases": len(self.peeringdb_net),
            "common_ases": len(self.common_asns),
            "relationships_total": len(self.graph_relationships),
            "retained_pairs": len(self.relationships),
            "peer_pairs": n_peer,
            "non_peer_pairs": len(self.relationships) - n_peer,
        }

    def __eq__(self, other):
        if not isinstance(other, Snapshot):
            return NotImplemented
        return (self.date == other.date
                and self.as_rank.equals(other.as_rank)
                and self.peeringdb_net.equals(other.peeringdb_net)
                and self.relationships == other.relationships
                and self.graph_relationships == other.graph_relationships
                and self.common_asns == other.common_asns
                and self.memberships == other.memberships)


def canonicalize(records: Iterable[RelationshipRecord],
                 warnings: list[ParseWarning] | None = None) -> list[RelationshipRecord]:
    """Canonicalize Peer orientation, drop duplicate pairs (keep first), sort by pair."""
    by_pair: dict[tuple[int, int], RelationshipRecord] = {}
    for rec in records:
        rec = rec.canonical()
        prev = by_pair.get(rec.pair)
        if prev is None:
            by_pair[rec.pair] = rec
        elif prev != rec:
            if warnings is not None:
                warnings.append(ParseWarning("as_rel", None, f"conflicting records for pair {rec.pair}: kept first"))
    return [by_pair[p] for p in sorted(by_pair)]


def _table_of(x) -> pd.DataFrame:
    return x.table if isinstance(x, TableParseResult) else x


def build_snapshot(as_rank, peeringdb_net, relationships, date: dt.date | str,
                   memberships: Mapping[int, frozenset[str]] | None = None) -> Snapshot:
    """Intersect the two AS tables and keep relationships inside the intersection."""
    warnings: list[ParseWarning] = []
    for src in (as_rank, peeringdb_net, relationships):
        warnings.extend(getattr(src, "warnings", []))
    if memberships is None and isinstance(peeringdb_net, TableParseResult):
        memberships = peeringdb_net.memberships
    rank = _table_of(as_rank).sort_values("asn", kind="stable").reset_index(drop=True)
    pdb = _table_of(peeringdb_net).sort_values("asn", kind="stable").reset_index(drop=True)
    recs = relationships.records if isinstance(relationships, RelParseResult) else list(relationships)
    common = frozenset(int(a) for a in rank["asn"]) & frozenset(int(a) for a in pdb["asn"])
    if not common:
        raise IngestError("AS-Rank and PeeringDB share no ASNs")
    graph = canonicalize(recs, warnings)
    retained = tuple(r for r in graph if r.asn_a in common and r.asn_b in common)
    if isinstance(date, str):
        date = dt.date.fromisoformat(date)
    if memberships is not None:
        memberships = {int(a): frozenset(s) for a, s in sorted(memberships.items())}
    snap = Snapshot(date, rank, pdb, retained, common, tuple(graph), memberships, warnings)
    log.info("snapshot %s: %s", date, snap.counts)
    return snap


# ------------------------------------------------------------ disk cache

def _format_value(v, kind: str) -> str:
    if v is None or v is pd.NA or v is pd.NaT:
        return ""
    if kind == "bool":
        return "true" if v else "false"
    if kind == "datetime":
        return pd.Timestamp(v).isoformat()
    if kind == "real":
        return repr(float(v))
    return str(v)


def write_table(df: pd.DataFrame, kinds: Mapping[str, str], path: Path):
    import csv
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(list(kinds))
        cols = [df[name].tolist() for name in kinds]
        for row in zip(*cols):
            w.writerow([_format_value(v, k) for v, k in zip(row, kinds.values())])


def read_table(path: Path, kinds: Mapping[str, str]) -> pd.DataFrame:
    import csv
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if list(header) != list(kinds):
            raise IngestError(f"{path}: unexpected header")
        rows = [dict(zip(header, r)) for r in reader]
    return build_table(rows, kinds)


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def save_snapshot(snapshot: Snapshot, directory: str | os.PathLike,
                  sources: Mapping[str, str] | None = None) -> Path:
    """Write the snapshot cache: three tables, memberships, warnings, manifest."""
    import csv
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    write_table(snapshot.as_rank, AS_RANK_KINDS, d / "as_rank.csv")
    write_table(snapshot.peeringdb_net, PEERINGDB_KINDS, d / "peeringdb_net.csv")
    retained = {r.pair for r in snapshot.relationships}
    with open(d / "as_rel.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["asn_a", "asn_b", "code", "retained"])
        for r in snapshot.graph_relationships:
            w.writerow([r.asn_a, r.asn_b, r.kind.value, int(r.pair in retained)])
    if snapshot.memberships is not None:
        with open(d / "pops.csv", "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["asn", "pop"])
            for asn, pops in sorted(snapshot.memberships.items()):
                if not pops:
                    w.writerow([asn, ""])
                for p in sorted(pops):
                    w.writerow([asn, p])
    elif (d / "pops.csv").exists():
        (d / "pops.csv").unlink()
    with open(d / "warnings.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["source", "line", "message"])
        for wn in snapshot.warnings:
            w.writerow([wn.source, "" if wn.line is None else wn.line, wn.message])
    files = ["as_rank.csv", "peeringdb_net.csv", "as_rel.csv"]
    if snapshot.memberships is not None:
        files.append("pops.csv")
    manifest = {
        "format_version": SNAPSHOT_FORMAT_VERSION,
        "field_map_version": FIELD_MAP_VERSION,
        "date": snapshot.date.isoformat(),
        "counts": snapshot.counts,
        "table_hashes": {f: _sha256(d / f) for f in files},
        "sources": {k: str(v) for k, v in sorted((sources or {}).items())},
        "source_hashes": {k: _sha256(Path(v)) for k, v in sorted((sources or {}).items())},
    }
    (d / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return d


def load_snapshot(directory: str | os.PathLike) -> Snapshot:
    import csv
    d = Path(directory)
    mpath = d / "manifest.json"
    if not mpath.exists():
        raise IngestError(f"{d} is not a snapshot directory (no manifest.json)")
    manifest = json.loads(mpath.read_text())
    if manifest.get("format_version") != SNAPSHOT_FORMAT_VERSION:
        raise IngestError(f"unsupported snapshot format {manifest.get('format_version')}")
    rank = read_table(d / "as_rank.csv", AS_RANK_KINDS)
    pdb = read_table(d / "peeringdb_net.csv", PEERINGDB_KINDS)
    graph, retained = [], []
    with open(d / "as_rel.csv", newline="") as fh:
        for row in csv.DictReader(fh):
            rec = RelationshipRecord(int(row["asn_a"]), int(row["asn_b"]), RelKind(int(row["code"])))
            graph.append(rec)
            if row["retained"] == "1":
                retained.append(rec)
    memberships = None
    if (d / "pops.csv").exists():
        acc: dict[int, set[str]] = {}
        with open(d / "pops.csv", newline="") as fh:
            for row in csv.DictReader(fh):
                s = acc.setdefault(int(row["asn"]), set())
                if row["pop"]:
                    s.add(row["pop"])
        memberships = {a: frozenset(s) for a, s in sorted(acc.items())}
    warnings = []
    if (d / "warnings.csv").exists():
        with open(d / "warnings.csv", newline="") as fh:
            for row in csv.DictReader(fh):
                warnings.append(ParseWarning(row["source"], int(row["line"]) if row["line"] else None,
                                             row["message"]))
    common = frozenset(int(a) for a in rank["asn"]) & frozenset(int(a) for a in pdb["asn"])
    return Snapshot(dt.date.fromisoformat(manifest["date"]), rank, pdb, tuple(retained), common,
                    tuple(graph), memberships, warnings)


# ------------------------------------------------------- raw source writers

def _jsonable(v, kind):
    if v is None or v is pd.NA or v is pd.NaT:
        return None
    if kind == "datetime":
        return pd.Timestamp(v).strftime("%Y-%m-%dT%H:%M:%SZ")
    if kind == "int":
        return int(v)
    if kind == "real":
        return float(v)
    if kind == "bool":
        return bool(v)
    return v


def write_raw_sources(snapshot: Snapshot, directory: str | os.PathLike) -> dict[str, Path]:
    """Write a snapshot back out in the three public input layouts.

    AS-Rank goes to JSON Lines with canonical names, PeeringDB to a dump-style
    JSON document (with ``netfac``/``netixlan`` when memberships exist), and
    relationships to CAIDA serial text.
    """
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    rank_path, pdb_path, rel_path = d / "as-rank.jsonl", d / "peeringdb.json", d / "as-rel.txt"
    with open(rank_path, "w") as fh:
        for _, row in snapshot.as_rank.iterrows():
            obj = {k: _jsonable(row[k], kind) for k, kind in AS_RANK_KINDS.items()}
            fh.write(json.dumps(obj, sort_keys=True) + "\n")
    nets = [{k: _jsonable(row[k], kind) for k, kind in PEERINGDB_KINDS.items()}
            for _, row in snapshot.peeringdb_net.iterrows()]
    doc: dict = {"net": {"data": nets}}
    if snapshot.memberships is not None:
        netfac, netixlan = [], []
        for asn, pops in sorted(snapshot.memberships.items()):
            for p in sorted(pops):
                target = netfac if p.startswith("F") else netixlan
                key = "fac_id" if p.startswith("F") else "ix_id"
                target.append({"local_asn" if p.startswith("F") else "asn": asn, key: int(p[1:])})
        doc["netfac"] = {"data": netfac}
        doc["netixlan"] = {"data": netixlan}
    pdb_path.write_text(json.dumps(doc, sort_keys=True))
    with open(rel_path, "w") as fh:
        fh.write(f"# synthetic AS relationships for {snapshot.date.isoformat()}\n")
        fh.write("# <provider-as>|<customer-as>|-1\n# <peer-as>|<peer-as>|0\n")
        for r in snapshot.graph_relationships:
            fh.write(f"{r.asn_a}|{r.asn_b}|{r.kind.value}\n")
    return {"as_rank": rank_path, "peeringdb": pdb_path, "as_rel": rel_path}
