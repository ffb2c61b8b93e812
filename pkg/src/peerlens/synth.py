"""Desk-scale synthetic snapshots.

The generator grows a provider hierarchy by preferential attachment (every
AS buys transit from one to three larger ASes), then plants peer links with
a fixed rule: two ASes peer only if their customer cones are disjoint and
their sizes are within ``peer_size_ratio`` of each other. Provider-customer
pairs always share a cone (the customer sits inside its provider's cone),
so the peer/non-peer label is recoverable from degree and cone overlap.

AS-Rank and PeeringDB attributes are derived from the graph (degrees, cone
sizes, address space) plus correlated noise. PeeringDB covers only part of
the ASes and lists a few ASes unknown to AS-Rank, so the two sources
overlap without coinciding.
"""

from __future__ import annotations

import datetime as dt
import math
from dataclasses import asdict, dataclass

import numpy as np
import pandas as pd

from ._random import make_rng
from .cone import build_graph, customer_cones
from .ingest import (AS_RANK_KINDS, PEERINGDB_KINDS, Peer, ProviderCustomer,
                     RelationshipRecord, Snapshot, build_snapshot, build_table)

_COUNTRIES = {"US": (39.8, -98.6), "DE": (51.2, 10.4), "GB": (54.0, -2.0), "NL": (52.1, 5.3),
              "BR": (-14.2, -51.9), "JP": (36.2, 138.3), "IN": (20.6, 79.0), "FR": (46.2, 2.2),
              "SG": (1.35, 103.8), "ZA": (-30.6, 22.9)}
_RIRS = ("ARIN", "RIPE", "APNIC", "LACNIC", "AFRINIC")
_INFO_TYPES = ("NSP", "Content", "Cable/DSL/ISP", "Enterprise", "Educational/Research", "Non-Profit")
_RATIOS = ("Balanced", "Mostly Inbound", "Mostly Outbound", "Heavy Inbound", "Heavy Outbound", "Not Disclosed")
_TRAFFIC = ("0-20Mbps", "20-100Mbps", "100-1000Mbps", "1-5Gbps", "5-10Gbps", "10-20Gbps",
            "20-50Gbps", "50-100Gbps", "100-200Gbps", "200-300Gbps", "300-500Gbps", "500-1000Gbps",
            "1-5Tbps", "5-10Tbps")
_SCOPES = ("Global", "Regional", "Europe", "North America", "Asia Pacific", "South America", "Africa")
_POLICY = ("Open", "Selective", "Restrictive", "No")
_LOCATIONS = ("Not Required", "Preferred", "Required - US", "Required - EU", "Required - International")
_CONTRACTS = ("Not Required", "Private Only", "Required")


@dataclass(frozen=True)
class SynthParams:
    peer_fraction: float = 0.83
    peer_size_ratio: float = 4.0
    pdb_coverage: float = 0.85
    pdb_only_fraction: float = 0.03
    max_providers: int = 3
    top_tier: int = 0
    n_facilities: int = 80
    n_ixps: int = 40
    missing_rate: float = 0.03
    drift: float = 0.05
    date: str = "2024-06-01"

    def to_dict(self) -> dict:
        return asdict(self)


def _asn_universe(rng, n: int) -> np.ndarray:
    return np.sort(rng.choice(np.arange(1, 64496), size=n, replace=False)) if n < 64000 else np.arange(1, n + 1)


def _grow_hierarchy(rng, n: int, params: SynthParams):
    """Return size weights and provider->customer edges over AS positions 0..n-1.

    Position order is by decreasing size, and every edge points from a smaller
    position to a larger one, so the hierarchy is acyclic.
    """
    size = (np.arange(1, n + 1, dtype=float) ** -0.9) * rng.lognormal(0.0, 0.25, n)
    size = np.sort(size)[::-1]
    top = params.top_tier or max(3, n // 60)
    edges: list[tuple[int, int]] = []
    for i in range(top, n):
        k = 1 + rng.binomial(params.max_providers - 1, 0.35)
        k = min(k, i)
        w = size[:i] / size[:i].sum()
        provs = rng.choice(i, size=k, replace=False, p=w)
        edges.extend((int(p), i) for p in sorted(provs))
    return size, edges, top


def _plant_peers(rng, size, cone_bits, pc_pairs: set, n_target: int, ratio: float):
    n = len(size)
    w = np.sqrt(size)
    w = w / w.sum()
    peers: set[tuple[int, int]] = set()
    log_ratio = math.log(ratio)
    attempts = 0
    max_attempts = 200 * max(n_target, 1)
    while len(peers) < n_target and attempts < max_attempts:
        batch = rng.choice(n, size=(512, 2), p=w)
        for i, j in batch:
            attempts += 1
            if i == j:
                continue
            key = (int(min(i, j)), int(max(i, j)))
            if key in peers or key in pc_pairs:
                continue
            if cone_bits[key[0]] & cone_bits[key[1]]:
                continue
            if abs(math.log(size[i]) - math.log(size[j])) > log_ratio:
                continue
            peers.add(key)
            if len(peers) >= n_target:
                break
    return peers


def _timestamp(rng, start: str, end: str, n: int, bias=None) -> list[str]:
    lo = pd.Timestamp(start, tz="UTC").value // 10**9
    hi = pd.Timestamp(end, tz="UTC").value // 10**9
    u = rng.random(n) if bias is None else np.clip(bias + rng.normal(0, 0.15, n), 0, 1)
    secs = (lo + u * (hi - lo)).astype(np.int64)
    return [pd.Timestamp(int(s), unit="s", tz="UTC").strftime("%Y-%m-%dT%H:%M:%SZ") for s in secs]


def _maybe_missing(rng, values: list, rate: float) -> list:
    drop = rng.random(len(values)) < rate
    return [None if d else v for v, d in zip(values, drop)]


def synth_snapshot(n_as: int, seed: int, params: SynthParams | None = None, epoch: int = 0) -> Snapshot:
    """Generate a deterministic synthetic snapshot with ``n_as`` ASes.

    ``epoch > 0`` produces a later version of the same Internet: the same AS
    universe and hierarchy with a ``drift`` fraction of peer links replaced
    and attributes re-jittered, dated ``epoch`` years after ``params.date``.
    """
    if n_as < 4:
        raise ValueError(f"n_as must be >= 4, got {n_as}")
    params = params or SynthParams()
    rng = make_rng(seed, "synth", "structure")
    asns = _asn_universe(rng, n_as)
    size, edges, top = _grow_hierarchy(rng, n_as, params)
    pc_pairs = {(p, c) for p, c in edges}

    pos_rels = [ProviderCustomer(int(asns[p]), int(asns[c])) for p, c in edges]
    cones = customer_cones(build_graph(pos_rels), extra_asns=asns.tolist())
    cone_bits = [cones.bits[cones._pos[int(a)]] for a in asns]

    pf = params.peer_fraction
    n_peer = int(round(len(edges) * pf / (1.0 - pf))) if pf < 1 else len(edges)
    peers = _plant_peers(rng, size, cone_bits, pc_pairs, n_peer, params.peer_size_ratio)
    if epoch > 0:
        erng = make_rng(seed, "synth", "epoch", epoch)
        kept = sorted(peers)
        drop = erng.random(len(kept)) < params.drift
        peers = {p for p, d in zip(kept, drop) if not d}
        fresh = _plant_peers(erng, size, cone_bits, pc_pairs | peers, int(drop.sum()), params.peer_size_ratio)
        peers |= fresh
    peer_rels = [Peer(int(asns[i]), int(asns[j])) for i, j in sorted(peers)]
    relationships: list[RelationshipRecord] = pos_rels + peer_rels

    arng = make_rng(seed, "synth", "attributes", epoch)
    jitter = arng.lognormal(0.0, 0.05 if epoch else 0.0, n_as)

    n_cust = np.zeros(n_as, int)
    n_prov = np.zeros(n_as, int)
    n_peers = np.zeros(n_as, int)
    for p, c in edges:
        n_cust[p] += 1
        n_prov[c] += 1
    for i, j in peers:
        n_peers[i] += 1
        n_peers[j] += 1

    own_prefixes = np.maximum(1, (arng.pareto(1.5, n_as) * 3 + 1) * (1 + 40 * size)).astype(int)
    own_addrs = own_prefixes * arng.choice([256, 512, 1024, 4096], n_as)
    cone_sizes = np.array([b.bit_count() for b in cone_bits])
    cone_prefixes = np.zeros(n_as, int)
    cone_addrs = np.zeros(n_as, int)
    pos_of = {int(a): k for k, a in enumerate(asns)}
    for k in range(n_as):
        b = cone_bits[k]
        members = []
        while b:
            low = b & -b
            members.append(pos_of[cones.asns[low.bit_length() - 1]])
            b ^= low
        cone_prefixes[k] = own_prefixes[members].sum()
        cone_addrs[k] = own_addrs[members].sum()
    rank_order = sorted(range(n_as), key=lambda k: (-cone_sizes[k], int(asns[k])))
    ranks = np.empty(n_as, int)
    for r, k in enumerate(rank_order, start=1):
        ranks[k] = r

    country_keys = list(_COUNTRIES)
    country = [country_keys[i] for i in arng.integers(0, len(country_keys), n_as)]
    lat = [round(_COUNTRIES[c][0] + float(arng.normal(0, 3)), 4) for c in country]
    lon = [round(_COUNTRIES[c][1] + float(arng.normal(0, 3)), 4) for c in country]
    orgs = [f"ORG-{int(x):05d}" for x in arng.integers(0, max(2, n_as // 2), n_as)]

    rank_rows = []
    for k in range(n_as):
        rank_rows.append({
            "asn": int(asns[k]),
            "total": int(n_cust[k] + n_peers[k] + n_prov[k]),
            "customer": int(n_cust[k]),
            "peer": int(n_peers[k]),
            "provider": int(n_prov[k]),
            "asnName": f"NET-{int(asns[k])}",
            "Clique-Member": bool(k < top),
            "NumberASNs": int(cone_sizes[k]),
            "NumberPrefix": int(cone_prefixes[k]),
            "NumberAddrs": int(cone_addrs[k]),
            "Country": country[k],
            "IXP": int(arng.poisson(0.5 + 20 * size[k])),
            "Latitude": lat[k],
            "Longitude": lon[k],
            "Org": orgs[k],
            "Rank": int(ranks[k]),
            "Seen": bool(arng.random() > 0.02),
            "Source": _RIRS[int(arng.integers(0, len(_RIRS)))],
        })
    for key in ("Latitude", "Longitude", "IXP"):
        vals = _maybe_missing(arng, [r[key] for r in rank_rows], params.missing_rate)
        for r, v in zip(rank_rows, vals):
            r[key] = v

    in_pdb = arng.random(n_as) < params.pdb_coverage
    in_pdb[:top] = True
    n_extra = int(round(params.pdb_only_fraction * n_as))
    taken = set(int(a) for a in asns)
    extra_asns = []
    while len(extra_asns) < n_extra:
        cand = int(arng.integers(64496, 4200000000))
        if cand not in taken:
            taken.add(cand)
            extra_asns.append(cand)

    pdb_pos = [k for k in range(n_as) if in_pdb[k]]
    fac_pop = np.arange(1, params.n_facilities + 1) ** -0.8
    fac_pop /= fac_pop.sum()
    ix_pop = np.arange(1, params.n_ixps + 1) ** -0.8
    ix_pop /= ix_pop.sum()
    memberships: dict[int, frozenset[str]] = {}
    pdb_rows = []
    bias_created = {k: 1.0 - float(np.log1p(size[k] * 50) / np.log1p(50)) for k in range(n_as)}
    entries = [(int(asns[k]), k) for k in pdb_pos] + [(a, None) for a in extra_asns]
    net_ids = arng.permutation(len(entries)) + 1
    created = _timestamp(arng, "1996-01-01", "2024-05-01", len(entries),
                         bias=np.array([bias_created[k] if k is not None else 0.9 for _, k in entries]))
    updated = _timestamp(arng, "2022-01-01", "2024-05-31", len(entries))
    for idx, (asn, k) in enumerate(entries):
        s = size[k] * jitter[k] if k is not None else 0.002
        n_fac = min(params.n_facilities, int(arng.poisson(0.3 + 60 * s)))
        n_ix = min(params.n_ixps, int(arng.poisson(0.5 + 40 * s)))
        facs = arng.choice(params.n_facilities, size=n_fac, replace=False, p=fac_pop) + 1 if n_fac else []
        ixs = arng.choice(params.n_ixps, size=n_ix, replace=False, p=ix_pop) + 1 if n_ix else []
        memberships[asn] = frozenset([f"F{int(f)}" for f in facs] + [f"X{int(x)}" for x in ixs])
        itype = _INFO_TYPES[int(arng.integers(0, len(_INFO_TYPES)))]
        p4 = int(own_prefixes[k] * jitter[k]) if k is not None else int(arng.integers(1, 5))
        traffic = _TRAFFIC[min(len(_TRAFFIC) - 1, int(np.log1p(s * 4000)))]
        pdb_rows.append({
            "asn": asn,
            "id": int(net_ids[idx]),
            "status": "ok",
            "looking_glass": f"https://lg.as{asn}.example" if arng.random() < 0.3 else None,
            "route_server": f"telnet://rs.as{asn}.example" if arng.random() < 0.1 else None,
            "fac_count": n_fac,
            "netixlan_updated": updated[idx] if n_ix else None,
            "info_ratio": _RATIOS[int(arng.integers(0, len(_RATIOS)))],
            "policy_ratio": bool(arng.random() < 0.2),
            "status_dashboard": f"https://status.as{asn}.example" if arng.random() < 0.05 else None,
            "info_unicast": True,
            "rir_status": "ok",
            "created": created[idx],
            "name_long": f"Network {asn} Holdings" if arng.random() < 0.4 else None,
            "policy_general": _POLICY[int(arng.integers(0, len(_POLICY)))],
            "website": f"https://as{asn}.example",
            "allow_ixp_update": bool(arng.random() < 0.5),
            "updated": updated[idx],
            "info_types": [itype],
            "rir_status_updated": updated[idx],
            "netfac_updated": updated[idx] if n_fac else None,
            "info_traffic": traffic,
            "info_multicast": bool(arng.random() < 0.05),
            "policy_locations": _LOCATIONS[int(arng.integers(0, len(_LOCATIONS)))],
            "name": f"NET-{asn}",
            "info_scope": _SCOPES[int(arng.integers(0, len(_SCOPES)))],
            "notes": "Peering via IXP route servers." if arng.random() < 0.2 else None,
            "ix_count": n_ix,
            "org_id": int(arng.integers(1, 40000)),
            "policy_url": f"https://as{asn}.example/peering" if arng.random() < 0.3 else None,
            "info_never_via_route_servers": bool(arng.random() < 0.1),
            "poc_updated": updated[idx],
            "info_type": itype,
            "social_media": [{"service": "website", "identifier": f"https://as{asn}.example"}],
            "policy_contracts": _CONTRACTS[int(arng.integers(0, len(_CONTRACTS)))],
            "info_prefixes6": int(max(0, p4 // 4 + arng.integers(0, 3))),
            "aka": None,
            "info_prefixes4": p4,
            "info_ipv6": bool(arng.random() < 0.7),
            "irr_as_set": f"AS-NET{asn}" if arng.random() < 0.6 else None,
        })
    for key in ("info_prefixes6", "created", "info_traffic"):
        vals = _maybe_missing(arng, [r[key] for r in pdb_rows], params.missing_rate)
        for r, v in zip(pdb_rows, vals):
            r[key] = v

    date = dt.date.fromisoformat(params.date)
    if epoch:
        date = date.replace(year=date.year + epoch)
    return build_snapshot(build_table(rank_rows, AS_RANK_KINDS), build_table(pdb_rows, PEERINGDB_KINDS),
                          relationships, date, memberships)
