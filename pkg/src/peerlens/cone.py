"""AS graph, customer cones, cone overlap and PoP affinity.

Cones are held as Python-int bitsets over a dense AS index, so unions while
walking the provider DAG and overlap counts (``(a & b).bit_count()``) stay
cheap even for tier-1 cones covering most of the graph.
"""

from __future__ import annotations

import logging
import math
from collections.abc import Iterable, Mapping, Sequence
from dataclasses import dataclass, field
from graphlib import TopologicalSorter

import pandas as pd

from .ingest import RelationshipRecord, RelKind, Snapshot

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class AsGraph:
    """Provider->customer adjacency plus undirected peer adjacency."""

    customers: dict[int, tuple[int, ...]]
    peers: dict[int, tuple[int, ...]]
    nodes: tuple[int, ...]

    def provider_edges(self) -> list[tuple[int, int]]:
        return [(p, c) for p in sorted(self.customers) for c in self.customers[p]]


def build_graph(relationships: Iterable[RelationshipRecord]) -> AsGraph:
    customers: dict[int, set[int]] = {}
    peers: dict[int, set[int]] = {}
    nodes: set[int] = set()
    for rec in relationships:
        a, b = int(rec.asn_a), int(rec.asn_b)
        if a == b:
            raise ValueError(f"self-loop on AS{a}")
        nodes.update((a, b))
        if rec.kind is RelKind.PROVIDER_CUSTOMER:
            customers.setdefault(a, set()).add(b)
        else:
            peers.setdefault(a, set()).add(b)
            peers.setdefault(b, set()).add(a)
    return AsGraph({k: tuple(sorted(v)) for k, v in sorted(customers.items())},
                   {k: tuple(sorted(v)) for k, v in sorted(peers.items())},
                   tuple(sorted(nodes)))


def find_back_edges(customers: Mapping[int, Sequence[int]]) -> list[tuple[int, int]]:
    """Back edges of an iterative DFS visiting roots and children in ascending order."""
    nodes = sorted(set(customers) | {c for cs in customers.values() for c in cs})
    state = dict.fromkeys(nodes, 0)  # 0 new, 1 on stack, 2 done
    back: list[tuple[int, int]] = []
    for root in nodes:
        if state[root]:
            continue
        state[root] = 1
        stack = [(root, iter(customers.get(root, ())))]
        while stack:
            node, it = stack[-1]
            for child in it:
                if state[child] == 1:
                    back.append((node, child))
                elif state[child] == 0:
                    state[child] = 1
                    stack.append((child, iter(customers.get(child, ()))))
                    break
            else:
                state[node] = 2
                stack.pop()
    return back


def break_cycles(customers: Mapping[int, Sequence[int]]) -> tuple[dict[int, tuple[int, ...]], list[tuple[int, int]]]:
    """Drop the lexicographically largest DFS back edge until the graph is acyclic."""
    adj = {k: list(v) for k, v in customers.items()}
    removed: list[tuple[int, int]] = []
    while True:
        back = find_back_edges(adj)
        if not back:
            break
        p, c = max(back)
        adj[p].remove(c)
        removed.append((p, c))
        log.warning("provider cycle: dropped edge %d->%d", p, c)
    return {k: tuple(v) for k, v in adj.items()}, removed


@dataclass
class CustomerConeIndex:
    """Customer cone of every AS in the graph, stored as bitsets."""

    asns: tuple[int, ...]
    bits: list[int]
    include_self: bool = True
    removed_edges: list[tuple[int, int]] = field(default_factory=list)

    def __post_init__(self):
        self._pos = {a: i for i, a in enumerate(self.asns)}

    def __contains__(self, asn) -> bool:
        return asn in self._pos

    def _bits(self, asn: int) -> int:
        try:
            return self.bits[self._pos[asn]]
        except KeyError:
            raise KeyError(f"AS{asn} not in cone index") from None

    def cone(self, asn: int) -> frozenset[int]:
        b = self._bits(asn)
        out = []
        while b:
            low = b & -b
            out.append(self.asns[low.bit_length() - 1])
            b ^= low
        return frozenset(out)

    def size(self, asn: int) -> int:
        return self._bits(asn).bit_count()

    def overlap(self, a: int, b: int) -> int:
        return (self._bits(a) & self._bits(b)).bit_count()


def customer_cones(graph: AsGraph, include_self: bool = True,
                   extra_asns: Iterable[int] = ()) -> CustomerConeIndex:
    """cone(a) = {a} | union of cone(c) over customers c, on the cycle-broken DAG.

    ``extra_asns`` adds isolated ASes (e.g. ASes with no relationship rows)
    whose cone is just themselves. With ``include_self=False`` the AS itself
    is left out of its own cone.
    """
    dag, removed = break_cycles(graph.customers)
    asns = tuple(sorted(set(graph.nodes) | set(extra_asns)))
    pos = {a: i for i, a in enumerate(asns)}
    ts = TopologicalSorter({a: dag.get(a, ()) for a in asns})
    closed = [0] * len(asns)
    for a in ts.static_order():  # customers come before their providers
        b = 1 << pos[a]
        for c in dag.get(a, ()):
            b |= closed[pos[c]]
        closed[pos[a]] = b
    if not include_self:
        bits = []
        for a in asns:
            b = 0
            for c in dag.get(a, ()):
                b |= closed[pos[c]]
            bits.append(b)
    else:
        bits = closed
    return CustomerConeIndex(asns, bits, include_self, removed)


def cone_overlap(index: CustomerConeIndex, a: int, b: int) -> int:
    return index.overlap(a, b)


# --------------------------------------------------------------- PoP affinity

POP_MODES = ("both", "facilities", "ixps")


@dataclass
class PopIndex:
    """Per-AS PoP sets, or per-AS PoP counts when only counts are known.

    In count-only mode the number of common PoPs of a pair is not observable;
    ``common_fallback`` decides it: ``"zero"`` assumes disjoint presence and
    ``"min"`` assumes the smaller footprint is contained in the larger.
    """

    pops: dict[int, frozenset[str]] | None = None
    counts: dict[int, int] | None = None
    common_fallback: str = "zero"

    @property
    def count_only(self) -> bool:
        return self.pops is None

    def __contains__(self, asn) -> bool:
        table = self.counts if self.pops is None else self.pops
        return asn in table

    def n_pops(self, asn: int) -> int:
        if self.pops is not None:
            return len(self.pops[asn])
        return self.counts[asn]

    def common(self, a: int, b: int) -> int:
        if self.pops is not None:
            return len(self.pops[a] & self.pops[b])
        if self.common_fallback == "min":
            return min(self.counts[a], self.counts[b])
        return 0


def pop_sets(snapshot: Snapshot, mode: str = "both", common_fallback: str = "zero") -> PopIndex:
    """PoP identities per AS: facility ids ``F<n>`` and IXP ids ``X<n>``.

    Falls back to count-only mode from ``fac_count``/``ix_count`` when the
    snapshot carries no membership lists.
    """
    if mode not in POP_MODES:
        raise ValueError(f"unknown PoP mode {mode!r}")
    prefixes = {"both": ("F", "X"), "facilities": ("F",), "ixps": ("X",)}[mode]
    if snapshot.memberships is not None:
        pops = {a: frozenset(p for p in s if p.startswith(prefixes))
                for a, s in snapshot.memberships.items()}
        for a in snapshot.peeringdb_net["asn"]:
            pops.setdefault(int(a), frozenset())
        return PopIndex(pops=pops)
    pdb = snapshot.peeringdb_net
    cols = {"both": ("fac_count", "ix_count"), "facilities": ("fac_count",), "ixps": ("ix_count",)}[mode]
    if not all(c in pdb for c in cols):
        raise ValueError("snapshot has neither PoP memberships nor fac_count/ix_count")
    total = sum(pdb[c].fillna(0).astype("int64") for c in cols)
    counts = {int(a): int(n) for a, n in zip(pdb["asn"], total)}
    return PopIndex(counts=counts, common_fallback=common_fallback)


def affinity(p1: int, p2: int, p0: int) -> tuple[float, float, float]:
    """PoP affinity of each AS toward the other, and their geometric mean.

    ``alpha_ab = (p2 - p0) / |P1 u P2|`` with ``|P1 u P2| = p1 + p2 - p0``.
    Both sets empty gives 0 everywhere.
    """
    if p1 < 0 or p2 < 0 or p0 < 0:
        raise ValueError("PoP counts must be non-negative")
    if p0 > min(p1, p2):
        raise ValueError(f"common PoPs {p0} exceed min({p1}, {p2})")
    union = (p1 - p0) + (p2 - p0) + p0
    if union == 0:
        return 0.0, 0.0, 0.0
    ab = (p2 - p0) / union
    ba = (p1 - p0) / union
    return ab, ba, math.sqrt(ab * ba)


@dataclass(frozen=True)
class PairFeature:
    cone_overlap: int
    affinity_score: float


def pair_features(index: CustomerConeIndex, pop_index: PopIndex,
                  pairs: Iterable[tuple[int, int]]) -> dict[tuple[int, int], PairFeature]:
    out: dict[tuple[int, int], PairFeature] = {}
    for a, b in pairs:
        a, b = int(a), int(b)
        if a == b:
            raise ValueError(f"self pair AS{a}")
        overlap = index.overlap(a, b)
        p1, p2 = pop_index.n_pops(a), pop_index.n_pops(b)
        _, _, score = affinity(p1, p2, pop_index.common(a, b))
        out[(a, b)] = PairFeature(overlap, score)
    return out

