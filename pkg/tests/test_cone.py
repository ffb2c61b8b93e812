import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from peerlens.cone import (AsGraph, PopIndex, affinity, break_cycles, build_graph, cone_overlap,
                           customer_cones, find_back_edges, pair_features, pop_sets)
from peerlens.ingest import Peer, ProviderCustomer
from peerlens.synth import synth_snapshot


def closure(customers, nodes, include_self=True):
    """Reachability by repeated BFS, independent of the bitset code."""
    out = {}
    for a in nodes:
        seen, frontier = set(), [a]
        while frontier:
            x = frontier.pop()
            for c in customers.get(x, ()):
                if c not in seen:
                    seen.add(c)
                    frontier.append(c)
        out[a] = (seen | {a}) if include_self else seen
    return out


FIXTURE = [ProviderCustomer(1, 3), ProviderCustomer(3, 4), ProviderCustomer(2, 4), ProviderCustomer(2, 5)]


def test_build_graph_adjacency():
    g = build_graph(FIXTURE)
    assert g.customers == {1: (3,), 2: (4, 5), 3: (4,)}
    assert g.peers == {}


def test_peer_edges_do_not_enter_cones():
    g = build_graph([Peer(1, 2)])
    assert g.peers == {1: (2,), 2: (1,)} and g.customers == {}
    idx = customer_cones(g)
    assert idx.cone(1) == {1} and idx.cone(2) == {2}


def test_self_loop_rejected():
    class Rec:
        asn_a = asn_b = 1
        kind = ProviderCustomer(1, 2).kind
    with pytest.raises(ValueError):
        build_graph([Rec()])


def test_fixture_cones():
    idx = customer_cones(build_graph(FIXTURE))
    assert idx.cone(1) == {1, 3, 4}
    assert idx.cone(2) == {2, 4, 5}
    assert idx.cone(5) == {5}


def test_chain():
    idx = customer_cones(build_graph([ProviderCustomer(1, 2), ProviderCustomer(2, 3)]))
    assert idx.cone(1) == {1, 2, 3}


def test_exclude_self_flag():
    idx = customer_cones(build_graph(FIXTURE), include_self=False)
    assert idx.cone(1) == {3, 4} and idx.cone(5) == set()


def test_overlap_examples():
    idx = customer_cones(build_graph(FIXTURE))
    assert cone_overlap(idx, 1, 2) == 1
    assert cone_overlap(idx, 1, 1) == idx.size(1) == 3
    assert cone_overlap(idx, 3, 5) == 0
    with pytest.raises(KeyError):
        cone_overlap(idx, 1, 99)


def test_extra_asns_are_isolated_cones():
    idx = customer_cones(build_graph(FIXTURE), extra_asns=[42])
    assert idx.cone(42) == {42}


def random_dag(rng, n, p):
    edges = set()
    for a in range(1, n + 1):
        for b in range(a + 1, n + 1):
            if rng.random() < p:
                edges.add((a, b))
    perm = rng.permutation(n) + 1  # relabel so edge direction is not sorted
    return [(int(perm[a - 1]), int(perm[b - 1])) for a, b in edges]


@pytest.mark.parametrize("seed", range(10))
def test_cones_match_brute_force_closure(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(2, 80))
    edges = random_dag(rng, n, 3.0 / n)
    g = build_graph([ProviderCustomer(a, b) for a, b in edges])
    idx = customer_cones(g)
    adj = {}
    for a, b in edges:
        adj.setdefault(a, []).append(b)
    ref = closure(adj, g.nodes)
    for a in g.nodes:
        assert idx.cone(a) == ref[a]


def test_cycle_broken_at_largest_back_edge(caplog):
    # 1 -> 2 -> 3 -> 1: DFS from 1 finds back edge (3, 1)
    dag, removed = break_cycles({1: (2,), 2: (3,), 3: (1,)})
    assert removed == [(3, 1)]
    assert find_back_edges(dag) == []
    idx = customer_cones(build_graph([ProviderCustomer(1, 2), ProviderCustomer(2, 3), ProviderCustomer(3, 1)]))
    assert idx.cone(1) == {1, 2, 3} and idx.cone(3) == {3}
    assert idx.removed_edges == [(3, 1)]


def test_two_cycles_both_broken():
    dag, removed = break_cycles({1: (2,), 2: (1, 3), 3: (4,), 4: (3,)})
    assert find_back_edges(dag) == []
    assert len(removed) == 2


@given(st.lists(st.tuples(st.integers(1, 15), st.integers(1, 15)).filter(lambda e: e[0] != e[1]), max_size=40))
def test_cone_containment_and_closure_on_broken_graph(edges):
    g = build_graph([ProviderCustomer(a, b) for a, b in edges])
    idx = customer_cones(g)
    dag, _ = break_cycles(g.customers)
    ref = closure(dag, g.nodes)
    for a in g.nodes:
        assert a in idx.cone(a)
        assert idx.cone(a) == ref[a]
        for c in dag.get(a, ()):
            assert idx.cone(c) <= idx.cone(a)


@given(st.lists(st.tuples(st.integers(1, 12), st.integers(1, 12)).filter(lambda e: e[0] < e[1]), max_size=30),
       st.tuples(st.integers(1, 12), st.integers(1, 12)).filter(lambda e: e[0] < e[1]))
def test_adding_provider_edge_never_shrinks_a_cone(edges, extra):
    # edges go from smaller to larger ASN, so the graph stays acyclic
    before = customer_cones(build_graph([ProviderCustomer(a, b) for a, b in edges]), extra_asns=extra)
    after = customer_cones(build_graph([ProviderCustomer(a, b) for a, b in edges + [extra]]))
    for a in before.asns:
        assert before.cone(a) <= after.cone(a)


@given(st.lists(st.tuples(st.integers(1, 12), st.integers(1, 12)).filter(lambda e: e[0] != e[1]), max_size=30),
       st.integers(1, 12), st.integers(1, 12))
def test_overlap_bounded_by_smaller_cone(edges, a, b):
    idx = customer_cones(build_graph([ProviderCustomer(x, y) for x, y in edges]), extra_asns=[a, b])
    ov = cone_overlap(idx, a, b)
    assert ov == len(idx.cone(a) & idx.cone(b))
    assert ov <= min(idx.size(a), idx.size(b))


# ------------------------------------------------------------------ affinity

def test_affinity_worked_example():
    ab, ba, score = affinity(3, 4, 2)
    assert ab == pytest.approx(0.4, abs=1e-15) and ba == pytest.approx(0.2, abs=1e-15)
    assert abs(score - math.sqrt(0.08)) < 1e-12
    assert abs(score - 0.282842712474619) < 1e-12


def test_affinity_identical_sets():
    assert affinity(5, 5, 5) == (0.0, 0.0, 0.0)


def test_affinity_disjoint_equal():
    assert affinity(4, 4, 0) == (0.5, 0.5, 0.5)


def test_affinity_empty_sets():
    assert affinity(0, 0, 0) == (0.0, 0.0, 0.0)


def test_affinity_bad_inputs():
    with pytest.raises(ValueError):
        affinity(2, 3, 3)
    with pytest.raises(ValueError):
        affinity(-1, 3, 0)


counts = st.tuples(st.integers(0, 60), st.integers(0, 60)).flatmap(
    lambda t: st.tuples(st.just(t[0]), st.just(t[1]), st.integers(0, min(t))))


@given(counts)
def test_affinity_properties(c):
    p1, p2, p0 = c
    ab, ba, s = affinity(p1, p2, p0)
    ab2, ba2, s2 = affinity(p2, p1, p0)
    assert s == s2 and (ab, ba) == (ba2, ab2)
    assert 0.0 <= s <= 1.0
    assert (s == 0.0) == (p1 == p0 or p2 == p0)
    union = p1 + p2 - p0
    if union:
        assert s == pytest.approx(math.sqrt((p2 - p0) * (p1 - p0)) / union, abs=1e-12)


# ------------------------------------------------------------------- PoPs

def test_pop_sets_memberships(snap200):
    idx = pop_sets(snap200)
    a = next(iter(snap200.memberships))
    assert idx.n_pops(a) == len(snap200.memberships[a])
    fac = pop_sets(snap200, "facilities")
    assert all(p.startswith("F") for s in fac.pops.values() for p in s)


def test_namespaced_pops():
    idx = PopIndex(pops={1: frozenset({"F7"}), 2: frozenset({"X7"})})
    assert idx.common(1, 2) == 0


def test_pop_union_example():
    idx = PopIndex(pops={1: frozenset({"F10", "F11", "X3"}), 2: frozenset()})
    assert idx.n_pops(1) == 3 and idx.n_pops(2) == 0


def test_count_only_mode(snap200):
    import dataclasses
    snap = dataclasses.replace(snap200, memberships=None)
    idx = pop_sets(snap)
    assert idx.count_only
    pdb = snap.peeringdb_net
    a = int(pdb["asn"].iloc[0])
    expect = int(pdb["fac_count"].fillna(0).iloc[0]) + int(pdb["ix_count"].fillna(0).iloc[0])
    assert idx.n_pops(a) == expect
    assert PopIndex(counts={1: 3, 2: 4}, common_fallback="min").common(1, 2) == 3
    assert PopIndex(counts={1: 3, 2: 4}).common(1, 2) == 0


def test_pop_sets_needs_some_source(snap200):
    import dataclasses
    snap = dataclasses.replace(snap200, memberships=None,
                               peeringdb_net=snap200.peeringdb_net.drop(columns=["fac_count", "ix_count"]))
    with pytest.raises(ValueError):
        pop_sets(snap)


def test_pair_features_fixture():
    idx = customer_cones(build_graph(FIXTURE))
    pops = PopIndex(pops={1: frozenset({"F1", "F2", "X1"}), 2: frozenset({"F1", "F2", "X1", "X2"}),
                          3: frozenset(), 4: frozenset(), 5: frozenset()})
    feats = pair_features(idx, pops, [(1, 2)])
    assert feats[(1, 2)].cone_overlap == 1
    assert feats[(1, 2)].affinity_score == affinity(3, 4, 3)[2]
    assert pair_features(idx, pops, []) == {}
    with pytest.raises(ValueError):
        pair_features(idx, pops, [(1, 1)])
