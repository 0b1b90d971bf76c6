from __future__ import annotations

import itertools

import numpy as np
import pytest
from hypothesis import assume, given, settings, strategies as st

from byzclique.gapcheck import (
    GapInfeasible,
    GapInstance,
    enumerate_covers,
    free_pairs,
    measure_gap,
    rewrite,
    touching,
)
from byzclique.graphcore import (
    BIPARTITE,
    BUILTIN_CLASSES,
    CLUSTER,
    FORESTS,
    Graph,
    complete_graph,
    disjoint_copies,
    is_f_far,
    membership,
    minimal_non_member,
    path_graph,
    random_member,
)
from byzclique.recon import AgreementView, Decision

ACC, REJ = Decision.ACCEPT, Decision.REJECT


def view_from_claims(g: Graph, claims: dict) -> AgreementView:
    """A and D when honest nodes report their true rows and each liar in
    ``claims`` reports the given neighbour set."""
    n = g.n
    bits = np.zeros((n, n), dtype=bool)
    for u, w in g.edges:
        bits[u - 1, w - 1] = bits[w - 1, u - 1] = True
    for v, nbrs in claims.items():
        bits[v - 1] = False
        for w in nbrs:
            if w != v:
                bits[v - 1, w - 1] = True
    return AgreementView.from_bits(bits)


def tri(i):
    """IDs of v1, v2, v3 in triangle i (1-based)."""
    return 3 * i - 2, 3 * i - 1, 3 * i


def triangle_union_instance(b):
    """|B|+1 triangles; liars v2 of triangles 2..b+1 deny both their edges."""
    g = disjoint_copies(complete_graph(3), b + 1)
    claims = {tri(i)[1]: set() for i in range(2, b + 2)}
    return g, view_from_claims(g, claims)


# -- covers ----------------------------------------------------------------------------


def test_empty_d_gives_every_set():
    assert len(list(enumerate_covers([], 2, 5))) == 10


def test_single_edge_cover():
    assert list(enumerate_covers([(1, 2)], 1, 3)) == [frozenset({1}), frozenset({2})]


def test_triangle_has_no_single_vertex_cover():
    assert list(enumerate_covers([(1, 2), (2, 3), (1, 3)], 1, 3)) == []


@settings(max_examples=100, deadline=None)
@given(st.integers(min_value=2, max_value=7).flatmap(
    lambda n: st.tuples(st.just(n), st.lists(st.tuples(st.integers(1, n), st.integers(1, n)).filter(lambda e: e[0] < e[1]),
                                             max_size=6), st.integers(0, 3))))
def test_covers_are_exactly_the_covering_sets(args):
    n, d, b = args
    got = set(enumerate_covers(d, b, n))
    want = {frozenset(s) for s in itertools.combinations(range(1, n + 1), b)
            if all(u in s or w in s for u, w in d)}
    assert got == want


# -- rewrite ---------------------------------------------------------------------------------


def test_rewrite_with_nothing_suspected_is_identity():
    a = path_graph(4).edges
    assert rewrite(a, set(), set(), 4) == path_graph(4)


def test_rewrite_drops_edges_at_the_suspect():
    a = complete_graph(4).edges
    assert rewrite(a, {1}, set(), 4).edges == {(2, 3), (2, 4), (3, 4)}


def test_rewrite_refuses_pairs_away_from_s():
    with pytest.raises(ValueError):
        rewrite(path_graph(4).edges, {1}, {(2, 3)}, 4)


def test_claim_consistent_rewrite_keeps_cross_agreement_edges():
    a = complete_graph(4).edges
    assert rewrite(a, {1}, set(), 4, rule="claim-consistent") == complete_graph(4)
    assert rewrite(a, {1, 2}, set(), 4, rule="claim-consistent").edges == a - {(1, 2)}


def test_free_pairs_stay_within_b_times_n():
    for n, b in [(6, 1), (9, 2), (12, 3)]:
        for s in [set(range(1, b + 1)), set(range(n - b + 1, n + 1))]:
            assert len(touching(s, n)) <= b * n
            assert len(free_pairs(s, [], n)) <= b * n


# -- triangles with a misleading cover ---------------------------------------------------------------------


@pytest.mark.parametrize("b", [1, 2, 3])
def test_triangle_union_instance_needs_the_consistency_property(b):
    g, view = triangle_union_instance(b)
    n = g.n
    assert is_f_far(g, FORESTS, b)
    d_expected = set()
    for i in range(2, b + 2):
        v1, v2, v3 = tri(i)
        d_expected |= {(v1, v2), (v2, v3)}
    assert view.D == d_expected
    # the inconsistent cover that hits triangles 1..b turns A into a forest
    s = {tri(i)[1] for i in range(1, b + 1)}
    gf = rewrite(view.A, s, set(), n)
    assert gf.edges == {(tri(i)[0], tri(i)[2]) for i in range(1, b + 2)}
    assert membership(FORESTS, gf)
    assert frozenset(s) not in set(enumerate_covers(view.D, b, n))
    # the exhaustive cross-check tries 2^(free pairs) rewrites, so it stops at b = 2
    methods = ("search", "exhaustive") if b <= 2 else ("search",)
    for rule in ("claim-consistent", "any-incident"):
        for method in methods:
            assert measure_gap(GapInstance(view, b, FORESTS), method=method, rule=rule) == REJ


# -- small direct cases --------------------------------------------------------------------------------


def test_forest_agreement_graph_accepts_outright():
    view = AgreementView(6, path_graph(6).edges, frozenset({(1, 6)}))
    assert measure_gap(GapInstance(view, 1, FORESTS)) == ACC


def test_two_triangles_with_honest_bits():
    g = disjoint_copies(complete_graph(3), 2)
    view = AgreementView(6, g.edges, frozenset())
    for rule in ("claim-consistent", "any-incident"):
        assert measure_gap(GapInstance(view, 1, FORESTS), method="exhaustive", rule=rule) == REJ
    # with two suspects the literal rule can cut both triangles; agreement
    # edges leaving S stay fixed under the default rule, so it still rejects
    assert measure_gap(GapInstance(view, 2, FORESTS), method="exhaustive", rule="claim-consistent") == REJ
    assert measure_gap(GapInstance(view, 2, FORESTS), method="exhaustive", rule="any-incident") == ACC


def test_literal_rule_is_unsound_with_two_liars_in_one_triangle():
    # five triangles; liars 13, 14, 15 erase the last triangle between them,
    # liar 1 denies its edges, so four suspects remain for four triangles
    n, b = 16, 4
    g = disjoint_copies(complete_graph(3), 5, n)
    assert is_f_far(g, FORESTS, b, cap=16)
    claims = {1: set(), 13: set(), 14: set(), 15: set()}
    view = view_from_claims(g, claims)
    assert measure_gap(GapInstance(view, b, FORESTS), rule="any-incident") == ACC
    assert measure_gap(GapInstance(view, b, FORESTS), rule="claim-consistent") == REJ


def test_witness_is_reported():
    # liars 1 and 7 close the path into a cycle
    g = path_graph(7)
    view = view_from_claims(g, {1: {2, 7}, 7: {6, 1}})
    res = measure_gap(GapInstance(view, 2, FORESTS), return_witness=True)
    assert res.decision == ACC and len(res.cover) == 2
    fixed = rewrite(view.A, res.cover, res.rewrite_edges, 7, rule="claim-consistent", d_edges=view.D)
    assert membership(FORESTS, fixed)


def test_overlapping_view_is_refused():
    with pytest.raises(ValueError):
        measure_gap(GapInstance(AgreementView(3, frozenset({(1, 2)}), frozenset({(1, 2)})), 1, FORESTS))


def test_exhaustive_method_respects_the_cap():
    view = AgreementView(13, complete_graph(13).edges, frozenset())
    with pytest.raises(GapInfeasible):
        measure_gap(GapInstance(view, 1, FORESTS), method="exhaustive")


# -- properties -------------------------------------------------------------------------------------------


@st.composite
def liar_instances(draw, member: bool):
    cls = draw(st.sampled_from(BUILTIN_CLASSES))
    n = draw(st.integers(min_value=4, max_value=7))
    b = draw(st.integers(min_value=1, max_value=(n - 1) // 3))
    seed = draw(st.integers(0, 10**6))
    rng = np.random.default_rng(seed)
    if member:
        g = random_member(cls, n, rng)
    else:
        # plant b+1 forbidden pieces on random nodes, then add noise
        edges = {p for p in itertools.combinations(range(1, n + 1), 2) if rng.random() < 0.3}
        piece = minimal_non_member(cls, 3)
        if draw(st.booleans()) and piece.n * (b + 1) <= n:
            order = (rng.permutation(n) + 1).tolist()
            for k in range(b + 1):
                ids = order[k * piece.n:(k + 1) * piece.n]
                edges |= {(min(ids[u - 1], ids[w - 1]), max(ids[u - 1], ids[w - 1])) for u, w in piece.edges}
        g = Graph(n, frozenset(edges))
    liars = draw(st.lists(st.integers(1, n), min_size=b, max_size=b, unique=True))
    claims = {v: {w for w in range(1, n + 1) if w != v and draw(st.booleans())} for v in liars}
    return cls, g, b, claims


@settings(max_examples=300, deadline=None)
@given(liar_instances(member=True))
def test_members_are_always_accepted(inst):
    cls, g, b, claims = inst
    view = view_from_claims(g, claims)
    for rule in ("claim-consistent", "any-incident"):
        assert measure_gap(GapInstance(view, b, cls), rule=rule) == ACC


@settings(max_examples=300, deadline=None)
@given(liar_instances(member=False))
def test_far_graphs_are_always_rejected(inst):
    cls, g, b, claims = inst
    assume(is_f_far(g, cls, b))
    view = view_from_claims(g, claims)
    assert measure_gap(GapInstance(view, b, cls)) == REJ


@settings(max_examples=300, deadline=None)
@given(liar_instances(member=False), st.sampled_from(["claim-consistent", "any-incident"]))
def test_search_agrees_with_exhaustive(inst, rule):
    cls, g, b, claims = inst
    view = view_from_claims(g, claims)
    inst_ = GapInstance(view, b, cls)
    assert measure_gap(inst_, method="search", rule=rule) == measure_gap(inst_, method="exhaustive", rule=rule)


@settings(max_examples=100, deadline=None)
@given(liar_instances(member=False), st.randoms(use_true_random=False))
def test_decision_ignores_labelling(inst, rnd):
    cls, g, b, claims = inst
    view = view_from_claims(g, claims)
    perm = list(range(1, g.n + 1))
    rnd.shuffle(perm)

    def relabel(edges):
        return frozenset((min(perm[u - 1], perm[w - 1]), max(perm[u - 1], perm[w - 1])) for u, w in edges)

    moved = AgreementView(g.n, relabel(view.A), relabel(view.D))
    assert measure_gap(GapInstance(view, b, cls)) == measure_gap(GapInstance(moved, b, cls))


def test_cluster_and_bipartite_specific_cases():
    # P3 with the middle node lying: suspect it, keep its agreement edges
    g = path_graph(3)
    view = view_from_claims(g, {2: {1}})
    assert view.A == {(1, 2)} and view.D == {(2, 3)}
    assert measure_gap(GapInstance(view, 1, CLUSTER)) == ACC
    odd = Graph(5, frozenset({(1, 2), (2, 3), (3, 4), (4, 5), (1, 5)}))
    assert measure_gap(GapInstance(AgreementView(5, odd.edges, frozenset()), 1, BIPARTITE)) == REJ
