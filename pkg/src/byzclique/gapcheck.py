"""Local gap measurement on a reconstructed (A, D) pair.

A node accepts when the agreement graph is already a member.  Otherwise it
looks for a suspect set S of size b that covers every disagreement edge and a
set F of re-chosen pairs such that the rewritten graph is a member.  Two rules
say which pairs F may re-choose:

``any-incident``
    F ranges over every pair touching S and replaces all of A's pairs there.
``claim-consistent`` (default)
    F ranges over the pairs inside S and the disagreement pairs; agreement
    edges between S and the rest stay.  An agreement pair is one both
    committees vouch for, so at most one endpoint of it can be lying; it
    stays fixed unless both endpoints are suspects.

The first rule is unsound once two Byzantine nodes sit in the same forbidden
subgraph: they can falsify the pair between them consistently, leave no
disagreement edge behind, and free S to break other subgraphs.  Under the
second rule every changed pair lies inside B or S, so b+1 disjoint forbidden
subgraphs cannot all be broken, while S = B and F = the true pairs inside B
and on disagreement pairs still reproduce G.

``method="search"`` runs an exact bounded search tree over S.  The literal
enumeration over S and F is ``method="exhaustive"`` and serves as a
cross-check on small inputs.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass
from functools import lru_cache
from typing import Iterator, Sequence

from .graphcore import CLUSTER, Graph, HereditaryClass, _bits, find_deletion_set, minimal_obstruction, pad_mask
from .recon import AgreementView, Decision

EXHAUSTIVE_MAX_N = 12
EXHAUSTIVE_MAX_FREE_PAIRS = 22
RULES = ("claim-consistent", "any-incident")
DEFAULT_RULE = "claim-consistent"


class GapInfeasible(RuntimeError):
    """The requested method cannot decide this instance within its caps."""


@dataclass(frozen=True)
class GapInstance:
    view: AgreementView
    b: int
    cls: HereditaryClass

    @property
    def n(self) -> int:
        return self.view.n


@dataclass(frozen=True)
class GapResult:
    decision: Decision
    cover: frozenset | None = None  # S, 1-based
    rewrite_edges: frozenset | None = None  # F, 1-based pairs

    def __str__(self) -> str:
        return str(self.decision)


def enumerate_covers(d_edges, b: int, n: int) -> Iterator[frozenset]:
    """Every size-b vertex set (1-based) touching all ``d_edges``, in
    lexicographic order."""
    if b < 0:
        raise ValueError("b must be >= 0")
    d_edges = list(d_edges)
    for s in itertools.combinations(range(1, n + 1), b):
        ss = set(s)
        if all(u in ss or v in ss for u, v in d_edges):
            yield frozenset(s)


def touching(s, n: int) -> list[tuple[int, int]]:
    """Pairs with at least one endpoint in ``s`` (1-based, sorted)."""
    ss = set(s)
    return [(u, v) for u, v in itertools.combinations(range(1, n + 1), 2) if u in ss or v in ss]


def free_pairs(s, d_edges, n: int, rule: str = DEFAULT_RULE) -> list[tuple[int, int]]:
    """The pairs F may choose for suspect set ``s`` under ``rule``."""
    if rule == "any-incident":
        return touching(s, n)
    if rule != "claim-consistent":
        raise ValueError(f"unknown rule {rule!r}; known: {RULES}")
    ss = set(s)
    inside = {(u, v) for u, v in itertools.combinations(sorted(ss), 2)}
    dd = {(min(e), max(e)) for e in d_edges if e[0] in ss or e[1] in ss}
    return sorted(inside | dd)


def rewrite(a_edges, s, f_edges, n: int, rule: str = "any-incident", d_edges=()) -> Graph:
    """The rewritten graph: F plus the agreement edges F may not touch.

    ``any-incident`` drops every A pair touching S; ``claim-consistent`` drops
    only A pairs inside S.  F must lie within the rule's free pairs.
    """
    ss = set(s)
    allowed = set(free_pairs(s, d_edges, n, rule))
    norm = {(min(e), max(e)) for e in f_edges}
    for e in norm:
        if e not in allowed:
            raise ValueError(f"rewrite pair {e} is not free for S={sorted(ss)} under {rule}")
    if rule == "any-incident":
        kept = {e for e in a_edges if e[0] not in ss and e[1] not in ss}
    else:
        kept = {e for e in a_edges if not (e[0] in ss and e[1] in ss)}
    return Graph(n, frozenset(kept | norm))


def _adj(n: int, edges) -> list[int]:
    adj = [0] * n
    for u, v in edges:
        adj[u - 1] |= 1 << (v - 1)
        adj[v - 1] |= 1 << (u - 1)
    return adj


def _mask_to_ids(mask: int) -> frozenset:
    return frozenset(i + 1 for i in _bits(mask))


def _pairs_of(adj: Sequence[int]) -> frozenset:
    return frozenset((i + 1, j + 1) for i in range(len(adj)) for j in _bits(adj[i]) if j > i)


# -- claim-consistent completion tests ---------------------------------------------
# Each returns (None, F) when some F completes the fixed part into a member,
# or (mask, None) where mask holds vertices one of which any larger working S
# must add.


def _fixed_part(adj_a: Sequence[int], s: int) -> list[int]:
    return [a & ~s if s >> i & 1 else a for i, a in enumerate(adj_a)]


def _monotone_block(cls, n, adj_a, d_adj, s):
    # deleting edges never hurts, so F = empty is optimal
    g = _fixed_part(adj_a, s)
    full = (1 << n) - 1
    if cls.test(g, full):
        return None, []
    return minimal_obstruction(cls, g, full), None


def _shortest_path(adj: Sequence[int], src: int, dst: int) -> int:
    parent = {src: None}
    frontier = [src]
    while frontier and dst not in parent:
        nxt = []
        for u in frontier:
            for v in _bits(adj[u]):
                if v not in parent:
                    parent[v] = u
                    nxt.append(v)
        frontier = nxt
    mask, cur = 0, dst
    while cur is not None:
        mask |= 1 << cur
        cur = parent[cur]
    return mask


def _cluster_block(cls, n, adj_a, d_adj, s):
    # fixed edges force their components to become cliques; every other
    # pair may be left out, so a completion exists iff no component
    # contains a pair that is both non-edge and not free
    fixed = _fixed_part(adj_a, s)
    seen = 0
    f_edges = []
    for i in range(n):
        if seen >> i & 1:
            continue
        comp = 1 << i
        frontier = comp
        while frontier:
            nb = 0
            for u in _bits(frontier):
                nb |= fixed[u]
            frontier = nb & ~comp
            comp |= nb
        seen |= comp
        for u in _bits(comp):
            missing = comp & ~fixed[u] & ~(1 << u)
            for w in _bits(missing):
                if w < u:
                    continue
                is_free = (s >> u & 1 and s >> w & 1) or d_adj[u] >> w & 1
                if not is_free:
                    return _shortest_path(fixed, u, w) | (1 << w) | (1 << u), None
                f_edges.append((u, w))
    return None, f_edges


def _generic_block(cls, n, adj_a, d_adj, s):
    fixed = _fixed_part(adj_a, s)
    full = (1 << n) - 1
    pairs = [(u, w) for u in range(n) for w in range(u + 1, n)
             if (s >> u & 1 and s >> w & 1) or d_adj[u] >> w & 1]
    if len(pairs) > EXHAUSTIVE_MAX_FREE_PAIRS:
        raise GapInfeasible(f"generic completion would try 2^{len(pairs)} rewrites")
    for k in range(len(pairs) + 1):
        for f in itertools.combinations(pairs, k):
            g = list(fixed)
            for u, w in f:
                g[u] |= 1 << w
                g[w] |= 1 << u
            if cls.test(g, full):
                return None, list(f)
    return full, None


def _block_fn(cls: HereditaryClass):
    if cls.monotone:
        return _monotone_block
    if cls == CLUSTER:
        return _cluster_block
    return _generic_block


def _consistent_search(cls, n, adj_a, d_edges, b) -> GapResult:
    d_adj = _adj(n, d_edges)
    cover = [(1 << (u - 1)) | (1 << (v - 1)) for u, v in d_edges]
    block = _block_fn(cls)
    seen: set = set()

    def go(s: int, left: int):
        if s in seen:
            return None
        seen.add(s)
        for pair in cover:
            if not pair & s:
                if left == 0:
                    return None
                for i in _bits(pair):
                    hit = go(s | 1 << i, left - 1)
                    if hit is not None:
                        return hit
                return None
        mask, f = block(cls, n, adj_a, d_adj, s)
        if mask is None:
            return s, f
        choices = mask & ~s
        if left == 0 or not choices:
            return None
        for i in _bits(choices):
            hit = go(s | 1 << i, left - 1)
            if hit is not None:
                return hit
        return None

    hit = go(0, b)
    if hit is None:
        return GapResult(Decision.REJECT)
    s, f = hit
    # widening S only frees more pairs, so padding keeps the witness valid
    s = pad_mask(s, n, b)
    return GapResult(Decision.ACCEPT, _mask_to_ids(s),
                     frozenset((u + 1, w + 1) for u, w in f))


def _incident_search(cls, n, adj_a, d_edges, b) -> GapResult:
    # with every pair touching S free and the class closed under adding
    # isolated vertices, some F works iff A minus S is a member
    if not cls.isolated_closed:
        raise GapInfeasible(f"search needs a class closed under isolated vertices ({cls.name})")
    cover = [(u - 1, v - 1) for u, v in d_edges]
    s = find_deletion_set(cls, adj_a, n, b, must_cover=cover)
    if s is None:
        return GapResult(Decision.REJECT)
    return GapResult(Decision.ACCEPT, _mask_to_ids(pad_mask(s, n, b)), frozenset())


def _exhaustive(cls, n, a_edges, d_edges, b, cap, rule) -> GapResult:
    if n > cap:
        raise GapInfeasible(f"exhaustive gap search capped at n={cap}, got n={n}")
    full = (1 << n) - 1
    for s in enumerate_covers(d_edges, b, n):
        pairs = free_pairs(s, d_edges, n, rule)
        if len(pairs) > EXHAUSTIVE_MAX_FREE_PAIRS:
            raise GapInfeasible(f"exhaustive gap search would try 2^{len(pairs)} rewrites per cover")
        base = _adj(n, rewrite(a_edges, s, (), n, rule, d_edges).edges)
        for k in range(len(pairs) + 1):
            for f in itertools.combinations(pairs, k):
                adj = list(base)
                for u, v in f:
                    adj[u - 1] |= 1 << (v - 1)
                    adj[v - 1] |= 1 << (u - 1)
                if cls.test(adj, full):
                    return GapResult(Decision.ACCEPT, s, frozenset(f))
    return GapResult(Decision.REJECT)


@lru_cache(maxsize=200_000)
def _measure(cls, n, a_edges, d_edges, b, method, cap, rule):
    if b < 0 or b > n:
        raise ValueError(f"b={b} outside 0..{n}")
    if rule not in RULES:
        raise ValueError(f"unknown rule {rule!r}; known: {RULES}")
    adj_a = _adj(n, a_edges)
    if cls.test(adj_a, (1 << n) - 1):
        return GapResult(Decision.ACCEPT)
    if method == "exhaustive":
        return _exhaustive(cls, n, a_edges, d_edges, b, cap, rule)
    if method in ("search", "auto"):
        if rule == "any-incident":
            return _incident_search(cls, n, adj_a, d_edges, b)
        return _consistent_search(cls, n, adj_a, d_edges, b)
    raise ValueError(f"unknown gap method {method!r}")


def measure_gap(instance: GapInstance, method: str = "auto", cap: int = EXHAUSTIVE_MAX_N,
                return_witness: bool = False, rule: str = DEFAULT_RULE):
    """ACCEPT or REJECT for one node's reconstructed view.

    ``return_witness`` gives the full :class:`GapResult`, with the cover S
    and rewrite F behind an ACCEPT that needed them.
    """
    v = instance.view
    a = frozenset(v.A)
    d = frozenset(v.D)
    if a & d:
        raise ValueError("agreement and disagreement edges overlap")
    res = _measure(instance.cls, v.n, a, d, instance.b, method, cap, rule)
    return res if return_witness else res.decision
