"""Graphs, hereditary classes and ground-truth oracles.

Node IDs are 1..n in the public API.  Internally every graph also carries
0-based adjacency bitmasks (``adj[i]`` has bit ``j`` set iff ``i+1 ~ j+1``),
which is what the hot loops (class membership on vertex subsets, deletion
searches, farness packing) operate on.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path
from typing import Callable, Iterable, Iterator, Sequence

FARNESS_CAP = 12


class GraphError(ValueError):
    pass


class OracleInfeasible(RuntimeError):
    """Raised when a brute-force oracle is asked to run beyond its size cap."""


def _bits(mask: int) -> Iterator[int]:
    while mask:
        low = mask & -mask
        yield low.bit_length() - 1
        mask ^= low


@dataclass(frozen=True)
class Graph:
    n: int
    edges: frozenset = frozenset()
    adj: tuple = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.n < 0:
            raise GraphError(f"negative node count {self.n}")
        norm = set()
        adj = [0] * self.n
        for e in self.edges:
            u, v = e
            if u == v:
                raise GraphError(f"self-loop at {u}")
            if not (1 <= u <= self.n and 1 <= v <= self.n):
                raise GraphError(f"edge {e} outside 1..{self.n}")
            u, v = min(u, v), max(u, v)
            norm.add((u, v))
            adj[u - 1] |= 1 << (v - 1)
            adj[v - 1] |= 1 << (u - 1)
        object.__setattr__(self, "edges", frozenset(norm))
        object.__setattr__(self, "adj", tuple(adj))

    @classmethod
    def from_edges(cls, n: int, edges: Iterable[tuple[int, int]]) -> "Graph":
        edges = list(edges)
        seen = set()
        for u, v in edges:
            key = (min(u, v), max(u, v))
            if key in seen:
                raise GraphError(f"duplicate edge {key}")
            seen.add(key)
        return cls(n, frozenset(edges))

    @classmethod
    def from_adjacency(cls, adj: Sequence[int]) -> "Graph":
        n = len(adj)
        edges = {(i + 1, j + 1) for i in range(n) for j in _bits(adj[i]) if j > i}
        return cls(n, frozenset(edges))

    def has_edge(self, u: int, v: int) -> bool:
        return bool(self.adj[u - 1] >> (v - 1) & 1)

    def neighbors(self, v: int) -> set[int]:
        return {j + 1 for j in _bits(self.adj[v - 1])}

    def degree(self, v: int) -> int:
        return self.adj[v - 1].bit_count()

    @property
    def nodes(self) -> range:
        return range(1, self.n + 1)

    def __len__(self) -> int:
        return self.n

    def sorted_edges(self) -> list[tuple[int, int]]:
        return sorted(self.edges)


def induced_subgraph(g: Graph, s: Iterable[int]) -> Graph:
    """Induced subgraph on ``s``, relabelled to 1..|s| in increasing ID order."""
    nodes = sorted(set(s))
    for v in nodes:
        if not 1 <= v <= g.n:
            raise GraphError(f"node {v} not in 1..{g.n}")
    relabel = {v: i + 1 for i, v in enumerate(nodes)}
    edges = {(relabel[u], relabel[v]) for u, v in g.edges if u in relabel and v in relabel}
    return Graph(len(nodes), frozenset(edges))


def disjoint_union(*graphs: Graph) -> Graph:
    edges = set()
    offset = 0
    for g in graphs:
        edges.update((u + offset, v + offset) for u, v in g.edges)
        offset += g.n
    return Graph(offset, frozenset(edges))


# -- membership kernels over (adjacency masks, vertex-subset mask) ---------


def _components(adj: Sequence[int], vs: int) -> Iterator[int]:
    rest = vs
    while rest:
        start = rest & -rest
        comp = start
        frontier = start
        while frontier:
            nxt = 0
            for i in _bits(frontier):
                nxt |= adj[i]
            nxt &= vs & ~comp
            comp |= nxt
            frontier = nxt
        rest &= ~comp
        yield comp


def _is_forest(adj: Sequence[int], vs: int) -> bool:
    twice_edges = sum((adj[i] & vs).bit_count() for i in _bits(vs))
    ncomp = sum(1 for _ in _components(adj, vs))
    return twice_edges // 2 == vs.bit_count() - ncomp


def _is_bipartite(adj: Sequence[int], vs: int) -> bool:
    for comp in _components(adj, vs):
        start = comp & -comp
        side = [start, 0]
        frontier = start
        seen = start
        parity = 0
        while frontier:
            nxt = 0
            for i in _bits(frontier):
                nxt |= adj[i]
            nxt &= comp
            parity ^= 1
            if nxt & side[parity ^ 1]:
                return False
            nxt &= ~seen
            side[parity] |= nxt
            seen |= nxt
            frontier = nxt
    return True


def _is_triangle_free(adj: Sequence[int], vs: int) -> bool:
    for i in _bits(vs):
        nb = adj[i] & vs & ~((2 << i) - 1)
        for j in _bits(nb):
            if adj[j] & nb:
                return False
    return True


def _is_cluster(adj: Sequence[int], vs: int) -> bool:
    for i in _bits(vs):
        closed = (adj[i] & vs) | (1 << i)
        for j in _bits(adj[i] & vs):
            if (adj[j] & vs) | (1 << j) != closed:
                return False
    return True


def _is_edgeless(adj: Sequence[int], vs: int) -> bool:
    return all(not (adj[i] & vs) for i in _bits(vs))


# -- growth bounds ----------------------------------------------------------


def _forest_growth(n: int) -> float:
    # |F_n| <= (n+1)^(n-1) <= n^n for n >= 2 (attach each component to a new root).
    return n * math.log2(n) if n > 1 else 0.0


def _mantel_growth(n: int) -> float:
    # Triangle-free graphs have at most floor(n^2/4) edges (Mantel), so the class
    # size is at most the number of edge sets of that size or smaller.
    pairs = n * (n - 1) // 2
    total = sum(math.comb(pairs, k) for k in range(n * n // 4 + 1))
    return math.log2(total)


def _bipartite_growth(n: int) -> float:
    # 2^n colourings times 2^floor(n^2/4) cross edge sets.
    return min(n + n * n // 4, _mantel_growth(n))


@lru_cache(maxsize=None)
def _bell(n: int) -> int:
    row = [1]
    for _ in range(n):
        nxt = [row[-1]]
        for x in row:
            nxt.append(nxt[-1] + x)
        row = nxt
    return row[0]


def _cluster_growth(n: int) -> float:
    return math.log2(_bell(n))


@dataclass(frozen=True)
class HereditaryClass:
    """A graph class closed under induced subgraphs.

    ``test(adj, vs)`` decides membership of the subgraph induced by the vertex
    mask ``vs``.  ``isolated_closed`` records that adding isolated vertices to a
    member keeps it a member; ``monotone`` that deleting edges does.  Both are
    structural facts about the class that the search routines may exploit.
    """

    name: str
    test: Callable[[Sequence[int], int], bool] = field(compare=False)
    growth_formula: Callable[[int], float] = field(compare=False)
    isolated_closed: bool = True
    monotone: bool = False

    def contains(self, g: Graph) -> bool:
        return self.test(g.adj, (1 << g.n) - 1)

    def contains_masked(self, adj: Sequence[int], vs: int) -> bool:
        return self.test(adj, vs)

    def growth_bound(self, n: int) -> float:
        return self.growth_formula(n)

    def __repr__(self) -> str:
        return f"HereditaryClass({self.name!r})"


FORESTS = HereditaryClass("forests", _is_forest, _forest_growth, monotone=True)
BIPARTITE = HereditaryClass("bipartite", _is_bipartite, _bipartite_growth, monotone=True)
TRIANGLE_FREE = HereditaryClass("triangle-free", _is_triangle_free, _mantel_growth, monotone=True)
CLUSTER = HereditaryClass("cluster", _is_cluster, _cluster_growth)
EDGELESS = HereditaryClass("edgeless", _is_edgeless, lambda n: 0.0, monotone=True)

BUILTIN_CLASSES = (FORESTS, BIPARTITE, TRIANGLE_FREE, CLUSTER)
CLASSES = {c.name: c for c in BUILTIN_CLASSES + (EDGELESS,)}


def get_class(name: str | HereditaryClass) -> HereditaryClass:
    if isinstance(name, HereditaryClass):
        return name
    try:
        return CLASSES[name]
    except KeyError:
        raise KeyError(f"unknown graph class {name!r}; known: {sorted(CLASSES)}") from None


def membership(cls: HereditaryClass, g: Graph) -> bool:
    return cls.contains(g)


# -- enumeration -------------------------------------------------------------


def all_adjacencies(n: int) -> Iterator[tuple[int, ...]]:
    """Every labelled graph on ``n`` nodes as a tuple of adjacency masks."""
    pairs = list(itertools.combinations(range(n), 2))
    for code in range(1 << len(pairs)):
        adj = [0] * n
        for k, (i, j) in enumerate(pairs):
            if code >> k & 1:
                adj[i] |= 1 << j
                adj[j] |= 1 << i
        yield tuple(adj)


@lru_cache(maxsize=None)
def class_members(cls: HereditaryClass, n: int) -> tuple[tuple[int, ...], ...]:
    full = (1 << n) - 1
    return tuple(adj for adj in all_adjacencies(n) if cls.test(adj, full))


def count_members(cls: HereditaryClass, n: int) -> int:
    return len(class_members(cls, n))


ENUMERATION_MAX_N = 6


def class_growth_bits(cls: HereditaryClass, n: int) -> float:
    """Upper bound on log2 |G_n|; exact (by enumeration) for n <= 6."""
    if n < 1:
        raise ValueError("n must be >= 1")
    if n <= ENUMERATION_MAX_N:
        return math.log2(count_members(cls, n))
    return cls.growth_bound(n)


# -- deletion search ---------------------------------------------------------


def minimal_obstruction(cls: HereditaryClass, adj: Sequence[int], vs: int) -> int:
    """Shrink a non-member vertex set to an inclusion-minimal non-member one."""
    cur = vs
    for i in _bits(vs):
        trial = cur & ~(1 << i)
        if not cls.test(adj, trial):
            cur = trial
    return cur


def find_deletion_set(
    cls: HereditaryClass,
    adj: Sequence[int],
    n: int,
    budget: int,
    must_cover: Iterable[tuple[int, int]] = (),
) -> int | None:
    """Find a vertex mask S with |S| <= budget, hitting every pair in
    ``must_cover`` (0-based), such that the graph minus S is in ``cls``.

    Bounded search tree: branch on the endpoints of an uncovered pair, or on
    the vertices of a minimal forbidden induced subgraph.  Exact for any
    hereditary class.  Returns None when no such set exists.
    """
    cover = [(1 << u) | (1 << v) for u, v in must_cover]
    full = (1 << n) - 1
    seen: set[int] = set()

    def go(s: int, left: int) -> int | None:
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
        rest = full & ~s
        if cls.test(adj, rest):
            return s
        if left == 0:
            return None
        for i in _bits(minimal_obstruction(cls, adj, rest)):
            hit = go(s | 1 << i, left - 1)
            if hit is not None:
                return hit
        return None

    return go(0, budget)


def pad_mask(s: int, n: int, size: int) -> int:
    """Grow ``s`` to exactly ``size`` vertices using the smallest free indices."""
    for i in range(n):
        if s.bit_count() >= size:
            break
        s |= 1 << i
    return s


# -- farness oracle ------------------------------------------------------------


def minimal_non_member_sets(cls: HereditaryClass, g: Graph, max_size: int | None = None) -> list[int]:
    """All inclusion-minimal vertex masks inducing a non-member, by size.

    A non-member subset containing no earlier-found minimal set is itself
    minimal: by heredity any non-member proper subset would contain one.
    """
    found: list[int] = []
    top = g.n if max_size is None else min(max_size, g.n)
    for k in range(1, top + 1):
        for combo in itertools.combinations(range(g.n), k):
            s = 0
            for i in combo:
                s |= 1 << i
            if any(m & s == m for m in found):
                continue
            if not cls.test(g.adj, s):
                found.append(s)
    return found


def _packing_at_least(sets: list[int], need: int) -> bool:
    sets = sorted(sets, key=lambda m: (m.bit_count(), m))

    def go(start: int, used: int, count: int) -> bool:
        if count >= need:
            return True
        for idx in range(start, len(sets)):
            m = sets[idx]
            if not m & used and go(idx + 1, used | m, count + 1):
                return True
        return False

    return go(0, 0, 0)


def is_f_far(g: Graph, cls: HereditaryClass, f: int, cap: int = FARNESS_CAP) -> bool:
    """True iff ``g`` has f+1 vertex-disjoint induced subgraphs outside ``cls``.

    Exhaustive: enumerate minimal non-member vertex sets by increasing size,
    then pack them disjointly by backtracking.  Packing minimal sets suffices
    because every non-member set can be shrunk to one.
    """
    if f < 0:
        raise ValueError("f must be >= 0")
    if g.n > cap:
        raise OracleInfeasible(f"farness oracle capped at n={cap}, got n={g.n}")
    need = f + 1
    if cls.contains(g):
        return False
    found: list[int] = []
    for k in range(1, g.n + 1):
        have = len(found)
        if have < need:
            smallest = min((m.bit_count() for m in found), default=k)
            # any packing needs >= need - have sets of size >= k
            if have * smallest + (need - have) * k > g.n:
                break
        for combo in itertools.combinations(range(g.n), k):
            s = 0
            for i in combo:
                s |= 1 << i
            if any(m & s == m for m in found):
                continue
            if not cls.test(g.adj, s):
                found.append(s)
        if len(found) >= need and _packing_at_least(found, need):
            return True
    return _packing_at_least(found, need)


# -- edge-list file format -------------------------------------------------------


def parse_edgelist(text: str) -> Graph:
    lines = [ln.strip() for ln in text.splitlines()]
    lines = [ln for ln in lines if ln and not ln.startswith("#")]
    if not lines:
        raise GraphError("empty edge-list: missing node count line")
    try:
        n = int(lines[0])
        edges = []
        for ln in lines[1:]:
            u, v = ln.split()
            edges.append((int(u), int(v)))
    except ValueError as exc:
        raise GraphError(f"malformed edge-list: {exc}") from None
    return Graph.from_edges(n, edges)


def read_edgelist(path: str | Path) -> Graph:
    return parse_edgelist(Path(path).read_text())


def format_edgelist(g: Graph) -> str:
    out = [str(g.n)] + [f"{u} {v}" for u, v in g.sorted_edges()]
    return "\n".join(out) + "\n"


def write_edgelist(g: Graph, path: str | Path) -> None:
    Path(path).write_text(format_edgelist(g))


# -- generators ------------------------------------------------------------------


def path_graph(n: int) -> Graph:
    return Graph(n, frozenset((i, i + 1) for i in range(1, n)))


def cycle_graph(n: int) -> Graph:
    if n < 3:
        raise GraphError("cycle needs at least 3 nodes")
    return Graph(n, frozenset([(i, i + 1) for i in range(1, n)] + [(1, n)]))


def complete_graph(n: int) -> Graph:
    return Graph(n, frozenset(itertools.combinations(range(1, n + 1), 2)))


def empty_graph(n: int) -> Graph:
    return Graph(n)


def pad_isolated(g: Graph, n: int) -> Graph:
    if n < g.n:
        raise GraphError(f"cannot pad {g.n}-node graph down to {n}")
    return Graph(n, g.edges)


def disjoint_copies(piece: Graph, count: int, n: int | None = None) -> Graph:
    g = disjoint_union(*([piece] * count)) if count else Graph(0)
    return g if n is None else pad_isolated(g, n)


def random_forest(n: int, rng, edge_keep: float = 0.8) -> Graph:
    """Random recursive tree with each edge kept independently."""
    edges = set()
    for v in range(2, n + 1):
        if rng.random() < edge_keep:
            edges.add((int(rng.integers(1, v)), v))
    return Graph(n, frozenset(edges))


def erdos_renyi(n: int, p: float, rng) -> Graph:
    edges = {(u, v) for u, v in itertools.combinations(range(1, n + 1), 2) if rng.random() < p}
    return Graph(n, frozenset(edges))


def random_bipartite(n: int, p: float, rng) -> Graph:
    side = [bool(rng.random() < 0.5) for _ in range(n)]
    edges = {(u, v) for u, v in itertools.combinations(range(1, n + 1), 2)
             if side[u - 1] != side[v - 1] and rng.random() < p}
    return Graph(n, frozenset(edges))


def random_triangle_free(n: int, p: float, rng) -> Graph:
    """Offer each pair in random order; keep it if kept and no triangle forms."""
    pairs = list(itertools.combinations(range(n), 2))
    order = rng.permutation(len(pairs))
    adj = [0] * n
    for k in order.tolist():
        u, v = pairs[k]
        if rng.random() < p and not adj[u] & adj[v]:
            adj[u] |= 1 << v
            adj[v] |= 1 << u
    return Graph.from_adjacency(adj)


def random_cluster(n: int, rng, max_parts: int | None = None) -> Graph:
    parts = int(rng.integers(1, (max_parts or n) + 1))
    label = rng.integers(0, parts, size=n)
    edges = {(u, v) for u, v in itertools.combinations(range(1, n + 1), 2) if label[u - 1] == label[v - 1]}
    return Graph(n, frozenset(edges))


def random_member(cls: HereditaryClass, n: int, rng) -> Graph:
    """A random member of a built-in class (rejection-free generators)."""
    if cls.name == "forests":
        return random_forest(n, rng)
    if cls.name == "bipartite":
        return random_bipartite(n, 0.4, rng)
    if cls.name == "triangle-free":
        return random_triangle_free(n, 0.4, rng)
    if cls.name == "cluster":
        return random_cluster(n, rng)
    if cls.name == "edgeless":
        return empty_graph(n)
    raise KeyError(f"no generator for class {cls.name!r}")


def minimal_non_member(cls: HereditaryClass, size_limit: int) -> Graph:
    """A small forbidden induced subgraph: a triangle, the longest odd cycle
    within ``size_limit`` for bipartite, a 3-node path for cluster."""
    if cls.name in ("forests", "triangle-free"):
        return cycle_graph(3)
    if cls.name == "bipartite":
        k = size_limit if size_limit % 2 else size_limit - 1
        if k < 3:
            raise GraphError("no odd cycle fits")
        return cycle_graph(k)
    if cls.name == "cluster":
        return path_graph(3)
    if cls.name == "edgeless":
        return path_graph(2)
    raise KeyError(f"no forbidden subgraph known for class {cls.name!r}")


def far_instance(cls: HereditaryClass, n: int, f: int) -> Graph:
    """f+1 disjoint forbidden subgraphs padded with isolated nodes to n."""
    piece = minimal_non_member(cls, n // (f + 1))
    if piece.n * (f + 1) > n:
        raise GraphError(f"{f + 1} copies of a {piece.n}-node forbidden subgraph exceed n={n}")
    return disjoint_copies(piece, f + 1, n)


@dataclass(frozen=True)
class ByzantineSet:
    members: frozenset
    n: int

    def __post_init__(self):
        members = frozenset(self.members)
        object.__setattr__(self, "members", members)
        bad = [v for v in members if not 1 <= v <= self.n]
        if bad:
            raise GraphError(f"Byzantine IDs {sorted(bad)} outside 1..{self.n}")
        if 3 * len(members) >= self.n and members:
            raise GraphError(f"|B|={len(members)} must be < n/3 (n={self.n})")

    def __len__(self) -> int:
        return len(self.members)

    def __contains__(self, v: object) -> bool:
        return v in self.members
