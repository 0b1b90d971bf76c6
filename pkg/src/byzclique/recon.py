"""Reconstruction of the agreement graph A and the disagreement graph D.

Given a committee structure, an ordered pair (u, v) is an agreement edge when
the agreed bits say both u claims v and v claims u, and a disagreement edge
when exactly one of the two claims it.  Honest pairs never disagree, so every
disagreement edge touches a Byzantine node.

Both procedures communicate through committees: a node speaks only about the
nodes whose committee it sits in, and receivers take a majority over the
committee.
"""
from __future__ import annotations

import enum
import itertools
import json
import math
from bisect import bisect_left
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .committees import CommitteeStructure
from .graphcore import Graph, HereditaryClass, class_growth_bits, class_members, find_deletion_set
from .netsim import Network, decode_uint, encode_uint, id_bits

CLASS_INDEX_MAX_N = 6


class Decision(str, enum.Enum):
    ACCEPT = "ACCEPT"
    REJECT = "REJECT"

    def __str__(self) -> str:
        return self.value


def _pairs_from_matrix(mat: np.ndarray) -> frozenset:
    us, vs = np.nonzero(np.triu(mat, 1))
    return frozenset((int(u) + 1, int(v) + 1) for u, v in zip(us, vs))


@dataclass(frozen=True)
class AgreementView:
    n: int
    A: frozenset
    D: frozenset

    @classmethod
    def from_bits(cls, bits: np.ndarray) -> "AgreementView":
        bits = np.asarray(bits, dtype=bool)
        return cls(bits.shape[0], _pairs_from_matrix(bits & bits.T), _pairs_from_matrix(bits ^ bits.T))

    def graph_a(self) -> Graph:
        return Graph(self.n, self.A)

    def graph_d(self) -> Graph:
        return Graph(self.n, self.D)

    def degree_d(self, v: int) -> int:
        return sum(1 for e in self.D if v in e)


def ground_truth_view(structure: CommitteeStructure) -> AgreementView:
    return AgreementView.from_bits(structure.reference)


def _own_diag(net: Network, got: np.ndarray, payload: np.ndarray) -> np.ndarray:
    """Receiver-major inbox with each node's own payload in its own slot."""
    eff = got.transpose(1, 0, 2).copy()
    n = eff.shape[0]
    width = min(payload.shape[1], eff.shape[2])
    idx = np.arange(n)
    eff[idx, idx, :] = False
    eff[idx, idx, :width] = payload[:, :width]
    return eff


def _committee_index(structure: CommitteeStructure):
    """Members of each committee and the slot each member uses for that node."""
    n = structure.n
    pos = [{int(u): i for i, u in enumerate(structure.inverse[w])} for w in range(n)]
    members = np.stack([np.asarray(c, dtype=np.int64) for c in structure.comm])
    slots = np.array([[pos[int(w)][u] for w in structure.comm[u]] for u in range(n)], dtype=np.int64)
    return members, slots


def _value_majority(vals: np.ndarray):
    """Majority along the last axis; entries with no strict majority become 0."""
    m = vals.shape[-1]
    srt = np.sort(vals, axis=-1)
    cand = srt[..., m // 2]
    count = (vals == cand[..., None]).sum(axis=-1)
    ok = 2 * count > m
    return np.where(ok, cand, 0), ~ok


def _gather(eff: np.ndarray, members: np.ndarray, slots: np.ndarray, width: int) -> np.ndarray:
    """(recv, u, member, width): the field each member of Comm(u) sent about u."""
    offs = slots[:, :, None] * width + np.arange(width)
    return eff[:, members[:, :, None], offs]


def _d_rows(views: np.ndarray) -> np.ndarray:
    return views ^ views.transpose(0, 2, 1)


@dataclass
class DisagreementResult:
    outputs: dict  # 1-based node -> frozenset of D edges
    heavy: dict  # 1-based node -> frozenset of nodes with D-degree > b
    truncated: bool
    ties: int
    rounds: int


def reconstruct_disagreement(net: Network, structure: CommitteeStructure, b: int,
                             phase: str | None = None) -> DisagreementResult:
    """Every node learns D in two committee-mediated exchanges.

    First every node learns each node's D-degree.  Then lists go out: for a
    node of degree at most b its whole D-neighbourhood, for a heavier node
    only its heavy D-neighbours (at most b of them, flagged if cut).
    """
    n = structure.n
    phase = phase or f"disagreement/{structure.leader}"
    start = net.round
    idb = id_bits(n)
    drows = _d_rows(structure.views)  # (holder, u, x)
    inv = structure.inverse
    members, slots = _committee_index(structure)
    ties = 0

    # exchange 1: degrees
    lmax = max(len(x) for x in inv) * idb
    payload = np.zeros((n, max(lmax, 1)), dtype=bool)
    lengths = np.zeros(n, dtype=np.int64)
    all_degs = encode_uint(drows.sum(axis=2), idb)  # (holder, u, idb)
    for w in range(n):
        payload[w, : len(inv[w]) * idb] = all_degs[w, inv[w]].reshape(-1)
        lengths[w] = len(inv[w]) * idb
    got = net.exchange(f"{phase}/degrees", payload, lengths)
    eff = _own_diag(net, got, payload)
    reports = decode_uint(_gather(eff, members, slots, idb))  # (recv, u, m)
    degrees, tie = _value_majority(reports)
    honest = net.honest
    ties += int(tie[honest].sum())

    # exchange 2: neighbour lists
    cw = max(1, int(b).bit_length())
    truncated = False
    blobs = []
    field_cache: dict = {}
    for w in range(n):
        heavy = degrees[w] > b
        hkey = heavy.tobytes()
        parts = []
        for u in inv[w].tolist():
            key = (u, hkey, drows[w, u].tobytes())
            if key not in field_cache:
                nbrs = np.flatnonzero(drows[w, u])
                cut = False
                if heavy[u]:
                    nbrs = nbrs[heavy[nbrs]]
                if len(nbrs) > b:
                    nbrs = nbrs[:b]
                    cut = True
                text = format(len(nbrs), f"0{cw}b") + "".join(format(int(x), f"0{idb}b") for x in nbrs)
                field_cache[key] = (text, cut)
            text, cut = field_cache[key]
            truncated |= cut
            parts.append(text)
        blobs.append("".join(parts))
    width = max(1, max(len(x) for x in blobs))
    payload = np.zeros((n, width), dtype=bool)
    for w, blob in enumerate(blobs):
        if blob:
            payload[w, : len(blob)] = np.frombuffer(blob.encode(), dtype=np.uint8) == 49
    lengths = np.array([len(x) for x in blobs], dtype=np.int64)
    got = net.exchange(f"{phase}/lists", payload, lengths)
    link_len = net.transcript.blocks[-1].lengths

    def parse(w: int, text: str) -> tuple:
        length = len(text)
        out = []
        pos = 0
        for _ in range(len(inv[w])):
            if pos + cw > length:
                out.append(())
                continue
            cnt = int(text[pos:pos + cw], 2)
            pos += cw
            ids = []
            for _ in range(cnt):
                if pos + idb > length:
                    break
                x = int(text[pos:pos + idb], 2)
                pos += idb
                if x < n:
                    ids.append(x)
            out.append(tuple(ids))
        return tuple(out)

    def as_text(bits: np.ndarray, length: int) -> str:
        return (bits[:length].view(np.uint8) + 48).tobytes().decode()

    canonical = [parse(w, blobs[w]) for w in range(n)]
    byz = sorted(net.byzantine)
    parse_cache: dict = {}
    vote_cache: dict = {}
    m = members.shape[1]
    mem_list = members.tolist()
    slot_list = slots.tolist()

    def vote(parsed) -> frozenset:
        edges = set()
        for u in range(n):
            counts: dict = {}
            for w, slot in zip(mem_list[u], slot_list[u]):
                # a member votes once per ID, however often its list repeats it
                for x in set(parsed[w][slot]):
                    counts[x] = counts.get(x, 0) + 1
            for x, c in counts.items():
                if 2 * c > m and x != u:
                    edges.add((min(u, x) + 1, max(u, x) + 1))
        return frozenset(edges)

    outputs, heavy_out = {}, {}
    for r in range(n):
        parsed = list(canonical)
        # only Byzantine senders can deliver something other than their payload
        for w in byz:
            if w != r:
                text = as_text(got[w, r], int(link_len[w, r]))
                key = (w, text)
                if key not in parse_cache:
                    parse_cache[key] = parse(w, text)
                parsed[w] = parse_cache[key]
        key = tuple(parsed[w] for w in byz)
        if key not in vote_cache:
            vote_cache[key] = vote(parsed)
        outputs[r + 1] = vote_cache[key]
        heavy_out[r + 1] = frozenset(int(v) + 1 for v in np.flatnonzero(degrees[r] > b))
    net.diagnostics["disagreement_ties"] += ties
    return DisagreementResult(outputs, heavy_out, truncated, ties, net.round - start)


# -- agreement graph -------------------------------------------------------------------


@dataclass
class AgreementResult:
    outputs: dict  # 1-based node -> frozenset of A edges, or Decision.REJECT
    backend: str
    rounds: int
    words_per_node: dict = field(default_factory=dict)
    index_bits: int | None = None

    def to_dict(self) -> dict:
        return {
            "backend": self.backend,
            "rounds": self.rounds,
            "index_bits": self.index_bits,
            "words_per_node": {str(k): v for k, v in self.words_per_node.items()},
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


def _words_per_node(net: Network, start_block: int) -> dict:
    wb = net.word_bits
    per = np.zeros(net.n, dtype=np.int64)
    for blk in net.transcript.blocks[start_block:]:
        per += (-(-blk.lengths // wb)).sum(axis=1)
    return {v + 1: int(per[v]) for v in range(net.n)}


@lru_cache(maxsize=200_000)
def _relaxed_member(cls: HereditaryClass, adj: tuple, n: int, b: int) -> bool:
    return find_deletion_set(cls, adj, n, b) is not None


def _adj_from_matrix(mat: np.ndarray) -> tuple:
    packed = np.packbits(mat, axis=1, bitorder="little")
    return tuple(int.from_bytes(row.tobytes(), "little") for row in packed)


def reconstruct_agreement(net: Network, structure: CommitteeStructure, cls: HereditaryClass, b: int,
                          backend: str = "broadcast", phase: str | None = None) -> AgreementResult:
    """Every node learns A, or every honest node outputs REJECT.

    ``broadcast``: members forward the agreed rows of their nodes; a node
    rejects when A cannot be made a member by deleting b vertices (true A
    always can, since deleting B leaves an induced subgraph of the input).
    ``class-index``: A's position in the enumerated blow-up class is split
    into n shares, each forwarded by its committee; only for n <= 6.
    """
    n = structure.n
    phase = phase or f"agreement/{structure.leader}"
    start, first_block = net.round, len(net.transcript.blocks)
    inv = structure.inverse
    members, slots = _committee_index(structure)
    views = structure.views

    if backend == "broadcast":
        lmax = max(len(x) for x in inv) * n
        payload = np.zeros((n, lmax), dtype=bool)
        lengths = np.zeros(n, dtype=np.int64)
        for w in range(n):
            payload[w, : len(inv[w]) * n] = views[w][inv[w]].reshape(-1)
            lengths[w] = len(inv[w]) * n
        got = net.exchange(f"{phase}/rows", payload, lengths)
        eff = _own_diag(net, got, payload)
        rows = _gather(eff, members, slots, n)  # (recv, u, m, n)
        claims = 2 * rows.sum(axis=2) > rows.shape[2]
        outputs = {}
        seen: dict = {}
        for r in range(n):
            key = claims[r].tobytes()
            if key not in seen:
                mat = claims[r] & claims[r].T
                np.fill_diagonal(mat, False)
                if _relaxed_member(cls, _adj_from_matrix(mat), n, b):
                    seen[key] = _pairs_from_matrix(mat)
                else:
                    seen[key] = Decision.REJECT
            outputs[r + 1] = seen[key]
        return AgreementResult(outputs, backend, net.round - start, _words_per_node(net, first_block))

    if backend != "class-index":
        raise ValueError(f"unknown agreement backend {backend!r}")
    if n > CLASS_INDEX_MAX_N:
        raise ValueError(f"class-index backend enumerates the blow-up class and is limited to n <= {CLASS_INDEX_MAX_N}")
    codes = enumerate_blowup(cls, n, b)
    total_bits = max(1, math.ceil(math.log2(len(codes) + 1)))
    share = -(-total_bits // n)
    sentinel = len(codes)
    pairs = list(itertools.combinations(range(n), 2))

    def index_of(mat: np.ndarray) -> int:
        code = sum(1 << k for k, (i, j) in enumerate(pairs) if mat[i, j] and mat[j, i])
        pos = bisect_left(codes, code)
        return pos if pos < len(codes) and codes[pos] == code else sentinel

    # Each member derives the index of A from its agreed matrix; how a committee
    # would compute it without the whole matrix is outside this model.
    shares = np.zeros((n, n * share), dtype=bool)
    for w in range(n):
        bits = encode_uint([index_of(views[w])], n * share).reshape(-1)
        shares[w] = bits
    payload = np.zeros((n, max(len(x) for x in inv) * share), dtype=bool)
    lengths = np.zeros(n, dtype=np.int64)
    for w in range(n):
        chunk = shares[w].reshape(n, share)[inv[w]].reshape(-1)
        payload[w, : chunk.size] = chunk
        lengths[w] = chunk.size
    got = net.exchange(f"{phase}/shares", payload, lengths)
    eff = _own_diag(net, got, payload)
    parts = _gather(eff, members, slots, share)  # (recv, j, m, share)
    voted = 2 * parts.sum(axis=2) > parts.shape[2]
    outputs = {}
    for r in range(n):
        idx = int(decode_uint(voted[r].reshape(-1)))
        if idx >= len(codes):
            outputs[r + 1] = Decision.REJECT
            continue
        code = codes[idx]
        outputs[r + 1] = frozenset((i + 1, j + 1) for k, (i, j) in enumerate(pairs) if code >> k & 1)
    return AgreementResult(outputs, backend, net.round - start, _words_per_node(net, first_block), total_bits)


# -- the blow-up class ---------------------------------------------------------------


def class_blowup_bound(cls: HereditaryClass, n: int, b: int) -> float:
    """log2 upper bound on the number of graphs reachable from a member by
    rewiring the edges touching some b-vertex set."""
    return class_growth_bits(cls, n) + math.log2(math.comb(n, b)) + b * n


@lru_cache(maxsize=None)
def enumerate_blowup(cls: HereditaryClass, n: int, b: int) -> tuple:
    """Sorted edge codes of every graph obtained from a member G and a b-set S
    by keeping any subset of G's edges between S and the rest and choosing
    the edges inside S freely.  Edge k is pair k of combinations(range(n), 2)."""
    if n > CLASS_INDEX_MAX_N:
        raise ValueError(f"enumeration limited to n <= {CLASS_INDEX_MAX_N}")
    pairs = list(itertools.combinations(range(n), 2))
    bit = {p: 1 << k for k, p in enumerate(pairs)}
    out = set()
    for adj in class_members(cls, n):
        gcode = sum(bit[(i, j)] for (i, j) in pairs if adj[i] >> j & 1)
        for s in itertools.combinations(range(n), b):
            sset = set(s)
            cross = [bit[p] for p in pairs if (p[0] in sset) != (p[1] in sset) and gcode & bit[p]]
            inside = [bit[p] for p in pairs if p[0] in sset and p[1] in sset]
            touching = sum(bit[p] for p in pairs if p[0] in sset or p[1] in sset)
            base = gcode & ~touching
            cross_sums = _subset_sums(cross)
            inside_sums = _subset_sums(inside)
            for c in cross_sums:
                for y in inside_sums:
                    out.add(base | c | y)
    return tuple(sorted(out))


def _subset_sums(items: list[int]) -> list[int]:
    sums = [0]
    for x in items:
        sums += [s | x for s in sums]
    return sums


def in_blowup(cls: HereditaryClass, g: Graph, b: int) -> bool:
    """Predicate form of the blow-up class, by exhaustive search over S and
    over the missing cross edges and inside edges of a preimage."""
    n = g.n
    full = (1 << n) - 1
    for s in itertools.combinations(range(n), b):
        smask = sum(1 << i for i in s)
        rest = full & ~smask
        base = [g.adj[i] & rest if not smask >> i & 1 else 0 for i in range(n)]
        for i in range(n):
            if smask >> i & 1:
                for j in range(n):
                    if rest >> j & 1 and g.adj[i] >> j & 1:
                        base[i] |= 1 << j
                        base[j] |= 1 << i
        missing = [(i, j) for i in s for j in range(n) if rest >> j & 1 and not g.adj[i] >> j & 1]
        inside = list(itertools.combinations(s, 2))
        free = missing + inside
        for k in range(1 << len(free)):
            adj = list(base)
            for t, (i, j) in enumerate(free):
                if k >> t & 1:
                    adj[i] |= 1 << j
                    adj[j] |= 1 << i
            if cls.test(adj, full):
                return True
    return False


def metrics_json(dis: DisagreementResult, agr: AgreementResult) -> str:
    return json.dumps({
        "disagreement": {"rounds": dis.rounds, "ties": dis.ties, "truncated": dis.truncated},
        "agreement": agr.to_dict(),
    }, indent=2, sort_keys=True)
