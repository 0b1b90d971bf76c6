"""Leader committee, per-node committees, phase-king agreement and relaying.

Row agreement is a batched phase-king among all n nodes, tolerating
t = |B| < n/3 faults.  After it every honest node holds the same n x n
matrix of agreed adjacency bits, and row u equals u's true row whenever u is
honest.  Committees are sampled with the shared coin; a node only *uses* the
rows and columns of the nodes whose committee it belongs to.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .netsim import Network

BOT = 2  # "no proposal" marker in the second phase-king round


def committee_size(n: int, c0: int = 3) -> int:
    if n < 1:
        raise ValueError("n must be positive")
    logn = max(1, math.ceil(math.log2(n))) if n > 1 else 1
    return min(n, max(3, c0 * logn))


def membership_cap(n: int, c0: int = 3) -> int:
    logn = max(1, math.ceil(math.log2(n))) if n > 1 else 1
    return max(2 * committee_size(n, c0), logn * logn)


# -- leader committee ------------------------------------------------------------


@dataclass(frozen=True)
class LeaderCommittee:
    members: tuple  # 1-based, ascending

    def honest_fraction(self, byzantine) -> float:
        byz = frozenset(byzantine)
        return sum(1 for v in self.members if v not in byz) / len(self.members)

    def __len__(self) -> int:
        return len(self.members)

    def __iter__(self):
        return iter(self.members)


def build_leader_committee(net: Network, c0: int = 3, label: str = "leaders") -> LeaderCommittee:
    """Sample the leader committee from the shared coin.

    No messages are needed: every honest node derives the same draw.
    """
    size = committee_size(net.n, c0)
    rng = net.coin_rng(label)
    members = np.sort(rng.choice(net.n, size=size, replace=False)) + 1
    return LeaderCommittee(tuple(int(v) for v in members))


def leader_committee_honest_prob(n: int, b: int, size: int, threshold: float = 2 / 3) -> float:
    """Exact hypergeometric probability that at least ``threshold`` of a
    uniformly sampled committee of ``size`` is honest."""
    honest = n - b
    total = math.comb(n, size)
    need = math.ceil(threshold * size - 1e-12)
    p = sum(
        math.comb(honest, h) * math.comb(b, size - h)
        for h in range(need, size + 1)
        if size - h <= b and h <= honest
    )
    return p / total


# -- phase king --------------------------------------------------------------------
# The three steps are pure functions on received value tensors so that the
# exhaustive small-case harness in the tests can drive them directly.


def pk_propose(recv1: np.ndarray, t: int) -> np.ndarray:
    """recv1: (m_recv, m_send, k) bool.  Returns (m_recv, k) in {0, 1, BOT}."""
    m = recv1.shape[1]
    ones = recv1.sum(axis=1)
    zeros = m - ones
    prop = np.full(ones.shape, BOT, dtype=np.int8)
    prop[zeros >= m - t] = 0
    prop[ones >= m - t] = 1
    return prop


def pk_adopt(recv2: np.ndarray, vals: np.ndarray, t: int):
    """recv2: (m_recv, m_send, k) in {0, 1, BOT}.  Returns (vals, mult)."""
    c1 = (recv2 == 1).sum(axis=1)
    c0 = (recv2 == 0).sum(axis=1)
    take1 = (c1 > t) & (c1 >= c0)
    take0 = (c0 > t) & ~take1
    new = np.where(take1, True, np.where(take0, False, vals))
    mult = np.where(take1, c1, np.where(take0, c0, 0))
    return new, mult


def pk_king(vals: np.ndarray, mult: np.ndarray, king_vals: np.ndarray, m: int, t: int) -> np.ndarray:
    """king_vals: (m_recv, k) what each receiver got from the king."""
    return np.where(mult < m - t, king_vals, vals)


def _member_exchange(net: Network, members: np.ndarray, payload: np.ndarray, phase: str,
                     senders: np.ndarray | None = None) -> np.ndarray:
    """Members send ``payload[i]`` to all other members; returns (m_recv, m_send, L)
    with each member's own payload on the diagonal."""
    n = net.n
    m, width = payload.shape
    bits = np.zeros((n, width), dtype=bool)
    bits[members] = payload
    mask = np.zeros(n, dtype=bool)
    mask[members] = True
    send_mask = mask.copy()
    if senders is not None:
        send_mask[:] = False
        send_mask[members[senders]] = True
    lengths = np.where(send_mask[:, None] & mask[None, :], width, 0)
    got = net.exchange(phase, bits, lengths)
    recv = got[np.ix_(members, members)].transpose(1, 0, 2).copy()
    idx = np.arange(m)
    recv[idx, idx] = payload
    return recv


def phase_king_agree(net: Network, members, inputs: np.ndarray, t: int | None = None,
                     phase: str = "agree") -> np.ndarray:
    """Batched binary agreement among ``members`` (0-based, king order).

    ``inputs`` is (m, k) bool, one row per member.  Returns (m, k): the value
    each member decides.  Tolerates t < m/3 faulty members.
    """
    members = np.asarray(members, dtype=np.int64)
    vals = np.asarray(inputs, dtype=bool).copy()
    m, k = vals.shape
    if t is None:
        t = (m - 1) // 3
    if 3 * t >= m and t > 0:
        raise ValueError(f"phase king needs t < m/3 (t={t}, m={m})")
    for p in range(t + 1):
        recv1 = _member_exchange(net, members, vals, f"{phase}/p{p}/values")
        prop = pk_propose(recv1, t)
        wire = np.stack([prop != BOT, prop == 1], axis=-1).reshape(m, 2 * k)
        recv2w = _member_exchange(net, members, wire, f"{phase}/p{p}/proposals").reshape(m, m, k, 2)
        recv2 = np.where(recv2w[..., 0], recv2w[..., 1].astype(np.int8), BOT)
        vals, mult = pk_adopt(recv2, vals, t)
        king = p % m
        recv3 = _member_exchange(net, members, vals, f"{phase}/p{p}/king", senders=np.array([king]))
        vals = pk_king(vals, mult, recv3[:, king, :], m, t)
    return vals


# -- committee structure --------------------------------------------------------------


def sample_committees(net: Network, label: str, m: int, cap: int):
    """Comm(v) for every v, keeping every node in at most ``cap`` committees
    when possible (nodes at the cap are dropped from later draws)."""
    n = net.n
    rng = net.coin_rng(label)
    load = np.zeros(n, dtype=np.int64)
    comms = []
    overflow = False
    for _ in range(n):
        pool = np.flatnonzero(load < cap)
        if len(pool) < m:
            pool = np.arange(n)
            overflow = True
        chosen = np.sort(rng.choice(pool, size=m, replace=False))
        load[chosen] += 1
        comms.append(chosen)
    inverse = [[] for _ in range(n)]
    for v, c in enumerate(comms):
        for w in c.tolist():
            inverse[w].append(v)
    return comms, [np.array(x, dtype=np.int64) for x in inverse], overflow


@dataclass
class CommitteeStructure:
    """Committees plus every node's agreed adjacency matrix for one leader.

    ``views[w]`` is node w's agreed matrix; honest nodes hold identical
    copies.  ``byzantine`` is recorded only so invariants can be checked.
    """

    n: int
    leader: int  # 1-based
    comm: list
    inverse: list
    views: np.ndarray  # (n, n, n) bool
    reference: np.ndarray  # (n, n) bool, the matrix held by honest nodes
    byzantine: frozenset  # 0-based
    cap: int
    overflow: bool = False
    rounds: int = 0
    flags: list = field(default_factory=list)

    def comm_ids(self, v: int) -> tuple:
        return tuple(int(w) + 1 for w in self.comm[v - 1])

    def inverse_ids(self, w: int) -> tuple:
        return tuple(int(v) + 1 for v in self.inverse[w - 1])

    def bit(self, v: int, w: int) -> int:
        """The agreed claim of v about w (1-based), as held by honest nodes."""
        return int(self.reference[v - 1, w - 1])

    def invariants(self, true_rows: np.ndarray, c_members: float = 2 / 3) -> dict:
        """Check every structural guarantee against ground truth."""
        n = self.n
        byz = self.byzantine
        honest = [v for v in range(n) if v not in byz]
        same_view = all(np.array_equal(self.views[w], self.reference) for w in honest)
        sizes = [len(c) for c in self.comm]
        honest_frac = [sum(1 for w in c.tolist() if w not in byz) / len(c) for c in self.comm]
        honest_rows = all(np.array_equal(self.reference[u], true_rows[u]) for u in honest)
        loads = [len(x) for x in self.inverse]
        return {
            "committee_sizes_equal": len(set(sizes)) == 1,
            "members_majority_honest": min(honest_frac) > 0.5,
            "members_two_thirds_honest": min(honest_frac) >= c_members,
            "honest_views_agree": same_view,
            "honest_rows_exact": honest_rows,
            "membership_capped": max(loads) <= self.cap,
        }

    def to_dict(self) -> dict:
        return {
            "n": self.n,
            "leader": self.leader,
            "committees": {str(v + 1): [int(w) + 1 for w in c] for v, c in enumerate(self.comm)},
            "cap": self.cap,
            "overflow": self.overflow,
            "rounds": self.rounds,
            "agreed": [[int(x) for x in row] for row in self.reference],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)


def build_committee_structure(net: Network, inputs: np.ndarray, leader: int, t: int,
                              c0: int = 3) -> CommitteeStructure:
    """Sample committees for ``leader`` and agree on every claimed row.

    ``inputs`` is (n, n) bool: row v is the adjacency node v acts on (its true
    row when honest).  ``t`` is the number of faults tolerated.
    """
    n = net.n
    start = net.round
    m = committee_size(n, c0)
    cap = membership_cap(n, c0)
    comm, inverse, overflow = sample_committees(net, f"committees/{leader}", m, cap)

    rows = np.asarray(inputs, dtype=bool)
    got = net.exchange(f"structure/{leader}/disseminate", rows, np.full(n, n))
    received = got.transpose(1, 0, 2).copy()  # (recv, send, n)
    idx = np.arange(n)
    received[idx, idx] = rows
    agreed = phase_king_agree(net, idx, received.reshape(n, n * n), t=t,
                              phase=f"structure/{leader}/agree")
    views = agreed.reshape(n, n, n)
    honest = [v for v in range(n) if v not in net.byzantine]
    reference = views[honest[0]].copy() if honest else views[0].copy()
    return CommitteeStructure(n, leader, comm, inverse, views, reference, net.byzantine, cap,
                              overflow, net.round - start)


def committee_relay(net: Network, structure: CommitteeStructure, messages: np.ndarray,
                    phase: str = "relay") -> tuple[np.ndarray, np.ndarray]:
    """Deliver m(u, v) from Comm(u) to every member of Comm(v).

    ``messages`` is (n, n, L): the message from u to v that every member of
    Comm(u) holds.  Returns ``(got, valid)``: ``got[x, u, v]`` is what holder x
    reconstructs (by majority over Comm(u)) for each v whose committee
    contains x; ``valid[x, v]`` marks those v.
    """
    n = structure.n
    msgs = np.asarray(messages, dtype=bool)
    width = msgs.shape[2]
    inv = structure.inverse
    lens = np.zeros((n, n), dtype=np.int64)
    maxlen = max(1, max(len(inv[w]) for w in range(n)) ** 2 * width)
    bits = np.zeros((n, n, maxlen), dtype=bool)
    for w in range(n):
        for x in range(n):
            if w == x:
                continue
            chunk = msgs[np.ix_(inv[w], inv[x])].reshape(-1)
            bits[w, x, : chunk.size] = chunk
            lens[w, x] = chunk.size
    got = net.exchange(phase, bits, lens)
    pos = [{int(u): i for i, u in enumerate(inv[w])} for w in range(n)]
    out = np.zeros((n, n, n, width), dtype=bool)
    valid = np.zeros((n, n), dtype=bool)
    for x in range(n):
        vs = inv[x]
        valid[x, vs] = True
        views = {}
        for w in range(n):
            if w == x:
                arr = msgs[np.ix_(inv[w], vs)]
            else:
                arr = got[w, x, : len(inv[w]) * len(vs) * width].reshape(len(inv[w]), len(vs), width)
            views[w] = arr
        for u in range(n):
            reports = np.stack([views[int(w)][pos[int(w)][u]] for w in structure.comm[u]])
            out[x, u, vs] = _bitwise_majority(reports)
    return out, valid


def _bitwise_majority(reports: np.ndarray) -> np.ndarray:
    """Strict per-bit majority over axis 0 (ties resolve to 0)."""
    return 2 * reports.sum(axis=0) > reports.shape[0]


def check_invariants(structure: CommitteeStructure, true_rows: np.ndarray) -> bool:
    return all(structure.invariants(true_rows).values())
