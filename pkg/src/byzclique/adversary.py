"""Byzantine strategies and the two-instance indistinguishability construction.

A strategy controls Byzantine nodes in two ways.  ``claimed_neighbors`` is the
neighbourhood a Byzantine node pretends to have; protocols run the honest
program on it ("otherwise behave honestly").  ``tamper`` is the rushing hook
called by the engine on every step with all honest payloads visible; it may
return replacement payloads for Byzantine senders only.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Any

import numpy as np

from .graphcore import FORESTS, Graph, disjoint_copies, is_f_far, pad_isolated
from .netsim import RunResult, run
from .scenario import Scenario


class Strategy:
    name = "base"

    def claimed_neighbors(self, v: int, true_nbrs: frozenset, scenario: Any) -> frozenset:
        return true_nbrs

    def tamper(self, net, phase: str, bits: np.ndarray, lengths: np.ndarray):
        return None

    def __repr__(self) -> str:
        return f"{type(self).__name__}()"


class HonestMimic(Strategy):
    name = "honest-mimic"


class FakeEdge(Strategy):
    """Every Byzantine node claims an edge to every other Byzantine node."""

    name = "fake-edge"

    def claimed_neighbors(self, v, true_nbrs, scenario):
        return frozenset(true_nbrs) | (frozenset(scenario.byzantine) - {v})


class DenyEdge(Strategy):
    """Every Byzantine node claims to have no neighbours at all."""

    name = "deny-edge"

    def claimed_neighbors(self, v, true_nbrs, scenario):
        return frozenset()


class CommitteeSplit(Strategy):
    """Equivocate on adjacency: the true row to the first half of the other
    nodes, its complement to the second half, whenever rows are disseminated."""

    name = "committee-split"
    phase_marker = "disseminate"

    def tamper(self, net, phase, bits, lengths):
        if self.phase_marker not in phase:
            return None
        n = net.n
        out = {}
        for u in sorted(net.byzantine):
            others = [v for v in range(n) if v != u]
            second = others[len(others) // 2:]
            row = np.array(bits[u], dtype=bool)
            flipped = ~row[second]
            flipped[:, u] = False
            row[second] = flipped
            out[u] = (row, np.array(lengths[u]))
        return out


class RandomStrategy(Strategy):
    """Random claimed neighbourhoods and random bits on every Byzantine link."""

    name = "random"

    def claimed_neighbors(self, v, true_nbrs, scenario):
        from .netsim import labelled_rng

        rng = labelled_rng(getattr(scenario, "seed", 0), f"adversary/claim/{v}")
        n = scenario.graph.n
        return frozenset(int(w) for w in range(1, n + 1) if w != v and rng.random() < 0.5)

    def tamper(self, net, phase, bits, lengths):
        rng = net.adversary_rng(f"{phase}@{net.round}")
        out = {}
        for u in sorted(net.byzantine):
            row = rng.random(bits.shape[1:]) < 0.5
            out[u] = (row, np.array(lengths[u]))
        return out


class EdgeLie(Strategy):
    """Honest behaviour except for specific adjacency lies.

    ``claims`` maps a Byzantine ID to ``(add, remove)`` neighbour sets.
    """

    name = "edge-lie"

    def __init__(self, claims: dict):
        self.claims = {v: (frozenset(a), frozenset(r)) for v, (a, r) in claims.items()}

    def claimed_neighbors(self, v, true_nbrs, scenario):
        add, remove = self.claims.get(v, (frozenset(), frozenset()))
        return (frozenset(true_nbrs) | add) - remove

    def __repr__(self) -> str:
        return f"EdgeLie({self.claims!r})"


STRATEGIES = {
    cls.name: cls for cls in (HonestMimic, FakeEdge, DenyEdge, CommitteeSplit, RandomStrategy)
}
BUILTIN_STRATEGIES = tuple(STRATEGIES)


def make_strategy(name: str) -> Strategy:
    try:
        return STRATEGIES[name]()
    except KeyError:
        raise KeyError(f"unknown strategy {name!r}; known: {sorted(STRATEGIES)}") from None


# -- impossibility construction ---------------------------------------------------


def triangle_ids(i: int) -> tuple[int, int, int]:
    """IDs of (v1, v2, v3) in the i-th triangle, i = 1..f+1."""
    base = 3 * (i - 1)
    return base + 1, base + 2, base + 3


@dataclass
class ScenarioPair:
    f: int
    yes_scenario: Scenario
    no_scenario: Scenario

    @property
    def honest_union(self) -> list[int]:
        ids = set(self.yes_scenario.honest_ids()) | set(self.no_scenario.honest_ids())
        return sorted(ids)


def indistinguishability_scenario(f: int, pad: int = 1, mismatched: bool = False) -> ScenarioPair:
    """The forest-recognition pair: f+1 triangles versus f+1 three-node paths.

    Yes side: the paths (each triangle minus {v1, v2}), Byzantine at every v1,
    each claiming the missing edge.  No side: the triangles, Byzantine at every
    v2, each denying that edge.  ``pad`` isolated honest nodes are appended so
    that |B| = f+1 stays strictly below n/3.  ``mismatched`` makes the yes side
    deny instead of claim, which breaks indistinguishability.
    """
    if f < 1:
        raise ValueError("the gap f must be >= 1")
    k = f + 1
    n = 3 * k + pad
    tri = Graph(3, frozenset({(1, 2), (2, 3), (1, 3)}))
    g_no = disjoint_copies(tri, k, n)
    g_yes = Graph(n, frozenset(e for e in g_no.edges if not (e[1] == e[0] + 1 and e[0] % 3 == 1)))
    yes_claims, no_claims = {}, {}
    for i in range(1, k + 1):
        v1, v2, _ = triangle_ids(i)
        yes_claims[v1] = ((), {v2}) if mismatched else ({v2}, ())
        no_claims[v2] = ((), {v1})
    yes = Scenario(g_yes, frozenset(yes_claims), EdgeLie(yes_claims), cls=FORESTS)
    no = Scenario(g_no, frozenset(no_claims), EdgeLie(no_claims), cls=FORESTS)
    return ScenarioPair(f, yes, no)


class CallbackProgram:
    """Adapter so event-driven node programs can be used in the harness."""

    def __init__(self, factory, **run_kw):
        self.factory = factory
        self.run_kw = run_kw

    def execute(self, scenario: Scenario, seed: int):
        res: RunResult = run(self.factory, scenario, seed, **self.run_kw)
        return res.outputs, res.transcript


def _as_program(program):
    if hasattr(program, "execute"):
        return program
    return CallbackProgram(program)


def assert_indistinguishable(pair: ScenarioPair, program, seed: int) -> bool:
    """Run both instances with one seed; True iff every node honest in either
    run sees a bit-identical transcript projection in both."""
    prog = _as_program(program)
    out_yes, tr_yes = prog.execute(pair.yes_scenario, seed)
    out_no, tr_no = prog.execute(pair.no_scenario, seed)
    for v in pair.honest_union:
        if tr_yes.projection_digest(v) != tr_no.projection_digest(v):
            return False
    common = set(out_yes) & set(out_no)
    return all(out_yes[v] == out_no[v] for v in common)


def check_pair(pair: ScenarioPair, cap: int = 16) -> dict:
    """Ground-truth facts the construction promises."""
    return {
        "yes_is_forest": FORESTS.contains(pair.yes_scenario.graph),
        "no_is_f_far": is_f_far(pair.no_scenario.graph, FORESTS, pair.f, cap=cap),
        "same_n": pair.yes_scenario.n == pair.no_scenario.n,
    }


__all__ = [
    "Strategy",
    "HonestMimic",
    "FakeEdge",
    "DenyEdge",
    "CommitteeSplit",
    "RandomStrategy",
    "EdgeLie",
    "STRATEGIES",
    "BUILTIN_STRATEGIES",
    "make_strategy",
    "ScenarioPair",
    "indistinguishability_scenario",
    "assert_indistinguishable",
    "CallbackProgram",
    "check_pair",
    "pad_isolated",
]
