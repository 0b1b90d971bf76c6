"""The unit of experiment: graph, Byzantine placement, strategy, class, seed."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any

import numpy as np

from .graphcore import ByzantineSet, Graph, HereditaryClass, get_class
from .netsim import labelled_rng

PLACEMENTS = ("first", "last", "spread", "random")


def place_byzantine(n: int, count: int, rule: str = "random", seed: int = 0) -> frozenset:
    """Choose ``count`` Byzantine IDs (1-based) by a named rule."""
    if count < 0 or count > n:
        raise ValueError(f"cannot place {count} Byzantine nodes among {n}")
    if rule == "first":
        ids = range(1, count + 1)
    elif rule == "last":
        ids = range(n - count + 1, n + 1)
    elif rule == "spread":
        ids = [1 + (i * n) // count for i in range(count)] if count else []
    elif rule == "random":
        rng = labelled_rng(seed, "placement")
        ids = (rng.choice(n, count, replace=False) + 1).tolist()
    else:
        raise ValueError(f"unknown placement rule {rule!r}; known: {PLACEMENTS}")
    return frozenset(int(v) for v in ids)


@dataclass
class Scenario:
    graph: Graph
    byzantine: frozenset = frozenset()
    strategy: Any = "honest-mimic"
    cls: HereditaryClass | str | None = None
    seed: int = 0
    min_word_bits: int = 32
    round_limit: int | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.byzantine = ByzantineSet(frozenset(self.byzantine), self.graph.n).members
        if isinstance(self.strategy, str):
            from .adversary import make_strategy

            self.strategy = make_strategy(self.strategy)
        if isinstance(self.cls, str):
            self.cls = get_class(self.cls)

    @property
    def n(self) -> int:
        return self.graph.n

    @property
    def b(self) -> int:
        return len(self.byzantine)

    def honest_ids(self) -> list[int]:
        return [v for v in self.graph.nodes if v not in self.byzantine]

    def byzantine_index(self) -> frozenset:
        return frozenset(v - 1 for v in self.byzantine)

    def true_rows(self) -> np.ndarray:
        n = self.n
        rows = np.zeros((n, n), dtype=bool)
        for u, v in self.graph.edges:
            rows[u - 1, v - 1] = rows[v - 1, u - 1] = True
        return rows
