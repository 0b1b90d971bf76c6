"""End-to-end recognition run.

A shared-coin leader committee is drawn.  For each leader in turn the nodes
build a committee structure, reconstruct D and A, measure the gap locally and
send their verdicts to the leader, who adopts the most repeated one.  Leaders
then broadcast their decisions and every node outputs the most repeated
decision over leaders (ties reject).
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .committees import (
    build_committee_structure,
    build_leader_committee,
)
from .gapcheck import DEFAULT_RULE, GapInfeasible, GapInstance, measure_gap
from .graphcore import HereditaryClass, class_growth_bits, get_class
from .netsim import Network, RoundLimitExceeded
from .recon import AgreementView, Decision, ground_truth_view, reconstruct_agreement, reconstruct_disagreement
from .scenario import Scenario

# Calibrated on all-honest runs at n <= 32; see round_budget.
BUDGET_C1 = 16
BUDGET_C2 = 256

ACC, REJ = Decision.ACCEPT, Decision.REJECT


def round_budget(cls: HereditaryClass | str, n: int, b: int, c1: float = BUDGET_C1, c2: float = BUDGET_C2) -> int:
    """Round cap: c1 * (growth/n + b) * ceil(log2 n)^3 + c2."""
    cls = get_class(cls)
    logn = max(1, math.ceil(math.log2(n))) if n > 1 else 1
    return int(math.ceil(c1 * (class_growth_bits(cls, n) / n + b) * logn ** 3 + c2))


def most_repeated(values) -> Decision:
    acc = sum(1 for v in values if v == ACC)
    rej = len(values) - acc
    return ACC if acc > rej else REJ


@dataclass
class LeaderRecord:
    leader: int
    byzantine: bool
    decision: str  # what the leader adopted (shadow value if Byzantine)
    structure_valid: bool
    invariants: dict
    disagreement_exact: bool
    agreement_exact: bool
    agreement_rejected: bool
    verdicts: dict  # honest node -> verdict it sent
    rounds: int
    disagreement_rounds: int
    agreement_rounds: int
    flags: list = field(default_factory=list)


@dataclass
class RunReport:
    n: int
    b: int
    cls: str
    strategy: str
    seed: int
    backend: str
    decisions: dict  # honest node -> "ACCEPT" / "REJECT"
    rounds: int
    words: int
    phases: dict
    leaders: list
    leader_honest_fraction: float
    per_leader: list
    flags: list
    valid: bool
    transcript_digest: str
    diagnostics: dict

    @property
    def outcome(self) -> str:
        vals = set(self.decisions.values())
        return vals.pop() if len(vals) == 1 else "MIXED"

    def all_honest(self, decision: Decision | str) -> bool:
        return all(d == str(decision) for d in self.decisions.values())

    def to_dict(self) -> dict:
        d = asdict(self)
        d["class"] = d.pop("cls")
        d["decisions"] = {str(k): v for k, v in self.decisions.items()}
        d["outcome"] = self.outcome
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


def claimed_rows(scenario: Scenario) -> np.ndarray:
    """(n, n) bool: the row each node acts on, true for honest nodes and the
    strategy's claim for Byzantine ones."""
    rows = scenario.true_rows()
    strat = scenario.strategy
    for v in sorted(scenario.byzantine):
        true_nbrs = frozenset(scenario.graph.neighbors(v))
        claimed = strat.claimed_neighbors(v, true_nbrs, scenario) if strat is not None else true_nbrs
        rows[v - 1] = False
        for w in claimed:
            if w != v:
                rows[v - 1, w - 1] = True
    return rows


def run_recognition(scenario: Scenario, cls: HereditaryClass | str | None = None,
                    seed: int | None = None, **kw) -> RunReport:
    """Run the whole protocol once; raises RoundLimitExceeded past the budget.

    Keyword options: ``backend`` ("broadcast" or "class-index"), ``c0`` and
    ``leader_c0`` (committee size constants), ``round_limit``, ``gap_method``,
    ``gap_rule``.
    """
    return _run(scenario, cls, seed, **kw)[0]


def _run(
    scenario: Scenario,
    cls: HereditaryClass | str | None = None,
    seed: int | None = None,
    *,
    backend: str = "broadcast",
    c0: int = 3,
    leader_c0: int = 3,
    round_limit: int | None = None,
    gap_method: str = "auto",
    gap_rule: str = DEFAULT_RULE,
):
    cls = get_class(cls if cls is not None else scenario.cls)
    seed = scenario.seed if seed is None else seed
    n, b = scenario.n, scenario.b
    if round_limit is None:
        round_limit = scenario.round_limit or round_budget(cls, n, b)
    byz0 = scenario.byzantine_index()
    net = Network(n, byz0, scenario.strategy, seed, scenario.min_word_bits, round_limit, context=scenario)
    inputs = claimed_rows(scenario)
    true_rows = scenario.true_rows()
    honest_ids = scenario.honest_ids()
    flags: list[str] = []

    leaders = build_leader_committee(net, leader_c0)
    honest_frac = leaders.honest_fraction(scenario.byzantine)
    if honest_frac <= 0.5:
        flags.append("leader_committee_not_majority_honest")

    records = []
    leader_decisions = {}
    for ell in leaders.members:
        structure = build_committee_structure(net, inputs, ell, t=b, c0=c0)
        inv = structure.invariants(true_rows)
        valid = inv["members_majority_honest"] and inv["honest_views_agree"] and inv["honest_rows_exact"]
        truth = ground_truth_view(structure)
        start = net.round
        dis = reconstruct_disagreement(net, structure, b)
        agr = reconstruct_agreement(net, structure, cls, b, backend=backend)
        rec_flags = []
        if dis.truncated:
            rec_flags.append("heavy_list_truncated")
        verdicts = {}
        gap_failed = False
        for v in range(1, n + 1):
            a = agr.outputs[v]
            if a == REJ:
                verdicts[v] = REJ
                continue
            if a & dis.outputs[v]:
                # the two reconstructions contradict each other: something failed
                verdicts[v] = REJ
                if v not in scenario.byzantine:
                    rec_flags.append("inconsistent_view")
                continue
            inst = GapInstance(AgreementView(n, a, dis.outputs[v]), b, cls)
            try:
                verdicts[v] = measure_gap(inst, method=gap_method, rule=gap_rule)
            except GapInfeasible:
                verdicts[v] = REJ
                gap_failed = True
        if gap_failed:
            rec_flags.append("gap_infeasible")
        rec_flags = list(dict.fromkeys(rec_flags))
        bits = np.zeros((n, 1), dtype=bool)
        for v, d in verdicts.items():
            bits[v - 1, 0] = d == ACC
        lengths = np.zeros((n, n), dtype=np.int64)
        lengths[:, ell - 1] = 1
        got = net.exchange(f"verdict/{ell}", bits, lengths)
        received = [ACC if got[w, ell - 1, 0] else REJ for w in range(n) if w != ell - 1]
        received.append(verdicts[ell])
        leader_decisions[ell] = most_repeated(received)
        honest_set = honest_ids
        records.append(LeaderRecord(
            leader=ell,
            byzantine=ell in scenario.byzantine,
            decision=str(leader_decisions[ell]),
            structure_valid=bool(valid),
            invariants={k: bool(x) for k, x in inv.items()},
            disagreement_exact=all(dis.outputs[v] == truth.D for v in honest_set),
            agreement_exact=(all(agr.outputs[v] == truth.A for v in honest_set)
                             or all(agr.outputs[v] == REJ for v in honest_set)),
            agreement_rejected=any(agr.outputs[v] == REJ for v in honest_set),
            verdicts={v: str(verdicts[v]) for v in honest_set},
            rounds=structure.rounds + net.round - start,
            disagreement_rounds=dis.rounds,
            agreement_rounds=agr.rounds,
            flags=rec_flags,
        ))
        if not valid:
            flags.append(f"invalid_structure:{ell}")
        flags.extend(f"{f}:{ell}" for f in rec_flags)

    bits = np.zeros((n, 1), dtype=bool)
    for ell, d in leader_decisions.items():
        bits[ell - 1, 0] = d == ACC
    lengths = np.zeros(n, dtype=np.int64)
    for ell in leaders.members:
        lengths[ell - 1] = 1
    got = net.exchange("decision", bits, lengths)
    decisions = {}
    for v in honest_ids:
        votes = []
        for ell in leaders.members:
            if ell == v:
                votes.append(leader_decisions[ell])
            else:
                votes.append(ACC if got[ell - 1, v - 1, 0] else REJ)
        decisions[v] = str(most_repeated(votes))

    metrics = net.metrics.to_dict()
    valid_run = not any(f.startswith(("invalid_structure", "leader_committee", "gap_infeasible")) for f in flags)
    strategy_name = getattr(scenario.strategy, "name", str(scenario.strategy))
    return RunReport(
        n=n,
        b=b,
        cls=cls.name,
        strategy=strategy_name,
        seed=seed,
        backend=backend,
        decisions=decisions,
        rounds=metrics["rounds"],
        words=metrics["words_sent"],
        phases=metrics["phases"],
        leaders=list(leaders.members),
        leader_honest_fraction=honest_frac,
        per_leader=[asdict(r) for r in records],
        flags=flags,
        valid=valid_run,
        transcript_digest=net.transcript.digest(),
        diagnostics=dict(net.diagnostics),
    ), net


class RecognitionProgram:
    """The recognition protocol packaged for the indistinguishability harness."""

    def __init__(self, cls: HereditaryClass | str = "forests", **kw):
        self.cls = get_class(cls)
        self.kw = kw

    def execute(self, scenario: Scenario, seed: int):
        report, net = _run(scenario, self.cls, seed, **self.kw)
        return report.decisions, net.transcript


__all__ = [
    "Decision",
    "RunReport",
    "LeaderRecord",
    "run_recognition",
    "round_budget",
    "claimed_rows",
    "RecognitionProgram",
    "RoundLimitExceeded",
]
