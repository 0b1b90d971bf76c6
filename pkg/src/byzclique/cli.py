"""Command-line experiment runner.

    byzclique run --config PATH [--seed N] [--out PATH]
    byzclique impossibility --f N --seeds N
    byzclique sweep --config PATH --out PATH [--workers N]

Configs are YAML documents with ``schema: 1``; see README for the fields.
Reports go to ``--out`` or, by default, to ``$BYZCLIQUE_OUTPUT_DIR``.
"""
from __future__ import annotations

import argparse
import csv
import io
import itertools
import json
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import yaml

from .adversary import STRATEGIES, assert_indistinguishable, check_pair, indistinguishability_scenario
from .gapcheck import DEFAULT_RULE, RULES
from .graphcore import (
    CLASSES,
    Graph,
    GraphError,
    cycle_graph,
    disjoint_copies,
    erdos_renyi,
    far_instance,
    get_class,
    path_graph,
    random_forest,
    random_member,
    read_edgelist,
)
from .netsim import labelled_rng
from .protocol import RecognitionProgram, run_recognition
from .scenario import PLACEMENTS, Scenario, place_byzantine

SCHEMA_VERSION = 1
OUTPUT_ENV = "BYZCLIQUE_OUTPUT_DIR"
GENERATORS = ("path", "cycle", "triangles", "random-forest", "erdos-renyi", "random-member", "far", "file")
SWEEP_PHASES = ("structure", "disagreement", "agreement", "verdict", "decision")


class ConfigError(ValueError):
    pass


# -- configuration ------------------------------------------------------------------


@dataclass
class GraphSpec:
    generator: str = "random-forest"
    n: int = 8
    params: dict = field(default_factory=dict)
    file: str | None = None

    def build(self, seed: int, n: int | None = None, cls_name: str | None = None, b: int | None = None) -> Graph:
        n = self.n if n is None else n
        p = self.params
        rng = labelled_rng(seed, "graph")
        gen = self.generator
        if gen == "file":
            if not self.file:
                raise ConfigError("graph.file is required for the file generator")
            return read_edgelist(self.file)
        if gen == "path":
            return path_graph(n)
        if gen == "cycle":
            return cycle_graph(n)
        if gen == "triangles":
            count = int(p.get("count", (b or 0) + 1))
            return disjoint_copies(cycle_graph(3), count, n)
        if gen == "random-forest":
            return random_forest(n, rng, float(p.get("edge_keep", 0.8)))
        if gen == "erdos-renyi":
            return erdos_renyi(n, float(p.get("p", 0.2)), rng)
        if gen == "random-member":
            return random_member(get_class(p.get("class", cls_name or "forests")), n, rng)
        if gen == "far":
            f = int(p.get("f", b if b is not None else 1))
            return far_instance(get_class(p.get("class", cls_name or "forests")), n, f)
        raise ConfigError(f"unknown generator {gen!r}; known: {GENERATORS}")

    def to_dict(self) -> dict:
        d = {"generator": self.generator, "n": self.n, "params": dict(self.params)}
        if self.file is not None:
            d["file"] = self.file
        return d


@dataclass
class SweepSpec:
    n: list = field(default_factory=list)
    b: list = field(default_factory=list)
    classes: list = field(default_factory=list)
    strategies: list = field(default_factory=list)
    seeds: list = field(default_factory=list)
    workers: int = 1

    def to_dict(self) -> dict:
        return {"n": list(self.n), "b": list(self.b), "class": list(self.classes),
                "strategy": list(self.strategies), "seeds": list(self.seeds), "workers": self.workers}


@dataclass
class ExperimentConfig:
    graph: GraphSpec
    byzantine_ids: list | None = None
    byzantine_count: int = 0
    placement: str = "random"
    strategy: str = "honest-mimic"
    cls: str = "forests"
    seed: int = 0
    min_word_bits: int = 32
    round_limit: int | None = None
    backend: str = "broadcast"
    gap_rule: str = DEFAULT_RULE
    sweep: SweepSpec | None = None

    @classmethod
    def from_dict(cls, raw) -> "ExperimentConfig":
        if not isinstance(raw, dict):
            raise ConfigError("config must be a mapping")
        schema = raw.get("schema")
        if schema != SCHEMA_VERSION:
            raise ConfigError(f"unsupported or missing schema version {schema!r} (expected {SCHEMA_VERSION})")
        known = {"schema", "graph", "byzantine", "strategy", "class", "seed", "engine", "protocol", "sweep"}
        extra = set(raw) - known
        if extra:
            raise ConfigError(f"unknown config keys: {sorted(extra)}")
        g = raw.get("graph") or {}
        if not isinstance(g, dict):
            raise ConfigError("graph must be a mapping")
        graph = GraphSpec(str(g.get("generator", "random-forest")), int(g.get("n", 8)),
                          dict(g.get("params") or {}), g.get("file"))
        if graph.generator not in GENERATORS:
            raise ConfigError(f"unknown generator {graph.generator!r}; known: {GENERATORS}")
        byz = raw.get("byzantine") or {}
        ids = byz.get("ids")
        placement = str(byz.get("placement", "random"))
        if placement not in PLACEMENTS:
            raise ConfigError(f"unknown placement {placement!r}; known: {PLACEMENTS}")
        strategy = str(raw.get("strategy", "honest-mimic"))
        if strategy not in STRATEGIES:
            raise ConfigError(f"unknown strategy {strategy!r}; known: {sorted(STRATEGIES)}")
        cls_name = str(raw.get("class", "forests"))
        if cls_name not in CLASSES:
            raise ConfigError(f"unknown class {cls_name!r}; known: {sorted(CLASSES)}")
        eng = raw.get("engine") or {}
        proto = raw.get("protocol") or {}
        rule = str(proto.get("gap_rule", DEFAULT_RULE))
        if rule not in RULES:
            raise ConfigError(f"unknown gap rule {rule!r}; known: {RULES}")
        backend = str(proto.get("backend", "broadcast"))
        if backend not in ("broadcast", "class-index"):
            raise ConfigError(f"unknown backend {backend!r}")
        sweep = None
        if raw.get("sweep") is not None:
            sw = raw["sweep"]
            seeds = sw.get("seeds", [])
            seeds = list(range(seeds)) if isinstance(seeds, int) else [int(s) for s in seeds]
            sweep = SweepSpec([int(x) for x in sw.get("n", [])], [int(x) for x in sw.get("b", [])],
                              [str(x) for x in sw.get("class", [])], [str(x) for x in sw.get("strategy", [])],
                              seeds, int(sw.get("workers", 1)))
            for c in sweep.classes:
                if c not in CLASSES:
                    raise ConfigError(f"unknown class {c!r} in sweep")
            for s in sweep.strategies:
                if s not in STRATEGIES:
                    raise ConfigError(f"unknown strategy {s!r} in sweep")
        try:
            return cls(
                graph=graph,
                byzantine_ids=[int(v) for v in ids] if ids is not None else None,
                byzantine_count=int(byz.get("count", 0)),
                placement=placement,
                strategy=strategy,
                cls=cls_name,
                seed=int(raw.get("seed", 0)),
                min_word_bits=int(eng.get("min_word_bits", 32)),
                round_limit=None if eng.get("round_limit") is None else int(eng["round_limit"]),
                backend=backend,
                gap_rule=rule,
                sweep=sweep,
            )
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"bad config value: {exc}") from None

    def to_dict(self) -> dict:
        byz = {"placement": self.placement}
        if self.byzantine_ids is not None:
            byz["ids"] = list(self.byzantine_ids)
        else:
            byz["count"] = self.byzantine_count
        d = {
            "schema": SCHEMA_VERSION,
            "graph": self.graph.to_dict(),
            "byzantine": byz,
            "strategy": self.strategy,
            "class": self.cls,
            "seed": self.seed,
            "engine": {"min_word_bits": self.min_word_bits, "round_limit": self.round_limit},
            "protocol": {"backend": self.backend, "gap_rule": self.gap_rule},
        }
        if self.sweep is not None:
            d["sweep"] = self.sweep.to_dict()
        return d

    def scenario(self, seed: int | None = None, n: int | None = None, b: int | None = None,
                 cls_name: str | None = None, strategy: str | None = None) -> Scenario:
        seed = self.seed if seed is None else seed
        cls_name = cls_name or self.cls
        g = self.graph.build(seed, n, cls_name, b)
        if b is not None:
            byz = place_byzantine(g.n, b, self.placement, seed)
        elif self.byzantine_ids is not None:
            byz = frozenset(self.byzantine_ids)
        else:
            byz = place_byzantine(g.n, self.byzantine_count, self.placement, seed)
        return Scenario(g, byz, strategy or self.strategy, cls=cls_name, seed=seed,
                        min_word_bits=self.min_word_bits, round_limit=self.round_limit)


def load_config(path) -> ExperimentConfig:
    try:
        raw = yaml.safe_load(Path(path).read_text())
    except yaml.YAMLError as exc:
        raise ConfigError(f"cannot parse {path}: {exc}") from None
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from None
    return ExperimentConfig.from_dict(raw)


def dump_config(cfg: ExperimentConfig) -> str:
    return yaml.safe_dump(cfg.to_dict(), sort_keys=True)


# -- operations -----------------------------------------------------------------------


def output_dir() -> Path:
    return Path(os.environ.get(OUTPUT_ENV, "."))


def run_scenario(config_path, seed: int | None = None, out: str | None = None) -> Path:
    cfg = load_config(config_path)
    seed = cfg.seed if seed is None else seed
    report = run_recognition(cfg.scenario(seed), backend=cfg.backend, gap_rule=cfg.gap_rule)
    path = Path(out) if out else output_dir() / f"report-seed{seed}.json"
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(report.to_json() + "\n")
    return path


def run_impossibility(f: int, seeds: int, stream=None) -> dict:
    if f < 1:
        raise ValueError("the gap f must be >= 1")
    stream = stream or sys.stdout
    pair = indistinguishability_scenario(f)
    facts = check_pair(pair)
    program = RecognitionProgram("forests")
    passed = sum(1 for s in range(seeds) if assert_indistinguishable(pair, program, s))
    summary = {"f": f, "seeds": seeds, "pass": passed, "fail": seeds - passed, **facts}
    print(f"f={f}: {passed} pass, {seeds - passed} fail "
          f"(yes instance is a forest: {facts['yes_is_forest']}, no instance is f-far: {facts['no_is_f_far']})",
          file=stream)
    return summary


SWEEP_COLUMNS = ["n", "b", "class", "strategy", "seed", "outcome", "accept", "reject", "rounds", "words",
                 *[f"rounds_{p}" for p in SWEEP_PHASES], "valid", "flags", "error"]


def _sweep_row(args) -> dict:
    cfg_dict, n, b, cls_name, strat, seed = args
    cfg = ExperimentConfig.from_dict(cfg_dict)
    row = {"n": n, "b": b, "class": cls_name, "strategy": strat, "seed": seed}
    try:
        rep = run_recognition(cfg.scenario(seed, n, b, cls_name, strat), backend=cfg.backend,
                              gap_rule=cfg.gap_rule)
        vals = list(rep.decisions.values())
        row.update(outcome=rep.outcome, accept=vals.count("ACCEPT"), reject=vals.count("REJECT"),
                   rounds=rep.rounds, words=rep.words, valid=rep.valid, flags=";".join(rep.flags), error="")
        for p in SWEEP_PHASES:
            row[f"rounds_{p}"] = rep.phases.get(p, {}).get("rounds", 0)
    except Exception as exc:  # recorded per row; the sweep continues
        row.update(outcome="ERROR", error=f"{type(exc).__name__}: {exc}")
    return row


def sweep_rows(cfg: ExperimentConfig) -> list[dict]:
    sw = cfg.sweep or SweepSpec()
    grid = list(itertools.product(sw.n, sw.b, sw.classes or [cfg.cls], sw.strategies or [cfg.strategy], sw.seeds))
    jobs = [(cfg.to_dict(), *point) for point in grid]
    if sw.workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=sw.workers) as pool:
            return list(pool.map(_sweep_row, jobs, chunksize=8))
    return [_sweep_row(j) for j in jobs]


def write_csv(rows: list[dict], out) -> None:
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=SWEEP_COLUMNS, restval="")
    writer.writeheader()
    for row in rows:
        writer.writerow(row)
    Path(out).parent.mkdir(parents=True, exist_ok=True)
    Path(out).write_text(buf.getvalue())


def sweep(config_path, out, workers: int | None = None) -> list[dict]:
    cfg = load_config(config_path)
    if workers is not None:
        cfg.sweep = cfg.sweep or SweepSpec()
        cfg.sweep.workers = workers
    rows = sweep_rows(cfg)
    write_csv(rows, out)
    return rows


# -- entry point ----------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="byzclique", description=__doc__.split("\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run one scenario and write a JSON report")
    p_run.add_argument("--config", required=True)
    p_run.add_argument("--seed", type=int)
    p_run.add_argument("--out")

    p_imp = sub.add_parser("impossibility", help="check the indistinguishable instance pair")
    p_imp.add_argument("--f", type=int, required=True)
    p_imp.add_argument("--seeds", type=int, default=20)

    p_sw = sub.add_parser("sweep", help="run a parameter grid and write CSV")
    p_sw.add_argument("--config", required=True)
    p_sw.add_argument("--out", required=True)
    p_sw.add_argument("--workers", type=int)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "run":
            path = run_scenario(args.config, args.seed, args.out)
            print(path)
        elif args.command == "impossibility":
            if args.f < 1:
                parser.error("--f must be >= 1 (the gap must be positive)")
            summary = run_impossibility(args.f, args.seeds)
            return 0 if summary["fail"] == 0 else 1
        elif args.command == "sweep":
            rows = sweep(args.config, args.out, args.workers)
            print(f"{len(rows)} rows -> {args.out}")
    except (ConfigError, GraphError, KeyError) as exc:
        print(f"byzclique: error: {exc}", file=sys.stderr)
        return 2
    except RuntimeError as exc:
        print(f"byzclique: engine error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
