"""Synchronous congested-clique engine with bandwidth caps and a rushing adversary.

Internally nodes are indexed 0..n-1; exported transcripts use IDs 1..n.

Every communication step goes through :meth:`Network.exchange`: each ordered
pair (u, v) carries a bit payload of some length, fragmented into words of
``word_bits`` bits that occupy consecutive rounds on that link (FIFO).  The
step lasts as many rounds as its longest link.  Before delivery the adversary
sees every honest payload and may substitute the payloads of Byzantine
senders, and only those.
"""
from __future__ import annotations

import hashlib
import json
import math
import pickle
from collections import defaultdict, deque
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Any, Callable, Iterator

import numpy as np

MAX_NODES = 1 << 16
DEFAULT_MIN_WORD_BITS = 32


class RoundLimitExceeded(RuntimeError):
    pass


class AdversaryViolation(RuntimeError):
    """The adversary tried to write an honest node's outbox."""


class IsolationViolation(RuntimeError):
    pass


def word_bits_for(n: int, min_word_bits: int = DEFAULT_MIN_WORD_BITS) -> int:
    return max(math.ceil(math.log2(n)) if n > 1 else 1, min_word_bits)


def id_bits(n: int) -> int:
    """Bits needed for a 0-based node index (also enough for any degree < n)."""
    return max(1, math.ceil(math.log2(n))) if n > 1 else 1


def encode_uint(values, width: int) -> np.ndarray:
    """Unsigned ints -> trailing axis of ``width`` bits, most significant first."""
    values = np.asarray(values, dtype=np.int64)
    shifts = np.arange(width - 1, -1, -1, dtype=np.int64)
    return ((values[..., None] >> shifts) & 1).astype(bool)


def decode_uint(bits: np.ndarray) -> np.ndarray:
    width = bits.shape[-1]
    weights = (1 << np.arange(width - 1, -1, -1, dtype=np.int64))
    return (bits.astype(np.int64) * weights).sum(axis=-1)


def _seed_words(seed: int, label: str) -> list[int]:
    digest = hashlib.sha256(f"{seed}\x00{label}".encode()).digest()
    return [int.from_bytes(digest[i:i + 4], "big") for i in range(0, 32, 4)]


def labelled_rng(seed: int, label: str) -> np.random.Generator:
    return np.random.default_rng(_seed_words(seed, label))


@lru_cache(maxsize=256)
def _prefix_masks(width: int) -> np.ndarray:
    """Row k is True on the first k of ``width`` positions."""
    return np.arange(width)[None, :] < np.arange(width + 1)[:, None]


@dataclass(frozen=True)
class Block:
    """One synchronous step as recorded in the transcript."""

    phase: str
    start: int
    rounds: int
    lengths: np.ndarray  # (n, n) payload bits per ordered pair
    packed: np.ndarray  # (n, n, nbytes) np.packbits of the zero-padded payload

    def payload_bits(self, u: int, v: int) -> np.ndarray:
        length = int(self.lengths[u, v])
        return np.unpackbits(self.packed[u, v])[:length].astype(bool)


class Transcript:
    """Append-only log of every word that crossed a link."""

    def __init__(self, n: int, word_bits: int):
        self.n = n
        self.word_bits = word_bits
        self.blocks: list[Block] = []

    def append(self, block: Block) -> None:
        self.blocks.append(block)

    def _words(self, block: Block, u: int, v: int) -> list[int]:
        bits = block.payload_bits(u, v)
        wb = self.word_bits
        pad = (-len(bits)) % wb
        if pad:
            bits = np.concatenate([bits, np.zeros(pad, dtype=bool)])
        return [int(x) for x in decode_uint(bits.reshape(-1, wb))]

    def entries(self, node: int | None = None) -> Iterator[tuple[int, int, int, int]]:
        """Yield ``(round, sender, receiver, word)`` with 1-based IDs.

        With ``node`` (1-based) only entries it sent or received: its projection.
        """
        for block in self.blocks:
            if block.rounds == 0:
                continue
            if node is None:
                us, vs = np.nonzero(block.lengths)
            else:
                k = node - 1
                us, vs = np.nonzero(block.lengths)
                keep = (us == k) | (vs == k)
                us, vs = us[keep], vs[keep]
            per_link = {}
            for u, v in zip(us.tolist(), vs.tolist()):
                per_link[(u, v)] = self._words(block, u, v)
            for off in range(block.rounds):
                for (u, v), words in sorted(per_link.items()):
                    if off < len(words):
                        yield block.start + off, u + 1, v + 1, words[off]

    def projection(self, node: int) -> list[tuple[int, int, int, int]]:
        return list(self.entries(node))

    def projection_digest(self, node: int) -> str:
        """Digest of everything ``node`` (1-based) sent or received, with phases."""
        k = node - 1
        h = hashlib.sha256()
        for b in self.blocks:
            h.update(f"{b.phase}|{b.start}|{b.rounds}|".encode())
            h.update(np.ascontiguousarray(b.lengths[k]).tobytes())
            h.update(np.ascontiguousarray(b.lengths[:, k]).tobytes())
            h.update(np.ascontiguousarray(b.packed[k]).tobytes())
            h.update(np.ascontiguousarray(b.packed[:, k]).tobytes())
        return h.hexdigest()

    def digest(self) -> str:
        h = hashlib.sha256()
        for b in self.blocks:
            h.update(f"{b.phase}|{b.start}|{b.rounds}|".encode())
            h.update(np.ascontiguousarray(b.lengths).tobytes())
            h.update(np.ascontiguousarray(b.packed).tobytes())
        return h.hexdigest()

    def to_lines(self) -> Iterator[str]:
        width = max(1, math.ceil(self.word_bits / 4))
        for r, u, v, w in self.entries():
            yield f"{r} {u} {v} {w:0{width}x}"

    def export(self, path) -> None:
        with open(path, "w") as fh:
            for line in self.to_lines():
                fh.write(line + "\n")

    def phases(self) -> list[tuple[str, int, int]]:
        return [(b.phase, b.start, b.rounds) for b in self.blocks]

    def __len__(self) -> int:
        return sum(int(np.ceil(b.lengths / self.word_bits).sum()) for b in self.blocks)


@dataclass
class Metrics:
    rounds: int = 0
    words: int = 0
    per_phase: dict = field(default_factory=lambda: defaultdict(lambda: {"rounds": 0, "words": 0}))

    def record(self, phase: str, rounds: int, words: int) -> None:
        kind = phase.split("/", 1)[0]
        self.rounds += rounds
        self.words += words
        self.per_phase[kind]["rounds"] += rounds
        self.per_phase[kind]["words"] += words

    def to_dict(self) -> dict:
        return {
            "rounds": self.rounds,
            "words_sent": self.words,
            "phases": {k: dict(v) for k, v in self.per_phase.items()},
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


class Network:
    """Round engine for an ``n``-node clique.

    ``byzantine`` holds 0-based indices.  ``adversary`` (if any) must provide
    ``tamper(net, phase, bits, lengths)`` returning ``None`` or a mapping
    ``sender -> (bits_row, lengths_row)`` for Byzantine senders.
    """

    def __init__(
        self,
        n: int,
        byzantine=(),
        adversary=None,
        seed: int = 0,
        min_word_bits: int = DEFAULT_MIN_WORD_BITS,
        round_limit: int | None = None,
        context: Any = None,
    ):
        if not 1 <= n <= MAX_NODES:
            raise ValueError(f"n must be in 1..{MAX_NODES}")
        self.n = n
        self.byzantine = frozenset(int(b) for b in byzantine)
        self.honest = [v for v in range(n) if v not in self.byzantine]
        self.adversary = adversary
        self.seed = seed
        self.word_bits = word_bits_for(n, min_word_bits)
        if self.word_bits > 63:
            raise ValueError("word_bits above 63 is not supported")
        self.round_limit = round_limit
        self.round = 0
        self.transcript = Transcript(n, self.word_bits)
        self.metrics = Metrics()
        self.context = context
        self.diagnostics: dict[str, int] = defaultdict(int)

    # -- randomness -------------------------------------------------------

    def coin_rng(self, label: str) -> np.random.Generator:
        """Generator every honest node derives identically from (seed, label)."""
        return labelled_rng(self.seed, f"coin/{label}")

    def shared_coin(self, label: str, nbits: int = 64) -> int:
        rng = self.coin_rng(label)
        out = 0
        for _ in range(0, nbits, 32):
            out = (out << 32) | int(rng.integers(0, 1 << 32))
        return out >> ((-nbits) % 32)

    def adversary_rng(self, label: str = "") -> np.random.Generator:
        return labelled_rng(self.seed, f"adversary/{label}")

    # -- communication ------------------------------------------------------

    def exchange(self, phase: str, bits: np.ndarray, lengths: np.ndarray) -> np.ndarray:
        """Run one synchronous step and return the delivered ``(n, n, L)`` bits.

        ``bits`` is ``(n, n, L)`` (per link) or ``(n, L)`` (same payload to every
        receiver); ``lengths`` likewise ``(n, n)`` or ``(n,)``.  Self-links and
        zero lengths carry nothing.
        """
        n = self.n
        bits = np.asarray(bits, dtype=bool)
        lengths = np.asarray(lengths, dtype=np.int64)
        if bits.ndim == 2:
            bits = np.broadcast_to(bits[:, None, :], (n, n, bits.shape[1]))
        if lengths.ndim == 1:
            lengths = np.broadcast_to(lengths[:, None], (n, n))
        lengths = lengths.copy()
        np.fill_diagonal(lengths, 0)
        if lengths.size and int(lengths.max()) > bits.shape[2]:
            raise ValueError("a link length exceeds the payload width")

        if self.adversary is not None and self.byzantine:
            swaps = self.adversary.tamper(self, phase, bits, lengths)
            if swaps:
                bad = set(swaps) - self.byzantine
                if bad:
                    raise AdversaryViolation(f"adversary wrote outboxes of honest nodes {sorted(bad)}")
                width = max([bits.shape[2]] + [np.asarray(r[0]).shape[-1] for r in swaps.values()])
                merged = np.zeros((n, n, width), dtype=bool)
                merged[:, :, : bits.shape[2]] = bits
                for u, (row_bits, row_len) in swaps.items():
                    row_bits = np.asarray(row_bits, dtype=bool)
                    merged[u] = False
                    merged[u, :, : row_bits.shape[-1]] = row_bits
                    lengths[u] = np.minimum(np.asarray(row_len, dtype=np.int64), width)
                bits = merged
                np.fill_diagonal(lengths, 0)

        width = bits.shape[2]
        delivered = bits & _prefix_masks(width)[lengths]
        words = -(-lengths // self.word_bits)
        rounds = int(words.max()) if words.size else 0
        if self.round_limit is not None and self.round + rounds > self.round_limit:
            raise RoundLimitExceeded(
                f"round limit {self.round_limit} exceeded in phase {phase!r} "
                f"(at round {self.round}, step needs {rounds})"
            )
        self.transcript.append(
            Block(phase, self.round, rounds, lengths, np.packbits(delivered, axis=2))
        )
        self.round += rounds
        self.metrics.record(phase, rounds, int(words.sum()))
        return delivered

    def broadcast_values(self, phase: str, values: np.ndarray, width: int, senders=None) -> np.ndarray:
        """Every sender broadcasts a row of fixed-width uints; returns ``(recv, send, k)``.

        The diagonal holds each node's own values (it needs no message to
        itself).  ``senders`` restricts who transmits.
        """
        n = self.n
        values = np.asarray(values, dtype=np.int64)
        k = values.shape[1]
        bits = encode_uint(values, width).reshape(n, k * width)
        lengths = np.full(n, k * width, dtype=np.int64)
        if senders is not None:
            mask = np.zeros(n, dtype=bool)
            mask[list(senders)] = True
            lengths[~mask] = 0
        got = self.exchange(phase, bits, lengths)
        recv = decode_uint(got.reshape(n, n, k, width)).transpose(1, 0, 2)
        idx = np.arange(n)
        recv[idx, idx] = values
        return recv


# -- event-driven node programs --------------------------------------------------


class NodeProgram:
    """Base class for per-node programs driven by :func:`run`."""

    def on_round_start(self, ctx: "NodeContext") -> None:
        pass

    def on_receive(self, ctx: "NodeContext", sender: int, word: int) -> None:
        pass

    def on_halt(self, ctx: "NodeContext") -> None:
        pass


class NodeContext:
    def __init__(self, node: int, n: int, neighbors: frozenset, net: Network, queues):
        self.node = node
        self.n = n
        self.neighbors = neighbors
        self._net = net
        self._queues = queues
        self.halted = False
        self.output: Any = None

    @property
    def round(self) -> int:
        return self._net.round

    @property
    def word_bits(self) -> int:
        return self._net.word_bits

    def send(self, v: int, word: int) -> None:
        if v == self.node:
            raise ValueError("a node cannot send to itself")
        if not 0 <= word < (1 << self._net.word_bits):
            raise ValueError(f"word {word} does not fit in {self._net.word_bits} bits")
        self._queues[(self.node - 1, v - 1)].append(word)

    def broadcast(self, word: int) -> None:
        for v in range(1, self.n + 1):
            if v != self.node:
                self.send(v, word)

    def coin(self, label: str, nbits: int = 64) -> int:
        return self._net.shared_coin(label, nbits)

    def halt(self, output: Any = None) -> None:
        self.halted = True
        self.output = output


@dataclass
class RunResult:
    outputs: dict
    transcript: Transcript
    rounds: int
    metrics: Metrics


def _checksum(obj) -> bytes:
    return hashlib.sha256(pickle.dumps(vars(obj), protocol=4)).digest()


def run(
    program: Callable[[int, int, frozenset], NodeProgram],
    scenario,
    seed: int = 0,
    *,
    min_word_bits: int = DEFAULT_MIN_WORD_BITS,
    round_limit: int = 10_000,
    check_isolation: bool = False,
) -> RunResult:
    """Run ``program(node_id, n, neighbor_ids)`` at every node until all honest halt.

    ``scenario`` needs ``graph``, ``byzantine`` (1-based IDs) and ``strategy``
    (an adversary exposing ``claimed_neighbors`` and ``tamper``).  Byzantine
    nodes run the same program on whatever neighbourhood the strategy claims.
    """
    g = scenario.graph
    n = g.n
    byz = frozenset(v - 1 for v in scenario.byzantine)
    strategy = getattr(scenario, "strategy", None)
    net = Network(n, byz, strategy, seed, min_word_bits, round_limit, context=scenario)
    queues: dict = defaultdict(deque)
    nodes, ctxs = {}, {}
    for v in range(1, n + 1):
        nbrs = frozenset(g.neighbors(v))
        if v - 1 in byz and strategy is not None:
            nbrs = frozenset(strategy.claimed_neighbors(v, nbrs, scenario))
        ctxs[v] = NodeContext(v, n, nbrs, net, queues)
        nodes[v] = program(v, n, nbrs)
    honest_ids = [v + 1 for v in net.honest]

    def call(v, fn, *args):
        if not check_isolation:
            fn(ctxs[v], *args)
            return
        before = {w: _checksum(nodes[w]) for w in nodes if w != v}
        fn(ctxs[v], *args)
        for w, digest in before.items():
            if _checksum(nodes[w]) != digest:
                raise IsolationViolation(f"node {v}'s callback mutated node {w}")

    def maybe_halt(v, was_halted):
        if ctxs[v].halted and not was_halted:
            call(v, nodes[v].on_halt)

    wb = net.word_bits
    while True:
        for v in range(1, n + 1):
            if not ctxs[v].halted:
                call(v, nodes[v].on_round_start)
                maybe_halt(v, False)
        pending = [k for k, q in queues.items() if q]
        if not pending and all(ctxs[v].halted for v in honest_ids):
            break
        if not pending:
            # nothing in flight but honest nodes still running: an idle round
            net.exchange("run", np.zeros((n, n, wb), dtype=bool), np.zeros((n, n), dtype=np.int64))
            net.round += 1
            net.metrics.rounds += 1
            if net.round > round_limit:
                raise RoundLimitExceeded(f"round limit {round_limit} exceeded")
            continue
        bits = np.zeros((n, n, wb), dtype=bool)
        lengths = np.zeros((n, n), dtype=np.int64)
        for (u, v) in pending:
            bits[u, v] = encode_uint(queues[(u, v)].popleft(), wb)
            lengths[u, v] = wb
        delivered = net.exchange("run", bits, lengths)
        block = net.transcript.blocks[-1]
        got = decode_uint(delivered)
        for v in range(n):
            for u in np.nonzero(block.lengths[:, v])[0].tolist():
                if not ctxs[v + 1].halted:
                    call(v + 1, nodes[v + 1].on_receive, u + 1, int(got[u, v]))
                    maybe_halt(v + 1, False)
    outputs = {v: ctxs[v].output for v in honest_ids}
    return RunResult(outputs, net.transcript, net.round, net.metrics)
