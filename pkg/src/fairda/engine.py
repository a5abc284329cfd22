"""Synchronous round-based execution of node programs.

Round ``r`` delivers every message that was queued by the previous step of
its sender (or by ``init`` for ``r = 1``), then steps every live node that
either received something or is due. A node halts at the end of the step
that returned ``halt=True``; the messages it returned in that step are
discarded, so a halted node never appears as a sender afterwards.

Nodes may sleep: a step can return ``wait=r'`` to be skipped until round
``r'`` unless a message arrives first, or ``wait=PASSIVE`` to be woken only
by messages. When nothing is in flight and every live node is passive, the
system is quiescent and all remaining nodes halt together.
"""

from __future__ import annotations

import csv
import heapq
import io
import json
import math
from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache
from typing import Any, Iterable, Mapping, Protocol

import numpy as np

__all__ = [
    "PASSIVE",
    "Network",
    "Node",
    "Step",
    "NodeProgram",
    "Message",
    "ExecutionTrace",
    "RoundLimitExceeded",
    "ProgramFault",
    "run",
    "payload_bits",
    "assert_congest",
    "CongestReport",
    "node_rng",
]

PASSIVE = math.inf


class RoundLimitExceeded(RuntimeError):
    def __init__(self, limit: int, trace: ExecutionTrace):
        super().__init__(f"round limit {limit} exceeded with {len(trace.live_at_limit)} live nodes")
        self.limit = limit
        self.trace = trace


class ProgramFault(RuntimeError):
    """A node program signalled an internal inconsistency."""


@dataclass(frozen=True)
class Network:
    adjacency: Mapping[int, tuple[int, ...]]

    @classmethod
    def from_edges(cls, nodes: Iterable[int], edges: Iterable[tuple[int, int]]) -> Network:
        adj: dict[int, set[int]] = {v: set() for v in nodes}
        for a, b in edges:
            if a == b:
                raise ValueError(f"self-loop at {a}")
            adj.setdefault(a, set()).add(b)
            adj.setdefault(b, set()).add(a)
        return cls({v: tuple(sorted(ns)) for v, ns in sorted(adj.items())})

    @classmethod
    def from_instance(cls, instance) -> Network:
        """Matching graph plus an edge between every two clients sharing a provider."""
        edges = set(instance.edges)
        for p in instance.providers:
            cs = instance.neighbours(p)
            for i, a in enumerate(cs):
                for b in cs[i + 1:]:
                    edges.add((a, b))
        return cls.from_edges((*instance.clients, *instance.providers), edges)

    @property
    def nodes(self) -> tuple[int, ...]:
        return tuple(self.adjacency)

    def __len__(self) -> int:
        return len(self.adjacency)

    def neighbours(self, v: int) -> tuple[int, ...]:
        return self.adjacency[v]

    def port(self, v: int, u: int) -> int:
        return self.adjacency[v].index(u)

    def has_edge(self, a: int, b: int) -> bool:
        return b in self.adjacency.get(a, ())


def node_rng(seed: Any, node_id: int) -> np.random.Generator:
    """Per-node random tape; independent of which other nodes exist."""
    if isinstance(seed, (tuple, list)):
        entropy = [*seed, node_id]
    else:
        entropy = [seed, node_id]
    return np.random.default_rng(entropy)


class Node:
    """What a node program may see about itself."""

    __slots__ = ("id", "neighbours", "input", "round", "_seed", "_rng")

    def __init__(self, node_id: int, neighbours: tuple[int, ...], local_input: Any, seed: Any):
        self.id = node_id
        self.neighbours = neighbours
        self.input = local_input
        self.round = 0
        self._seed = seed
        self._rng = None

    @property
    def rng(self) -> np.random.Generator:
        if self._rng is None:
            self._rng = node_rng(self._seed, self.id)
        return self._rng


@dataclass
class Step:
    state: Any
    send: Mapping[int, tuple] | None = None
    halt: bool = False
    wait: float | None = None


class NodeProgram(Protocol):
    def init(self, node: Node) -> Step: ...

    def step(self, node: Node, state: Any, inbox: Mapping[int, tuple]) -> Step: ...

    def output(self, node: Node, state: Any) -> Any: ...


@dataclass(frozen=True)
class Message:
    round: int
    sender: int
    receiver: int
    payload: tuple
    bits: int


@dataclass(frozen=True)
class ExecutionTrace:
    rounds_used: int
    messages: tuple[Message, ...]
    outputs: Mapping[int, Any]
    halted_at: Mapping[int, int]
    active_per_round: Mapping[int, int] = field(default_factory=dict)
    truncated: bool = False
    live_at_limit: tuple[int, ...] = ()

    @property
    def max_message_bits(self) -> int:
        return max((m.bits for m in self.messages), default=0)

    def messages_in_round(self, r: int) -> list[Message]:
        return [m for m in self.messages if m.round == r]

    def summary(self) -> dict:
        return {
            "rounds": self.rounds_used,
            "messages": len(self.messages),
            "max_message_bits": self.max_message_bits,
            "truncated": self.truncated,
        }

    def to_json(self) -> str:
        return json.dumps(self.summary(), indent=1) + "\n"

    def to_csv(self) -> str:
        per_round: dict[int, list[int]] = {}
        for m in self.messages:
            row = per_round.setdefault(m.round, [0, 0])
            row[0] += 1
            row[1] = max(row[1], m.bits)
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["round", "active_nodes", "messages", "max_bits"])
        for r in range(1, self.rounds_used + 1):
            msgs, bits = per_round.get(r, (0, 0))
            w.writerow([r, self.active_per_round.get(r, 0), msgs, bits])
        return buf.getvalue()


# --------------------------------------------------------------------------
# payload encoding


def _int_width(x: int) -> int:
    # minimal two's-complement width
    if x >= 0:
        return x.bit_length() + 1
    return (~x).bit_length() + 1


TAG_BITS = 8


@lru_cache(maxsize=1 << 16)
def payload_bits(payload: tuple) -> int:
    """Canonical encoded length of a payload in bits.

    The leading string tag costs 8 bits. Integers cost their minimal
    two's-complement width, a rational the widths of numerator and
    denominator, ``None`` and booleans one bit each.
    """
    if not payload or not isinstance(payload[0], str):
        raise ProgramFault(f"payload must start with a string tag: {payload!r}")
    bits = TAG_BITS
    rationals = 0
    for item in payload[1:]:
        if item is None or isinstance(item, bool):
            bits += 1
        elif isinstance(item, int):
            bits += _int_width(item)
        elif isinstance(item, Fraction):
            rationals += 1
            bits += _int_width(item.numerator) + _int_width(item.denominator)
        else:
            raise ProgramFault(f"unsupported payload item {item!r}")
    if rationals > 1:
        raise ProgramFault("at most one rational per payload")
    return bits


@dataclass(frozen=True)
class CongestReport:
    ok: bool
    budget: int
    worst: Message | None

    def __bool__(self) -> bool:
        return self.ok


def assert_congest(trace: ExecutionTrace, n: int, bandwidth_const: int = 8) -> CongestReport:
    """Check every payload against ``bandwidth_const * ceil(log2 n)`` bits."""
    if n < 2:
        raise ValueError("n must be at least 2")
    budget = bandwidth_const * math.ceil(math.log2(n))
    worst = max(trace.messages, key=lambda m: m.bits, default=None)
    ok = worst is None or worst.bits <= budget
    return CongestReport(ok, budget, None if ok else worst)


# --------------------------------------------------------------------------
# executor


def run(
    network: Network,
    program: NodeProgram,
    inputs: Mapping[int, Any],
    seed: Any = 0,
    round_limit: int = 10_000,
    *,
    truncate: bool = False,
    schedule_seed: int | None = None,
) -> ExecutionTrace:
    """Execute ``program`` on every node that has an entry in ``inputs``.

    Nodes without an input take no part; messages addressed to them are
    logged and dropped. ``schedule_seed`` shuffles the order in which the
    steps of one round are evaluated; traces must not depend on it.

    With ``truncate`` the run stops after ``round_limit`` rounds and reports
    every live node's current output instead of raising.
    """
    if round_limit < 1:
        raise ValueError("round_limit must be at least 1")
    nodes: dict[int, Node] = {}
    states: dict[int, Any] = {}
    wake: dict[int, float] = {}
    halted_at: dict[int, int] = {}
    outputs: dict[int, Any] = {}
    in_flight: dict[int, dict[int, tuple]] = {}
    log: list[Message] = []
    active_per_round: dict[int, int] = {}
    sleepers: list[tuple[float, int]] = []
    shuffle = np.random.default_rng(schedule_seed) if schedule_seed is not None else None
    nbr_sets: dict[int, frozenset[int]] = {}

    def queue(sender: int, send: Mapping[int, tuple] | None, r_next: int) -> None:
        if not send:
            return
        nbrs = nbr_sets.get(sender)
        if nbrs is None:
            nbrs = nbr_sets[sender] = frozenset(network.adjacency[sender])
        for receiver in sorted(send):
            if receiver not in nbrs:
                raise ProgramFault(f"node {sender} sent to non-neighbour {receiver}")
            payload = send[receiver]
            log.append(Message(r_next, sender, receiver, payload, payload_bits(payload)))
            in_flight.setdefault(receiver, {})[sender] = payload

    def settle(v: int, st: Step, r: int) -> None:
        states[v] = st.state
        if st.halt:
            halted_at[v] = r
            outputs[v] = program.output(nodes[v], st.state)
            wake.pop(v, None)
            return
        queue(v, st.send, r + 1)
        due = r + 1 if st.wait is None else max(st.wait, r + 1)
        wake[v] = due
        if due != PASSIVE:
            heapq.heappush(sleepers, (due, v))

    for v in sorted(inputs):
        nodes[v] = Node(v, network.adjacency[v], inputs[v], seed)
        settle(v, program.init(nodes[v]), 0)

    r = 0
    last_active = 0
    while wake:
        pending = in_flight
        in_flight = {}
        if pending:
            r += 1
        else:
            while sleepers and wake.get(sleepers[0][1]) != sleepers[0][0]:
                heapq.heappop(sleepers)
            if not sleepers:
                for v in sorted(wake):
                    halted_at[v] = r
                    outputs[v] = program.output(nodes[v], states[v])
                wake.clear()
                break
            r = max(r + 1, int(sleepers[0][0]))
        if r > round_limit:
            live = tuple(sorted(wake))
            for v in live:
                outputs[v] = program.output(nodes[v], states[v])
            trace = ExecutionTrace(
                round_limit, tuple(m for m in log if m.round <= round_limit), outputs,
                halted_at, active_per_round, truncated=True, live_at_limit=live,
            )
            if truncate:
                return trace
            raise RoundLimitExceeded(round_limit, trace)
        due = {v for v in pending if v in wake}
        while sleepers and sleepers[0][0] <= r:
            t, v = heapq.heappop(sleepers)
            if wake.get(v) == t:
                due.add(v)
        if pending:
            last_active = r
        if not due:
            continue
        order = sorted(due)
        if shuffle is not None:
            shuffle.shuffle(order)
        results = []
        for v in order:
            node = nodes[v]
            node.round = r
            results.append((v, program.step(node, states[v], pending.get(v, {}))))
        # merge outboxes in id order whatever the evaluation order was
        results.sort(key=lambda item: item[0])
        for v, st in results:
            settle(v, st, r)
        active_per_round[r] = len(order)
        last_active = r

    log.sort(key=lambda m: (m.round, m.sender, m.receiver))
    return ExecutionTrace(last_active, tuple(log), outputs, halted_at, active_per_round)
