"""Deferred acceptance as node programs, and the three-phase mechanism.

Three variants share the odd/even rhythm: clients propose in odd rounds and
providers answer in even rounds.

* classic: general two-sided preferences, clients walk down their lists.
* common: providers rank clients by one composed score. A client of
  composed class ``t`` is settled after round ``2t - 1``: every better
  client has stopped by then, so its proposal in that round cannot be
  refused and needs no answer. Providers do not answer the proposals of
  round ``2Sc - 1``.
* fractional: one capacity broadcast round, then clients of class ``t``
  send their greedy batch proposals in round ``2t`` and stop.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Any, Mapping

from . import engine
from .engine import PASSIVE, ExecutionTrace, Network, Node, Step
from .instance import MatchingInstance, format_fraction, instance_hash
from .tiebreak import (
    ConflictGraph,
    Strategy,
    TieBreak,
    break_ties,
    build_conflict_graph,
    conflict_phase,
)

__all__ = [
    "FractionalMatching",
    "MechanismResult",
    "batch_proposal",
    "run_classic_da",
    "run_common_da",
    "run_fractional_da",
    "run_mechanism",
    "matching_edges",
    "default_round_limit",
]


def matching_edges(matching: Mapping[int, int | None]) -> frozenset[tuple[int, int]]:
    return frozenset((v, p) for v, p in matching.items() if p is not None)


def default_round_limit(S: int, c: int, n: int) -> int:
    return 4 * (2 * S * c) + 10 * max(1, (max(n, 2) - 1).bit_length())


def _require_strict(instance: MatchingInstance, composed: Mapping[int, int]) -> None:
    for p in instance.providers:
        seen: set[int] = set()
        for v in instance.neighbours(p):
            if composed[v] in seen:
                raise ValueError(f"tie-break is not strict at provider {p}")
            seen.add(composed[v])


# --------------------------------------------------------------------------
# classic deferred acceptance


@dataclass
class _ClassicClient:
    remaining: list
    match: int | None = None
    pending: int | None = None


class _ClassicClientProgram:
    def init(self, node: Node) -> Step:
        st = _ClassicClient(list(node.input))
        return self._propose(node, st)

    def _propose(self, node: Node, st: _ClassicClient) -> Step:
        if not st.remaining:
            return Step(st, halt=True)
        st.pending = st.remaining.pop(0)
        return Step(st, send={st.pending: ("propose", node.id)}, wait=PASSIVE)

    def step(self, node: Node, st: _ClassicClient, inbox) -> Step:
        for p, msg in inbox.items():
            if msg[1] == node.id:
                st.match = p
            elif p == st.match:
                st.match = None
        st.pending = None
        if st.match is None:
            return self._propose(node, st)
        return Step(st, wait=PASSIVE)

    def output(self, node: Node, st: _ClassicClient):
        return st.match


class _ClassicProviderProgram:
    def init(self, node: Node) -> Step:
        return Step(None, wait=PASSIVE)

    def step(self, node: Node, holder, inbox) -> Step:
        rank = node.input
        for v in inbox:
            if holder is None or rank[v] < rank[holder]:
                holder = v
        return Step(holder, send={u: ("match", holder) for u in node.neighbours}, wait=PASSIVE)

    def output(self, node: Node, holder):
        return holder


class _Dispatch:
    """Runs the client program on clients and the provider program on providers."""

    def __init__(self, client_program, provider_program, clients):
        self.client = client_program
        self.provider = provider_program
        self.clients = clients

    def _pick(self, node: Node):
        return self.client if node.id in self.clients else self.provider

    def init(self, node: Node) -> Step:
        return self._pick(node).init(node)

    def step(self, node: Node, state, inbox) -> Step:
        return self._pick(node).step(node, state, inbox)

    def output(self, node: Node, state):
        return self._pick(node).output(node, state)


def _matching_network(instance: MatchingInstance) -> Network:
    return Network.from_edges((*instance.clients, *instance.providers), instance.edges)


def run_classic_da(
    instance: MatchingInstance,
    *,
    round_limit: int | None = None,
    truncate_after: int | None = None,
    network: Network | None = None,
) -> tuple[dict[int, int | None], ExecutionTrace]:
    """Client-proposing deferred acceptance with general provider orders.

    Provider orders come from ``instance.provider_order``. With
    ``truncate_after`` the run is cut after that many rounds and the
    clients' tentative matches are returned.
    """
    clients = set(instance.clients)
    inputs: dict[int, Any] = {v: instance.client_prefs[v] for v in instance.clients}
    for p in instance.providers:
        inputs[p] = {v: i for i, v in enumerate(instance.provider_order(p))}
    program = _Dispatch(_ClassicClientProgram(), _ClassicProviderProgram(), clients)
    delta_c = max((instance.degree(v) for v in instance.clients), default=0)
    limit = round_limit or 2 * len(instance.clients) * max(delta_c, 1) + 2
    net = network or _matching_network(instance)
    if truncate_after is not None:
        trace = engine.run(net, program, inputs, round_limit=truncate_after, truncate=True)
    else:
        trace = engine.run(net, program, inputs, round_limit=limit)
    return {v: trace.outputs[v] for v in instance.clients}, trace


# --------------------------------------------------------------------------
# common preferences


@dataclass
class _CommonClient:
    remaining: list
    known: dict = field(default_factory=dict)
    match: int | None = None
    final: bool = False


class _CommonClientProgram:
    """Input: ``(preference list, composed class)``."""

    def init(self, node: Node) -> Step:
        prefs, _ = node.input
        st = _CommonClient(list(prefs))
        if not prefs:
            return Step(st, halt=True)
        return self._even(node, st, 0)

    def _even(self, node: Node, st: _CommonClient, r: int) -> Step:
        t = node.input[1]
        if r == 2 * t - 2:
            if st.match is not None:
                return Step(st, halt=True)
            st.final = True
        elif st.match is not None:
            return Step(st, wait=2 * t - 2)
        while st.remaining:
            p = st.remaining.pop(0)
            held = st.known.get(p)
            if held is None or held > t:
                if st.final:
                    st.match = p
                    return Step(st, send={p: ("propose", node.id, t)}, wait=r + 1)
                return Step(st, send={p: ("propose", node.id, t)}, wait=r + 2)
        return Step(st, halt=True)

    def step(self, node: Node, st: _CommonClient, inbox) -> Step:
        if st.final:
            return Step(st, halt=True)
        for p, msg in inbox.items():
            _, holder, holder_class = msg
            st.known[p] = holder_class
            if holder == node.id:
                st.match = p
            elif p == st.match:
                st.match = None
        if node.round % 2:
            raise engine.ProgramFault(f"client {node.id} woken in odd round {node.round}")
        return self._even(node, st, node.round)

    def output(self, node: Node, st: _CommonClient):
        return st.match


class _CommonProviderProgram:
    """Input: the number of composed classes ``S * c``."""

    def init(self, node: Node) -> Step:
        return Step((None, None), wait=PASSIVE)

    def step(self, node: Node, state, inbox) -> Step:
        holder, held = state
        best = None
        for v, msg in inbox.items():
            t = msg[2]
            if best is not None and t == best[1]:
                raise engine.ProgramFault(f"provider {node.id} got two proposals of class {t}")
            if best is None or t < best[1]:
                best = (v, t)
        if best is not None and (held is None or best[1] < held):
            holder, held = best
        if node.round >= 2 * node.input - 1:
            return Step((holder, held), wait=PASSIVE)
        send = {u: ("match", holder, held) for u in node.neighbours}
        return Step((holder, held), send=send, wait=PASSIVE)

    def output(self, node: Node, state):
        return state[0]


def run_common_da(
    instance: MatchingInstance,
    tiebreak: TieBreak,
    *,
    network: Network | None = None,
    round_limit: int | None = None,
) -> tuple[dict[int, int | None], ExecutionTrace]:
    """Deferred acceptance under the composed common score."""
    composed = tiebreak.composed
    _require_strict(instance, composed)
    classes = instance.S * tiebreak.c
    if composed and max(composed.values()) > classes:
        raise ValueError("composed class exceeds S * c")
    clients = set(instance.clients)
    inputs: dict[int, Any] = {v: (instance.client_prefs[v], composed[v]) for v in instance.clients}
    for p in instance.providers:
        inputs[p] = classes
    program = _Dispatch(_CommonClientProgram(), _CommonProviderProgram(), clients)
    limit = round_limit or default_round_limit(instance.S, tiebreak.c, instance.n)
    trace = engine.run(network or _matching_network(instance), program, inputs, round_limit=limit)
    return {v: trace.outputs[v] for v in instance.clients}, trace


# --------------------------------------------------------------------------
# fractional loads and capacities


@dataclass(frozen=True)
class FractionalMatching:
    m: Mapping[tuple[int, int], Fraction]
    """Load on edge ``(client, provider)``; absent edges carry zero."""

    def amount(self, client: int, provider: int) -> Fraction:
        return self.m.get((client, provider), Fraction(0))

    def total(self, node: int) -> Fraction:
        return sum((x for e, x in self.m.items() if node in e), Fraction(0))

    @property
    def support(self) -> frozenset[tuple[int, int]]:
        return frozenset(e for e, x in self.m.items() if x > 0)

    def by_preference(self, instance: MatchingInstance, client: int, order=None) -> list[Fraction]:
        order = instance.client_prefs[client] if order is None else order
        return [self.amount(client, p) for p in order]

    def export(self) -> list[dict]:
        return [
            {"client": v, "provider": p, "amount": format_fraction(x)}
            for (v, p), x in sorted(self.m.items())
            if x > 0
        ]


def batch_proposal(load: Fraction, remaining: list[Fraction]) -> list[Fraction]:
    """Greedy split of ``load`` over capacities given in preference order."""
    out = []
    left = Fraction(load)
    for cap in remaining:
        x = min(cap, left)
        out.append(x)
        left -= x
    return out


@dataclass
class _FracClient:
    caps: dict
    offer: dict = field(default_factory=dict)
    sent: bool = False


class _FracClientProgram:
    """Input: ``(preference list, composed class, load)``."""

    def init(self, node: Node) -> Step:
        prefs, t, _ = node.input
        if not prefs:
            return Step(_FracClient({}), halt=True)
        return Step(_FracClient({}), wait=2 * t - 1)

    def step(self, node: Node, st: _FracClient, inbox) -> Step:
        prefs, t, load = node.input
        if st.sent:
            return Step(st, halt=True)
        for p, msg in inbox.items():
            st.caps[p] = msg[2]
        if node.round < 2 * t - 1:
            return Step(st, wait=2 * t - 1)
        amounts = batch_proposal(load, [st.caps[p] for p in prefs])
        st.offer = dict(zip(prefs, amounts))
        st.sent = True
        return Step(st, send={p: ("offer", node.id, x) for p, x in st.offer.items()})

    def output(self, node: Node, st: _FracClient):
        return st.offer


@dataclass
class _FracProvider:
    remaining: Fraction
    taken: dict = field(default_factory=dict)


class _FracProviderProgram:
    """Input: ``(capacity, S * c)``."""

    def init(self, node: Node) -> Step:
        cap, _ = node.input
        st = _FracProvider(cap)
        return Step(st, send={u: ("cap", node.id, cap) for u in node.neighbours}, wait=PASSIVE)

    def step(self, node: Node, st: _FracProvider, inbox) -> Step:
        _, classes = node.input
        accepted = [(v, msg[2]) for v, msg in inbox.items() if msg[2] > 0]
        if len(accepted) > 1:
            raise engine.ProgramFault(f"provider {node.id} got {len(accepted)} offers in one round")
        for v, x in accepted:
            if x > st.remaining:
                raise engine.ProgramFault(f"offer of {x} exceeds remaining {st.remaining}")
            st.remaining -= x
            st.taken[v] = x
        if not accepted or node.round >= 2 * classes:
            return Step(st, wait=PASSIVE)
        return Step(st, send={u: ("cap", node.id, st.remaining) for u in node.neighbours},
                    wait=PASSIVE)

    def output(self, node: Node, st: _FracProvider):
        return st.taken


def run_fractional_da(
    instance: MatchingInstance,
    tiebreak: TieBreak,
    *,
    network: Network | None = None,
    round_limit: int | None = None,
) -> tuple[FractionalMatching, ExecutionTrace]:
    """Batch-proposal deferred acceptance on exact rational loads.

    Round 1 broadcasts the initial capacities; clients of composed class
    ``t`` offer in round ``2t`` and stop, whether or not earlier rounds
    changed anything for them.
    """
    if instance.loads is None:
        raise ValueError("fractional deferred acceptance needs loads and capacities")
    composed = tiebreak.composed
    _require_strict(instance, composed)
    classes = instance.S * tiebreak.c
    clients = set(instance.clients)
    inputs: dict[int, Any] = {
        v: (instance.client_prefs[v], composed[v], instance.loads[v]) for v in instance.clients
    }
    for p in instance.providers:
        inputs[p] = (instance.loads[p], classes)
    program = _Dispatch(_FracClientProgram(), _FracProviderProgram(), clients)
    limit = round_limit or default_round_limit(instance.S, tiebreak.c, instance.n)
    trace = engine.run(network or _matching_network(instance), program, inputs, round_limit=limit)
    m: dict[tuple[int, int], Fraction] = {}
    for v in instance.clients:
        for p, x in trace.outputs[v].items():
            if x > 0:
                m[(v, p)] = x
    for p in instance.providers:
        for v, x in trace.outputs[p].items():
            if m.get((v, p)) != x:
                raise engine.ProgramFault(f"provider {p} and client {v} disagree on their load")
    return FractionalMatching(m), trace


# --------------------------------------------------------------------------
# the mechanism


@dataclass(frozen=True)
class MechanismResult:
    instance: MatchingInstance
    strategy: Strategy
    tiebreak: TieBreak
    matching: Mapping[int, int | None] | None
    fractional: FractionalMatching | None
    traces: Mapping[str, tuple[ExecutionTrace, ...]]
    conflict_graph: ConflictGraph

    @property
    def phase_rounds(self) -> dict[str, int]:
        return {k: sum(t.rounds_used for t in ts) for k, ts in self.traces.items()}

    @property
    def total_rounds(self) -> int:
        return sum(self.phase_rounds.values())

    def all_traces(self) -> list[ExecutionTrace]:
        return [t for ts in self.traces.values() for t in ts]

    def export(self) -> dict:
        if self.fractional is not None:
            rows = self.fractional.export()
        else:
            rows = [{"client": v, "provider": p, "amount": "1"}
                    for v, p in sorted(matching_edges(self.matching))]
        return {
            "instance": instance_hash(self.instance),
            "strategy": str(self.strategy),
            "fractional": self.fractional is not None,
            "S": self.instance.S,
            "c": self.tiebreak.c,
            "delta_h": self.conflict_graph.delta_h,
            "rounds": self.phase_rounds,
            "tiebreak": self.tiebreak.export(),
            "matching": rows,
        }

    def to_json(self) -> str:
        return json.dumps(self.export(), indent=1) + "\n"

    def summary_row(self, blocking_pairs: int) -> dict:
        r = self.phase_rounds
        return {
            "instance": instance_hash(self.instance),
            "strategy": str(self.strategy),
            "fractional": int(self.fractional is not None),
            "S": self.instance.S,
            "c": self.tiebreak.c,
            "delta_h": self.conflict_graph.delta_h,
            "rounds_conflict": r["conflict"],
            "rounds_coloring": r["coloring"],
            "rounds_matching": r["matching"],
            "blocking_pairs": blocking_pairs,
        }

    def summary_csv(self, blocking_pairs: int) -> str:
        row = self.summary_row(blocking_pairs)
        buf = io.StringIO()
        w = csv.DictWriter(buf, fieldnames=list(row), lineterminator="\n")
        w.writeheader()
        w.writerow(row)
        return buf.getvalue()


def run_mechanism(
    instance: MatchingInstance,
    strategy: Strategy | str,
    seed: Any = 0,
    *,
    fractional: bool = False,
    tiebreak: TieBreak | None = None,
) -> MechanismResult:
    """Conflict graph (1 round), colouring, then deferred acceptance.

    Each phase starts on a fresh round; the total is the sum of the phase
    round counts. Passing ``tiebreak`` reuses phases 1 and 2 of an earlier
    run on the same instance.
    """
    if isinstance(strategy, str):
        strategy = Strategy.parse(strategy)
    network = Network.from_instance(instance)
    graph, t1 = conflict_phase(instance, network)
    if dict(graph.adj) != dict(build_conflict_graph(instance).adj):
        raise engine.ProgramFault("distributed conflict graph disagrees with its definition")
    if tiebreak is None:
        tiebreak = break_ties(instance, strategy, seed, graph)
    if fractional:
        fm, t3 = run_fractional_da(instance, tiebreak, network=network)
        matching = None
    else:
        matching, t3 = run_common_da(instance, tiebreak, network=network)
        fm = None
    traces = {"conflict": (t1,), "coloring": tuple(tiebreak.traces), "matching": (t3,)}
    return MechanismResult(instance, strategy, tiebreak, matching, fm, traces, graph)
