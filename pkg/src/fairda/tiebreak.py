"""Tie-breaking by colouring the conflict graph.

Two clients conflict when they have the same score and share a provider.
Any proper colouring ``phi`` of the conflict graph with palette ``1..c``
turns the score into ``c * (s - 1) + phi``, which is strict on every
provider's neighbourhood and still respects the original score.

The colourings run as node programs on the engine:

* ``color_deterministic``: Linial-style colour reduction to ``O(Delta^2)``
  colours from the ids, then one colour class per round down to
  ``Delta + 1`` colours.
* ``color_luby_trial``: random trials from ``2 * Delta`` colours.
* ``sample_uniform_coloring``: parallel resampling chain for an almost
  uniform ``q``-colouring.
* ``color_with_failures``: one uniform pick from ``ceil(1/delta) * Delta``
  colours, conflicting nodes recoloured from an offset palette.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Any, Iterable, Mapping

import numpy as np

from . import engine
from .engine import ExecutionTrace, Network, Node, Step
from .instance import MatchingInstance

__all__ = [
    "ConflictGraph",
    "TieBreak",
    "SamplerConfig",
    "Strategy",
    "SAMPLER_KAPPA",
    "build_conflict_graph",
    "conflict_phase",
    "color_deterministic",
    "color_luby_trial",
    "sample_uniform_coloring",
    "color_with_failures",
    "compose_score",
    "break_ties",
    "given_tiebreak",
    "greedy_coloring",
    "is_proper",
    "linial_schedule",
    "sample_uniform_coloring_batch",
    "color_with_failures_batch",
]

SAMPLER_KAPPA = 20


@dataclass(frozen=True)
class ConflictGraph:
    nodes: tuple[int, ...]
    adj: Mapping[int, tuple[int, ...]]
    score: Mapping[int, int] = field(default_factory=dict)

    @classmethod
    def from_edges(
        cls,
        nodes: Iterable[int],
        edges: Iterable[tuple[int, int]],
        score: Mapping[int, int] | None = None,
    ) -> ConflictGraph:
        nodes = tuple(nodes)
        adj: dict[int, set[int]] = {v: set() for v in nodes}
        for a, b in edges:
            adj[a].add(b)
            adj[b].add(a)
        return cls(nodes, {v: tuple(sorted(adj[v])) for v in nodes},
                   dict(score) if score else {v: 1 for v in nodes})

    @property
    def edges(self) -> frozenset[tuple[int, int]]:
        return frozenset((a, b) for a in self.nodes for b in self.adj[a] if a < b)

    @property
    def delta_h(self) -> int:
        return max((len(ns) for ns in self.adj.values()), default=0)

    def induced(self, keep: Iterable[int]) -> ConflictGraph:
        keep = set(keep)
        nodes = tuple(v for v in self.nodes if v in keep)
        return ConflictGraph(
            nodes,
            {v: tuple(u for u in self.adj[v] if u in keep) for v in nodes},
            {v: self.score.get(v, 1) for v in nodes},
        )

    def network(self) -> Network:
        return Network(dict(self.adj))


@dataclass(frozen=True)
class TieBreak:
    phi: Mapping[int, int]
    c: int
    composed: Mapping[int, int]
    fair: frozenset[int] = frozenset()
    failed: frozenset[int] = frozenset()
    rounds: int = 0
    traces: tuple[ExecutionTrace, ...] = field(default=(), compare=False, repr=False)
    info: Mapping[str, Any] = field(default_factory=dict, compare=False)

    @property
    def classes(self) -> int:
        """Number of composed preference classes, ``S * c``."""
        return self.info.get("S", 1) * self.c

    def export(self) -> dict:
        return {
            "c": self.c,
            "phi": {str(v): k for v, k in sorted(self.phi.items())},
            "composed": {str(v): k for v, k in sorted(self.composed.items())},
            "F": sorted(self.fair),
            "X": sorted(self.failed),
        }


@dataclass(frozen=True)
class SamplerConfig:
    alpha: Fraction
    delta: Fraction
    delta_h: int
    n: int
    kappa: int = SAMPLER_KAPPA

    def __post_init__(self):
        if not self.alpha > 2:
            raise ValueError("alpha must exceed 2")
        if not 0 < self.delta < 1:
            raise ValueError("delta must lie in (0, 1)")

    @property
    def q(self) -> int:
        d = max(self.delta_h, 1)
        return max(math.ceil(Fraction(self.alpha) * d), 2 * d + 1)

    @property
    def rounds(self) -> int:
        return math.ceil(self.kappa * math.log(max(self.n, 1) / float(self.delta)))

    def export(self) -> dict:
        return {"alpha": str(self.alpha), "delta": str(self.delta), "q": self.q,
                "rounds": self.rounds, "kappa": self.kappa}


@dataclass(frozen=True)
class Strategy:
    kind: str
    alpha: Fraction | None = None
    delta: Fraction | None = None

    KINDS = ("deterministic", "luby", "sample", "failures")

    def __post_init__(self):
        if self.kind not in self.KINDS:
            raise ValueError(f"unknown strategy {self.kind!r}")
        if self.kind == "sample" and (self.alpha is None or self.delta is None):
            raise ValueError("sample needs alpha and delta")
        if self.kind == "failures" and self.delta is None:
            raise ValueError("failures needs delta")

    @classmethod
    def parse(cls, text: str) -> Strategy:
        """``deterministic``, ``luby``, ``sample:ALPHA,DELTA`` or ``failures:DELTA``."""
        kind, _, args = text.partition(":")
        vals = [Fraction(a) for a in args.split(",")] if args else []
        if kind == "sample":
            if len(vals) != 2:
                raise ValueError("expected sample:ALPHA,DELTA")
            return cls(kind, alpha=vals[0], delta=vals[1])
        if kind == "failures":
            if len(vals) != 1:
                raise ValueError("expected failures:DELTA")
            return cls(kind, delta=vals[0])
        if vals:
            raise ValueError(f"{kind} takes no parameters")
        return cls(kind)

    def __str__(self) -> str:
        if self.kind == "sample":
            return f"sample:{self.alpha},{self.delta}"
        if self.kind == "failures":
            return f"failures:{self.delta}"
        return self.kind


def is_proper(graph: ConflictGraph, phi: Mapping[int, int]) -> bool:
    return all(phi[a] != phi[b] for a, b in graph.edges)


def greedy_coloring(graph: ConflictGraph, q: int) -> dict[int, int]:
    """Smallest free colour, nodes in ascending id order."""
    phi: dict[int, int] = {}
    for v in sorted(graph.nodes):
        used = {phi[u] for u in graph.adj[v] if u in phi}
        phi[v] = next(k for k in range(1, q + 1) if k not in used)
    return phi


# --------------------------------------------------------------------------
# phase 1: conflict graph


def build_conflict_graph(instance: MatchingInstance) -> ConflictGraph:
    edges = set()
    for p in instance.providers:
        cs = instance.neighbours(p)
        for i, a in enumerate(cs):
            for b in cs[i + 1:]:
                if instance.score[a] == instance.score[b]:
                    edges.add((a, b))
    return ConflictGraph.from_edges(instance.clients, edges, instance.score)


class _ConflictProgram:
    """Every client tells its client neighbours its score; one round."""

    def init(self, node: Node) -> Step:
        score, peers = node.input
        return Step((score, ()), send={u: ("score", score) for u in peers})

    def step(self, node: Node, state, inbox) -> Step:
        score, _ = state
        same = tuple(sorted(u for u, msg in inbox.items() if msg[1] == score))
        return Step((score, same), halt=True)

    def output(self, node: Node, state):
        return state[1]


def conflict_phase(instance: MatchingInstance, network: Network | None = None):
    """Build the conflict graph in one round on the communication network."""
    network = network or Network.from_instance(instance)
    clients = set(instance.clients)
    inputs = {
        v: (instance.score[v], tuple(u for u in network.neighbours(v) if u in clients))
        for v in instance.clients
    }
    trace = engine.run(network, _ConflictProgram(), inputs, round_limit=2)
    graph = ConflictGraph(
        tuple(instance.clients),
        {v: trace.outputs[v] for v in instance.clients},
        dict(instance.score),
    )
    return graph, trace


def compose_score(instance: MatchingInstance, phi: Mapping[int, int], c: int) -> dict[int, int]:
    """``c * (s(v) - 1) + phi(v)``; rejects a ``phi`` that leaves a tie at a provider."""
    composed = {v: c * (instance.score[v] - 1) + phi[v] for v in instance.clients}
    for p in instance.providers:
        seen: dict[int, int] = {}
        for v in instance.neighbours(p):
            k = composed[v]
            if k in seen:
                raise ValueError(
                    f"clients {seen[k]} and {v} tie at provider {p} (composed class {k})")
            seen[k] = v
    return composed


def _composed_from_graph(graph: ConflictGraph, phi: Mapping[int, int], c: int) -> dict[int, int]:
    return {v: c * (graph.score.get(v, 1) - 1) + phi[v] for v in graph.nodes}


# --------------------------------------------------------------------------
# deterministic colouring


def _next_prime(x: int) -> int:
    """Smallest prime >= x."""
    x = max(x, 2)
    while any(x % d == 0 for d in range(2, math.isqrt(x) + 1)):
        x += 1
    return x


def linial_schedule(id_space: int, delta: int) -> tuple[list[tuple[int, int]], int]:
    """Reduction steps ``(degree, prime)`` and the final palette size.

    A colour ``x < p^(d+1)`` is read as a polynomial of degree ``d`` over
    GF(p); two different ones agree on at most ``d`` points, so with
    ``p > delta * d`` some point separates a node from all neighbours and
    ``(a, f_x(a))`` is a proper colour from ``p^2``.
    """
    m = max(id_space, 1)
    steps: list[tuple[int, int]] = []
    while True:
        best = None
        d = 1
        while best is None or delta * d + 1 <= best[1]:
            root = 1
            while root ** (d + 1) < m:
                root += 1
            p = _next_prime(max(delta * d + 1, root))
            while p ** (d + 1) < m:
                p = _next_prime(p + 1)
            if best is None or p < best[1]:
                best = (d, p)
            d += 1
        d, p = best
        if p * p >= m:
            return steps, m
        steps.append((d, p))
        m = p * p


def _linial_step(color: int, nbr_colors: Iterable[int], d: int, p: int) -> int:
    digits = []
    x = color
    for _ in range(d + 1):
        digits.append(x % p)
        x //= p
    others = []
    for y in nbr_colors:
        ds = []
        for _ in range(d + 1):
            ds.append(y % p)
            y //= p
        others.append(ds)

    def ev(cs, a):
        return sum(c * pow(a, i, p) for i, c in enumerate(cs)) % p

    for a in range(p):
        mine = ev(digits, a)
        if all(ev(o, a) != mine for o in others):
            return a * p + mine
    raise engine.ProgramFault("no separating point; colouring was not proper")


@dataclass
class _LinialState:
    color: int
    nbr: dict
    recolored: bool = False


class _DeterministicProgram:
    """Input: ``(initial colour, Delta, schedule, final palette, offset)``."""

    def init(self, node: Node) -> Step:
        color, delta, steps, m, offset = node.input
        if not node.neighbours:
            return Step(_LinialState(0, {}), halt=True)
        return Step(_LinialState(color, {}), send=self._bcast(node, color))

    @staticmethod
    def _bcast(node: Node, color: int) -> dict:
        return {u: ("color", color) for u in node.neighbours}

    def step(self, node: Node, st: _LinialState, inbox) -> Step:
        _, delta, steps, m, _ = node.input
        for u, msg in inbox.items():
            st.nbr[u] = msg[1]
        r = node.round
        L = len(steps)
        if st.recolored:
            return Step(st, halt=True)
        if r <= L:
            d, p = steps[r - 1]
            st.color = _linial_step(st.color, (st.nbr[u] for u in node.neighbours), d, p)
            return Step(st, send=self._bcast(node, st.color))
        if st.color <= delta:
            return Step(st, halt=True)
        turn = L + 1 + (m - 1 - st.color)
        if r < turn:
            return Step(st, wait=turn)
        used = set(st.nbr.values())
        st.color = next(k for k in range(delta + 1) if k not in used)
        st.recolored = True
        return Step(st, send=self._bcast(node, st.color))

    def output(self, node: Node, st: _LinialState) -> int:
        return node.input[4] + st.color + 1


def _deterministic_phi(graph: ConflictGraph, ids, delta: int, offset: int, network, seed):
    ids = dict(ids) if ids is not None else {v: v for v in graph.nodes}
    if delta == 0 or not graph.nodes:
        return {v: offset + 1 for v in graph.nodes}, None
    id_space = max(ids.values()) + 1
    steps, m = linial_schedule(id_space, delta)
    inputs = {v: (ids[v], delta, steps, m, offset) for v in graph.nodes}
    limit = len(steps) + m + 4
    trace = engine.run(network or graph.network(), _DeterministicProgram(), inputs, seed, limit)
    return {v: trace.outputs[v] for v in graph.nodes}, trace


def color_deterministic(
    graph: ConflictGraph,
    ids: Mapping[int, int] | None = None,
    *,
    network: Network | None = None,
    delta_h: int | None = None,
) -> TieBreak:
    """Proper ``(Delta_H + 1)``-colouring computed without randomness."""
    delta = graph.delta_h if delta_h is None else delta_h
    phi, trace = _deterministic_phi(graph, ids, delta, 0, network, 0)
    c = delta + 1
    return TieBreak(
        phi, c, _composed_from_graph(graph, phi, c),
        rounds=trace.rounds_used if trace else 0,
        traces=(trace,) if trace else (),
        info={"strategy": "deterministic", "delta_h": delta},
    )


# --------------------------------------------------------------------------
# Luby-style trials


@dataclass
class _TrialState:
    trial: int | None
    taken: set
    color: int | None = None


class _LubyProgram:
    def init(self, node: Node) -> Step:
        c = node.input
        st = _TrialState(None, set())
        return self._propose(node, st, c)

    def _propose(self, node: Node, st: _TrialState, c: int) -> Step:
        free = [k for k in range(1, c + 1) if k not in st.taken]
        st.trial = free[int(node.rng.integers(len(free)))]
        return Step(st, send={u: ("trial", st.trial) for u in node.neighbours})

    def step(self, node: Node, st: _TrialState, inbox) -> Step:
        if st.color is not None:
            return Step(st, halt=True)
        trials = set()
        for msg in inbox.values():
            if msg[0] == "final":
                st.taken.add(msg[1])
            else:
                trials.add(msg[1])
        if st.trial not in trials and st.trial not in st.taken:
            st.color = st.trial
            if not node.neighbours:
                return Step(st, halt=True)
            return Step(st, send={u: ("final", st.color) for u in node.neighbours})
        return self._propose(node, st, node.input)

    def output(self, node: Node, st: _TrialState):
        return st.color


def color_luby_trial(
    graph: ConflictGraph,
    seed: Any = 0,
    *,
    network: Network | None = None,
    delta_h: int | None = None,
    round_limit: int | None = None,
) -> TieBreak:
    """Random trials from ``2 * Delta_H`` colours until every node is coloured."""
    delta = max(graph.delta_h if delta_h is None else delta_h, 1)
    c = 2 * delta
    n = max(len(graph.nodes), 2)
    limit = round_limit or 64 * (math.ceil(math.log2(n)) + 2)
    inputs = {v: c for v in graph.nodes}
    trace = engine.run(network or graph.network(), _LubyProgram(), inputs, seed, limit)
    phi = {v: trace.outputs[v] for v in graph.nodes}
    return TieBreak(
        phi, c, _composed_from_graph(graph, phi, c),
        rounds=trace.rounds_used, traces=(trace,),
        info={"strategy": "luby", "delta_h": delta},
    )


# --------------------------------------------------------------------------
# almost uniform sampling


def _accepts(prop_v, phi_v, others, symmetric: bool) -> bool:
    for phi_u, prop_u in others:
        if prop_v == phi_u or prop_v == prop_u:
            return False
        if symmetric and prop_u == phi_v:
            return False
    return True


@dataclass
class _ChainState:
    color: int
    proposal: int


class _SamplerProgram:
    """Input: ``(initial colour, q, rounds, symmetric)``."""

    def init(self, node: Node) -> Step:
        color, q, rounds, _ = node.input
        if rounds == 0:
            return Step(_ChainState(color, color), halt=True)
        st = _ChainState(color, int(node.rng.integers(1, q + 1)))
        return Step(st, send={u: ("recolor", st.color, st.proposal) for u in node.neighbours})

    def step(self, node: Node, st: _ChainState, inbox) -> Step:
        _, q, rounds, symmetric = node.input
        others = [(msg[1], msg[2]) for msg in inbox.values()]
        if _accepts(st.proposal, st.color, others, symmetric):
            st.color = st.proposal
        if node.round >= rounds:
            return Step(st, halt=True)
        st.proposal = int(node.rng.integers(1, q + 1))
        return Step(st, send={u: ("recolor", st.color, st.proposal) for u in node.neighbours})

    def output(self, node: Node, st: _ChainState) -> int:
        return st.color


def sample_uniform_coloring(
    graph: ConflictGraph,
    config: SamplerConfig,
    seed: Any = 0,
    *,
    network: Network | None = None,
    rounds: int | None = None,
    symmetric: bool = True,
) -> TieBreak:
    """Run the parallel resampling chain for ``config.rounds`` rounds.

    Each round every node proposes a uniform colour and adopts it when no
    neighbour currently holds or proposes it and (``symmetric``) no
    neighbour proposes the node's current colour. The symmetric rule makes
    the chain reversible with uniform stationary law; without it the chain
    stays proper but is biased on non-regular graphs.
    """
    q = config.q
    if q < 2 * graph.delta_h + 1:
        raise ValueError("palette too small for this graph")
    steps = config.rounds if rounds is None else rounds
    start = greedy_coloring(graph, q)
    inputs = {v: (start[v], q, steps, symmetric) for v in graph.nodes}
    trace = engine.run(network or graph.network(), _SamplerProgram(), inputs, seed, steps + 1)
    phi = {v: trace.outputs[v] for v in graph.nodes}
    return TieBreak(
        phi, q, _composed_from_graph(graph, phi, q),
        fair=frozenset(graph.nodes), rounds=trace.rounds_used, traces=(trace,),
        info={"strategy": "sample", "delta_h": graph.delta_h, **config.export()},
    )


def sample_uniform_coloring_batch(
    graph: ConflictGraph,
    q: int,
    rounds: int,
    samples: int,
    seed: int = 0,
    *,
    symmetric: bool = True,
    chunk: int = 200_000,
) -> np.ndarray:
    """Vectorised copies of the sampler chain; returns ``(samples, n)`` colours.

    Uses one generator for all copies, so single draws differ from the
    engine run with the same seed; the law is the same.
    """
    nodes = list(graph.nodes)
    index = {v: i for i, v in enumerate(nodes)}
    nbrs = [[index[u] for u in graph.adj[v]] for v in nodes]
    start = greedy_coloring(graph, q)
    base = np.array([start[v] for v in nodes], dtype=np.int16)
    rng = np.random.default_rng(seed)
    out = np.empty((samples, len(nodes)), dtype=np.int16)
    for lo in range(0, samples, chunk):
        hi = min(samples, lo + chunk)
        phi = np.tile(base, (hi - lo, 1))
        for _ in range(rounds):
            prop = rng.integers(1, q + 1, size=phi.shape, dtype=np.int16)
            ok = np.ones(phi.shape, dtype=bool)
            for v, ns in enumerate(nbrs):
                for u in ns:
                    ok[:, v] &= (prop[:, v] != phi[:, u]) & (prop[:, v] != prop[:, u])
                    if symmetric:
                        ok[:, v] &= prop[:, u] != phi[:, v]
            phi = np.where(ok, prop, phi)
        out[lo:hi] = phi
    return out


# --------------------------------------------------------------------------
# colouring with failures


@dataclass
class _PickState:
    color: int
    failed: bool = False
    failed_nbrs: tuple = ()


class _PickProgram:
    """Uniform pick, then one round to find conflicts and one to share them."""

    def init(self, node: Node) -> Step:
        palette = node.input
        st = _PickState(int(node.rng.integers(1, palette + 1)))
        if not node.neighbours:
            return Step(st, halt=True)
        return Step(st, send={u: ("pick", st.color) for u in node.neighbours})

    def step(self, node: Node, st: _PickState, inbox) -> Step:
        if node.round == 1:
            st.failed = any(msg[1] == st.color for msg in inbox.values())
            return Step(st, send={u: ("failed", st.failed) for u in node.neighbours})
        st.failed_nbrs = tuple(sorted(u for u, msg in inbox.items() if msg[1]))
        return Step(st, halt=True)

    def output(self, node: Node, st: _PickState):
        return st.color, st.failed, st.failed_nbrs


def _failure_palette(delta: Fraction, delta_h: int) -> int:
    palette = math.ceil(1 / Fraction(delta)) * delta_h
    if palette < delta_h + 1:
        raise ValueError("ceil(1/delta) * Delta_H must be at least Delta_H + 1")
    return palette


def color_with_failures(
    graph: ConflictGraph,
    delta: Fraction | float,
    ids: Mapping[int, int] | None = None,
    seed: Any = 0,
    *,
    network: Network | None = None,
    delta_h: int | None = None,
) -> TieBreak:
    """One-shot uniform colouring; the conflicting nodes are repaired.

    Nodes without a same-colour neighbour form the fair set and keep their
    uniform colour from ``1..ceil(1/delta) * Delta_H``. The rest are
    recoloured deterministically with ``Delta_H + 1`` colours placed after
    that palette, so they rank behind fair nodes of the same score.
    """
    delta = Fraction(delta).limit_denominator(10**9) if isinstance(delta, float) else Fraction(delta)
    if not 0 < delta < 1:
        raise ValueError("delta must lie in (0, 1)")
    dh = graph.delta_h if delta_h is None else delta_h
    palette = _failure_palette(delta, dh)
    net = network or graph.network()
    first = engine.run(net, _PickProgram(), {v: palette for v in graph.nodes}, seed, 3)
    phi = {v: first.outputs[v][0] for v in graph.nodes}
    failed = {v for v in graph.nodes if first.outputs[v][1]}
    sub = graph.induced(failed)
    repaired, second = _deterministic_phi(sub, ids, dh, palette, None, seed)
    phi.update(repaired)
    c = palette + dh + 1
    traces = (first,) + ((second,) if second else ())
    return TieBreak(
        phi, c, _composed_from_graph(graph, phi, c),
        fair=frozenset(graph.nodes) - failed, failed=frozenset(failed),
        rounds=sum(t.rounds_used for t in traces), traces=traces,
        info={"strategy": "failures", "delta_h": dh, "delta": str(delta), "palette": palette},
    )


def color_with_failures_batch(
    graph: ConflictGraph, delta: Fraction, samples: int, seed: int = 0, delta_h: int | None = None
) -> tuple[np.ndarray, np.ndarray]:
    """Vectorised first step only: ``(colours, failed)`` arrays of shape ``(samples, n)``."""
    dh = graph.delta_h if delta_h is None else delta_h
    palette = _failure_palette(Fraction(delta), dh)
    nodes = list(graph.nodes)
    index = {v: i for i, v in enumerate(nodes)}
    rng = np.random.default_rng(seed)
    phi = rng.integers(1, palette + 1, size=(samples, len(nodes)))
    failed = np.zeros(phi.shape, dtype=bool)
    for v in nodes:
        for u in graph.adj[v]:
            failed[:, index[v]] |= phi[:, index[v]] == phi[:, index[u]]
    return phi, failed


# --------------------------------------------------------------------------


def break_ties(
    instance: MatchingInstance,
    strategy: Strategy,
    seed: Any = 0,
    graph: ConflictGraph | None = None,
) -> TieBreak:
    """Colour the conflict graph with ``strategy`` and compose the score.

    The colouring programs talk only along conflict edges, which are a
    subset of the client-client links of the communication network.
    Randomised strategies need a degree bound of at least 1, so an edgeless
    conflict graph is coloured as if its maximum degree were 1.
    """
    graph = graph or build_conflict_graph(instance)
    dh = graph.delta_h
    if strategy.kind == "deterministic":
        tb = color_deterministic(graph)
    elif strategy.kind == "luby":
        tb = color_luby_trial(graph, seed)
    elif strategy.kind == "sample":
        cfg = SamplerConfig(strategy.alpha, strategy.delta, dh, len(graph.nodes))
        tb = sample_uniform_coloring(graph, cfg, seed)
    else:
        tb = color_with_failures(graph, strategy.delta, seed=seed, delta_h=max(dh, 1))
    composed = compose_score(instance, tb.phi, tb.c)
    return TieBreak(tb.phi, tb.c, composed, tb.fair, tb.failed, tb.rounds, tb.traces,
                    {**tb.info, "S": instance.S, "strategy": str(strategy)})


def given_tiebreak(instance: MatchingInstance, phi: Mapping[int, int], c: int) -> TieBreak:
    """Wrap an externally chosen colouring; used by the exhaustive sweeps."""
    phi = {v: phi[v] for v in instance.clients}
    if any(not 1 <= k <= c for k in phi.values()):
        raise ValueError("colour outside 1..c")
    return TieBreak(phi, c, compose_score(instance, phi, c),
                    info={"S": instance.S, "strategy": "given"})
