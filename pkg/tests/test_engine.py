from __future__ import annotations

from fractions import Fraction

import pytest

from fairda import engine
from fairda.engine import (
    PASSIVE,
    ExecutionTrace,
    Message,
    Network,
    ProgramFault,
    RoundLimitExceeded,
    Step,
    assert_congest,
    payload_bits,
)
from fairda.instance import MatchingInstance, generate_random
from fairda.matching import run_classic_da, run_mechanism


class HaltAtInit:
    def init(self, node):
        return Step(None, halt=True)

    def step(self, node, state, inbox):
        raise AssertionError("never stepped")

    def output(self, node, state):
        return node.id


class PingOnce:
    def init(self, node):
        return Step(None, send={u: ("ping", node.id) for u in node.neighbours})

    def step(self, node, state, inbox):
        return Step(sorted(inbox), halt=True)

    def output(self, node, state):
        return state


class Forever:
    def init(self, node):
        return Step(0, send={u: ("tick",) for u in node.neighbours})

    def step(self, node, state, inbox):
        return Step(state + 1, send={u: ("tick",) for u in node.neighbours})

    def output(self, node, state):
        return state


class Gossip:
    """Random values flooded for three rounds; sensitive to any reordering."""

    def init(self, node):
        x = int(node.rng.integers(1000))
        return Step([x], send={u: ("v", x) for u in node.neighbours})

    def step(self, node, state, inbox):
        state = state + [m[1] for _, m in sorted(inbox.items())]
        if node.round == 3:
            return Step(state, halt=True)
        x = sum(state) % 997
        return Step(state, send={u: ("v", x) for u in node.neighbours})

    def output(self, node, state):
        return tuple(state)


def test_halt_in_init():
    net = Network.from_edges([1, 2], [(1, 2)])
    trace = engine.run(net, HaltAtInit(), {1: None, 2: None})
    assert trace.rounds_used == 0
    assert trace.outputs == {1: 1, 2: 2}


def test_ping_once():
    net = Network.from_edges([1, 2], [(1, 2)])
    trace = engine.run(net, PingOnce(), {1: None, 2: None})
    assert trace.rounds_used == 1
    assert len(trace.messages) == 2
    assert trace.outputs == {1: [2], 2: [1]}
    assert all(m.round == 1 for m in trace.messages)


def test_classic_da_two_clients_one_provider():
    inst = MatchingInstance.from_prefs({1: (3,), 2: (3,)}, {1: 1, 2: 1}, providers=(3,), S=1)
    m, trace = run_classic_da(inst)
    assert m == {1: 3, 2: None}
    assert trace.rounds_used == 2
    proposals = trace.messages_in_round(1)
    assert {(x.sender, x.receiver) for x in proposals} == {(1, 3), (2, 3)}
    acks = trace.messages_in_round(2)
    assert {(x.sender, x.receiver, x.payload) for x in acks} == {(3, 1, ("match", 1)), (3, 2, ("match", 1))}


def test_round_limit_carries_partial_trace():
    net = Network.from_edges([1, 2], [(1, 2)])
    with pytest.raises(RoundLimitExceeded) as err:
        engine.run(net, Forever(), {1: None, 2: None}, round_limit=5)
    assert err.value.trace.rounds_used == 5
    assert err.value.trace.live_at_limit == (1, 2)
    assert max(m.round for m in err.value.trace.messages) == 5


def test_truncate_returns_outputs():
    net = Network.from_edges([1, 2], [(1, 2)])
    trace = engine.run(net, Forever(), {1: None, 2: None}, round_limit=4, truncate=True)
    assert trace.truncated and trace.outputs == {1: 4, 2: 4}


def test_send_to_non_neighbour_is_a_fault():
    class Bad(PingOnce):
        def init(self, node):
            return Step(None, send={99: ("x",)})

    net = Network.from_edges([1, 2], [(1, 2)])
    with pytest.raises(ProgramFault):
        engine.run(net, Bad(), {1: None})


def test_round_limit_validation():
    with pytest.raises(ValueError):
        engine.run(Network.from_edges([1], []), HaltAtInit(), {1: None}, round_limit=0)


def test_schedule_independence():
    net = Network.from_edges(range(1, 7), [(1, 2), (2, 3), (3, 4), (4, 5), (5, 6), (6, 1), (1, 4)])
    inputs = {v: None for v in net.nodes}
    base = engine.run(net, Gossip(), inputs, seed=5)
    for s in range(5):
        other = engine.run(net, Gossip(), inputs, seed=5, schedule_seed=s)
        assert other == base


def test_node_tapes_do_not_depend_on_other_nodes():
    small = Network.from_edges([1, 2], [(1, 2)])
    big = Network.from_edges([1, 2, 3], [(1, 2), (2, 3)])
    a = engine.run(small, Gossip(), {1: None, 2: None}, seed=9)
    b = engine.run(big, Gossip(), {1: None, 2: None, 3: None}, seed=9)
    assert a.outputs[1][0] == b.outputs[1][0]


def test_sleep_fast_forward_counts_rounds():
    class Sleeper:
        def init(self, node):
            return Step(None, wait=50)

        def step(self, node, state, inbox):
            return Step(node.round, halt=True)

        def output(self, node, state):
            return state

    trace = engine.run(Network.from_edges([1], []), Sleeper(), {1: None})
    assert trace.rounds_used == 50 and trace.outputs == {1: 50}


def test_quiescence_halts_passive_nodes():
    class Passive:
        def init(self, node):
            return Step(0, wait=PASSIVE)

        def step(self, node, state, inbox):
            return Step(state + 1, wait=PASSIVE)

        def output(self, node, state):
            return state

    trace = engine.run(Network.from_edges([1, 2], [(1, 2)]), Passive(), {1: None, 2: None})
    assert trace.rounds_used == 0 and trace.outputs == {1: 0, 2: 0}


def test_payload_bits():
    assert payload_bits(("t",)) == 8
    assert payload_bits(("t", 0)) == 9
    assert payload_bits(("t", 5)) == 8 + 4
    assert payload_bits(("t", -1)) == 9
    assert payload_bits(("t", None, True)) == 10
    assert payload_bits(("t", Fraction(3, 4))) == 8 + 3 + 4
    with pytest.raises(ProgramFault):
        payload_bits(("t", Fraction(1, 2), Fraction(1, 3)))
    with pytest.raises(ProgramFault):
        payload_bits((1, 2))


def test_assert_congest_examples():
    empty = ExecutionTrace(0, (), {}, {})
    assert assert_congest(empty, 4).ok
    big = Message(1, 1, 2, ("x",), 64)
    report = assert_congest(ExecutionTrace(1, (big,), {}, {}), 4, 8)
    assert not report and report.budget == 16 and report.worst == big
    with pytest.raises(ValueError):
        assert_congest(empty, 1)


def test_seed7_mechanism_is_congest():
    inst = generate_random(7, 50, 20, 3, 4)
    res = run_mechanism(inst, "deterministic")
    for trace in res.all_traces():
        assert assert_congest(trace, inst.n, 8)


def test_network_augmentation_exact():
    inst = generate_random(2, 30, 10, 3, 2)
    net = Network.from_instance(inst)
    for a in inst.clients:
        for b in inst.clients:
            if a < b:
                share = bool(set(inst.neighbours(a)) & set(inst.neighbours(b)))
                assert net.has_edge(a, b) == share
    for v, p in inst.edges:
        assert net.has_edge(v, p) and net.has_edge(p, v)
    assert not any(net.has_edge(p, q) for p in inst.providers for q in inst.providers)


def test_trace_exports():
    net = Network.from_edges([1, 2], [(1, 2)])
    trace = engine.run(net, PingOnce(), {1: None, 2: None})
    assert '"rounds": 1' in trace.to_json()
    rows = trace.to_csv().splitlines()
    assert rows[0] == "round,active_nodes,messages,max_bits"
    assert rows[1] == f"1,2,2,{payload_bits(('ping', 2))}"
