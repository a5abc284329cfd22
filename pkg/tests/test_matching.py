from __future__ import annotations

import itertools
from fractions import Fraction

import numpy as np
import pytest

from fairda.instance import MatchingInstance, generate_lowerbound_path, generate_random
from fairda.matching import (
    FractionalMatching,
    batch_proposal,
    matching_edges,
    run_classic_da,
    run_common_da,
    run_fractional_da,
    run_mechanism,
)
from fairda.tiebreak import build_conflict_graph, color_deterministic, given_tiebreak
from fairda.verify import (
    enumerate_stable_matchings,
    find_blocking_pairs,
    find_fractional_blocking_pairs,
    greedy_fractional,
    serial_dictatorship,
)


def order_tiebreak(inst: MatchingInstance, order):
    """Single score class; colours give ``order[0]`` the best composed class."""
    phi = {v: i + 1 for i, v in enumerate(order)}
    return given_tiebreak(inst, phi, len(order))


def small_random(seed: int, n_c: int, n_p: int, loads=None) -> MatchingInstance:
    rng = np.random.default_rng(seed)
    pids = list(range(n_c + 1, n_c + n_p + 1))
    prefs = {}
    for v in range(1, n_c + 1):
        d = int(rng.integers(0, min(3, n_p) + 1))
        prefs[v] = tuple(int(p) for p in rng.permutation(pids)[:d])
    load_map = None
    if loads:
        load_map = {x: loads[int(rng.integers(len(loads)))] for x in [*prefs, *pids]}
    return MatchingInstance.from_prefs(prefs, {v: 1 for v in prefs}, providers=pids, S=1,
                                       loads=load_map)


# -- classic -----------------------------------------------------------------


def test_classic_single_edge():
    inst = MatchingInstance.from_prefs({1: (2,)}, {1: 1})
    m, trace = run_classic_da(inst)
    assert m == {1: 2}


def test_classic_one_displacement():
    inst = MatchingInstance.from_prefs({1: (3, 4), 2: (3, 4)}, {1: 1, 2: 1},
                                       provider_prefs={3: (1, 2), 4: (2, 1)})
    m, _ = run_classic_da(inst)
    assert m == {1: 3, 2: 4}
    lonely = MatchingInstance.from_prefs({1: (3,), 2: (3,)}, {1: 1, 2: 1})
    assert run_classic_da(lonely)[0] == {1: 3, 2: None}


@pytest.mark.parametrize("flip", [False, True])
def test_classic_path_matches_oracle(flip):
    inst = generate_lowerbound_path(4, flip)
    (only,) = enumerate_stable_matchings(inst)
    assert run_classic_da(inst)[0] == only


def test_classic_round_bound():
    for seed in range(30):
        inst = small_random(seed, 6, 4)
        m, trace = run_classic_da(inst)
        delta_c = max(inst.degree(v) for v in inst.clients)
        assert trace.rounds_used <= 2 * len(inst.clients) * max(delta_c, 1)
        assert find_blocking_pairs(inst, m).stable


def test_classic_truncation():
    inst = MatchingInstance.from_prefs({1: (3,), 2: (3,)}, {1: 1, 2: 1})
    m, trace = run_classic_da(inst, truncate_after=1)
    assert trace.truncated and m == {1: None, 2: None}


# -- common ------------------------------------------------------------------


def test_common_complete_bipartite_serial_dictatorship():
    rng = np.random.default_rng(0)
    clients, providers = [1, 2, 3, 4], [5, 6, 7]
    prefs = {v: tuple(int(p) for p in rng.permutation(providers)) for v in clients}
    inst = MatchingInstance.from_prefs(prefs, {v: 1 for v in clients}, S=1)
    order = [3, 1, 4, 2]
    tb = order_tiebreak(inst, order)
    taken, expect = set(), {}
    for v in order:
        expect[v] = next((p for p in prefs[v] if p not in taken), None)
        taken.add(expect[v])
    m, trace = run_common_da(inst, tb)
    assert m == {v: expect[v] for v in clients}
    assert trace.rounds_used <= 2 * 4 - 1


def test_common_single_class_one_round():
    inst = MatchingInstance.from_prefs({1: (3, 2)}, {1: 1})
    tb = given_tiebreak(inst, {1: 1}, 1)
    m, trace = run_common_da(inst, tb)
    assert m == {1: 3} and trace.rounds_used == 1


def test_common_rejects_non_strict():
    inst = MatchingInstance.from_prefs({1: (3,), 2: (3,)}, {1: 1, 2: 1})
    from fairda.tiebreak import TieBreak
    with pytest.raises(ValueError):
        run_common_da(inst, TieBreak({1: 1, 2: 1}, 1, {1: 1, 2: 1}, info={"S": 1}))


def test_common_random_stable_and_bounded():
    for seed in range(15):
        inst = generate_random(seed, 60, 20, 4, 3)
        tb = color_deterministic(build_conflict_graph(inst))
        from fairda.tiebreak import compose_score
        tb = given_tiebreak(inst, tb.phi, tb.c)
        m, trace = run_common_da(inst, tb)
        assert find_blocking_pairs(inst, m, composed=tb.composed).stable
        assert trace.rounds_used <= 2 * inst.S * tb.c - 1
        assert compose_score(inst, tb.phi, tb.c) == dict(tb.composed)


def test_common_equals_serial_dictatorship_up_to_six_clients():
    for seed in range(12):
        inst = small_random(100 + seed, 6 if seed % 2 else 5, 4)
        for order in itertools.permutations(inst.clients):
            tb = order_tiebreak(inst, order)
            m, _ = run_common_da(inst, tb)
            assert m == serial_dictatorship(inst, tb.composed)


def _class_of(tb, v):
    return tb.composed[v]


def test_provider_monotonicity_and_class_halting():
    for seed in range(10):
        inst = generate_random(seed, 40, 12, 3, 2)
        g = build_conflict_graph(inst)
        c0 = color_deterministic(g)
        tb = given_tiebreak(inst, c0.phi, c0.c)
        m, trace = run_common_da(inst, tb)
        clients = set(inst.clients)
        held: dict[int, int] = {}
        for msg in trace.messages:
            if msg.sender in clients:
                assert msg.round <= 2 * tb.composed[msg.sender]
            elif msg.payload[1] is not None:
                cls = msg.payload[2]
                assert cls <= held.get(msg.sender, cls)
                held[msg.sender] = cls
        halted = trace.halted_at
        for v in inst.clients:
            assert halted[v] <= 2 * tb.composed[v] - 1


def test_classic_provider_monotonicity():
    inst = generate_random(3, 30, 10, 3, 1)
    m, trace = run_classic_da(inst)
    rank = {p: {v: i for i, v in enumerate(inst.provider_order(p))} for p in inst.providers}
    held: dict[int, int] = {}
    for msg in trace.messages:
        if msg.sender in rank and msg.payload[1] is not None:
            r = rank[msg.sender][msg.payload[1]]
            assert r <= held.get(msg.sender, r)
            held[msg.sender] = r


# -- fractional ---------------------------------------------------------------


def test_batch_formula_examples():
    assert batch_proposal(Fraction(5), [Fraction(3), Fraction(4)]) == [3, 2]
    assert batch_proposal(Fraction(2), [Fraction(5)]) == [2]
    assert batch_proposal(Fraction(1, 2), [Fraction(0), Fraction(1, 3), Fraction(1)]) == [0, Fraction(1, 3),
                                                                                         Fraction(1, 6)]


def test_fractional_single_client_two_providers():
    inst = MatchingInstance.from_prefs({1: (2, 3)}, {1: 1}, loads={1: 5, 2: 3, 3: 4})
    fm, trace = run_fractional_da(inst, given_tiebreak(inst, {1: 1}, 1))
    assert fm.amount(1, 2) == 3 and fm.amount(1, 3) == 2
    assert trace.rounds_used <= 2


def test_fractional_residual():
    inst = MatchingInstance.from_prefs({1: (2,)}, {1: 1}, loads={1: 2, 2: 5})
    fm, _ = run_fractional_da(inst, given_tiebreak(inst, {1: 1}, 1))
    assert fm.amount(1, 2) == 2
    assert inst.load(2) - fm.total(2) == 3


def test_fractional_two_classes_hand_trace():
    inst = MatchingInstance.from_prefs({1: (3,), 2: (3, 4)}, {1: 1, 2: 2}, S=2,
                                       loads={1: 1, 2: 1, 3: 1, 4: 1})
    tb = given_tiebreak(inst, {1: 1, 2: 1}, 1)
    fm, trace = run_fractional_da(inst, tb)
    assert dict(fm.m) == {(1, 3): 1, (2, 4): 1}
    offers = {(m.sender, m.receiver): m for m in trace.messages if m.payload[0] == "offer"}
    assert offers[(1, 3)].round == 2 and offers[(2, 4)].round == 4
    assert offers[(2, 3)].payload[2] == 0
    assert trace.rounds_used <= 4


def test_fractional_requires_loads():
    inst = MatchingInstance.from_prefs({1: (2,)}, {1: 1})
    with pytest.raises(ValueError):
        run_fractional_da(inst, given_tiebreak(inst, {1: 1}, 1))


def test_fractional_random_feasible_stable_and_greedy():
    values = [Fraction(1), Fraction(2), Fraction(1, 2), Fraction(3, 7)]
    for seed in range(40):
        inst = small_random(seed, 6, 4, loads=values)
        order = list(np.random.default_rng(seed).permutation(inst.clients))
        tb = order_tiebreak(inst, [int(v) for v in order])
        fm, trace = run_fractional_da(inst, tb)
        for x in (*inst.clients, *inst.providers):
            assert fm.total(x) <= inst.load(x)
        assert find_fractional_blocking_pairs(inst, fm, tb.composed).stable
        assert fm == greedy_fractional(inst, tb.composed)
        assert trace.rounds_used <= 2 * tb.classes
        for v in inst.clients:
            assert trace.halted_at[v] <= 2 * tb.composed[v]


def test_unit_loads_reduce_to_integral_up_to_six_clients():
    for seed in range(10):
        inst = small_random(500 + seed, 6, 4)
        unit = inst.with_loads({x: 1 for x in (*inst.clients, *inst.providers)})
        for order in itertools.islice(itertools.permutations(inst.clients), 0, 720, 7):
            tb = order_tiebreak(inst, order)
            m, _ = run_common_da(inst, tb)
            fm, _ = run_fractional_da(unit, tb)
            assert fm.support == matching_edges(m)


def test_fractional_export_uses_rationals():
    fm = FractionalMatching({(1, 2): Fraction(1, 2), (1, 3): Fraction(0)})
    assert fm.export() == [{"client": 1, "provider": 2, "amount": "1/2"}]
    assert fm.support == {(1, 2)}


# -- mechanism ----------------------------------------------------------------


def test_mechanism_no_ties():
    inst = MatchingInstance.from_prefs({1: (4, 5), 2: (4, 5), 3: (5, 4)}, {1: 2, 2: 1, 3: 3}, S=3)
    res = run_mechanism(inst, "deterministic")
    assert res.conflict_graph.edges == frozenset()
    assert res.tiebreak.c == 1
    assert res.matching == serial_dictatorship(inst, inst.score)
    assert res.phase_rounds["matching"] <= 2 * 3 - 1


def test_mechanism_seed7_deterministic():
    inst = generate_random(7, 50, 20, 3, 4)
    res = run_mechanism(inst, "deterministic")
    assert find_blocking_pairs(inst, res.matching, composed=res.tiebreak.composed).stable
    t_color = res.phase_rounds["coloring"]
    dh = res.conflict_graph.delta_h
    assert res.total_rounds <= 1 + t_color + 2 * inst.S * (dh + 1) - 1
    assert res.phase_rounds["conflict"] == 1


def test_mechanism_failures_vs_deterministic():
    inst = generate_random(7, 50, 20, 3, 4)
    a = run_mechanism(inst, "deterministic")
    b = run_mechanism(inst, "failures:1/2", seed=3)
    for res in (a, b):
        assert find_blocking_pairs(inst, res.matching, composed=res.tiebreak.composed).stable
        # stable for the coarse score order too: ties never block
        assert find_blocking_pairs(inst, res.matching, composed=inst.score).stable
        assert res.matching == serial_dictatorship(inst, res.tiebreak.composed)


def test_mechanism_fractional_reuses_tiebreak():
    inst = generate_random(9, 40, 15, 3, 2, loads=[1, 2, "1/2"])
    a = run_mechanism(inst, "luby", seed=1)
    b = run_mechanism(inst, "luby", seed=1, fractional=True, tiebreak=a.tiebreak)
    assert b.tiebreak is a.tiebreak
    assert find_fractional_blocking_pairs(inst, b.fractional, a.tiebreak.composed).stable
    assert b.phase_rounds["matching"] <= 2 * inst.S * a.tiebreak.c


def test_mechanism_exports():
    inst = generate_random(7, 20, 8, 2, 2)
    res = run_mechanism(inst, "deterministic")
    doc = res.export()
    assert {"client", "provider", "amount"} <= set(doc["matching"][0])
    assert all(row["amount"] == "1" for row in doc["matching"])
    csv = res.summary_csv(0).splitlines()
    assert csv[0].startswith("instance,strategy,fractional,S,c,delta_h,rounds_conflict")
    assert csv[1].endswith(",0")
