"""Ground-truth oracles and property harnesses.

Everything here is sequential and brute force: blocking-pair scans,
enumeration of stable matchings, serial dictatorship, deviation searches
for incentive compatibility, and Monte Carlo tallies of tie-break orders.
"""

from __future__ import annotations

import csv
import io
import itertools
import json
from collections import Counter
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Any, Callable, Iterable, Iterator, Mapping, Sequence

import numpy as np
from scipy.stats import binomtest

from .instance import MatchingInstance, generate_lowerbound_path
from .matching import (
    FractionalMatching,
    run_classic_da,
    run_common_da,
    run_fractional_da,
)
from .tiebreak import (
    ConflictGraph,
    SamplerConfig,
    Strategy,
    TieBreak,
    break_ties,
    build_conflict_graph,
    color_with_failures_batch,
    given_tiebreak,
    greedy_coloring,
    sample_uniform_coloring_batch,
)

__all__ = [
    "BlockingPair",
    "BlockingReport",
    "DeviationResult",
    "FairnessReport",
    "GroupFairness",
    "PropagationRow",
    "SweepReport",
    "find_blocking_pairs",
    "find_fractional_blocking_pairs",
    "enumerate_stable_matchings",
    "serial_dictatorship",
    "greedy_fractional",
    "test_incentive_compatibility",
    "prefix_dominance",
    "measure_tiebreak_fairness",
    "measure_propagation",
    "propagation_slope",
    "tie_groups",
    "tv_distance",
    "wilson_interval",
    "enumerate_proper_colorings",
    "coloring_tv",
    "exact_chain_distribution",
    "enumerate_profiles",
    "canonical_profile",
    "profile_instance",
    "priority_tiebreak",
    "common_sweep",
    "fractional_ic_sweep",
    "literal_tiebreak_sweep",
    "truncation_witness",
    "search_truncation_witness",
]

Matching = Mapping[int, "int | None"]


# --------------------------------------------------------------------------
# stability


@dataclass(frozen=True)
class BlockingPair:
    client: int
    provider: int
    reason: str


@dataclass(frozen=True)
class BlockingReport:
    pairs: tuple[BlockingPair, ...]
    size: int
    """Number of matched edges (support size for fractional matchings)."""

    @property
    def unstable_edges(self) -> int:
        return len(self.pairs)

    @property
    def stable(self) -> bool:
        return not self.pairs

    def export(self) -> dict:
        return {
            "stable": self.stable,
            "size": self.size,
            "unstable_edges": self.unstable_edges,
            "pairs": [{"client": b.client, "provider": b.provider, "reason": b.reason}
                      for b in self.pairs],
        }

    def __str__(self) -> str:
        head = f"matching size {self.size}, {self.unstable_edges} blocking pair(s)"
        return "\n".join([head, *(f"  ({b.client}, {b.provider}): {b.reason}" for b in self.pairs)])


def _provider_ranks(
    instance: MatchingInstance,
    provider_order: Mapping[int, Sequence[int]] | None,
    composed: Mapping[int, int] | None,
) -> dict[int, dict[int, int]]:
    """Rank of every client at every provider, smaller is better."""
    if composed is not None:
        return {p: {v: composed[v] for v in instance.neighbours(p)} for p in instance.providers}
    ranks = {}
    for p in instance.providers:
        order = provider_order[p] if provider_order is not None else instance.provider_order(p)
        ranks[p] = {v: i for i, v in enumerate(order)}
    return ranks


def _check_matching(instance: MatchingInstance, matching: Matching) -> dict[int, int]:
    taken: dict[int, int] = {}
    for v, p in matching.items():
        if p is None:
            continue
        if (v, p) not in instance.edges:
            raise ValueError(f"({v}, {p}) is not an edge")
        if p in taken:
            raise ValueError(f"provider {p} matched to {taken[p]} and {v}")
        taken[p] = v
    return taken


def find_blocking_pairs(
    instance: MatchingInstance,
    matching: Matching,
    provider_order: Mapping[int, Sequence[int]] | None = None,
    *,
    composed: Mapping[int, int] | None = None,
) -> BlockingReport:
    """All edges whose endpoints both prefer each other to their current state.

    Providers rank clients by ``composed`` when given, else by
    ``provider_order`` (a list per provider), else by the instance's own
    provider orders. Being unmatched is worse than any neighbour.
    """
    holder = _check_matching(instance, matching)
    ranks = _provider_ranks(instance, provider_order, composed)
    pairs = []
    for v in instance.clients:
        prefs = instance.client_prefs[v]
        mine = matching.get(v)
        limit = prefs.index(mine) if mine is not None else len(prefs)
        for p in prefs[:limit]:
            h = holder.get(p)
            if h is not None and ranks[p][h] <= ranks[p][v]:
                continue
            if mine is None and h is None:
                reason = "both unmatched"
            elif mine is None:
                reason = "client unmatched, provider prefers client"
            elif h is None:
                reason = "provider unmatched, client prefers provider"
            else:
                reason = "both prefer each other"
            pairs.append(BlockingPair(v, p, reason))
    return BlockingReport(tuple(pairs), len(holder))


def find_fractional_blocking_pairs(
    instance: MatchingInstance,
    fm: FractionalMatching,
    composed: Mapping[int, int],
) -> BlockingReport:
    """Edges on which both sides would move load onto each other.

    ``(v, u)`` blocks when u has slack or carries load of a client ranked
    below v, and v has slack or sends load to a provider it ranks below u.
    """
    for (v, p), x in fm.m.items():
        if x < 0 or (v, p) not in instance.edges:
            raise ValueError(f"bad load {x} on ({v}, {p})")
    totals: dict[int, Fraction] = {x: Fraction(0) for x in (*instance.clients, *instance.providers)}
    for (v, p), x in fm.m.items():
        totals[v] += x
        totals[p] += x
    for node, t in totals.items():
        if t > instance.load(node):
            raise ValueError(f"node {node} carries {t} > {instance.load(node)}")
    pairs = []
    for v in instance.clients:
        prefs = instance.client_prefs[v]
        v_slack = totals[v] < instance.load(v)
        for i, u in enumerate(prefs):
            u_slack = totals[u] < instance.load(u)
            u_side = u_slack or any(
                fm.amount(w, u) > 0 and composed[w] > composed[v] for w in instance.neighbours(u))
            if not u_side:
                continue
            v_side = v_slack or any(fm.amount(v, w) > 0 for w in prefs[i + 1:])
            if v_side:
                why = []
                why.append("provider has slack" if u_slack else "provider holds a worse client")
                why.append("client has slack" if v_slack else "client uses a worse provider")
                pairs.append(BlockingPair(v, u, ", ".join(why)))
    return BlockingReport(tuple(pairs), len(fm.support))


def enumerate_stable_matchings(
    instance: MatchingInstance,
    provider_order: Mapping[int, Sequence[int]] | None = None,
    *,
    composed: Mapping[int, int] | None = None,
) -> list[dict[int, int | None]]:
    """Every stable matching, by exhaustive search over all matchings."""
    if instance.n > 16:
        raise ValueError("enumeration limited to 16 agents")
    clients = list(instance.clients)
    out: list[dict[int, int | None]] = []
    current: dict[int, int | None] = {}
    used: set[int] = set()

    def extend(i: int) -> None:
        if i == len(clients):
            m = dict(current)
            if find_blocking_pairs(instance, m, provider_order, composed=composed).stable:
                out.append(m)
            return
        v = clients[i]
        for p in (None, *instance.client_prefs[v]):
            if p is not None and p in used:
                continue
            current[v] = p
            if p is not None:
                used.add(p)
            extend(i + 1)
            if p is not None:
                used.discard(p)
        del current[v]

    extend(0)
    return out


def _priority(instance: MatchingInstance, composed: Mapping[int, int]) -> list[int]:
    return sorted(instance.clients, key=lambda v: (composed[v], v))


def serial_dictatorship(instance: MatchingInstance, composed: Mapping[int, int]) -> dict[int, int | None]:
    """Clients pick in composed order, each its favourite provider still free."""
    taken: set[int] = set()
    out: dict[int, int | None] = {}
    for v in _priority(instance, composed):
        out[v] = next((p for p in instance.client_prefs[v] if p not in taken), None)
        if out[v] is not None:
            taken.add(out[v])
    return {v: out[v] for v in instance.clients}


def greedy_fractional(instance: MatchingInstance, composed: Mapping[int, int]) -> FractionalMatching:
    """Sequential batch proposals in composed order."""
    remaining = {p: instance.load(p) for p in instance.providers}
    m: dict[tuple[int, int], Fraction] = {}
    for v in _priority(instance, composed):
        left = instance.load(v)
        for p in instance.client_prefs[v]:
            x = min(remaining[p], left)
            if x > 0:
                m[(v, p)] = x
                remaining[p] -= x
                left -= x
    return FractionalMatching(m)


# --------------------------------------------------------------------------
# incentive compatibility


def prefix_dominance(
    true_outcome: Sequence[Fraction] | Mapping[int, Fraction],
    other_outcome: Sequence[Fraction] | Mapping[int, Fraction],
    true_pref_order: Sequence[int] | None = None,
) -> bool:
    """Every prefix sum of the truthful outcome is at least the deviation's.

    Outcomes are either sequences already indexed by the true order or
    mappings provider -> amount together with ``true_pref_order``.
    """
    if true_pref_order is not None:
        a = [true_outcome.get(p, 0) for p in true_pref_order]
        b = [other_outcome.get(p, 0) for p in true_pref_order]
    else:
        a, b = list(true_outcome), list(other_outcome)
    if len(a) != len(b):
        raise ValueError("outcomes of different length")
    sa = sb = 0
    for x, y in zip(a, b):
        sa += x
        sb += y
        if sa < sb:
            return False
    return True


@dataclass(frozen=True)
class DeviationResult:
    client: int
    truthful: Any
    """Rank (integral) or load vector in true order (fractional)."""
    best_deviation: Any
    best_report: tuple[int, ...]
    verdict: bool
    deviations: int
    tiebreak_fixed: bool
    counterexample: tuple[int, ...] | None = None


Runner = Callable[[MatchingInstance, TieBreak], Any]


def _integral_runner(instance: MatchingInstance, tiebreak: TieBreak):
    return run_common_da(instance, tiebreak)[0]


def _fractional_runner(instance: MatchingInstance, tiebreak: TieBreak):
    return run_fractional_da(instance, tiebreak)[0]


def test_incentive_compatibility(
    instance: MatchingInstance,
    runner: str | Runner,
    client: int,
    tiebreak: TieBreak,
    *,
    fractional: bool | None = None,
) -> DeviationResult:
    """Compare the truthful report of ``client`` with every permutation of it.

    ``runner`` is ``"common"``, ``"fractional"`` or a callable
    ``(instance, tiebreak) -> outcome``; a callable returns a client map
    unless ``fractional=True``. The same tie-break is used for every run.
    Integral outcomes are ranked by position in the true list with
    unmatched ranked last; fractional outcomes must prefix-dominate.
    """
    if fractional is None:
        fractional = runner == "fractional"
    if runner == "common":
        runner = _integral_runner
    elif runner == "fractional":
        runner = _fractional_runner
    true = tuple(instance.client_prefs[client])
    if len(true) > 6:
        raise ValueError("deviation space limited to degree 6")
    phis = set()

    def outcome(report: tuple[int, ...]):
        inst = instance if report == true else instance.with_client_prefs(client, report)
        phis.add(tuple(sorted(tiebreak.phi.items())))
        res = runner(inst, tiebreak)
        if fractional:
            return tuple(res.amount(client, p) for p in true)
        p = res.get(client)
        return len(true) + 1 if p is None else true.index(p) + 1

    truthful = outcome(true)
    best, best_report, bad = truthful, true, None
    count = 0
    for report in itertools.permutations(true):
        if report == true:
            continue
        count += 1
        got = outcome(report)
        if fractional:
            if not prefix_dominance(truthful, got) and bad is None:
                bad = report
                best, best_report = got, report
        elif got < best:
            best, best_report = got, report
            if got < truthful and bad is None:
                bad = report
    return DeviationResult(client, truthful, best, best_report, bad is None, count,
                           len(phis) <= 1, bad)


test_incentive_compatibility.__test__ = False


# --------------------------------------------------------------------------
# small-instance enumeration


Profile = tuple[tuple[int, ...], ...]


def enumerate_profiles(max_clients: int, max_providers: int, max_deg: int,
                       min_clients: int = 1) -> Iterator[Profile]:
    """Preference profiles up to renaming of providers.

    Client ``i`` lists provider labels; labels are introduced in order of
    first appearance, so every profile is produced exactly once.
    """

    def lists(used: int) -> Iterator[tuple[tuple[int, ...], int]]:
        for d in range(max_deg + 1):
            yield from build((), used, d)

    def build(prefix, used, d):
        if len(prefix) == d:
            yield prefix, used
            return
        for p in range(min(used + 1, max_providers)):
            if p in prefix:
                continue
            yield from build(prefix + (p,), max(used, p + 1), d)

    def rec(prefix: Profile, used: int, k: int):
        if len(prefix) == k:
            yield prefix
            return
        for lst, nu in lists(used):
            yield from rec(prefix + (lst,), nu, k)

    for k in range(min_clients, max_clients + 1):
        yield from rec((), 0, k)


def canonical_profile(profile: Profile) -> tuple[Profile, dict[int, int]]:
    """Relabel providers by first appearance; returns the map old -> new."""
    relabel: dict[int, int] = {}
    for lst in profile:
        for p in lst:
            relabel.setdefault(p, len(relabel))
    return tuple(tuple(relabel[p] for p in lst) for lst in profile), relabel


def _provider_id(n_clients: int, label: int) -> int:
    return n_clients + 1 + label


def profile_instance(
    profile: Profile,
    score: Sequence[int] | None = None,
    loads: tuple[Sequence[Fraction], Sequence[Fraction]] | None = None,
    S: int | None = None,
) -> MatchingInstance:
    """Clients ``1..k``, providers ``k+1..`` in label order."""
    k = len(profile)
    labels = sorted({p for lst in profile for p in lst})
    providers = [_provider_id(k, p) for p in range(max(labels, default=-1) + 1)]
    prefs = {i + 1: tuple(_provider_id(k, p) for p in lst) for i, lst in enumerate(profile)}
    score = score or [i // 2 + 1 for i in range(k)]
    sc = {i + 1: s for i, s in enumerate(score)}
    load_map = None
    if loads is not None:
        cl, pl = loads
        load_map = {i + 1: Fraction(x) for i, x in enumerate(cl)}
        load_map.update({_provider_id(k, j): Fraction(x) for j, x in enumerate(pl)})
    return MatchingInstance.from_prefs(prefs, sc, providers=providers,
                                       S=S or max(sc.values()), loads=load_map)


def priority_tiebreak(instance: MatchingInstance) -> TieBreak:
    """Composed classes ``1..k`` in client id order via scores ``1,1,2,2,..`` and colours ``1,2,1,2,..``.

    Needs the scores produced by :func:`profile_instance` by default.
    """
    phi = {v: (v - 1) % 2 + 1 for v in instance.clients}
    return given_tiebreak(instance, phi, 2)


def _to_labels(k: int, m: Mapping[int, int | None]) -> tuple:
    return tuple(None if m[i + 1] is None else m[i + 1] - k - 1 for i in range(k))


@dataclass
class SweepReport:
    instances: int = 0
    checks: int = 0
    failures: list = field(default_factory=list)
    notes: dict = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return not self.failures

    def fail(self, what: str, detail: Any) -> None:
        if len(self.failures) < 20:
            self.failures.append((what, detail))
        self.notes[what] = self.notes.get(what, 0) + 1


def common_sweep(
    max_clients: int = 4,
    max_providers: int = 4,
    max_deg: int = 3,
    *,
    check_fractional: bool = True,
) -> SweepReport:
    """Exhaustive sweep over profiles under every strict priority order.

    Any strict composed order is the id order after renaming clients, so
    each profile is run with the priority tie-break only. Per profile:
    membership in the enumerated stable set, equality with serial
    dictatorship, the round bound, unit-load fractional support equality,
    and the rank test for every client and every reordering of its list.
    Deviated profiles are themselves profiles, so outcomes are cached.
    """
    cache: dict[Profile, tuple] = {}
    rep = SweepReport()

    def outcome(profile: Profile) -> tuple:
        canon, relabel = canonical_profile(profile)
        if canon not in cache:
            inst = profile_instance(canon)
            tb = priority_tiebreak(inst)
            m, trace = run_common_da(inst, tb)
            cache[canon] = _to_labels(len(canon), m)
            rep.instances += 1
            bound = 2 * inst.S * tb.c - 1
            if trace.rounds_used > bound:
                rep.fail("round bound", (canon, trace.rounds_used, bound))
            if m != serial_dictatorship(inst, tb.composed):
                rep.fail("serial dictatorship", canon)
            stable = enumerate_stable_matchings(inst, composed=tb.composed)
            if m not in stable:
                rep.fail("not in stable set", canon)
            if check_fractional:
                unit = inst.with_loads({x: 1 for x in (*inst.clients, *inst.providers)})
                fm, ftrace = run_fractional_da(unit, tb)
                if fm.support != frozenset((v, p) for v, p in m.items() if p is not None):
                    rep.fail("unit fractional support", canon)
                if any(x != 1 for x in fm.m.values()):
                    rep.fail("unit fractional amounts", canon)
                if ftrace.rounds_used > 2 * inst.S * tb.c:
                    rep.fail("fractional round bound", canon)
            rep.checks += 1
        back = {new: old for old, new in relabel.items()}
        return tuple(None if p is None else back[p] for p in cache[canon])

    for profile in enumerate_profiles(max_clients, max_providers, max_deg):
        truth = outcome(profile)
        for i, lst in enumerate(profile):
            rank = len(lst) + 1 if truth[i] is None else lst.index(truth[i]) + 1
            for report in itertools.permutations(lst):
                if report == lst:
                    continue
                dev = outcome(profile[:i] + (report,) + profile[i + 1:])
                got = len(lst) + 1 if dev[i] is None else lst.index(dev[i]) + 1
                rep.checks += 1
                if got < rank:
                    rep.fail("incentive", (profile, i + 1, report))
    rep.notes["profiles"] = rep.instances
    return rep


def _load_assignments(values, n_c: int, n_p: int, samples: int | None, rng):
    if samples is None:
        for cl in itertools.product(values, repeat=n_c):
            for pl in itertools.product(values, repeat=n_p):
                yield cl, pl
        return
    for _ in range(samples):
        yield (tuple(values[int(i)] for i in rng.integers(len(values), size=n_c)),
               tuple(values[int(i)] for i in rng.integers(len(values), size=n_p)))


def fractional_ic_sweep(
    max_clients: int = 3,
    max_providers: int = 3,
    max_deg: int = 3,
    values: Sequence[Fraction] = (Fraction(1), Fraction(2), Fraction(1, 2)),
    *,
    profiles: Iterable[Profile] | None = None,
    load_samples: int | None = None,
    seed: int = 0,
) -> SweepReport:
    """Prefix-dominance test over profiles and every assignment of loads.

    With ``load_samples`` each profile gets that many random assignments
    (seeded) instead of all of them.
    """
    rep = SweepReport()
    rng = np.random.default_rng(seed)
    cache: dict[tuple, tuple] = {}

    def outcome(profile: Profile, cl: tuple, pl: tuple) -> dict[tuple[int, int], Fraction]:
        canon, relabel = canonical_profile(profile)
        cpl = [None] * len(relabel)
        for old, new in relabel.items():
            cpl[new] = pl[old]
        key = (canon, cl, tuple(cpl))
        if key not in cache:
            inst = profile_instance(canon, loads=(cl, cpl))
            tb = priority_tiebreak(inst)
            fm, trace = run_fractional_da(inst, tb)
            rep.instances += 1
            if trace.rounds_used > 2 * inst.S * tb.c:
                rep.fail("fractional round bound", key)
            if not find_fractional_blocking_pairs(inst, fm, tb.composed).stable:
                rep.fail("fractional blocking pair", key)
            if fm != greedy_fractional(inst, tb.composed):
                rep.fail("greedy oracle", key)
            k = len(canon)
            cache[key] = {(v - 1, p - k - 1): x for (v, p), x in fm.m.items()}
        back = {new: old for old, new in relabel.items()}
        return {(i, back[j]): x for (i, j), x in cache[key].items()}

    source = profiles if profiles is not None else enumerate_profiles(max_clients, max_providers, max_deg)
    for profile in source:
        n_p = len({p for lst in profile for p in lst})
        for cl, pl in _load_assignments(values, len(profile), n_p, load_samples, rng):
            truth = outcome(profile, cl, pl)
            for i, lst in enumerate(profile):
                t_vec = [truth.get((i, p), 0) for p in lst]
                for report in itertools.permutations(lst):
                    if report == lst:
                        continue
                    dev = outcome(profile[:i] + (report,) + profile[i + 1:], cl, pl)
                    d_vec = [dev.get((i, p), 0) for p in lst]
                    rep.checks += 1
                    if not prefix_dominance(t_vec, d_vec):
                        rep.fail("fractional incentive", (profile, cl, pl, i + 1, report))
    return rep


def literal_tiebreak_sweep(
    max_clients: int = 3,
    max_providers: int = 3,
    max_deg: int = 2,
    max_S: int = 3,
    max_c: int = 3,
) -> SweepReport:
    """Every score function and every proper colouring, run as given.

    This does not rely on the reduction to priority orders: each
    ``(s, phi)`` pair is realised, the mechanism is run on the truthful and
    on every deviating report with the same tie-break, and the outcome is
    checked against serial dictatorship and the stable set.
    """
    rep = SweepReport()
    for profile in enumerate_profiles(max_clients, max_providers, max_deg):
        k = len(profile)
        for score in itertools.product(range(1, max_S + 1), repeat=k):
            base = profile_instance(profile, score=score, S=max_S)
            graph = build_conflict_graph(base)
            stable_cache: dict = {}
            for c in range(1, max_c + 1):
                for colours in itertools.product(range(1, c + 1), repeat=k):
                    phi = dict(zip(base.clients, colours))
                    if any(phi[a] == phi[b] for a, b in graph.edges):
                        continue
                    tb = given_tiebreak(base, phi, c)
                    m, trace = run_common_da(base, tb)
                    rep.instances += 1
                    if trace.rounds_used > 2 * base.S * c - 1:
                        rep.fail("round bound", (profile, score, colours))
                    if m != serial_dictatorship(base, tb.composed):
                        rep.fail("serial dictatorship", (profile, score, colours))
                    order = tuple(_priority(base, tb.composed))
                    if order not in stable_cache:
                        stable_cache[order] = enumerate_stable_matchings(base, composed=tb.composed)
                    if m not in stable_cache[order]:
                        rep.fail("not in stable set", (profile, score, colours))
                    for v in base.clients:
                        res = test_incentive_compatibility(base, "common", v, tb)
                        rep.checks += 1 + res.deviations
                        if not res.verdict or not res.tiebreak_fixed:
                            rep.fail("incentive", (profile, score, colours, v))
    return rep


# --------------------------------------------------------------------------
# truncated classic deferred acceptance


def truncation_witness() -> tuple[MatchingInstance, int, tuple[int, ...]]:
    """Three clients, two providers; truncation after two rounds.

    Clients 1 and 2 both open with provider 4, which prefers 2, and client
    3 opens with provider 5. When the run stops after the first answer,
    client 1 has just been refused and ends unmatched. Reporting provider 5
    first gets it provider 5, which ranks client 1 above client 3.
    """
    inst = MatchingInstance.from_prefs(
        {1: (4, 5), 2: (4,), 3: (5,)}, {1: 1, 2: 1, 3: 1}, providers=(4, 5), S=1,
        provider_prefs={4: (2, 1), 5: (1, 3)},
    )
    return inst, 1, (5, 4)


def _truncated_runner(rounds: int) -> Runner:
    def run(instance: MatchingInstance, tiebreak: TieBreak):
        return run_classic_da(instance, truncate_after=rounds)[0]

    return run


def search_truncation_witness(
    seed: int = 0, tries: int = 2000, rounds: int = 2, clients: int = 3, providers: int = 2
) -> tuple[MatchingInstance, DeviationResult] | None:
    """Random search for a client that gains by lying to truncated classic DA."""
    rng = np.random.default_rng(seed)
    pids = list(range(clients + 1, clients + providers + 1))
    dummy = TieBreak({}, 1, {})
    for _ in range(tries):
        prefs = {}
        for v in range(1, clients + 1):
            d = int(rng.integers(1, providers + 1))
            prefs[v] = tuple(int(p) for p in rng.permutation(pids)[:d])
        inst = MatchingInstance.from_prefs(prefs, {v: 1 for v in prefs}, providers=pids, S=1)
        pp = {p: tuple(int(v) for v in rng.permutation(inst.neighbours(p))) for p in pids}
        inst = MatchingInstance.from_prefs(prefs, {v: 1 for v in prefs}, providers=pids, S=1,
                                           provider_prefs=pp)
        for v in inst.clients:
            res = test_incentive_compatibility(inst, _truncated_runner(rounds), v, dummy)
            if not res.verdict:
                return inst, res
    return None


# --------------------------------------------------------------------------
# propagation on the lower-bound path


@dataclass(frozen=True)
class PropagationRow:
    k: int
    rounds: int
    rounds_unflipped: int
    rounds_flipped: int
    matched_differently: int
    far_end_differs: bool


def measure_propagation(k_values: Iterable[int]) -> list[PropagationRow]:
    """Classic DA on both versions of the path; how far must the flip travel."""
    rows = []
    for k in k_values:
        runs = []
        for flip in (False, True):
            inst = generate_lowerbound_path(k, flip)
            m, trace = run_classic_da(inst)
            partner: dict[int, int | None] = {x: None for x in (*inst.clients, *inst.providers)}
            for v, p in m.items():
                if p is not None:
                    partner[v], partner[p] = p, v
            runs.append((partner, trace.rounds_used))
        (a, ra), (b, rb) = runs
        differs = sum(1 for x in a if a[x] != b[x])
        rows.append(PropagationRow(k, max(ra, rb), ra, rb, differs, a[2 * k] != b[2 * k]))
    return rows


def propagation_slope(rows: Sequence[PropagationRow]) -> float:
    if len(rows) < 2:
        return float("nan")
    ks = np.array([r.k for r in rows], dtype=float)
    rs = np.array([r.rounds for r in rows], dtype=float)
    return float(np.polyfit(ks, rs, 1)[0])


# --------------------------------------------------------------------------
# fairness


def tv_distance(p: Mapping[Any, float], q: Mapping[Any, float]) -> float:
    """Sum of absolute differences over the union of supports (no factor 1/2)."""
    keys = set(p) | set(q)
    return float(sum(abs(p.get(k, 0) - q.get(k, 0)) for k in keys))


def wilson_interval(k: int, n: int, confidence: float = 0.99) -> tuple[float, float]:
    ci = binomtest(k, n).proportion_ci(confidence_level=confidence, method="wilson")
    return float(ci.low), float(ci.high)


def tie_groups(instance: MatchingInstance) -> list[tuple[int, ...]]:
    """Maximal sets of same-score clients sharing a provider."""
    groups: set[tuple[int, ...]] = set()
    for p in instance.providers:
        by_score: dict[int, list[int]] = {}
        for v in instance.neighbours(p):
            by_score.setdefault(instance.score[v], []).append(v)
        for g in by_score.values():
            if len(g) > 1:
                groups.add(tuple(sorted(g)))
    return sorted(g for g in groups if not any(set(g) < set(h) for h in groups))


@dataclass(frozen=True)
class GroupFairness:
    group: tuple[int, ...]
    counts: Mapping[tuple[int, ...], int]
    """Observed orders (best first) and how often each occurred."""
    total: int
    tv: float
    tv_half: float
    intervals: Mapping[tuple[int, ...], tuple[float, float]]

    @property
    def frequencies(self) -> dict[tuple[int, ...], Fraction]:
        return {o: Fraction(c, self.total) for o, c in self.counts.items()}


@dataclass(frozen=True)
class FairnessReport:
    strategy: str
    samples: int
    groups: tuple[GroupFairness, ...]
    failure_rate: Mapping[int, float]
    failure_interval: Mapping[int, tuple[float, float]]
    conditioned: bool
    """Whether tallies only count samples where the whole group is fair."""

    def export(self) -> dict:
        return {
            "strategy": self.strategy,
            "samples": self.samples,
            "conditioned_on_fair": self.conditioned,
            "failure_rate": {str(v): r for v, r in sorted(self.failure_rate.items())},
            "groups": [
                {
                    "group": list(g.group),
                    "total": g.total,
                    "tv": g.tv,
                    "tv_half": g.tv_half,
                    "orders": [{"order": list(o), "count": c,
                                "ci99": list(g.intervals[o])} for o, c in sorted(g.counts.items())],
                }
                for g in self.groups
            ],
        }

    def to_json(self) -> str:
        return json.dumps(self.export(), indent=1) + "\n"

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["group", "order", "count", "total", "frequency", "ci_low", "ci_high", "group_tv"])
        for g in self.groups:
            for o, c in sorted(g.counts.items()):
                lo, hi = g.intervals[o]
                w.writerow([" ".join(map(str, g.group)), " ".join(map(str, o)), c, g.total,
                            f"{c / g.total:.6f}", f"{lo:.6f}", f"{hi:.6f}", f"{g.tv:.6f}"])
        return buf.getvalue()


def _tally_group(group, phi_cols: np.ndarray, keep: np.ndarray) -> GroupFairness:
    rows = phi_cols[keep]
    total = int(rows.shape[0])
    counts: Counter = Counter()
    if total:
        perms, freq = np.unique(np.argsort(rows, axis=1, kind="stable"), axis=0, return_counts=True)
        for perm, c in zip(perms, freq):
            counts[tuple(group[i] for i in perm)] = int(c)
    orders = list(itertools.permutations(group))
    uniform = Fraction(1, len(orders))
    if total:
        tv = sum(abs(Fraction(counts.get(o, 0), total) - uniform) for o in orders)
    else:
        tv = Fraction(0)
    intervals = {o: wilson_interval(c, total) for o, c in counts.items()}
    return GroupFairness(tuple(group), dict(counts), total, float(tv), float(tv) / 2, intervals)


def _draw_colourings(instance, strategy: Strategy, graph: ConflictGraph, samples: int,
                     seed: int, batch: bool) -> tuple[np.ndarray, np.ndarray]:
    nodes = list(graph.nodes)
    dh = graph.delta_h
    if batch and strategy.kind == "sample":
        cfg = SamplerConfig(strategy.alpha, strategy.delta, dh, len(nodes))
        phi = sample_uniform_coloring_batch(graph, cfg.q, cfg.rounds, samples, seed)
        return phi, np.zeros(phi.shape, dtype=bool)
    if batch and strategy.kind == "failures":
        return color_with_failures_batch(graph, strategy.delta, samples, seed, max(dh, 1))
    phi = np.empty((samples, len(nodes)), dtype=np.int64)
    failed = np.zeros((samples, len(nodes)), dtype=bool)
    for i in range(samples):
        tb = break_ties(instance, strategy, (seed, i), graph)
        phi[i] = [tb.phi[v] for v in nodes]
        failed[i] = [v in tb.failed for v in nodes]
    return phi, failed


def measure_tiebreak_fairness(
    instance: MatchingInstance,
    strategy: Strategy | str,
    samples: int,
    seed: int = 0,
    *,
    batch: bool = False,
) -> FairnessReport:
    """Empirical law of the order the tie-break imposes on each tie group.

    Sample ``i`` of the engine path uses seed ``(seed, i)``. With ``batch``
    the sampler and the first step of the failures strategy run as
    vectorised copies instead. For the failures strategy, orders are
    tallied only over samples where the entire group lies in the fair set.
    """
    if samples < 1:
        raise ValueError("samples must be at least 1")
    if isinstance(strategy, str):
        strategy = Strategy.parse(strategy)
    graph = build_conflict_graph(instance)
    nodes = list(graph.nodes)
    index = {v: i for i, v in enumerate(nodes)}
    phi, failed = _draw_colourings(instance, strategy, graph, samples, seed, batch)
    conditioned = strategy.kind == "failures"
    groups = []
    for g in tie_groups(instance):
        cols = [index[v] for v in g]
        keep = ~failed[:, cols].any(axis=1) if conditioned else np.ones(samples, dtype=bool)
        groups.append(_tally_group(g, phi[:, cols], keep))
    fails = failed.sum(axis=0)
    rate = {v: float(fails[index[v]]) / samples for v in nodes}
    interval = {v: wilson_interval(int(fails[index[v]]), samples) for v in nodes}
    return FairnessReport(str(strategy), samples, tuple(groups), rate, interval, conditioned)


# --------------------------------------------------------------------------
# colouring-level oracles


def enumerate_proper_colorings(graph: ConflictGraph, q: int) -> list[tuple[int, ...]]:
    """All proper colourings with colours ``1..q``, in ``graph.nodes`` order."""
    nodes = list(graph.nodes)
    index = {v: i for i, v in enumerate(nodes)}
    edges = [(index[a], index[b]) for a, b in graph.edges]
    return [col for col in itertools.product(range(1, q + 1), repeat=len(nodes))
            if all(col[a] != col[b] for a, b in edges)]


def coloring_tv(samples: np.ndarray, graph: ConflictGraph, q: int) -> dict:
    """Distance of the empirical law of colourings to uniform on proper ones."""
    proper = enumerate_proper_colorings(graph, q)
    n = samples.shape[1]
    weights = q ** np.arange(n - 1, -1, -1, dtype=np.int64)
    codes = (samples.astype(np.int64) - 1) @ weights
    counts = np.bincount(codes, minlength=q ** n)
    total = samples.shape[0]
    proper_codes = np.array([sum((c - 1) * int(w) for c, w in zip(col, weights)) for col in proper])
    mask = np.zeros(q ** n, dtype=bool)
    mask[proper_codes] = True
    emp = counts / total
    tv = float(np.abs(emp[mask] - 1 / len(proper)).sum() + emp[~mask].sum())
    return {"colorings": len(proper), "tv": tv, "tv_half": tv / 2,
            "improper": int(counts[~mask].sum()), "samples": int(total)}


def exact_chain_distribution(
    graph: ConflictGraph, q: int, rounds: int, *, symmetric: bool = True, start=None
) -> dict[tuple[int, ...], float]:
    """Law of the resampling chain after ``rounds`` steps from ``start``.

    Builds the full transition matrix on proper colourings by enumerating
    all ``q**n`` joint proposals, so it is limited to tiny graphs.
    """
    nodes = list(graph.nodes)
    if q ** len(nodes) > 50_000:
        raise ValueError("state space too large for the exact chain")
    index = {v: i for i, v in enumerate(nodes)}
    nbrs = [[index[u] for u in graph.adj[v]] for v in nodes]
    states = enumerate_proper_colorings(graph, q)
    n = len(nodes)
    weights = q ** np.arange(n - 1, -1, -1, dtype=np.int64)
    lookup = np.full(q ** n, -1, dtype=np.int64)
    codes = (np.array(states, dtype=np.int64) - 1) @ weights
    lookup[codes] = np.arange(len(states))
    props = np.array(list(itertools.product(range(1, q + 1), repeat=n)), dtype=np.int64)
    P = np.zeros((len(states), len(states)))
    w = 1.0 / len(props)
    for i, s in enumerate(states):
        cur = np.array(s, dtype=np.int64)
        ok = np.ones(props.shape, dtype=bool)
        for v, ns in enumerate(nbrs):
            for u in ns:
                ok[:, v] &= (props[:, v] != cur[u]) & (props[:, v] != props[:, u])
                if symmetric:
                    ok[:, v] &= props[:, u] != cur[v]
        nxt = lookup[(np.where(ok, props, cur) - 1) @ weights]
        if (nxt < 0).any():
            raise AssertionError("resampling step left the proper colourings")
        np.add.at(P[i], nxt, w)
    pos = {s: i for i, s in enumerate(states)}
    if start is None:
        g = greedy_coloring(graph, q)
        start = tuple(g[v] for v in nodes)
    dist = np.zeros(len(states))
    dist[pos[tuple(start)]] = 1.0
    dist = dist @ np.linalg.matrix_power(P, rounds)
    return {s: float(dist[i]) for i, s in enumerate(states)}
