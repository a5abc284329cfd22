"""Matching instances: data model, validation, generators and JSON files.

An instance is a bipartite graph between clients (the proposing side) and
providers. Every client carries a strict preference list over its incident
providers and a score (its preference class, smaller is better). Providers
share the common order induced by the score; for the general-preference
baseline each provider may also carry its own strict list over clients.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field, replace
from fractions import Fraction
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

__all__ = [
    "MatchingInstance",
    "DegreeProfile",
    "Violation",
    "InstanceParseError",
    "validate",
    "degree_profile",
    "generate_random",
    "generate_blocks",
    "generate_lowerbound_path",
    "to_json",
    "from_json",
    "read",
    "write",
    "instance_hash",
    "parse_fraction",
    "format_fraction",
]


@dataclass(frozen=True)
class MatchingInstance:
    clients: tuple[int, ...]
    providers: tuple[int, ...]
    edges: frozenset[tuple[int, int]]
    """Pairs ``(client, provider)``."""
    client_prefs: Mapping[int, tuple[int, ...]]
    score: Mapping[int, int]
    S: int
    loads: Mapping[int, Fraction] | None = None
    """Client loads and provider capacities, keyed by node id."""
    provider_prefs: Mapping[int, tuple[int, ...]] | None = None
    _nbrs: dict = field(default=None, init=False, repr=False, compare=False, hash=False)

    @classmethod
    def from_prefs(
        cls,
        client_prefs: Mapping[int, Sequence[int]],
        score: Mapping[int, int],
        providers: Iterable[int] | None = None,
        S: int | None = None,
        loads: Mapping[int, Fraction | int | str] | None = None,
        provider_prefs: Mapping[int, Sequence[int]] | None = None,
    ) -> MatchingInstance:
        """Build an instance whose edge set is read off the client lists."""
        prefs = {v: tuple(ps) for v, ps in client_prefs.items()}
        if providers is None:
            seen: dict[int, None] = {}
            for ps in prefs.values():
                for p in ps:
                    seen.setdefault(p)
            providers = sorted(seen)
        edges = frozenset((v, p) for v, ps in prefs.items() for p in ps)
        if S is None:
            S = max(score.values(), default=1)
        return cls(
            clients=tuple(prefs),
            providers=tuple(providers),
            edges=edges,
            client_prefs=prefs,
            score=dict(score),
            S=S,
            loads=None if loads is None else {k: Fraction(x) for k, x in loads.items()},
            provider_prefs=None
            if provider_prefs is None
            else {p: tuple(cs) for p, cs in provider_prefs.items()},
        )

    def _neighbours(self) -> dict[int, list[int]]:
        if self._nbrs is None:
            nbrs: dict[int, list[int]] = {x: [] for x in (*self.clients, *self.providers)}
            for v, p in sorted(self.edges):
                nbrs.setdefault(v, []).append(p)
                nbrs.setdefault(p, []).append(v)
            object.__setattr__(self, "_nbrs", nbrs)
        return self._nbrs

    def neighbours(self, node: int) -> list[int]:
        """Matching-graph neighbours of ``node`` in ascending id order."""
        return self._neighbours().get(node, [])

    def degree(self, node: int) -> int:
        return len(self.neighbours(node))

    @property
    def n(self) -> int:
        return len(self.clients) + len(self.providers)

    def is_client(self, node: int) -> bool:
        return node in self.score

    def load(self, node: int) -> Fraction:
        if self.loads is None:
            return Fraction(1)
        return self.loads[node]

    def provider_order(self, provider: int) -> tuple[int, ...]:
        """Strict order of a provider over its clients for the general baseline.

        Falls back to ascending client id when the instance carries no
        per-provider list.
        """
        if self.provider_prefs is not None and provider in self.provider_prefs:
            return self.provider_prefs[provider]
        return tuple(self.neighbours(provider))

    def with_client_prefs(self, client: int, prefs: Sequence[int]) -> MatchingInstance:
        """Copy of the instance in which ``client`` reports ``prefs``."""
        new = dict(self.client_prefs)
        new[client] = tuple(prefs)
        return replace(self, client_prefs=new)

    def with_loads(self, loads: Mapping[int, Fraction | int | str]) -> MatchingInstance:
        return replace(self, loads={k: Fraction(x) for k, x in loads.items()})


@dataclass(frozen=True)
class DegreeProfile:
    delta_C: int
    delta_P: int

    @property
    def delta_H_bound(self) -> int:
        return self.delta_C * self.delta_P


def degree_profile(instance: MatchingInstance) -> DegreeProfile:
    return DegreeProfile(
        delta_C=max((instance.degree(v) for v in instance.clients), default=0),
        delta_P=max((instance.degree(p) for p in instance.providers), default=0),
    )


@dataclass(frozen=True)
class Violation:
    rule: str
    where: str

    def __str__(self) -> str:
        return f"{self.where}: {self.rule}"


def validate(instance: MatchingInstance) -> list[Violation]:
    """List every broken instance invariant. An empty list means valid."""
    out: list[Violation] = []
    ids = list(instance.clients) + list(instance.providers)
    counts: dict[int, int] = {}
    for x in ids:
        counts[x] = counts.get(x, 0) + 1
    for x, k in counts.items():
        if k > 1:
            out.append(Violation("duplicate id", f"node {x}"))
        if not isinstance(x, int) or x < 1:
            out.append(Violation("id must be a positive integer", f"node {x}"))
    clients, providers = set(instance.clients), set(instance.providers)

    if instance.S < 1:
        out.append(Violation("S must be positive", "instance"))
    for v, p in sorted(instance.edges):
        if v not in clients or p not in providers or p in clients or v in providers:
            kind = "client-client edge" if p in clients else (
                "provider-provider edge" if v in providers else "edge endpoint unknown")
            out.append(Violation(f"not bipartite: {kind}", f"edge ({v}, {p})"))

    for v in instance.clients:
        prefs = instance.client_prefs.get(v)
        if prefs is None:
            out.append(Violation("missing preference list", f"client {v}"))
        elif len(set(prefs)) != len(prefs) or set(prefs) != set(instance.neighbours(v)):
            out.append(Violation("preference list is not a permutation of N(v)", f"client {v}"))
        s = instance.score.get(v)
        if s is None:
            out.append(Violation("missing score", f"client {v}"))
        elif not 1 <= s <= instance.S:
            out.append(Violation("score out of range", f"client {v}"))

    if instance.provider_prefs is not None:
        for p, order in instance.provider_prefs.items():
            if p not in providers:
                out.append(Violation("preference list for unknown provider", f"provider {p}"))
            elif len(set(order)) != len(order) or set(order) != set(instance.neighbours(p)):
                out.append(Violation("preference list is not a permutation of N(p)", f"provider {p}"))

    if instance.loads is not None:
        for x in ids:
            if x not in instance.loads:
                out.append(Violation("missing load/capacity", f"node {x}"))
            elif instance.loads[x] < 0:
                out.append(Violation("negative load/capacity", f"node {x}"))
    return out


# --------------------------------------------------------------------------
# generators


def _draw_ids(rng: np.random.Generator, count: int) -> list[int]:
    # ids from {1, ..., n^3}
    space = max(count, 2) ** 3
    chosen: list[int] = []
    seen: set[int] = set()
    while len(chosen) < count:
        x = int(rng.integers(1, space + 1))
        if x not in seen:
            seen.add(x)
            chosen.append(x)
    return chosen


def generate_random(
    seed: int,
    n_c: int,
    n_p: int,
    max_deg_c: int,
    S: int,
    loads: Sequence[Fraction | int | str] | None = None,
) -> MatchingInstance:
    """Random common-preference instance.

    Every client gets exactly ``max_deg_c`` distinct providers chosen
    uniformly, a uniformly random order over them, and a score uniform on
    ``1..S``. With ``loads`` given, every client load and provider capacity
    is drawn uniformly from that list.
    """
    if n_c < 1 or n_p < 1:
        raise ValueError("n_c and n_p must be at least 1")
    if not 1 <= max_deg_c <= n_p:
        raise ValueError("max_deg_c must lie in 1..n_p")
    if S < 1:
        raise ValueError("S must be at least 1")
    rng = np.random.default_rng(seed)
    ids = _draw_ids(rng, n_c + n_p)
    clients, providers = ids[:n_c], ids[n_c:]
    prefs: dict[int, tuple[int, ...]] = {}
    score: dict[int, int] = {}
    for v in clients:
        picks = rng.choice(n_p, size=max_deg_c, replace=False)
        prefs[v] = tuple(providers[int(i)] for i in picks)
        score[v] = int(rng.integers(1, S + 1))
    load_map = None
    if loads is not None:
        choices = [Fraction(x) for x in loads]
        load_map = {x: choices[int(rng.integers(len(choices)))] for x in ids}
    return MatchingInstance.from_prefs(prefs, score, providers=providers, S=S, loads=load_map)


def generate_blocks(
    seed: int,
    blocks: int,
    block_clients: int,
    block_providers: int,
    deg: int,
    S: int,
) -> MatchingInstance:
    """Disjoint union of ``blocks`` copies of one random block.

    Copies share structure (so Delta_H and S stay fixed as the instance
    grows) but get fresh ids.
    """
    if blocks < 1:
        raise ValueError("blocks must be at least 1")
    base = generate_random(seed, block_clients, block_providers, deg, S)
    rng = np.random.default_rng([seed, blocks])
    ids = _draw_ids(rng, blocks * base.n)
    prefs: dict[int, tuple[int, ...]] = {}
    score: dict[int, int] = {}
    providers: list[int] = []
    for b in range(blocks):
        chunk = ids[b * base.n:(b + 1) * base.n]
        relabel = dict(zip((*base.clients, *base.providers), chunk))
        for v in base.clients:
            prefs[relabel[v]] = tuple(relabel[p] for p in base.client_prefs[v])
            score[relabel[v]] = base.score[v]
        providers.extend(relabel[p] for p in base.providers)
    return MatchingInstance.from_prefs(prefs, score, providers=providers, S=S)


def generate_lowerbound_path(k: int, flip: bool) -> MatchingInstance:
    """Path with ``k`` clients and ``k`` providers and a unique stable matching.

    Nodes 1..2k alternate client, provider, client, ... along the path and
    everybody prefers its left neighbour. Then the pairs (1,2), (3,4), ...
    are mutual first choices, one after another, so the stable matching is
    unique and perfect. ``flip`` makes provider 2 prefer client 3 instead:
    now (2,3), (4,5), ... are forced and the matching is again unique, shares
    no edge with the first one, and leaves both ends unmatched.
    """
    if k < 2:
        raise ValueError("k must be at least 2")
    nodes = list(range(1, 2 * k + 1))
    clients = nodes[0::2]
    providers = nodes[1::2]
    prefs: dict[int, tuple[int, ...]] = {}
    for v in clients:
        left, right = v - 1, v + 1
        prefs[v] = (right,) if v == 1 else (left, right)
    pprefs: dict[int, tuple[int, ...]] = {}
    for p in providers:
        left, right = p - 1, p + 1
        pprefs[p] = (left,) if p == 2 * k else (left, right)
    if flip:
        pprefs[2] = (3, 1)
    return MatchingInstance.from_prefs(
        prefs, {v: 1 for v in clients}, providers=providers, S=1, provider_prefs=pprefs
    )


# --------------------------------------------------------------------------
# serialisation


class InstanceParseError(ValueError):
    def __init__(self, message: str, field: str | None = None, line: int | None = None):
        self.field = field
        self.line = line
        where = []
        if line is not None:
            where.append(f"line {line}")
        if field is not None:
            where.append(f"field {field!r}")
        super().__init__(f"{', '.join(where)}: {message}" if where else message)


def format_fraction(x: Fraction) -> str:
    x = Fraction(x)
    return f"{x.numerator}/{x.denominator}"


def parse_fraction(text: str, field: str = "value") -> Fraction:
    if not isinstance(text, str):
        raise InstanceParseError("expected a string of the form 'p/q'", field)
    try:
        value = Fraction(text)
    except (ValueError, ZeroDivisionError) as exc:
        raise InstanceParseError(f"bad rational {text!r}", field) from exc
    return value


def to_json(instance: MatchingInstance) -> str:
    clients = []
    for v in instance.clients:
        row: dict = {"id": v, "prefs": list(instance.client_prefs[v]), "score": instance.score[v]}
        if instance.loads is not None:
            row["load"] = format_fraction(instance.loads[v])
        clients.append(row)
    providers = []
    for p in instance.providers:
        row = {"id": p}
        if instance.loads is not None:
            row["capacity"] = format_fraction(instance.loads[p])
        if instance.provider_prefs is not None and p in instance.provider_prefs:
            row["prefs"] = list(instance.provider_prefs[p])
        providers.append(row)
    doc = {"S": instance.S, "clients": clients, "providers": providers}
    return json.dumps(doc, indent=1) + "\n"


def _line_of(text: str, needle: str) -> int | None:
    pos = text.find(needle)
    return None if pos < 0 else text.count("\n", 0, pos) + 1


def _require(obj: dict, key: str, where: str, text: str):
    if not isinstance(obj, dict):
        raise InstanceParseError("expected an object", where)
    if key not in obj:
        line = _line_of(text, f'"id": {obj.get("id")}') if "id" in obj else None
        raise InstanceParseError("missing field", f"{where}.{key}", line)
    return obj[key]


def from_json(text: str) -> MatchingInstance:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise InstanceParseError(exc.msg, line=exc.lineno) from exc
    if not isinstance(doc, dict):
        raise InstanceParseError("top level must be an object")
    raw_clients = _require(doc, "clients", "$", text)
    raw_providers = _require(doc, "providers", "$", text)
    if not isinstance(raw_clients, list) or not isinstance(raw_providers, list):
        raise InstanceParseError("clients and providers must be arrays")

    seen: set[int] = set()

    def take_id(obj: dict, where: str) -> int:
        x = _require(obj, "id", where, text)
        if not isinstance(x, int) or isinstance(x, bool):
            raise InstanceParseError("id must be an integer", f"{where}.id")
        if x in seen:
            raise InstanceParseError(f"duplicate id {x}", f"{where}.id", _line_of(text, f'"id": {x}'))
        seen.add(x)
        return x

    prefs: dict[int, tuple[int, ...]] = {}
    score: dict[int, int] = {}
    loads: dict[int, Fraction] = {}
    for i, row in enumerate(raw_clients):
        where = f"clients[{i}]"
        v = take_id(row, where)
        ps = _require(row, "prefs", where, text)
        if not isinstance(ps, list) or not all(isinstance(p, int) for p in ps):
            raise InstanceParseError("prefs must be a list of provider ids", f"{where}.prefs")
        prefs[v] = tuple(ps)
        s = _require(row, "score", where, text)
        if not isinstance(s, int) or isinstance(s, bool):
            raise InstanceParseError("score must be an integer", f"{where}.score")
        score[v] = s
        if "load" in row:
            loads[v] = parse_fraction(row["load"], f"{where}.load")

    providers: list[int] = []
    pprefs: dict[int, tuple[int, ...]] = {}
    for i, row in enumerate(raw_providers):
        where = f"providers[{i}]"
        p = take_id(row, where)
        providers.append(p)
        if "capacity" in row:
            loads[p] = parse_fraction(row["capacity"], f"{where}.capacity")
        if "prefs" in row:
            pprefs[p] = tuple(row["prefs"])

    known = set(providers)
    for v, ps in prefs.items():
        for p in ps:
            if p not in known:
                raise InstanceParseError(f"client {v} lists unknown provider {p}", "prefs")

    S = doc.get("S", max(score.values(), default=1))
    return MatchingInstance.from_prefs(
        prefs,
        score,
        providers=providers,
        S=S,
        loads=loads or None,
        provider_prefs=pprefs or None,
    )


def write(path: str | Path, instance: MatchingInstance) -> None:
    problems = validate(instance)
    if problems:
        raise ValueError("refusing to write an invalid instance: " + "; ".join(map(str, problems)))
    Path(path).write_text(to_json(instance), encoding="utf-8")


def read(path: str | Path) -> MatchingInstance:
    return from_json(Path(path).read_text(encoding="utf-8"))


def instance_hash(instance: MatchingInstance) -> str:
    return hashlib.sha256(to_json(instance).encode()).hexdigest()[:16]
