"""Command-line driver: gen, run, verify, fairness, bench.

Exit codes: 0 success, 1 verification failure, 2 usage or input error,
3 round limit exceeded. Every random choice derives from ``--seed``
(default 0), so reruns write byte-identical files.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import sys
from pathlib import Path

from . import instance as inst_mod
from .engine import ProgramFault, RoundLimitExceeded, assert_congest
from .instance import InstanceParseError, MatchingInstance
from .matching import FractionalMatching, run_mechanism
from .tiebreak import Strategy
from .verify import (
    find_blocking_pairs,
    find_fractional_blocking_pairs,
    measure_propagation,
    measure_tiebreak_fairness,
)

EXIT_OK, EXIT_VERIFY, EXIT_USAGE, EXIT_ROUNDS = 0, 1, 2, 3


class UsageError(Exception):
    pass


def _fail(msg: str, code: int) -> int:
    print(f"error: {msg}", file=sys.stderr)
    return code


def _load(path: str) -> MatchingInstance:
    try:
        inst = inst_mod.read(path)
    except FileNotFoundError:
        raise UsageError(f"no such file: {path}") from None
    except InstanceParseError as exc:
        where = f" at {exc.field}" if exc.field else ""
        line = f" (line {exc.line})" if exc.line else ""
        raise UsageError(f"{path}: {exc}{where}{line}") from None
    problems = inst_mod.validate(inst)
    if problems:
        raise UsageError(f"{path}: invalid instance: " + "; ".join(map(str, problems)))
    return inst


def _strategy(text: str) -> Strategy:
    try:
        return Strategy.parse(text)
    except (ValueError, ZeroDivisionError) as exc:
        raise UsageError(f"bad strategy {text!r}: {exc}") from None


def _unit_loads(inst: MatchingInstance) -> MatchingInstance:
    return inst.with_loads({x: 1 for x in (*inst.clients, *inst.providers)})


def _dump(path: Path, doc) -> None:
    path.write_text(json.dumps(doc, indent=1, sort_keys=True) + "\n", encoding="utf-8")


# --------------------------------------------------------------------------


def cmd_gen(args) -> int:
    try:
        if args.path:
            inst = inst_mod.generate_lowerbound_path(args.k, args.flip)
        elif args.blocks:
            inst = inst_mod.generate_blocks(args.seed, args.blocks, args.clients, args.providers,
                                            args.deg, args.classes)
        else:
            loads = None
            if args.loads:
                loads = [inst_mod.parse_fraction(x) for x in args.loads.split(",")]
            inst = inst_mod.generate_random(args.seed, args.clients, args.providers, args.deg,
                                            args.classes, loads)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    inst_mod.write(args.out, inst)
    print(f"{args.out} {inst_mod.instance_hash(inst)}")
    return EXIT_OK


def cmd_run(args) -> int:
    inst = _load(args.instance)
    strategy = _strategy(args.strategy)
    if args.fractional and inst.loads is None:
        inst = _unit_loads(inst)
    result = run_mechanism(inst, strategy, args.seed, fractional=args.fractional)
    if args.fractional:
        report = find_fractional_blocking_pairs(inst, result.fractional, result.tiebreak.composed)
    else:
        report = find_blocking_pairs(inst, result.matching, composed=result.tiebreak.composed)
    congest = all(assert_congest(t, max(inst.n, 2)).ok for t in result.all_traces())
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    _dump(out / "result.json", result.export())
    _dump(out / "matching.json", result.export()["matching"])
    _dump(out / "tiebreak.json", result.tiebreak.export())
    (out / "summary.csv").write_text(result.summary_csv(report.unstable_edges), encoding="utf-8")
    r = result.phase_rounds
    print(
        f"{inst_mod.instance_hash(inst)} strategy={strategy} S={inst.S} c={result.tiebreak.c} "
        f"delta_h={result.conflict_graph.delta_h} rounds={r['conflict']}+{r['coloring']}+"
        f"{r['matching']} blocking={report.unstable_edges} congest={'ok' if congest else 'violated'}"
    )
    if not report.stable:
        print(report, file=sys.stderr)
        return EXIT_VERIFY
    return EXIT_OK if congest else EXIT_VERIFY


def _read_result(path: str) -> tuple[list[dict], dict | None]:
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise UsageError(f"no such file: {path}") from None
    except json.JSONDecodeError as exc:
        raise UsageError(f"{path}: {exc}") from None
    if isinstance(doc, dict):
        if "matching" not in doc:
            raise UsageError(f"{path}: no matching in result")
        return doc["matching"], doc.get("tiebreak")
    if isinstance(doc, list):
        return doc, None
    raise UsageError(f"{path}: expected a result object or a matching list")


def cmd_verify(args) -> int:
    inst = _load(args.instance)
    rows, tiebreak = _read_result(args.result)
    if tiebreak is not None:
        composed = {int(v): k for v, k in tiebreak["composed"].items()}
    else:
        composed = dict(inst.score)
    try:
        amounts = {(int(r["client"]), int(r["provider"])): inst_mod.parse_fraction(str(r["amount"]))
                   for r in rows}
    except (KeyError, TypeError, ValueError) as exc:
        raise UsageError(f"{args.result}: malformed matching row: {exc}") from None
    fractional = args.fractional or any(x != 1 for x in amounts.values())
    try:
        if fractional:
            if inst.loads is None:
                inst = _unit_loads(inst)
            report = find_fractional_blocking_pairs(inst, FractionalMatching(amounts), composed)
        else:
            matching: dict[int, int | None] = {v: None for v in inst.clients}
            for v, p in amounts:
                if v not in matching or matching[v] is not None:
                    raise ValueError(f"client {v} is not a client or is matched twice")
                matching[v] = p
            report = find_blocking_pairs(inst, matching, composed=composed)
    except ValueError as exc:
        print(f"infeasible: {exc}")
        return EXIT_VERIFY
    print(report)
    return EXIT_OK if report.stable else EXIT_VERIFY


def cmd_fairness(args) -> int:
    inst = _load(args.instance)
    strategy = _strategy(args.strategy)
    if args.samples < 1:
        raise UsageError("--samples must be at least 1")
    rep = measure_tiebreak_fairness(inst, strategy, args.samples, args.seed, batch=args.batch)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "fairness.json").write_text(rep.to_json(), encoding="utf-8")
    (out / "fairness.csv").write_text(rep.to_csv(), encoding="utf-8")
    worst = max((g.tv for g in rep.groups), default=0.0)
    fail = max(rep.failure_rate.values(), default=0.0)
    print(f"samples={rep.samples} groups={len(rep.groups)} max_tv={worst:.6f} "
          f"max_failure_rate={fail:.6f}")
    return EXIT_OK


def _parse_range(text: str) -> list[int]:
    if not text:
        return []
    try:
        if ":" in text:
            lo, hi = text.split(":")
            return list(range(int(lo), int(hi) + 1))
        return [int(x) for x in text.split(",") if x]
    except ValueError:
        raise UsageError(f"bad range {text!r}") from None


def bench_rows(args) -> tuple[list[str], list[list]]:
    if args.family == "path":
        header = ["k", "rounds", "rounds_unflipped", "rounds_flipped", "matched_differently",
                  "far_end_differs"]
        ks = _parse_range(args.k_range)
        if any(k < 2 for k in ks):
            raise UsageError("path family needs k >= 2")
        rows = [[r.k, r.rounds, r.rounds_unflipped, r.rounds_flipped, r.matched_differently,
                 int(r.far_end_differs)] for r in measure_propagation(ks)]
        return header, rows
    header = ["n_clients", "n", "S", "c", "delta_h", "rounds_conflict", "rounds_coloring",
              "rounds_matching", "matching_bound", "blocking_pairs"]
    strategy = _strategy(args.strategy)
    rows = []
    for n in _parse_range(args.n_range):
        if n < args.block or n % args.block:
            raise UsageError(f"n={n} is not a positive multiple of the block size {args.block}")
        inst = inst_mod.generate_blocks(args.seed, n // args.block, args.block,
                                        max(args.deg, args.block * 2 // 5), args.deg, args.classes)
        res = run_mechanism(inst, strategy, args.seed)
        rep = find_blocking_pairs(inst, res.matching, composed=res.tiebreak.composed)
        r = res.phase_rounds
        rows.append([n, inst.n, inst.S, res.tiebreak.c, res.conflict_graph.delta_h, r["conflict"],
                     r["coloring"], r["matching"], 2 * inst.S * res.tiebreak.c - 1,
                     rep.unstable_edges])
    return header, rows


def cmd_bench(args) -> int:
    header, rows = bench_rows(args)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    if args.out == "-":
        sys.stdout.write(buf.getvalue())
    else:
        Path(args.out).write_text(buf.getvalue(), encoding="utf-8")
        print(f"{args.out} {len(rows)} rows")
    if args.family == "common" and any(row[-1] for row in rows):
        return EXIT_VERIFY
    return EXIT_OK


# --------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="fairda", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen", help="write an instance file")
    kind = g.add_mutually_exclusive_group()
    kind.add_argument("--random", action="store_true", help="random instance (default)")
    kind.add_argument("--path", action="store_true", help="lower-bound path instance")
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--clients", type=int, default=50)
    g.add_argument("--providers", type=int, default=20)
    g.add_argument("--deg", type=int, default=3)
    g.add_argument("--classes", type=int, default=3, help="number of score classes S")
    g.add_argument("--loads", default=None, help="comma-separated values for loads, e.g. 1,2,1/2")
    g.add_argument("--blocks", type=int, default=0, help="disjoint copies of one random block")
    g.add_argument("--k", type=int, default=3)
    g.add_argument("--flip", action="store_true")
    g.add_argument("--out", default="instance.json")
    g.set_defaults(func=cmd_gen)

    r = sub.add_parser("run", help="run the three-phase mechanism")
    r.add_argument("instance")
    r.add_argument("--strategy", default="deterministic",
                   help="deterministic | luby | sample:ALPHA,DELTA | failures:DELTA")
    r.add_argument("--fractional", action="store_true")
    r.add_argument("--seed", type=int, default=0)
    r.add_argument("--out", default="out")
    r.set_defaults(func=cmd_run)

    v = sub.add_parser("verify", help="check a result for stability and feasibility")
    v.add_argument("instance")
    v.add_argument("result")
    v.add_argument("--fractional", action="store_true")
    v.set_defaults(func=cmd_verify)

    f = sub.add_parser("fairness", help="tally tie-break orders over many seeds")
    f.add_argument("instance")
    f.add_argument("--strategy", default="failures:1/2")
    f.add_argument("--samples", type=int, default=1000)
    f.add_argument("--seed", type=int, default=0)
    f.add_argument("--batch", action="store_true", help="vectorised sampling")
    f.add_argument("--out", default="out")
    f.set_defaults(func=cmd_fairness)

    b = sub.add_parser("bench", help="rounds versus size as CSV")
    b.add_argument("--family", choices=("path", "common"), default="path")
    b.add_argument("--k-range", default="2:20")
    b.add_argument("--n-range", default="50,100,200,400")
    b.add_argument("--block", type=int, default=25, help="clients per block (common family)")
    b.add_argument("--deg", type=int, default=3)
    b.add_argument("--classes", type=int, default=3)
    b.add_argument("--strategy", default="deterministic")
    b.add_argument("--seed", type=int, default=0)
    b.add_argument("--out", default="-")
    b.set_defaults(func=cmd_bench)
    return ap


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_USAGE
    try:
        return args.func(args)
    except UsageError as exc:
        return _fail(str(exc), EXIT_USAGE)
    except RoundLimitExceeded as exc:
        return _fail(str(exc), EXIT_ROUNDS)
    except ProgramFault as exc:
        return _fail(f"internal fault: {exc}", EXIT_VERIFY)
    except ValueError as exc:
        return _fail(str(exc), EXIT_USAGE)


if __name__ == "__main__":
    raise SystemExit(main())
