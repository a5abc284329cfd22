from __future__ import annotations

import json
import subprocess
import sys

import pytest

from fairda import cli
from fairda.engine import RoundLimitExceeded


def gen(tmp_path, *extra, name="inst.json"):
    path = tmp_path / name
    assert cli.main(["gen", "--seed", "7", "--clients", "30", "--providers", "12",
                     "--out", str(path), *extra]) == 0
    return path


def test_gen_prints_path_and_hash(tmp_path, capsys):
    path = gen(tmp_path)
    out = capsys.readouterr().out.split()
    assert out[0] == str(path) and len(out[1]) >= 16


def test_gen_is_deterministic(tmp_path):
    a, b = gen(tmp_path, name="a.json"), gen(tmp_path, name="b.json")
    assert a.read_bytes() == b.read_bytes()


@pytest.mark.parametrize("strategy", ["deterministic", "luby", "sample:5/2,1/10", "failures:1/2"])
def test_run_then_verify(tmp_path, strategy, capsys):
    inst = gen(tmp_path)
    out = tmp_path / "out"
    assert cli.main(["run", str(inst), "--strategy", strategy, "--seed", "3",
                     "--out", str(out)]) == 0
    line = capsys.readouterr().out
    assert "blocking=0" in line and "congest=ok" in line
    for name in ("result.json", "matching.json", "tiebreak.json", "summary.csv"):
        assert (out / name).exists()
    assert cli.main(["verify", str(inst), str(out / "result.json")]) == 0
    assert cli.main(["verify", str(inst), str(out / "matching.json")]) in (0, 1)


def test_run_is_byte_identical(tmp_path):
    inst = gen(tmp_path)
    for d in ("x", "y"):
        assert cli.main(["run", str(inst), "--strategy", "luby", "--seed", "5",
                         "--out", str(tmp_path / d)]) == 0
    for name in ("result.json", "matching.json", "tiebreak.json", "summary.csv"):
        assert (tmp_path / "x" / name).read_bytes() == (tmp_path / "y" / name).read_bytes()


def test_run_fractional(tmp_path):
    inst = gen(tmp_path, "--loads", "1,2,1/2")
    out = tmp_path / "frac"
    assert cli.main(["run", str(inst), "--fractional", "--out", str(out)]) == 0
    assert cli.main(["verify", str(inst), str(out / "result.json"), "--fractional"]) == 0
    unit = gen(tmp_path, name="unit.json")
    assert cli.main(["run", str(unit), "--fractional", "--out", str(tmp_path / "u")]) == 0


def test_verify_detects_corruption(tmp_path, capsys):
    inst = gen(tmp_path)
    out = tmp_path / "out"
    assert cli.main(["run", str(inst), "--out", str(out)]) == 0
    doc = json.loads((out / "result.json").read_text())
    doc["matching"] = doc["matching"][1:]
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps(doc))
    capsys.readouterr()
    assert cli.main(["verify", str(inst), str(bad)]) == 1
    assert "blocking pair" in capsys.readouterr().out
    doc["matching"] = [{"client": 10**6, "provider": 1, "amount": "1"}]
    bad.write_text(json.dumps(doc))
    assert cli.main(["verify", str(inst), str(bad)]) == 1


def test_usage_errors(tmp_path):
    inst = gen(tmp_path)
    assert cli.main(["run", str(tmp_path / "missing.json")]) == 2
    assert cli.main(["verify", str(inst), str(tmp_path / "missing.json")]) == 2
    assert cli.main(["run", str(inst), "--strategy", "bogus"]) == 2
    assert cli.main(["fairness", str(inst), "--samples", "0"]) == 2
    assert cli.main(["bench", "--family", "path", "--k-range", "1:3"]) == 2
    assert cli.main(["nosuch"]) == 2
    assert cli.main([]) == 2
    broken = tmp_path / "broken.json"
    broken.write_text("{not json")
    assert cli.main(["run", str(broken)]) == 2


def test_round_limit_exit_code(tmp_path, monkeypatch):
    inst = gen(tmp_path)

    from fairda.instance import MatchingInstance
    from fairda.matching import run_classic_da

    tiny = MatchingInstance.from_prefs({1: (3,), 2: (3,)}, {1: 1, 2: 1})
    with pytest.raises(RoundLimitExceeded) as caught:
        run_classic_da(tiny, round_limit=1)

    def boom(*a, **k):
        raise caught.value

    monkeypatch.setattr(cli, "run_mechanism", boom)
    assert cli.main(["run", str(inst), "--out", str(tmp_path / "o")]) == 3


def test_fairness_outputs(tmp_path, capsys):
    inst = gen(tmp_path)
    out = tmp_path / "fair"
    assert cli.main(["fairness", str(inst), "--samples", "30", "--out", str(out)]) == 0
    assert "max_tv=" in capsys.readouterr().out
    doc = json.loads((out / "fairness.json").read_text())
    assert doc["samples"] == 30 and doc["conditioned_on_fair"] is True
    assert (out / "fairness.csv").read_text().startswith("group,order,count")
    assert cli.main(["fairness", str(inst), "--strategy", "sample:7/2,1/20", "--batch",
                     "--samples", "200", "--out", str(out)]) == 0


def test_bench_path(capsys):
    assert cli.main(["bench", "--family", "path", "--k-range", "2:4"]) == 0
    lines = capsys.readouterr().out.splitlines()
    assert lines[0].startswith("k,rounds")
    assert [line.split(",")[1] for line in lines[1:]] == ["4", "6", "8"]


def test_bench_empty_range_is_header_only(capsys):
    assert cli.main(["bench", "--family", "path", "--k-range", ""]) == 0
    assert capsys.readouterr().out.splitlines() == [
        "k,rounds,rounds_unflipped,rounds_flipped,matched_differently,far_end_differs"]


def test_bench_common_to_file(tmp_path):
    path = tmp_path / "bench.csv"
    assert cli.main(["bench", "--family", "common", "--n-range", "50,100",
                     "--out", str(path)]) == 0
    rows = path.read_text().splitlines()
    assert len(rows) == 3
    assert cli.main(["bench", "--family", "common", "--n-range", "30"]) == 2


def test_module_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "fairda", "bench", "--family", "path",
                           "--k-range", "2:2"], capture_output=True, text=True)
    assert proc.returncode == 0 and proc.stdout.startswith("k,rounds")
