from __future__ import annotations

import csv
import io

import pytest

from edgechain import bundled_scenario
from edgechain.cli import main

SCENARIO = str(bundled_scenario())


def run(capsys, *argv):
    code = main(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


def test_simulate_writes_all_outputs(tmp_path, capsys):
    code, out, _ = run(capsys, "simulate", "--scenario", SCENARIO, "--out", str(tmp_path))
    assert code == 0
    assert "apps per mecsp m1=15 m2=0 m3=0" in out
    names = sorted(p.name for p in tmp_path.iterdir())
    assert names == ["chains.csv", "hosts.csv", "ledger.jsonl", "mecsps.csv", "placements.csv"]
    rows = list(csv.DictReader(io.StringIO((tmp_path / "placements.csv").read_text())))
    assert len(rows) == 15 and {r["mecsp"] for r in rows} == {"m1"}
    chains = list(csv.DictReader(io.StringIO((tmp_path / "chains.csv").read_text())))
    assert [r["total_cost"] for r in chains] == ["1127500"] * 3


def test_simulate_is_byte_reproducible(tmp_path, capsys):
    a, b = tmp_path / "a", tmp_path / "b"
    _, out_a, _ = run(capsys, "simulate", "--scenario", SCENARIO, "--out", str(a))
    _, out_b, _ = run(capsys, "simulate", "--scenario", SCENARIO, "--out", str(b))
    assert out_a == out_b
    for name in ("chains.csv", "hosts.csv", "ledger.jsonl", "mecsps.csv", "placements.csv"):
        assert (a / name).read_bytes() == (b / name).read_bytes()


def test_ledger_verify_and_replay(tmp_path, capsys):
    run(capsys, "simulate", "--scenario", SCENARIO, "--out", str(tmp_path))
    path = str(tmp_path / "ledger.jsonl")
    code, out, _ = run(capsys, "ledger", "verify", "--file", path)
    assert code == 0 and out.startswith("ok:")
    code, out, _ = run(capsys, "ledger", "replay", "--file", path)
    assert code == 0 and "placed apps 15" in out and "h1,m1,15,34,34816" in out

    data = bytearray((tmp_path / "ledger.jsonl").read_bytes())
    lines = bytes(data).split(b"\n")
    offset = sum(len(l) + 1 for l in lines[:7]) + 20
    data[offset] ^= 0x04
    (tmp_path / "ledger.jsonl").write_bytes(bytes(data))
    code, out, _ = run(capsys, "ledger", "verify", "--file", path)
    assert code == 1 and "first bad block index 7" in out
    code, _, _ = run(capsys, "ledger", "replay", "--file", path)
    assert code == 1


def test_sweep_to_file(tmp_path, capsys):
    target = tmp_path / "sweep.csv"
    code, _, _ = run(capsys, "sweep", "--scenario", SCENARIO, "--param", "user_distribution.shares.m1",
                     "--from", "0", "--to", "1", "--step", "0.5",
                     "--coupled", "user_distribution.shares.m2=1-x",
                     "--coupled", "user_distribution.shares.m3=0", "--csv", str(target))
    assert code == 0
    rows = list(csv.DictReader(io.StringIO(target.read_text())))
    assert [r["value"] for r in rows] == ["0", "0.5", "1"]
    assert [r["apps_m1"] for r in rows] == ["0", "0", "15"]


def test_compare_table(capsys):
    code, out, _ = run(capsys, "compare", "--scenario", SCENARIO)
    assert code == 0
    rows = list(csv.DictReader(io.StringIO(out)))
    assert [r["ratio"] for r in rows] == ["1", "1", "1"]


def test_compare_limit_error(capsys):
    code, _, err = run(capsys, "compare", "--scenario", SCENARIO, "--limit", "10")
    assert code == 2 and "exceeds limit" in err


@pytest.mark.parametrize("n, f, expected", [(5, 2, 0), (4, 2, 1), (3, 0, 0)])
def test_consensus_report(capsys, n, f, expected):
    code, out, _ = run(capsys, "consensus", "--scenario", SCENARIO, "--validators", str(n), "--byzantine", str(f))
    assert code == expected
    rows = list(csv.DictReader(io.StringIO(out.split("#")[0])))
    assert len(rows) == 3 * n


def test_missing_scenario_is_an_error(capsys, tmp_path):
    code, _, err = run(capsys, "simulate", "--scenario", str(tmp_path / "nope.scenario"))
    assert code == 2 and "error" in err
