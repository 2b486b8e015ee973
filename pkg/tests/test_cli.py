import csv
import json

import pytest
import yaml

from factory import make_block, make_dataset, make_slot, make_tx, minimal_raw
from pbsim.analytics import delayed_transactions, execution_panel
from pbsim.analytics.channels import revenue_by_cycle
from pbsim.cli import main
from pbsim.io import read_dataset, write_dataset


def _config(tmp_path, raw):
    p = tmp_path / "scenario.yaml"
    p.write_text(yaml.safe_dump(raw))
    return p


def _simulate(tmp_path, raw, name="out"):
    out = tmp_path / name
    assert main(["simulate", "--config", str(_config(tmp_path, raw)), "--out", str(out)]) == 0
    return out


def test_simulate_minimal(tmp_path):
    out = _simulate(tmp_path, minimal_raw())
    lines = (out / "slots.jsonl").read_text().splitlines()
    assert len(lines) == 1
    assert main(["validate", str(out)]) == 0


def test_simulate_is_deterministic(tmp_path):
    raw = minimal_raw(slot_count=3, user_flow={"rate_public": 3.0, "swap_pools": ["p"]})
    a, b = _simulate(tmp_path, raw, "a"), _simulate(tmp_path, raw, "b")
    for name in ("slots.jsonl", "transactions.jsonl", "meta.json"):
        assert (a / name).read_bytes() == (b / name).read_bytes()


def test_duplicate_builder_is_config_error(tmp_path, capsys):
    raw = minimal_raw()
    raw["builders"] = [{"builder_id": "x"}, {"builder_id": "x"}]
    code = main(["simulate", "--config", str(_config(tmp_path, raw)), "--out", str(tmp_path / "o")])
    assert code == 2
    err = capsys.readouterr().err
    assert "builders.builder_id" in err and "'x'" in err
    assert not (tmp_path / "o").exists()


def test_unknown_config_key(tmp_path, capsys):
    code = main(["simulate", "--config", str(_config(tmp_path, minimal_raw(bogus=1))), "--out", str(tmp_path / "o")])
    assert code == 2 and "bogus" in capsys.readouterr().err


def test_usage_errors(tmp_path, capsys):
    assert main([]) == 1
    assert main(["simulate", "--config", "x.yaml"]) == 1
    assert main(["analyze", str(tmp_path), "--report", "nope", "--out", str(tmp_path)]) == 1
    assert "unknown report" in capsys.readouterr().err


@pytest.fixture
def fixture_dir(tmp_path):
    ex = make_tx({"a": "8.5"}, origin="x")
    pr = make_tx({"a": "1.0", "b": "1.0"}, origin="y")
    pu = make_tx({"a": "0.5", "b": "0.5"}, origin="z")
    win = make_block(0, "a", 6.0, [ex, pr, pu], bid=9, revenue=10)
    other = make_block(0, "b", 4.0, [pr, pu], bid=1, revenue="1.5")
    empty = make_block(0, "c", 5.0, [], bid=0)
    single = make_block(0, "c", 5.5, [pu], bid="0.1", revenue="0.5")
    slot = make_slot(0, [win, other, empty, single], winner=win.block_id, events=[(pu, 2.0)])
    path = write_dataset(make_dataset([slot], [ex, pr, pu]), tmp_path / "fx")
    return path, {"win": win, "empty": empty, "single": single, "pu": pu}


def test_replay_outputs(fixture_dir, capsys):
    path, blk = fixture_dir
    assert main(["replay", str(path), "--block", blk["single"].block_id]) == 0
    doc = json.loads(capsys.readouterr().out)
    assert doc["builder_id"] == "c" and doc["bid"] == "0.1"
    assert [(t["position"], t["tx_id"], t["status"]) for t in doc["txs"]] == [(0, blk["pu"].tx_id, "Success")]
    assert main(["replay", str(path), "--block", blk["empty"].block_id]) == 0
    assert json.loads(capsys.readouterr().out)["txs"] == []
    assert main(["replay", str(path), "--block", "0xdoesnotexist"]) == 2
    assert "0xdoesnotexist" in capsys.readouterr().err


def test_analyze_revenue_fixture(fixture_dir, tmp_path):
    path, _ = fixture_dir
    assert main(["analyze", str(path), "--report", "revenue", "--out", str(tmp_path / "rep")]) == 0
    rows = list(csv.DictReader(open(tmp_path / "rep" / "revenue.csv")))
    first = rows[0]
    assert (first["total"], first["exclusive"], first["private"], first["public"]) == ("10", "8.5", "1", "0.5")
    assert float(first["exclusive_share"]) == pytest.approx(0.85)
    assert rows[-1]["cycle"] == "all"


def test_analyze_similarity_identical_blocks(tmp_path):
    ts = [make_tx({"a": "0.1", "b": "0.1"}, origin=f"u{i}") for i in range(3)]
    slot = make_slot(0, [make_block(0, "a", 1.0, ts, bid=1), make_block(0, "b", 2.0, ts)])
    path = write_dataset(make_dataset([slot], ts), tmp_path / "d")
    assert main(["analyze", str(path), "--report", "similarity", "--out", str(tmp_path / "rep")]) == 0
    rows = list(csv.DictReader(open(tmp_path / "rep" / "similarity_t12.csv")))
    assert [(r["builder"], r["a"], r["b"]) for r in rows] == [("a", "1.0", "1.0"), ("b", "1.0", "1.0")]


def test_analyze_rejects_invalid_dataset(tmp_path, capsys):
    assert main(["analyze", str(tmp_path / "missing"), "--report", "all", "--out", str(tmp_path / "r")]) == 2
    assert main(["validate", str(tmp_path / "missing")]) == 2


def test_round_trip_preserves_analytics(canonical, tmp_path):
    back = read_dataset(write_dataset(canonical, tmp_path / "c"))
    assert revenue_by_cycle(back) == revenue_by_cycle(canonical)
    assert delayed_transactions(back) == delayed_transactions(canonical)
    a, b = execution_panel(back), execution_panel(canonical)
    assert [r.tx_id for r in a] == [r.tx_id for r in b]
    assert [r.success for r in a] == [r.success for r in b]
    assert [r.p_norm for r in a if r.success] == [r.p_norm for r in b if r.success]
