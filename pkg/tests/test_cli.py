import json
import subprocess
import sys

import pytest

from utilmax import binomial_tree, save_tree, uniform_tree
from utilmax.cli import example73_table, main

EXP = '{"variant": "exponential", "params": {"a": 1}}'


@pytest.fixture
def coin(tmp_path):
    path = tmp_path / "coin.json"
    save_tree(binomial_tree(), str(path))
    return str(path)


def run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def test_validate(capsys, coin):
    code, out, _ = run(capsys, "validate", coin)
    doc = json.loads(out)
    assert code == 0 and doc["verdict"] == "NA"
    assert doc["nodes"]["0"]["kappa"] == pytest.approx(0.25)


def test_validate_arbitrage_exit_code(capsys, tmp_path):
    path = tmp_path / "arb.json"
    save_tree(uniform_tree(1, 1, [[1], [0]], [0.5, 0.5]), str(path))
    code, out, _ = run(capsys, "validate", str(path))
    doc = json.loads(out)
    assert code == 2 and doc["verdict"] == "arbitrage" and doc["witness"][0] > 0
    code, _, err = run(capsys, "solve", str(path), "--utility", EXP)
    assert code == 2 and json.loads(err)["error"] == "ArbitrageDetected"


def test_solve_writes_csv_and_embeds_config(capsys, coin, tmp_path):
    out_dir = tmp_path / "csv"
    code, out, _ = run(capsys, "solve", coin, "--utility", EXP, "--grid", "129", "--csv", str(out_dir))
    doc = json.loads(out)
    assert code == 0
    assert doc["config"]["n_grid"] == 129
    assert doc["strategy"][0]["xi"][0] == pytest.approx(0.5493061443, abs=1e-9)
    assert (out_dir / "strategy.csv").read_text().startswith("node,wealth,xi0")
    assert (out_dir / "value_node0.csv").exists()


def test_utility_from_file_and_output_file(capsys, coin, tmp_path):
    upath = tmp_path / "u.json"
    upath.write_text(EXP)
    target = tmp_path / "report.json"
    code, out, _ = run(capsys, "measure", coin, "--utility", str(upath), "-o", str(target))
    assert code == 0 and out == ""
    doc = json.loads(target.read_text())
    assert doc["leaf_Q"]["1"] == pytest.approx(0.5, abs=1e-8)


def test_price(capsys, coin):
    code, out, _ = run(capsys, "price", coin, "--utility", EXP, "--claim", '{"payoff": {"1": 1, "2": 0}}')
    doc = json.loads(out)
    assert code == 0 and doc["price"] == pytest.approx(0.5, abs=1e-6)


def test_verify(capsys, coin):
    code, out, _ = run(capsys, "verify", coin, "--utility", EXP, "--trials", "500", "--restarts", "2")
    doc = json.loads(out)
    assert code == 0 and doc["optimality"]["passed"] and doc["uniqueness"]["agree"]


def test_error_exit_codes(capsys, coin, tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text("{oops")
    assert run(capsys, "validate", str(bad))[0] == 1
    assert run(capsys, "validate", str(tmp_path / "missing.json"))[0] == 1
    assert run(capsys, "solve", coin, "--utility", '{"variant": "nope"}')[0] == 1
    assert run(capsys, "solve", coin, "--utility", EXP, "--config", '{"n_grid": 1}')[0] == 1
    # a boundary optimum refuses the measure unless forced
    ex = '{"variant": "example73", "params": {"N": 201}}'
    assert run(capsys, "measure", coin, "--utility", ex, "--phimax", "200")[0] == 3
    assert run(capsys, "measure", coin, "--utility", ex, "--phimax", "200", "--force")[0] == 0
    assert run(capsys, "solve", coin, "--utility", EXP, "--require-ae", "strict")[0] == 3


def test_cone_option(capsys, tmp_path):
    path = tmp_path / "down.json"
    save_tree(binomial_tree(p_up=0.25), str(path))
    code, out, _ = run(capsys, "solve", str(path), "--utility", EXP, "--cone", "[[1]]", "--grid", "65")
    assert code == 0 and json.loads(out)["strategy"][0]["xi"] == [0.0]


def test_demo_table_and_json(capsys):
    code, out, _ = run(capsys, "demo", "example73", "--nmax", "5")
    assert code == 0 and "boundary=True" in out
    code, out, _ = run(capsys, "demo", "example73", "--format", "json", "--nmax", "50")
    doc = json.loads(out)
    s = doc["summary"]
    assert s["max_error"] <= 1e-12 and s["increasing"] and s["boundary"]
    assert s["gap_to_limit"] <= 5e-3
    rows = example73_table(60, 3)
    assert [r["n"] for r in rows] == [1, 2, 3]


def test_output_is_deterministic(coin):
    cmd = [sys.executable, "-m", "utilmax.cli", "verify", coin, "--utility", EXP, "--trials", "300",
           "--restarts", "2", "--seed", "5"]
    a = subprocess.run(cmd, capture_output=True, text=True, check=True).stdout
    b = subprocess.run(cmd, capture_output=True, text=True, check=True).stdout
    assert a == b and json.loads(a)["config"]["seed"] == 5
