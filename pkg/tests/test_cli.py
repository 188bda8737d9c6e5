import csv
import json

import pytest

from spikesched.cli import main


def run(args):
    return main(args)


def test_cost_csv_matches_cycle_table(tmp_path, capsys):
    assert run(["cost", "--net", "mnist", "--array", "32x32", "--batch", "1",
                "--out", str(tmp_path)]) == 0
    path = tmp_path / "cost_mnist_32x32_b1.csv"
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["layer", "forward_pass", "weight_gradient", "input_gradient"]
    table = {r[0]: r[1:] for r in rows[1:]}
    assert table["conv1"] == ["13916", "6334", "26264"]
    assert table["conv2"] == ["6566", "4890", "6566"]
    assert table["fc1"] == ["1816", "3640", "2470"]
    assert table["out"] == ["190", "280", "288"]
    assert table["n_total"][0] == "46956"


def test_schedule_reports_speedup(tmp_path, capsys):
    assert run(["schedule", "--net", "mnist", "--scheme", "finegrained",
                "--procs", "4", "--out", str(tmp_path)]) == 0
    out = capsys.readouterr().out
    assert "makespan 11858" in out
    assert "speedup 3.9599" in out
    payload = json.loads((tmp_path / "schedule_mnist_finegrained_p4_32x32_b1.json").read_text())
    assert payload["makespan"] == 11858
    assert payload["delays"] == {"0": "6", "1": "2", "2": "0", "3": "0"} or \
           payload["delays"] == {"0": 6, "1": 2, "2": 0, "3": 0}
    assert (tmp_path / "schedule_mnist_finegrained_p4_32x32_b1_map.txt").exists()


def test_simulate_writes_map(tmp_path, capsys):
    assert run(["simulate", "--net", "mnist", "--scheme", "layerwise",
                "--procs", "2", "--out", str(tmp_path)]) == 0
    out = capsys.readouterr().out
    assert "steady state: 26706 cycles" in out


def test_sweep_outputs(tmp_path, capsys):
    assert run(["sweep", "--net", "mnist", "--procs", "1..3", "--batch", "1",
                "--array", "32x32", "--scheme", "pipedream", "--scheme", "finegrained",
                "--out", str(tmp_path), "--svg"]) == 0
    rows_path = tmp_path / "sweep_mnist_rows.csv"
    agg_path = tmp_path / "sweep_mnist_aggregate.csv"
    svg_path = tmp_path / "sweep_mnist_speedup.svg"
    assert rows_path.exists() and agg_path.exists() and svg_path.exists()
    with open(rows_path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == 6
    p1 = [r for r in rows if r["procs"] == "1"]
    assert all(float(r["speedup"]) == 1.0 for r in p1)
    assert svg_path.read_text().startswith("<?xml")


def test_sweep_reproducible_byte_for_byte(tmp_path):
    out_a, out_b = tmp_path / "a", tmp_path / "b"
    args = ["sweep", "--net", "mnist", "--procs", "1..2", "--batch", "1",
            "--array", "16x16", "--svg"]
    assert run(args + ["--out", str(out_a)]) == 0
    assert run(args + ["--out", str(out_b)]) == 0
    for name in ("sweep_mnist_rows.csv", "sweep_mnist_aggregate.csv", "sweep_mnist_speedup.svg"):
        assert (out_a / name).read_bytes() == (out_b / name).read_bytes()


def test_train_toy_reproducible(tmp_path):
    out_a, out_b = tmp_path / "a", tmp_path / "b"
    args = ["train-toy", "--epochs", "3", "--seed", "5"]
    assert run(args + ["--out", str(out_a)]) == 0
    assert run(args + ["--out", str(out_b)]) == 0
    for name in ("history_delayed.csv", "history_undelayed.csv"):
        assert (out_a / name).read_bytes() == (out_b / name).read_bytes()
    header = (out_a / "history_delayed.csv").read_text().splitlines()[0]
    assert header == "epoch,loss,accuracy"


def test_train_toy_on_container(tmp_path):
    import numpy as np
    from spikesched.training import save_dataset, synthetic_spike_task
    inputs, labels = synthetic_spike_task(n_samples=64)
    data = tmp_path / "toy.npz"
    save_dataset(data, inputs, labels)
    assert run(["train-toy", "--data", str(data), "--epochs", "2",
                "--out", str(tmp_path)]) == 0


def test_exit_code_input_error(tmp_path, capsys):
    assert run(["cost", "--net", "nonexistent", "--out", str(tmp_path)]) == 2
    assert "input error" in capsys.readouterr().err


def test_exit_code_usage_error(tmp_path):
    with pytest.raises(SystemExit) as exc:
        run(["cost", "--net", "mnist", "--bogus"])
    assert exc.value.code == 1
    with pytest.raises(SystemExit) as exc:
        run(["frobnicate"])
    assert exc.value.code == 1


def test_usage_error_bad_array(tmp_path, capsys):
    assert run(["cost", "--net", "mnist", "--array", "banana",
                "--out", str(tmp_path)]) == 1


def test_malformed_network_file(tmp_path, capsys):
    bad = tmp_path / "bad.net"
    bad.write_text("name x\ntimesteps 2\ninput 2x2x1\nlayer q quantum in=4 out=2\n")
    assert run(["cost", "--net", str(bad), "--out", str(tmp_path)]) == 2
    assert "line 4" in capsys.readouterr().err
