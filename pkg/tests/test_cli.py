import csv
import json

import pytest

from reludepth import capacity, cli, erm, netcodec, polyapprox, sweep
from reludepth.errors import DivergenceError


def _read_json(path):
    with open(path) as f:
        return json.load(f)


def test_construct_psi(tmp_path):
    net_path = tmp_path / "psi.json"
    report_path = tmp_path / "report.json"
    code = cli.main(["construct", "psi", "--out", str(net_path),
                     "--report", str(report_path)])
    assert code == 0
    report = _read_json(report_path)
    assert report["depth"] == 1
    assert report["free_params"] == 8
    assert netcodec.load_net(net_path).depth() == 1


def test_construct_then_verify(tmp_path):
    net_path = tmp_path / "psi.json"
    assert cli.main(["construct", "psi", "--out", str(net_path),
                     "--report", str(tmp_path / "r.json")]) == 0
    out = tmp_path / "verify.json"
    code = cli.main(["verify", str(net_path), "--oracle", "psi",
                     "--eps", "1e-12", "--samples", "1000",
                     "--sampling", "grid", "--out", str(out)])
    assert code == 0
    result = _read_json(out)
    assert result["passed"]
    assert result["samples"] == 1000


def test_verify_failure_exit_code(tmp_path, capsys):
    net_path = tmp_path / "zero.json"
    netcodec.dump_net(polyapprox.zero_net(1), net_path)
    code = cli.main(["verify", str(net_path), "--oracle", "psi",
                     "--eps", "0.1", "--samples", "200",
                     "--out", str(tmp_path / "v.json")])
    assert code == 3
    assert "exceeds declared epsilon" in capsys.readouterr().err


def test_product_gate_meets_declared_epsilon(tmp_path):
    net_path = tmp_path / "product.json"
    assert cli.main(["construct", "product", "--arity", "3",
                     "--eps", "0.01", "--out", str(net_path),
                     "--report", str(tmp_path / "r.json")]) == 0
    report = _read_json(tmp_path / "r.json")
    assert report["depth"] == report["formula"]["depth"] == 24
    assert cli.main(["verify", str(net_path), "--oracle", "product",
                     "--eps", "0.01", "--samples", "3000",
                     "--out", str(tmp_path / "v.json")]) == 0


def test_construct_smooth_depth(tmp_path):
    report_path = tmp_path / "r.json"
    code = cli.main(["construct", "smooth", "--target", "exp_neg_norm2",
                     "--r", "2", "--eps", "0.05", "--ltilde", "3",
                     "--out", str(tmp_path / "net.json"),
                     "--report", str(report_path)])
    assert code == 0
    report = _read_json(report_path)
    # 2(d+s)L + 8(d+s) + 3 with d=2, s=1, L=3
    assert report["depth"] == 45
    assert report["details"]["grid_size"] == 4


def test_construct_usage_errors(tmp_path):
    out = str(tmp_path / "net.json")
    assert cli.main(["construct", "poly", "--out", out]) == 2
    assert cli.main(["construct", "radial", "--out", out]) == 2
    assert cli.main(["construct", "square", "--ltilde", "1",
                     "--out", out]) == 2


def test_unknown_subcommand_exits_with_usage():
    with pytest.raises(SystemExit) as excinfo:
        cli.main(["frobnicate"])
    assert excinfo.value.code == 2


def test_capacity_from_params(tmp_path):
    out = tmp_path / "cap.json"
    code = cli.main(["capacity", "--params", "100", "--depth", "3",
                     "--bound", "10", "--width", "8", "--eps", "0.01",
                     "--out", str(out)])
    assert code == 0
    result = _read_json(out)
    expected = capacity.deep_log_covering_bound(capacity.CapacityQuery(
        n=100.0, L=3, R=10.0, d_max=8, epsilon=0.01,
    ))
    assert result["deep_log2_bound"] == pytest.approx(expected)


def test_capacity_curve(tmp_path):
    out = tmp_path / "curve.csv"
    code = cli.main(["capacity", "--params", "1000", "--depth", "1",
                     "--bound", "10", "--width", "10",
                     "--curve-target", "86000", "--depths", "1:5",
                     "--out", str(out)])
    assert code == 0
    with open(out, newline="") as f:
        rows = list(csv.reader(f))
    assert rows[0] == ["L", "n", "log2_bound"]
    assert [int(row[0]) for row in rows[1:]] == [1, 2, 3, 4, 5]


def test_capacity_needs_all_params():
    assert cli.main(["capacity", "--params", "100"]) == 2


def test_gen_data_train_and_export(tmp_path):
    data_dir = tmp_path / "data"
    assert cli.main(["gen-data", "square_feature", "--n-train", "120",
                     "--n-test", "30", "--param", "dim=2",
                     "--param", "bound=1.0",
                     "--out-dir", str(data_dir)]) == 0
    with open(data_dir / "train.csv") as f:
        assert sum(1 for _ in f) == 121

    report_path = tmp_path / "report.json"
    net_path = tmp_path / "trained.json"
    code = cli.main(["train", "--train-data", str(data_dir / "train.csv"),
                     "--test-data", str(data_dir / "test.csv"),
                     "--hidden", "8,8", "--iterations", "50",
                     "--batch-size", "16", "--export-net", str(net_path),
                     "--out", str(report_path)])
    assert code == 0
    report = _read_json(report_path)
    assert report["config"]["shape"] == [2, 8, 8, 1]
    assert report["n_params"] == 3 * 8 + 9 * 8 + 9
    assert netcodec.load_net(net_path).depth() == 2


def test_train_without_shape_is_a_usage_error(tmp_path):
    data_dir = tmp_path / "data"
    cli.main(["gen-data", "mmi", "--n-train", "20", "--n-test", "5",
              "--out-dir", str(data_dir)])
    code = cli.main(["train", "--train-data", str(data_dir / "train.csv"),
                     "--test-data", str(data_dir / "test.csv"),
                     "--out", str(tmp_path / "r.json")])
    assert code == 2


def test_train_divergence_exit_code(tmp_path, monkeypatch):
    data_dir = tmp_path / "data"
    cli.main(["gen-data", "mmi", "--n-train", "20", "--n-test", "5",
              "--out-dir", str(data_dir)])

    def diverge(*args, **kwargs):
        raise DivergenceError("non-finite training loss")

    monkeypatch.setattr(erm, "grad_mse", diverge)
    code = cli.main(["train", "--train-data", str(data_dir / "train.csv"),
                     "--test-data", str(data_dir / "test.csv"),
                     "--hidden", "4", "--iterations", "10",
                     "--out", str(tmp_path / "r.json")])
    assert code == 4
    assert _read_json(tmp_path / "r.json")["diverged"]


def _write_manifest(path, trials):
    path.write_text(
        'name = "cli_tiny"\n'
        "trials = {}\n".format(trials) +
        "[data]\n"
        'generator = "square_feature"\n'
        "n_train = 40\n"
        "n_test = 10\n"
        "[data.params]\n"
        "dim = 2\n"
        "bound = 1.0\n"
        "[train]\n"
        "iterations = 10\n"
        "batch_size = 8\n"
        "[[configs]]\n"
        "hidden = [3]\n"
    )


def test_sweep_command(tmp_path, capsys):
    manifest = tmp_path / "tiny.toml"
    _write_manifest(manifest, 2)
    out = tmp_path / "out"
    code = cli.main(["sweep", str(manifest), "--output-dir", str(out)])
    assert code == 0
    assert (out / "trials.jsonl").is_file()
    assert "depth 1: best [3]" in capsys.readouterr().out


def test_sweep_with_empty_trial_list(tmp_path):
    manifest = tmp_path / "empty.toml"
    _write_manifest(manifest, 0)
    assert cli.main(["sweep", str(manifest),
                     "--output-dir", str(tmp_path / "out")]) == 2


def test_internal_errors_get_an_id(tmp_path, monkeypatch, capsys):
    manifest = tmp_path / "tiny.toml"
    _write_manifest(manifest, 1)

    def broken(*args, **kwargs):
        raise RuntimeError("disk on fire")

    monkeypatch.setattr(sweep, "run_grid", broken)
    code = cli.main(["sweep", str(manifest),
                     "--output-dir", str(tmp_path / "out")])
    assert code == 1
    assert "internal error, id" in capsys.readouterr().err
