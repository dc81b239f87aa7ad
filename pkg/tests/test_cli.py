import csv

import pytest

from utr.cli import main


def run(*argv):
    try:
        return main([str(a) for a in argv])
    except SystemExit as exc:
        return exc.code


@pytest.fixture(scope="module")
def chain_data(tmp_path_factory):
    out = tmp_path_factory.mktemp("data") / "chain"
    assert run("gen-data", "--env", "chain", "--n", 80, "--seed", 1, "--out", out) == 0
    return out


def test_gen_data_is_deterministic(chain_data, tmp_path):
    again = tmp_path / "again"
    assert run("gen-data", "--env", "chain", "--n", 80, "--seed", 1, "--out", again) == 0
    for name in ("trajectories.bin", "manifest.json"):
        assert (again / name).read_bytes() == (chain_data / name).read_bytes()


@pytest.mark.parametrize("argv", [
    ["gen-data", "--mix", "expert:0.6,random:0.5", "--out", "{tmp}/x"],
    ["gen-data"],
    ["train", "--model", "lstm", "--data", "{tmp}", "--out", "{tmp}/t"],
    ["analyze", "--out", "{tmp}/a"],
    ["analyze", "--compare", "dt,gru", "--out", "{tmp}/a"],
    ["eval", "--policy", "model", "--out", "{tmp}/e"],
    ["frobnicate"],
])
def test_usage_errors_exit_one(argv, tmp_path):
    assert run(*[a.format(tmp=tmp_path) for a in argv]) == 1


def test_unknown_config_key_exits_one(tmp_path):
    cfg = tmp_path / "run.ini"
    cfg.write_text("n = 10\nbogus_key = 3\n")
    assert run("gen-data", "--config", cfg, "--out", tmp_path / "d") == 1


def test_flag_beats_config_file(tmp_path):
    cfg = tmp_path / "run.ini"
    cfg.write_text("[gen-data]\nn = 10\nseed = 4\n")
    out = tmp_path / "d"
    assert run("gen-data", "--config", cfg, "--n", 12, "--out", out) == 0
    resolved = (out / "resolved_config.ini").read_text()
    assert "n = 12" in resolved and "seed = 4" in resolved


def test_missing_dataset_is_usage_error(tmp_path):
    assert run("train", "--model", "udc", "--data", tmp_path / "nope", "--out", tmp_path / "t") == 1


def test_train_eval_resume(chain_data, tmp_path):
    common = ["--data", chain_data, "--steps", 30, "--batch", 8, "--embed-dim", 16, "--depth", 1,
              "--d-r", 8, "--no-time"]
    full = tmp_path / "full"
    assert run("train", "--model", "udc", *common, "--out", full) == 0
    for name in ("model.ckpt", "metrics.csv", "loss.png", "resolved_config.ini"):
        assert (full / name).is_file()

    part = tmp_path / "part"
    assert run("train", "--model", "udc", *common, "--eval-interval", 15, "--steps", 15, "--out", part) == 0
    assert run("train", "--model", "udc", *common, "--resume", part / "model.ckpt", "--out", part) == 0
    assert (part / "metrics.csv").read_bytes() == (full / "metrics.csv").read_bytes()
    assert (part / "model.ckpt").read_bytes() == (full / "model.ckpt").read_bytes()

    ev = tmp_path / "ev"
    assert run("eval", "--ckpt", full / "model.ckpt", "--data", chain_data, "--n-eval", 2,
               "--multipliers", "1,2", "--out", ev) == 0
    rows = list(csv.reader(open(ev / "eval.csv")))
    assert len(rows) == 4 and rows[-1][0] == "best"
    assert (ev / "eval.png").is_file()


def test_eval_reference_policies(tmp_path):
    assert run("eval", "--policy", "expert", "--n-eval", 3, "--out", tmp_path / "x") == 0
    rows = list(csv.reader(open(tmp_path / "x" / "eval.csv")))
    assert float(rows[-1][2]) == 100.0


def test_analyze_outputs(tmp_path):
    out = tmp_path / "a"
    assert run("analyze", "--compare", "dt,udt,udc", "--bench-steps", 0, "--rademacher",
               "--rho", "0,0.5", "--s", "1/3", "--n", 2000, "--m", 20, "--out", out) == 0
    for name in ("complexity.csv", "complexity.png", "rademacher.csv", "rademacher.png"):
        assert (out / name).is_file()
    table = list(csv.reader(open(out / "complexity.csv")))
    assert table[2][:2] == ["flops", "1052313600"]
    rad = list(csv.DictReader(open(out / "rademacher.csv")))
    assert [float(r["rho"]) for r in rad] == [0.0, 0.5]
    assert all(float(r["emp_merged"]) < float(r["emp_sep"]) for r in rad)


def test_analyze_mismatched_grid(tmp_path):
    assert run("analyze", "--rademacher", "--rho", "0,0.1,0.2", "--s", "0.4,0.5", "--out", tmp_path) == 1
