import json
from pathlib import Path

import pytest

from xnas import cli
from xnas.io import OutputDir, Manifest

CONFIGS = Path(__file__).resolve().parents[1] / "configs"


def _read(path):
    return Path(path).read_bytes()


def test_lr_plan(tmp_path, capsys):
    code = cli.main(["lr-plan", "--config", str(CONFIGS / "cifar10_schedule.json"), "--out", str(tmp_path)])
    assert code == 0
    lines = (tmp_path / "lr_plan.csv").read_text().splitlines()
    assert lines[0].startswith("# manifest_sha256=")
    assert lines[1] == "cell_type,T_c,eta_star"
    rows = {r.split(",")[0]: r.split(",") for r in lines[2:]}
    assert rows["normal"][1] == "7500000" and 7.4e-4 <= float(rows["normal"][2]) <= 7.5e-4
    assert rows["reduction"][1] == "2500000" and 1.25e-3 <= float(rows["reduction"][2]) <= 1.35e-3
    manifest = json.loads((tmp_path / "manifest.json").read_text())
    assert manifest["outputs"] == ["lr_plan.csv"]
    assert lines[0].endswith(manifest["manifest_sha256"])


def test_missing_config_is_exit_one(tmp_path):
    assert cli.main(["lr-plan", "--config", str(tmp_path / "nope.json"), "--out", str(tmp_path)]) == 1
    assert cli.main(["lr-plan", "--out", str(tmp_path)]) == 1
    assert cli.main(["frobnicate"]) == 1


def test_malformed_and_unknown_config(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    assert cli.main(["toy3d", "--config", str(bad), "--out", str(tmp_path / "o")]) == 1
    extra = tmp_path / "extra.json"
    extra.write_text(json.dumps({"eta": 0.1, "colour": "red"}))
    assert cli.main(["toy3d", "--config", str(extra), "--out", str(tmp_path / "o")]) == 1


def test_toy_runs_are_byte_identical_and_rerunnable(tmp_path):
    a, b, c = tmp_path / "a", tmp_path / "b", tmp_path / "c"
    assert cli.main(["toy3d", "--out", str(a)]) == 0
    assert cli.main(["toy3d", "--out", str(b)]) == 0
    assert _read(a / "toy3d.csv") == _read(b / "toy3d.csv")
    assert cli.main(["toy3d", "--config", str(a / "manifest.json"), "--out", str(c)]) == 0
    assert _read(a / "toy3d.csv") == _read(c / "toy3d.csv")


def test_manifest_for_other_subcommand_is_rejected(tmp_path):
    assert cli.main(["toy3d", "--out", str(tmp_path / "a")]) == 0
    assert cli.main(["toy2d", "--config", str(tmp_path / "a" / "manifest.json"), "--out", str(tmp_path / "b")]) == 1


def test_flags_override_config(tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"variant": "quadratic", "steps": 10}))
    assert cli.main(["toy2d", "--config", str(cfg), "--steps", "7", "--out", str(tmp_path / "o")]) == 0
    m = json.loads((tmp_path / "o" / "manifest.json").read_text())
    assert m["config"]["variant"] == "quadratic" and m["config"]["steps"] == 7
    rows = (tmp_path / "o" / "toy2d_quadratic.csv").read_text().splitlines()[2:]
    assert len(rows) == 14


def test_verify_small(tmp_path, capsys):
    assert cli.main(["verify", "--trials", "40", "--out", str(tmp_path)]) == 0
    out = capsys.readouterr().out
    assert out.count("PASS") == 4
    lines = (tmp_path / "verify_bounds.csv").read_text().splitlines()
    assert lines[1] == "trial_id,N,T,eta,gamma_T,regret,bound,slack"
    assert len(lines) == 42
    assert cli.main(["verify", "--trials", "40", "--workers", "3", "--out", str(tmp_path / "w")]) == 0
    assert (tmp_path / "w" / "verify_bounds.csv").read_text().splitlines()[1:] == lines[1:]


def test_partial_outputs_removed_on_failure(tmp_path):
    m = Manifest("toy3d", {}, None)
    with pytest.raises(RuntimeError):
        with OutputDir(tmp_path, m) as out:
            out.csv("first.csv", ["a"], [[1]])
            raise RuntimeError("boom")
    assert list(tmp_path.iterdir()) == []


def test_stochastic_requires_an_axis(tmp_path):
    assert cli.main(["stochastic", "--n-list", "", "--out", str(tmp_path)]) == 1
    assert not (tmp_path / "stochastic.csv").exists()


def test_stochastic_small(tmp_path):
    args = ["stochastic", "--n-list", "2,4", "--sigma-list", "0.5,1", "--runs", "5", "--steps", "30"]
    assert cli.main(args + ["--out", str(tmp_path / "a")]) == 0
    assert cli.main(args + ["--out", str(tmp_path / "b"), "--workers", "2"]) == 0
    a = (tmp_path / "a" / "stochastic.csv").read_text().splitlines()
    b = (tmp_path / "b" / "stochastic.csv").read_text().splitlines()
    assert a[2:] == b[2:]  # manifests differ only in the worker count
    assert a[2] == "axis,value,optimizer,correct_fraction,mean_regret,std_err,mean_gamma,clip_rate"
    assert len(a) == 3 + 8


def test_cell_search_small(tmp_path):
    args = ["cell-search", "--epochs", "2", "--n-samples", "64", "--weight-decay-sweep", "0,0.01",
            "--out", str(tmp_path)]
    assert cli.main(args) == 0
    cell = json.loads((tmp_path / "cell.json").read_text())
    assert set(cell) >= {"planted", "found", "recovered", "depth"}
    assert (tmp_path / "entropy_vs_weight_decay.csv").exists()
