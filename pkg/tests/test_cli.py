import csv
import json
from pathlib import Path

import pytest

from rivercontrol.cli import main
from rivercontrol.config import build_params, load_config, parse_override
from rivercontrol.errors import ValidationError

CONFIGS = Path(__file__).resolve().parents[1] / "configs"


def run(*args, tmp_path):
    return main([*args, "--out-dir", str(tmp_path)])


@pytest.mark.parametrize("name", sorted(p.name for p in CONFIGS.glob("*.toml")))
def test_reference_configs_build(name):
    cfg = load_config(CONFIGS / name)
    build_params(cfg)


def test_reference_defaults_match_params():
    from rivercontrol.algae import AlgaeParams
    from rivercontrol.sediment import SedimentParams

    assert build_params(load_config(CONFIGS / "algae.toml")) == AlgaeParams()
    assert build_params(load_config(CONFIGS / "sediment.toml")) == SedimentParams()


def test_override_parsing():
    assert parse_override("algae.weight=0.25") == ("algae.weight", 0.25)
    assert parse_override("output.directory=runs/a") == ("output.directory", "runs/a")
    assert parse_override("verify.x0=[0.1, 0.2, 0.3]") == ("verify.x0", [0.1, 0.2, 0.3])
    with pytest.raises(ValidationError):
        parse_override("algae.weight")


def test_strict_keys_and_types(tmp_path, capsys):
    bad = tmp_path / "bad.toml"
    bad.write_text('problem = "algae"\n[algae]\nweigth = 0.2\n')
    assert main(["run", "--config", str(bad)]) == 1
    assert "algae.weigth" in capsys.readouterr().err
    bad.write_text('problem = "algae"\n[algae]\nweight = "high"\n')
    assert main(["run", "--config", str(bad)]) == 1
    bad.write_text('problem = "algae"\n[extra]\nx = 1\n')
    assert main(["run", "--config", str(bad)]) == 1
    assert main(["run", "--config", str(tmp_path / "missing.toml")]) == 1


def test_run_fishery(tmp_path, capsys):
    code = run("run", "--config", str(CONFIGS / "fishery.toml"), "--set", "fishery.w3=3", tmp_path=tmp_path)
    assert code == 0
    rows = list(csv.reader(open(tmp_path / "fishery.csv")))
    assert rows[0][:5] == ["t", "psi", "U", "h_star", "u_star"]
    assert len(rows) == 1 + 15001
    summary = json.loads((tmp_path / "summary.json").read_text())
    assert len(summary["u_active"]) == 2


def test_invalid_bounds_exit_one(tmp_path, capsys):
    code = run("run", "--config", str(CONFIGS / "algae.toml"), "--set", "algae.q_min=3", tmp_path=tmp_path)
    assert code == 1
    err = capsys.readouterr().err
    assert "algae.q_min" in err and "algae.q_max" in err


def test_unconverged_run_exit_two(tmp_path):
    code = run("run", "--config", str(CONFIGS / "sediment.toml"), "--set", "numerics.max_iterations=1", tmp_path=tmp_path)
    assert code == 2
    summary = json.loads((tmp_path / "summary.json").read_text())
    assert summary["partial"] is True
    assert (tmp_path / "sediment.csv").exists()


def test_outputs_are_deterministic(tmp_path):
    args = ["run", "--config", str(CONFIGS / "algae.toml"), "--set", "numerics.n_nodes=101"]
    assert main([*args, "--out-dir", str(tmp_path / "a")]) == 0
    assert main([*args, "--out-dir", str(tmp_path / "b")]) == 0
    for name in ("algae.csv", "summary.json"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_sweep(tmp_path):
    code = run(
        "sweep", "--config", str(CONFIGS / "algae.toml"), "--set", "numerics.n_nodes=101",
        "--key", "algae.weight", "--values", "0.25,0.5", "1.0", "--workers", "2", tmp_path=tmp_path,
    )
    assert code == 0
    rows = list(csv.reader(open(tmp_path / "sweep_algae_weight.csv")))
    assert rows[0] == ["algae.weight", "a", "z", "value", "q_star"]
    assert len(rows) == 1 + 3 * 101
    summary = json.loads((tmp_path / "sweep_algae_weight_summary.json").read_text())
    assert [v for v, _ in summary["transition_metric"]] == [0.25, 0.5, 1.0]
    assert len(summary["consecutive_sup_distance"]) == 2


def test_sweep_records_failures(tmp_path):
    code = run(
        "sweep", "--config", str(CONFIGS / "algae.toml"), "--set", "numerics.n_nodes=101",
        "--key", "algae.q_min", "--values", "0.2", "5.0", tmp_path=tmp_path,
    )
    assert code == 1
    summary = json.loads((tmp_path / "sweep_algae_q_min_summary.json").read_text())
    assert [i["exit_code"] for i in summary["instances"]] == [0, 1]


def test_empty_sweep(tmp_path):
    assert run("sweep", "--config", str(CONFIGS / "algae.toml"), "--key", "algae.weight", tmp_path=tmp_path) == 1


def test_verify_sediment_and_corrupted_policy(tmp_path, capsys):
    cfg = str(CONFIGS / "sediment.toml")
    fast = ["--set", "numerics.dx=0.01", "--set", "verify.n_paths=2000"]
    assert run("run", "--config", cfg, *fast, tmp_path=tmp_path) == 0
    sol = tmp_path / "sediment.csv"
    capsys.readouterr()
    assert run("verify", "--config", cfg, *fast, "--set", f"verify.solution={sol}", tmp_path=tmp_path) == 0
    assert json.loads(capsys.readouterr().out)["pass"] is True

    rows = list(csv.DictReader(open(sol)))
    for r in rows:
        r["omega"] = "0"
    bad = tmp_path / "bad.csv"
    with open(bad, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=list(rows[0]), lineterminator="\n")
        w.writeheader()
        w.writerows(rows)
    code = run("verify", "--config", cfg, *fast, "--set", f"verify.solution={bad}", "--set", "verify.w0=0.0",
               tmp_path=tmp_path)
    assert code == 1
    out = json.loads(capsys.readouterr().out)
    assert out["pass"] is False and out["gap"] > 1.0


def test_verify_missing_solution(tmp_path, capsys):
    code = run("verify", "--config", str(CONFIGS / "sediment.toml"), "--set",
               f"verify.solution={tmp_path / 'none.csv'}", tmp_path=tmp_path)
    assert code == 1
    assert "not found" in capsys.readouterr().err


def test_verify_reservoir_uncoupled(tmp_path):
    code = run(
        "verify", "--config", str(CONFIGS / "reservoir.toml"), "--set", "reservoir.up_rate=0",
        "--set", "reservoir.down_rate=0", "--set", "numerics.n_nodes=101", "--set", "verify.n_paths=200",
        tmp_path=tmp_path,
    )
    assert code == 0


def test_verify_unsupported_problem(tmp_path):
    assert run("verify", "--config", str(CONFIGS / "algae.toml"), tmp_path=tmp_path) == 1


def test_grid_dump(tmp_path, capsys):
    assert main(["grid-dump", "--dim", "3", "--level", "11", "--out-dir", str(tmp_path)]) == 0
    assert json.loads(capsys.readouterr().out)["n_points"] == 6017
    with open(tmp_path / "grid.csv") as fh:
        assert sum(1 for _ in fh) == 6018
    assert main(["grid-dump", "--level", "2", "--out-dir", str(tmp_path)]) == 1
