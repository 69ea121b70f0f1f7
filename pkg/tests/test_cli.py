"""Command line surface: exit codes, artifacts, byte-stable reruns."""

from importlib import resources
from pathlib import Path

import pytest

from delaylab.cli import cli_main

CONFIGS = Path(__file__).resolve().parents[1] / "configs"

QUICK_RUN = """
[landscape]
kind = "quadratic"
eigenvalues = [10.0, 1.0]
angle_deg = 45.0

[optimizer]
name = "adam"
eta = 1.0
beta1 = 0.0
beta2 = 0.1

[staleness]
tau = 2

[run]
seed = 1
max_steps = 60
loss_threshold = 15.0
start = [-16.263455967290589, 19.091883092036785]
"""


@pytest.fixture()
def quick_config(tmp_path):
    p = tmp_path / "quick.toml"
    p.write_text(QUICK_RUN)
    return p


def test_run_writes_artifacts_and_exits_zero(quick_config, tmp_path, capsys):
    out = tmp_path / "out"
    code = cli_main(["run", str(quick_config), "--out", str(out), "--no-figures"])
    assert code == 0
    assert (out / "trace.csv").is_file()
    assert (out / "summary.json").is_file()
    printed = capsys.readouterr().out
    assert str(out / "trace.csv") in printed
    assert "terminated=threshold" in printed


def test_run_is_byte_reproducible(quick_config, tmp_path):
    out_a = tmp_path / "a"
    out_b = tmp_path / "b"
    assert cli_main(["run", str(quick_config), "--out", str(out_a), "--no-figures"]) == 0
    assert cli_main(["run", str(quick_config), "--out", str(out_b), "--no-figures"]) == 0
    assert (out_a / "trace.csv").read_bytes() == (out_b / "trace.csv").read_bytes()
    assert (out_a / "summary.json").read_bytes() == (out_b / "summary.json").read_bytes()


def test_run_renders_figures_by_default(quick_config, tmp_path):
    out = tmp_path / "out"
    assert cli_main(["run", str(quick_config), "--out", str(out)]) == 0
    names = {p.name for p in out.iterdir()}
    assert {"trace.csv", "summary.json", "loss.png", "trajectory.png", "misalignment.png"} <= names


def test_stages_default_prints_packaged_table(capsys):
    assert cli_main(["stages"]) == 0
    golden = resources.files("delaylab").joinpath("data/stages_golden.csv").read_text()
    assert capsys.readouterr().out == golden


def test_stages_with_config_matches_default(capsys):
    assert cli_main(["stages", str(CONFIGS / "stages_llama.toml")]) == 0
    golden = resources.files("delaylab").joinpath("data/stages_golden.csv").read_text()
    assert capsys.readouterr().out == golden


def test_unknown_config_key_exits_two(tmp_path, capsys):
    p = tmp_path / "bad.toml"
    p.write_text(QUICK_RUN + "typo_key = 3\n")
    assert cli_main(["run", str(p), "--no-figures"]) == 2
    err = capsys.readouterr().err
    assert "typo_key" in err and err.startswith("error:")


def test_missing_config_file_exits_two(tmp_path, capsys):
    assert cli_main(["run", str(tmp_path / "absent.toml"), "--no-figures"]) == 2
    assert "error:" in capsys.readouterr().err


def test_sweep_grid_writes_csv(tmp_path):
    p = tmp_path / "sweep.toml"
    p.write_text(
        'kind = "grid"\n'
        + QUICK_RUN.replace("[landscape]", "[base.landscape]")
        .replace("[optimizer]", "[base.optimizer]")
        .replace("[staleness]", "[base.staleness]")
        .replace("[run]", "[base.run]")
        + "\n[grid]\ntau = [0, 2]\n"
    )
    out = tmp_path / "out"
    assert cli_main(["sweep", str(p), "--out", str(out), "--no-figures", "--workers", "1"]) == 0
    lines = (out / "sweep.csv").read_text().splitlines()
    assert lines[0].startswith("tau,")
    assert len(lines) == 3


def test_verify_exits_zero(capsys):
    assert cli_main(["verify"]) == 0
    out = capsys.readouterr().out
    assert "checks passed" in out
    assert "FAIL" not in out


def test_verify_failure_exits_one(monkeypatch, capsys):
    import delaylab.verify as verify

    def broken(name="synthetic_failure"):
        return "forced"

    monkeypatch.setattr(verify, "CHECKS", verify.CHECKS + (("synthetic_failure", broken),))
    assert cli_main(["verify"]) == 1
    assert "FAIL synthetic_failure: forced" in capsys.readouterr().out
