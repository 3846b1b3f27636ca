import json
import os

import pytest

from gridmarket.cli import main

TINY_CFG = """
n_middlemen = 4
n_users = 16
supply_per_tick = 5
ticks_per_slow_step = 60
n_slow_steps = 50
"""


@pytest.fixture
def cfg_path(tmp_path):
    path = tmp_path / "tiny.cfg"
    path.write_text(TINY_CFG)
    return str(path)


def test_run_subcommand(cfg_path, tmp_path, capsys):
    out = tmp_path / "out"
    assert main(["run", cfg_path, "--seed", "3", "--out", str(out)]) == 0
    names = sorted(p.name for p in out.iterdir())
    assert names == ["run000_seed3_histogram.csv", "run000_seed3_index.csv",
                     "run000_seed3_plotdata.json", "run000_seed3_summary.json"]
    assert "run finished" in capsys.readouterr().out


def test_run_rejects_bad_config(tmp_path, capsys):
    path = tmp_path / "bad.cfg"
    path.write_text("n_middlemen = 0\n")
    assert main(["run", str(path), "--out", str(tmp_path / "o")]) == 2
    assert "n_middlemen" in capsys.readouterr().err


def test_sweep_with_config_glob(cfg_path, tmp_path):
    out = tmp_path / "sweep_out"
    assert main(["sweep", cfg_path, "--seeds", "2", "--out", str(out)]) == 0
    index_csvs = [p for p in out.iterdir() if p.name.endswith("_index.csv")]
    assert len(index_csvs) == 2
    assert (out / "pooled_summary.json").exists()
    assert (out / "pooled_histogram.csv").exists()


def test_sweep_with_supply_list(tmp_path, monkeypatch):
    # shrink the default config so the sweep stays fast
    import gridmarket.cli as cli
    from dataclasses import replace

    real = cli.SimConfig

    def tiny_default():
        return replace(real(), n_middlemen=4, n_users=16,
                       ticks_per_slow_step=60, n_slow_steps=30)

    monkeypatch.setattr(cli, "SimConfig", tiny_default)
    out = tmp_path / "supplies"
    assert main(["sweep", "5,30", "--seeds", "2", "--out", str(out)]) == 0
    summaries = sorted(p.name for p in out.iterdir()
                       if p.name.startswith("run") and p.name.endswith("_summary.json"))
    assert len(summaries) == 4


def test_analyze_subcommand(cfg_path, tmp_path, capsys):
    out = tmp_path / "runs"
    assert main(["sweep", cfg_path, "--seeds", "3", "--out", str(out)]) == 0
    assert main(["analyze", str(out), "--estimator", "both"]) == 0
    report = json.loads((out / "analysis.json").read_text())
    assert report["n_runs"] == 3
    assert set(report["fits"]) == {"hill", "loglog"}


def test_analyze_empty_dir(tmp_path, capsys):
    assert main(["analyze", str(tmp_path)]) == 2
