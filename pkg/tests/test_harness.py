import json
import os

import numpy as np
import pytest

from gridmarket import ConfigError, SimConfig, UniformSpec, parse_config, run_simulation, sweep
from gridmarket.harness import (
    export,
    export_pooled,
    find_index_csvs,
    is_undersupply,
    load_config,
    read_index_csv,
)

REFERENCE_CONFIG_TEXT = """
# reference configuration
n_middlemen = 10
n_users = 100
supply_per_tick = 40
initial_cash = 21
s_tol = 0.5
c_tol = 0.5
"""

# deliberately tiny: full runs in milliseconds
TINY = dict(n_middlemen=4, n_users=16, supply_per_tick=5,
            ticks_per_slow_step=60, n_slow_steps=40)


def tiny_config(**overrides):
    params = dict(TINY)
    params.update(overrides)
    return SimConfig(**params)


class TestParseConfig:
    def test_reference_text(self):
        config = parse_config(REFERENCE_CONFIG_TEXT)
        assert config.n_middlemen == 10
        assert config.n_users == 100
        assert config.supply_per_tick == 40
        assert config.initial_cash == 21.0

    def test_defaults_applied(self):
        config = parse_config("supply_per_tick = 45\n")
        assert config.ticks_per_slow_step == 10_000
        assert config.s_tol == 0.5
        assert config.c_tol == 0.5
        assert config.safety_margin_fraction == 0.1

    def test_unknown_key_rejected(self):
        with pytest.raises(ConfigError, match="supply_per_tik"):
            parse_config("supply_per_tik = 40\n")

    def test_type_mismatch_names_key(self):
        with pytest.raises(ConfigError, match="n_users"):
            parse_config("n_users = lots\n")

    def test_invariant_violation_names_field(self):
        with pytest.raises(ConfigError, match="n_middlemen"):
            parse_config("n_middlemen = 0\n")

    def test_uniform_specs(self):
        config = parse_config("s_tol = uniform:0.2:0.8\ninitial_price = uniform:2:6\n")
        assert config.s_tol == UniformSpec(0.2, 0.8)
        assert config.initial_price == UniformSpec(2.0, 6.0)

    def test_per_middleman_cash(self):
        config = parse_config("n_middlemen = 3\ninitial_cash = 5, 6, 7\n")
        assert config.initial_cash == (5.0, 6.0, 7.0)

    def test_comments_and_blanks(self):
        config = parse_config("\n# comment\nrng_seed = 9  # trailing\n\n")
        assert config.rng_seed == 9

    def test_malformed_line(self):
        with pytest.raises(ConfigError, match="line 1"):
            parse_config("just some words\n")


class TestRunSimulation:
    def test_series_length_matches_steps(self):
        record = run_simulation(tiny_config())
        assert len(record.index_series) == 40
        assert len(record.summaries) == 40
        assert len(record.deltas) == 39

    def test_determinism(self):
        a = run_simulation(tiny_config(rng_seed=5))
        b = run_simulation(tiny_config(rng_seed=5))
        assert a.index_series == b.index_series
        assert a.summaries == b.summaries

    def test_early_stop_records_step(self):
        # single middleman: monopoly from the start, absorbs immediately
        config = tiny_config(n_middlemen=1, n_users=8, supply_per_tick=10,
                             initial_price=1.0, n_slow_steps=200)
        record = run_simulation(config, early_stop=True, early_stop_window=5,
                                detection_window=5)
        assert record.stopped_early_at >= 0
        assert len(record.index_series) < 200
        assert record.absorbing.found


class TestSweep:
    def test_cartesian_and_pooled_counts(self):
        configs = [tiny_config(supply_per_tick=5), tiny_config(supply_per_tick=30)]
        records, pooled, fits = sweep(configs, seeds=[0, 1, 2])
        assert len(records) == 6
        under = [r for r in records if is_undersupply(r.config)]
        assert len(under) == 3  # only supply 5 < 8 expected demand
        assert pooled is not None
        assert len(pooled) == sum(len(r.deltas) for r in under)

    def test_single_run_sweep_equals_run(self):
        config = tiny_config(rng_seed=0)
        records, _, _ = sweep([config], seeds=[0])
        solo = run_simulation(config)
        assert records[0].index_series == solo.index_series

    def test_failure_captured_without_abort(self):
        from gridmarket.harness import RunFailure
        bad = tiny_config(n_middlemen=2, initial_cash=(1.0, 2.0, 3.0))  # wrong length
        good = tiny_config()
        records, _, _ = sweep([bad, good], seeds=[0])
        assert isinstance(records[0], RunFailure)
        assert "initial_cash" in records[0].error
        assert not isinstance(records[1], RunFailure)

    def test_empty_sweep_rejected(self):
        with pytest.raises(ValueError):
            sweep([], seeds=[0])

    def test_results_independent_of_execution_order(self):
        config = tiny_config()
        fwd, _, _ = sweep([config], seeds=[0, 1])
        rev, _, _ = sweep([config], seeds=[1, 0])
        by_seed_fwd = {r.seed: r.index_series for r in fwd}
        by_seed_rev = {r.seed: r.index_series for r in rev}
        assert by_seed_fwd == by_seed_rev


class TestExport:
    def test_index_csv_row_count_and_roundtrip(self, tmp_path):
        record = run_simulation(tiny_config())
        export([record], str(tmp_path))
        path = os.path.join(str(tmp_path), "run000_seed0_index.csv")
        steps, values, rows = read_index_csv(path)
        assert len(values) == 40
        assert tuple(values) == record.index_series.values  # exact float round-trip
        assert tuple(steps) == record.index_series.steps

    def test_reexport_identical_bytes(self, tmp_path):
        record = run_simulation(tiny_config(rng_seed=3))
        dir_a = tmp_path / "a"
        dir_b = tmp_path / "b"
        paths_a = export([record], str(dir_a))
        paths_b = export([record], str(dir_b))
        for pa, pb in zip(paths_a, paths_b):
            with open(pa, "rb") as fa, open(pb, "rb") as fb:
                assert fa.read() == fb.read()

    def test_histogram_density_integrates_to_one(self, tmp_path):
        record = run_simulation(tiny_config(rng_seed=1, n_slow_steps=60))
        export([record], str(tmp_path))
        path = os.path.join(str(tmp_path), "run000_seed1_histogram.csv")
        with open(path) as fh:
            lines = fh.read().splitlines()[1:]
        if lines:
            total = sum((float(p[1]) - float(p[0])) * float(p[3])
                        for p in (line.split(",") for line in lines))
            assert total == pytest.approx(1.0, abs=1e-9)

    def test_summary_json_content(self, tmp_path):
        record = run_simulation(tiny_config())
        export([record], str(tmp_path))
        with open(os.path.join(str(tmp_path), "run000_seed0_summary.json")) as fh:
            summary = json.load(fh)
        assert summary["config"]["n_middlemen"] == 4
        assert summary["n_slow_steps_run"] == 40
        assert "absorbing" in summary and "tail_fits" in summary
        assert "duration" not in json.dumps(summary)  # byte-determinism

    def test_plotdata_panels(self, tmp_path):
        record = run_simulation(tiny_config(rng_seed=2))
        export([record], str(tmp_path))
        with open(os.path.join(str(tmp_path), "run000_seed2_plotdata.json")) as fh:
            panels = json.load(fh)
        assert set(panels) == {"half_log", "log_log"}

    def test_pooled_export(self, tmp_path):
        records, pooled, fits = sweep([tiny_config()], seeds=[0, 1])
        paths = export_pooled(pooled, fits, str(tmp_path))
        assert any(p.endswith("pooled_summary.json") for p in paths)

    def test_find_index_csvs(self, tmp_path):
        records, _, _ = sweep([tiny_config()], seeds=[0, 1])
        export(records, str(tmp_path))
        assert len(find_index_csvs(str(tmp_path))) == 2

    def test_unwritable_path_errors(self):
        record = run_simulation(tiny_config())
        with pytest.raises(OSError):
            export([record], "/proc/definitely/not/writable")


class TestLoadConfig(object):
    def test_roundtrip_via_file(self, tmp_path):
        path = tmp_path / "reference.cfg"
        path.write_text(REFERENCE_CONFIG_TEXT)
        config = load_config(str(path))
        assert config.supply_per_tick == 40
