"""Harness tests: run orchestration, config round trips, CLI surface."""

import json

import numpy as np
import pytest

from ajscclink.cli import main
from ajscclink.errors import ConfigError, StageError
from ajscclink.harness import (
    AnalysisSettings,
    RunConfig,
    config_from_dict,
    config_to_dict,
    derive_seed,
    load_config,
    report_to_dict,
    reproduce,
    run_link,
    sweep_levels,
    write_report_json,
    write_sweep_csv,
)
from ajscclink.sources import SourceTrace, write_trace_csv


def quiet_analysis(**kwargs):
    return AnalysisSettings(median_order=kwargs.pop("median_order", 0), **kwargs)


def triangle_trace_csv(path, duration=4.0, period=1e-3, peak=2.6):
    n = int(duration / period)
    half = n // 2
    tri = peak * (1 - np.abs(np.arange(n) % n / half - 1))
    write_trace_csv(SourceTrace(period, tri), path)
    return path


class TestRunLink:
    def test_noiseless_loopback_hits_quantization_floor(self, tmp_path):
        gsr_path = triangle_trace_csv(tmp_path / "tri.csv")
        config = RunConfig(
            levels=16,
            duration=4.0,
            seed=3,
            channel_family="awgn",
            csnr_db=float("inf"),
            gsr_path=str(gsr_path),
            analysis=quiet_analysis(),
        )
        report = run_link(config)
        params = config.ajscc_params()
        cfg = config.modem_config()
        want = params.level_spacing**2 / 12
        assert report.mse.mse_x2 == pytest.approx(want, rel=0.05)
        # Interpolation floor: a tenth of a bin, amplified by the level count.
        bin_volts = params.full_scale * cfg.bin_width / (cfg.f_max - cfg.f_min)
        floor = (0.1 * bin_volts * params.x1_max * params.levels / params.full_scale) ** 2
        assert report.mse.mse_x1 <= floor

    def test_block_accounting_fast_and_slow(self):
        fast = run_link(RunConfig(levels=8, duration=2.0, seed=1, csnr_db=float("inf"),
                                  analysis=quiet_analysis()))
        assert fast.n_blocks == 2000
        slow = run_link(RunConfig(levels=8, duration=2.5, seed=1, profile="slow",
                                  csnr_db=float("inf"), analysis=quiet_analysis()))
        assert slow.n_blocks == 250

    def test_report_deterministic_for_seed(self):
        config = RunConfig(levels=10, duration=2.0, seed=42, csnr_db=5.0,
                           analysis=quiet_analysis())
        a = report_to_dict(run_link(config))
        b = report_to_dict(run_link(config))
        a.pop("wall_time_s"), b.pop("wall_time_s")
        assert json.dumps(a, sort_keys=True) == json.dumps(b, sort_keys=True)

    def test_missing_trace_file_is_config_error(self):
        config = RunConfig(levels=8, duration=2.0, gsr_path="/nonexistent/trace.csv")
        with pytest.raises(ConfigError):
            run_link(config)

    def test_stage_error_carries_stage_name(self, tmp_path):
        bad = tmp_path / "bad.csv"
        bad.write_text("t_seconds,value\n0.0,1.0\n0.5,nope\n")
        config = RunConfig(levels=8, duration=2.0, gsr_path=str(bad))
        with pytest.raises(StageError, match="generate"):
            run_link(config)

    def test_duration_below_one_block_rejected(self):
        config = RunConfig(levels=8, duration=0.005, profile="slow",
                           analysis=quiet_analysis())
        with pytest.raises(ConfigError, match="duration"):
            run_link(config)

    def test_peaks_and_ks_populated_with_noise(self):
        report = run_link(RunConfig(levels=30, duration=6.0, seed=3, csnr_db=0.0))
        assert len(report.source_peaks) >= 5
        assert len(report.receiver_peaks) >= 5
        assert report.ks is not None
        assert report.ks.p_value > 0.05


class TestSweep:
    def test_empty_levels_empty_reports(self):
        assert sweep_levels(RunConfig(duration=2.0), []) == []

    def test_seed_derivation_stable_and_distinct(self):
        s1 = derive_seed(7, 10, "awgn")
        assert s1 == derive_seed(7, 10, "awgn")
        assert s1 != derive_seed(7, 15, "awgn")
        assert s1 != derive_seed(8, 10, "awgn")
        assert s1 != derive_seed(7, 10, "flat_rayleigh")

    def test_levels_below_two_rejected(self):
        with pytest.raises(ConfigError):
            sweep_levels(RunConfig(duration=2.0), [1])

    def test_sweep_csv_shape(self, tmp_path):
        config = RunConfig(duration=2.0, seed=5, csnr_db=float("inf"),
                           analysis=quiet_analysis())
        reports = sweep_levels(config, [4, 8])
        path = tmp_path / "sweep.csv"
        write_sweep_csv(reports, path)
        lines = path.read_text().splitlines()
        assert lines[0] == "levels,mse_x1,mse_x2,mse_sum"
        assert len(lines) == 3
        assert lines[1].startswith("4,")
        assert lines[2].startswith("8,")


class TestConfigSerialization:
    def test_round_trip_including_inf(self, tmp_path):
        config = RunConfig(levels=24, duration=3.5, seed=9, channel_family="flat_rayleigh",
                           csnr_db=float("inf"), x1_input_range=(0.0, 1.5))
        d = config_to_dict(config)
        assert d["csnr_db"] == "inf"
        back = config_from_dict(json.loads(json.dumps(d)))
        assert back == config

    def test_load_config_file(self, tmp_path):
        path = tmp_path / "run.json"
        path.write_text(json.dumps({"levels": 12, "duration": 2.0, "csnr_db": "inf"}))
        config = load_config(path)
        assert config.levels == 12
        assert np.isinf(config.csnr_db)

    def test_unknown_keys_rejected(self, tmp_path):
        path = tmp_path / "run.json"
        path.write_text(json.dumps({"levels": 12, "bogus": 1}))
        with pytest.raises(ConfigError):
            load_config(path)

    def test_malformed_json_rejected(self, tmp_path):
        path = tmp_path / "run.json"
        path.write_text("{not json")
        with pytest.raises(ConfigError):
            load_config(path)

    def test_report_json_schema(self, tmp_path):
        report = run_link(RunConfig(levels=8, duration=2.0, seed=1, csnr_db=float("inf"),
                                    analysis=quiet_analysis()))
        path = tmp_path / "report.json"
        write_report_json(report, path)
        data = json.loads(path.read_text())
        for key in ("config", "mse_x1", "mse_x2", "mse_sum", "source_peaks",
                    "receiver_peaks", "n_blocks", "version", "synthetic_sources"):
            assert key in data
        rebuilt = config_from_dict(data["config"])
        assert rebuilt == report.config


class TestReproduce:
    def test_fig4_staircase_file(self, tmp_path):
        (path,) = reproduce("fig4", tmp_path)
        rows = np.loadtxt(path, delimiter=",", skiprows=1)
        assert rows.shape == (4096, 2)
        plateaus = np.unique(np.round(rows[:, 1], 12))
        assert plateaus.size == 16

    def test_fig5cdf_writes_source_and_channel_curves(self, tmp_path):
        written = reproduce("fig5cdf", tmp_path, seed=2, duration=4.0)
        names = {p.name for p in written}
        assert names == {
            "fig5_cdf_source.csv",
            "fig5_cdf_awgn.csv",
            "fig5_cdf_flat_rayleigh.csv",
            "fig5_cdf_jtc_indoor_a.csv",
            "fig5_cdf_jtc_outdoor_low_a.csv",
        }
        cdf = np.loadtxt(written[0], delimiter=",", skiprows=1, ndmin=2)
        assert cdf[-1, 1] == pytest.approx(1.0)

    def test_mse_sweep_experiment_with_narrow_grid(self, tmp_path):
        (path,) = reproduce("fig6a", tmp_path, seed=2, duration=2.0, levels=[6, 12])
        lines = path.read_text().splitlines()
        assert lines[0] == "levels,mse_x1,mse_x2,mse_sum"
        assert len(lines) == 3

    def test_unknown_id_rejected(self, tmp_path):
        with pytest.raises(ConfigError):
            reproduce("fig9", tmp_path)


class TestCli:
    def test_staircase_command(self, tmp_path, capsys):
        rc = main(["staircase", "--levels", "16", "--points", "128", "--out", str(tmp_path)])
        assert rc == 0
        rows = np.loadtxt(tmp_path / "staircase.csv", delimiter=",", skiprows=1)
        assert np.unique(np.round(rows[:, 1], 12)).size == 16

    def test_simulate_with_config_and_overrides(self, tmp_path, capsys):
        cfg_path = tmp_path / "run.json"
        cfg_path.write_text(json.dumps({
            "levels": 8, "duration": 2.0, "csnr_db": "inf", "seed": 4,
            "analysis": {"median_order": 0},
        }))
        rc = main(["simulate", "--config", str(cfg_path), "--seed", "5",
                   "--no-interp", "--out", str(tmp_path / "out")])
        assert rc == 0
        data = json.loads((tmp_path / "out" / "run_report.json").read_text())
        assert data["config"]["seed"] == 5
        assert data["config"]["interpolate"] is False
        peaks = (tmp_path / "out" / "peaks_source.csv").read_text().splitlines()
        assert peaks[0] == "time,peak"
        assert (tmp_path / "out" / "peaks_receiver.csv").exists()

    def test_sweep_command_with_list(self, tmp_path):
        rc = main(["sweep", "--levels", "4,8", "--duration", "2.0", "--csnr-db", "inf",
                   "--out", str(tmp_path)])
        assert rc == 0
        lines = (tmp_path / "sweep.csv").read_text().splitlines()
        assert len(lines) == 3

    def test_reproduce_command(self, tmp_path):
        rc = main(["reproduce", "--id", "fig4", "--out", str(tmp_path)])
        assert rc == 0
        assert (tmp_path / "fig4_staircase.csv").exists()

    def test_config_error_exit_code(self, tmp_path, capsys):
        bad = tmp_path / "bad.json"
        bad.write_text("{broken")
        assert main(["simulate", "--config", str(bad), "--out", str(tmp_path)]) == 2

    def test_runtime_error_exit_code(self, tmp_path, monkeypatch):
        import ajscclink.cli as cli_mod

        def boom(config):
            raise RuntimeError("stage blew up")

        monkeypatch.setattr(cli_mod, "run_link", boom)
        assert main(["simulate", "--out", str(tmp_path)]) == 3

    def test_bad_level_range_is_config_error(self, tmp_path):
        assert main(["sweep", "--levels", "10:5", "--out", str(tmp_path)]) == 2
