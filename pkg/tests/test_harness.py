"""Tests for the experiment harness and CLI: config handling, dispatch,
serialization determinism, exit codes, and the preset catalog."""

import json
from pathlib import Path

import numpy as np
import pytest

from torusmc import cli, harness
from torusmc.harness import (
    CATALOG,
    ConfigError,
    ExperimentConfig,
    apply_defaults,
    catalog_entry,
    load_config,
    run,
    validate_config,
    write_bundle,
)

REPO = Path(__file__).resolve().parents[1]


def _cfg(**kw):
    return apply_defaults(ExperimentConfig.from_mapping(kw))


class TestConfig:
    def test_unknown_key_rejected(self):
        with pytest.raises(ConfigError, match="bogus"):
            ExperimentConfig.from_mapping({"experiment": "fit", "bogus": 1})

    def test_lists_become_tuples(self):
        cfg = ExperimentConfig.from_mapping(
            {"experiment": "moments", "modes": [[0, 0], [1, 0]], "times": [0.5]}
        )
        assert cfg.modes == ((0, 0), (1, 0))
        assert cfg.times == (0.5,)

    def test_defaults_fill_per_experiment(self):
        cfg = _cfg(experiment="fit", flow="wave", object="lin", alpha=0.3)
        assert cfg.N == 64 and cfg.times == (1.0,)
        assert cfg.fit_lo == 4.0 and cfg.fit_hi == 24.0
        mom = _cfg(experiment="moments", flow="heat", object="wick", alpha=0.4)
        assert mom.times == (0.5,) and mom.modes == ((0, 0), (1, 0), (3, 2))
        cau = _cfg(experiment="cauchy", flow="wave", object="lin", alpha=0.3)
        assert cau.s == pytest.approx(-0.4)

    def test_T_and_M_derivation(self):
        via_T = _cfg(experiment="solve", flow="heat", alpha=0.3, N=8, h=1.0 / 32, T=0.25)
        assert via_T.M == 9
        via_M = _cfg(experiment="solve", flow="heat", alpha=0.3, N=8, h=1.0 / 32, M=9)
        assert via_M.T == pytest.approx(0.25)

    def test_echo_roundtrips(self):
        cfg = _cfg(experiment="moments", flow="heat", object="wick", alpha=0.4, N=8)
        again = ExperimentConfig.from_mapping(cfg.echo())
        assert again == cfg


class TestValidate:
    def test_d_not_two_rejected(self):
        errors, _ = validate_config(_cfg(experiment="moments", d=3))
        assert any("d=3" in e for e in errors)

    def test_resolution_error_names_constraint(self):
        cfg = _cfg(
            experiment="moments", flow="wave", object="duh", alpha=0.3,
            track_band=16, h=0.25,
        )
        errors, _ = validate_config(cfg)
        assert any("h*<track_band> <= 0.5" in e for e in errors)

    def test_above_threshold_warns(self):
        cfg = _cfg(experiment="fit", flow="wave", object="duh", alpha=0.6)
        errors, warnings = validate_config(cfg)
        assert not errors
        assert any("divergence threshold 0.5" in w for w in warnings)

    def test_diverge_needs_second_chaos_object(self):
        errors, _ = validate_config(_cfg(experiment="diverge", object="lin", alpha=0.3))
        assert any("wick or duh" in e for e in errors)

    def test_ladder_rules(self):
        errors, _ = validate_config(
            _cfg(experiment="cauchy", object="lin", alpha=0.3, N_ladder=[16, 8])
        )
        assert any("increasing" in e for e in errors)
        errors, _ = validate_config(
            _cfg(experiment="diverge", object="wick", alpha=0.3, N_ladder=[8, 16, 32])
        )
        assert any("5 ladder levels" in e for e in errors)

    def test_sharpness_wave_only(self):
        errors, _ = validate_config(_cfg(experiment="sharpness", flow="heat", alpha=0.3))
        assert any("wave" in e for e in errors)

    def test_unknown_experiment(self):
        errors, _ = validate_config(ExperimentConfig(experiment="teleport"))
        assert errors


class TestRunners:
    def test_moments_summary_recomputable_from_rows(self):
        cfg = _cfg(
            experiment="moments", flow="heat", object="wick", alpha=0.4,
            N=8, replicas=80, times=[0.5], seed=3,
        )
        bundle = run(cfg)
        assert bundle.header == ("n_x", "n_y", "t", "mc_mean", "mc_se", "oracle", "z")
        zs = [abs(r[6]) for r in bundle.rows]
        assert bundle.summary["max_abs_z"] == pytest.approx(max(zs))
        assert bundle.passed == (max(zs) <= cfg.z_max)

    def test_moments_res_has_no_oracle(self):
        cfg = _cfg(
            experiment="moments", flow="heat", object="res", alpha=0.4,
            N=4, replicas=10, times=[0.25], modes=[[1, 0]], seed=3, track_band=4,
        )
        bundle = run(cfg)
        assert np.isnan(bundle.rows[0][5]) and np.isnan(bundle.rows[0][6])
        assert bundle.passed

    def test_fit_heat_lin_exact_exponent(self):
        # the stationary heat covariance is an exact power law, so the fitted
        # exponent hits -alpha to rounding
        cfg = _cfg(experiment="fit", flow="heat", object="lin", alpha=0.4, N=32)
        bundle = run(cfg)
        assert bundle.summary["s0"] == pytest.approx(-0.4, abs=1e-10)
        assert bundle.summary["r_squared"] == pytest.approx(1.0, abs=1e-12)
        assert bundle.passed

    def test_fit_window_gate_can_empty(self):
        cfg = _cfg(
            experiment="fit", flow="wave", object="duh", alpha=0.3,
            N=16, times=[0.5], fit_lo=4.0, fit_hi=12.0, track_band=12,
        )
        with pytest.raises(ValueError, match="window empty"):
            run(cfg)

    def test_diverge_bounded_below_threshold(self):
        cfg = _cfg(
            experiment="diverge", flow="wave", object="wick", alpha=0.3,
            N_ladder=[8, 16, 32, 64, 128], times=[0.5],
        )
        bundle = run(cfg)
        assert bundle.summary["classification"] == "bounded"
        assert bundle.summary["predicted_classification"] == "bounded"
        assert bundle.passed
        assert [r[0] for r in bundle.rows] == [8, 16, 32, 64, 128]

    def test_predicted_growth_table(self):
        assert harness._predicted_growth("wick", "wave", 0.3) == ("bounded", None)
        assert harness._predicted_growth("duh", "wave", 0.5) == ("logarithmic", None)
        cls, p = harness._predicted_growth("duh", "wave", 0.75)
        assert cls == "power" and p == pytest.approx(1.0)
        cls, p = harness._predicted_growth("duh", "heat", 1.25)
        assert cls == "power" and p == pytest.approx(1.0)

    def test_solve_covers_horizon(self):
        cfg = _cfg(
            experiment="solve", flow="heat", alpha=0.4, N=8, h=1.0 / 64, T=0.25,
            expansion="first_order", seed=9,
        )
        bundle = run(cfg)
        assert bundle.summary["covered_T"] == pytest.approx(0.25)
        assert not bundle.summary["blowup"] and bundle.passed
        assert len(bundle.rows) == 17

    def test_solve_blowup_fails_run(self):
        cfg = _cfg(
            experiment="solve", flow="heat", alpha=0.4, N=8, h=1.0 / 64, T=1.0,
            expansion="first_order", amplitude=50.0, blowup_guard=1e3, seed=9,
        )
        bundle = run(cfg)
        assert bundle.summary["blowup"] and not bundle.passed
        assert bundle.summary["covered_T"] < 1.0
        assert bundle.summary["blowup_time"] == pytest.approx(bundle.rows[-1][0])

    def test_reconstruct_small(self):
        cfg = _cfg(
            experiment="reconstruct", flow="heat", alpha=0.3, N=8,
            h=1.0 / 128, T=0.125, expansion="second_order", seed=4,
        )
        bundle = run(cfg)
        assert bundle.summary["rel_sup_coarse"] <= 5e-2
        assert bundle.summary["decreasing"] and bundle.passed

    def test_cauchy_object_ladder(self):
        cfg = _cfg(
            experiment="cauchy", flow="heat", object="lin", alpha=0.3,
            N_ladder=[4, 8, 16], times=[1.0], replicas=50, seed=2,
        )
        bundle = run(cfg)
        assert len(bundle.rows) == 2
        assert bundle.rows[0][:2] == (4, 8) and bundle.rows[1][:2] == (8, 16)

    def test_run_rejects_invalid(self):
        with pytest.raises(ConfigError, match="d=5"):
            run(_cfg(experiment="moments", d=5))


class TestSerialization:
    def test_write_bundle_files(self, tmp_path):
        cfg = _cfg(
            experiment="moments", flow="heat", object="wick", alpha=0.4,
            N=8, replicas=40, times=[0.5], seed=3,
        )
        bundle = run(cfg)
        csv_path = write_bundle(bundle, tmp_path)
        assert csv_path.name == "moments.csv"
        lines = csv_path.read_text().splitlines()
        assert lines[0] == "n_x,n_y,t,mc_mean,mc_se,oracle,z"
        assert len(lines) == 1 + len(bundle.rows)
        # shortest-round-trip floats: parsing the CSV reproduces the values
        first = lines[1].split(",")
        assert float(first[3]) == bundle.rows[0][3]
        summary = json.loads((tmp_path / "summary.json").read_text())
        assert summary["pass"] is True
        meta = json.loads((tmp_path / "meta.json").read_text())
        assert meta["version"] and "wall_time_s" in meta
        assert meta["config"]["experiment"] == "moments"
        assert meta["lp_block0"] == "|n| <= 1"

    def test_rerun_bit_identical(self, tmp_path):
        kw = dict(
            experiment="moments", flow="heat", object="wick", alpha=0.4,
            N=8, replicas=40, times=[0.5], seed=3,
        )
        a = write_bundle(run(_cfg(**kw)), tmp_path / "a")
        b = write_bundle(run(_cfg(**kw)), tmp_path / "b")
        assert a.read_bytes() == b.read_bytes()
        assert (tmp_path / "a/summary.json").read_bytes() == (tmp_path / "b/summary.json").read_bytes()

    def test_worker_count_does_not_change_csv(self, tmp_path):
        kw = dict(
            experiment="moments", flow="heat", object="wick", alpha=0.4,
            N=8, replicas=75, times=[0.5], seed=3,
        )
        a = write_bundle(run(_cfg(**kw, workers=1)), tmp_path / "w1")
        b = write_bundle(run(_cfg(**kw, workers=3)), tmp_path / "w3")
        assert a.read_bytes() == b.read_bytes()


class TestCli:
    def test_usage_error_exit_code(self, tmp_path, capsys):
        rc = cli.main(["moments", "--d", "3", "--out", str(tmp_path)])
        assert rc == 2
        assert "d=3" in capsys.readouterr().err

    def test_assertion_failure_exit_code(self, tmp_path):
        rc = cli.main([
            "moments", "--flow", "heat", "--object", "wick", "--alpha", "0.4",
            "--N", "8", "--replicas", "40", "--times", "0.5", "--z-max", "1e-6",
            "--seed", "3", "--out", str(tmp_path),
        ])
        assert rc == 3

    def test_pass_exit_code_and_outputs(self, tmp_path):
        rc = cli.main([
            "fit", "--flow", "heat", "--object", "lin", "--alpha", "0.4",
            "--N", "32", "--out", str(tmp_path),
        ])
        assert rc == 0
        assert (tmp_path / "fit.csv").exists()
        assert (tmp_path / "summary.json").exists()
        assert (tmp_path / "meta.json").exists()

    def test_list_catalog(self, capsys):
        assert cli.main(["list"]) == 0
        out = capsys.readouterr().out
        assert len(CATALOG) >= 7
        for entry in CATALOG:
            assert entry.name in out

    def test_validate_paths(self, capsys):
        rc = cli.main([
            "validate", "--experiment", "fit", "--flow", "wave", "--object", "duh",
            "--alpha", "0.6",
        ])
        assert rc == 0
        out = capsys.readouterr().out
        assert "divergence threshold" in out and "config ok" in out
        rc = cli.main([
            "validate", "--experiment", "moments", "--flow", "wave",
            "--object", "duh", "--alpha", "0.3", "--track-band", "16", "--h", "0.25",
        ])
        assert rc == 2

    def test_config_file_and_conflict(self, tmp_path, capsys):
        cfgfile = tmp_path / "c.toml"
        cfgfile.write_text(
            'experiment = "fit"\nflow = "heat"\nobject = "lin"\nalpha = 0.4\nN = 32\n'
        )
        rc = cli.main(["fit", "--config", str(cfgfile), "--out", str(tmp_path / "o")])
        assert rc == 0
        rc = cli.main(["diverge", "--config", str(cfgfile), "--out", str(tmp_path / "o2")])
        assert rc == 2

    def test_cli_rerun_bit_identical(self, tmp_path):
        argv = [
            "moments", "--flow", "heat", "--object", "wick", "--alpha", "0.4",
            "--N", "8", "--replicas", "40", "--times", "0.5", "--seed", "3",
        ]
        assert cli.main(argv + ["--out", str(tmp_path / "r1")]) == 0
        assert cli.main(argv + ["--out", str(tmp_path / "r2")]) == 0
        assert (tmp_path / "r1/moments.csv").read_bytes() == (tmp_path / "r2/moments.csv").read_bytes()

    def test_parsers(self):
        assert cli._parse_times("0.25,0.5") == (0.25, 0.5)
        assert cli._parse_modes("0,0;1,0;3,-2") == ((0, 0), (1, 0), (3, -2))
        assert cli._parse_ladder("8,16,32") == (8, 16, 32)


class TestCatalog:
    def test_catalog_entries_valid(self):
        for entry in CATALOG:
            cfg = apply_defaults(ExperimentConfig.from_mapping(entry.config))
            errors, _ = validate_config(cfg)
            assert not errors, (entry.name, errors)

    def test_configs_dir_mirrors_catalog(self):
        for entry in CATALOG:
            path = REPO / "configs" / f"{entry.name}.toml"
            assert path.exists(), path
            assert load_config(path) == entry.config

    def test_catalog_lookup(self):
        entry = catalog_entry("lin-decay-wave")
        assert entry.config["experiment"] == "fit"
        with pytest.raises(ConfigError):
            catalog_entry("no-such-preset")
