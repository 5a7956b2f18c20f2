import json
from pathlib import Path

import numpy as np
import pytest

from andex import cli, harness
from andex.errors import ConfigError


def make_cfg(tmp_path, **kw):
    base = dict(
        experiment="eigenvalue_stats",
        model={"family": "cube_indicator", "m": 2},
        L=41,
        d=1,
        trials=6,
        master_seed=7,
        out_dir=str(tmp_path / "run"),
        overrides={"a_L": 6.0, "R_L": 19, "r_L": 9},
    )
    base.update(kw)
    return harness.ExperimentConfig(**base)


class TestSeeding:
    def test_deterministic(self):
        assert harness.trial_seed(1, 2) == harness.trial_seed(1, 2)

    def test_streams_distinct(self):
        seeds = {
            harness.trial_seed(1, 2, s) for s in ("field", "ppp", "oracle")
        }
        assert len(seeds) == 3

    def test_trials_distinct(self):
        seeds = {harness.trial_seed(5, i) for i in range(1000)}
        assert len(seeds) == 1000

    def test_unknown_stream(self):
        with pytest.raises(KeyError):
            harness.trial_seed(1, 2, "nope")


class TestConfig:
    def test_unknown_experiment(self, tmp_path):
        with pytest.raises(ConfigError):
            make_cfg(tmp_path, experiment="warp_drive")

    def test_bad_trials(self, tmp_path):
        with pytest.raises(ConfigError):
            make_cfg(tmp_path, trials=0)

    def test_bad_dimension(self, tmp_path):
        with pytest.raises(ConfigError):
            make_cfg(tmp_path, d=5)

    def test_from_json_text(self):
        cfg = harness.ExperimentConfig.from_json(
            json.dumps(
                {
                    "experiment": "bar_sweep",
                    "L": 64,
                    "model": {"family": "iid"},
                    "overrides": {"r_L": 9, "a_L": 6.0, "R_L": 15},
                }
            )
        )
        assert cfg.experiment == "bar_sweep"
        assert cfg.trials == 1

    def test_from_json_file(self, tmp_path):
        p = tmp_path / "c.json"
        p.write_text(json.dumps({"experiment": "tail_lemma", "L": 64}))
        cfg = harness.ExperimentConfig.from_json(str(p))
        assert cfg.experiment == "tail_lemma"

    def test_invalid_json(self):
        with pytest.raises(ConfigError):
            harness.ExperimentConfig.from_json("{not json")

    def test_missing_field(self):
        with pytest.raises(ConfigError):
            harness.ExperimentConfig.from_json('{"experiment": "tail_lemma"}')


class TestRunDeterminism:
    def test_same_seed_same_records(self, tmp_path):
        cfg_a = make_cfg(tmp_path, out_dir=str(tmp_path / "a"))
        cfg_b = make_cfg(tmp_path, out_dir=str(tmp_path / "b"))
        harness.run_experiment(cfg_a)
        harness.run_experiment(cfg_b)
        ra = (Path(cfg_a.out_dir) / "records.csv").read_text()
        rb = (Path(cfg_b.out_dir) / "records.csv").read_text()
        assert ra == rb

    def test_workers_match_serial(self, tmp_path):
        cfg_a = make_cfg(tmp_path, out_dir=str(tmp_path / "ser"))
        cfg_b = make_cfg(tmp_path, out_dir=str(tmp_path / "par"))
        harness.run_experiment(cfg_a, workers=1)
        harness.run_experiment(cfg_b, workers=3)
        ra = (Path(cfg_a.out_dir) / "records.csv").read_text()
        rb = (Path(cfg_b.out_dir) / "records.csv").read_text()
        assert ra == rb

    def test_roundtrip_bitwise(self, tmp_path):
        cfg = make_cfg(tmp_path)
        harness.run_experiment(cfg)
        cols, rows = harness._read_records(Path(cfg.out_dir) / "records.csv")
        assert "rescaled_lambda_1" in cols
        # repr round-trip: parsed floats equal the original doubles exactly
        for r in rows:
            assert isinstance(r["lambda_1"], float)

    def test_manifest_contents(self, tmp_path):
        cfg = make_cfg(tmp_path)
        path = harness.run_experiment(cfg)
        manifest = json.loads(path.read_text())
        assert manifest["schema_version"] == harness.SCHEMA_VERSION
        assert manifest["config"]["experiment"] == "eigenvalue_stats"
        assert manifest["trials_failed"] == 0
        assert "rescaled_lambda_1" in manifest["summary"]
        assert manifest["scales"]["a_L"] == 6.0


class TestResume:
    def test_partial_run_resumes(self, tmp_path):
        cfg = make_cfg(tmp_path, trials=3)
        harness.run_experiment(cfg)
        partial = (Path(cfg.out_dir) / "records.csv").read_text()
        cfg6 = make_cfg(tmp_path, trials=6)
        harness.run_experiment(cfg6)
        full = (Path(cfg6.out_dir) / "records.csv").read_text()
        # the first three rows are untouched
        assert full.startswith(partial)
        fresh_dir = tmp_path / "fresh"
        cfg_fresh = make_cfg(tmp_path, trials=6, out_dir=str(fresh_dir))
        harness.run_experiment(cfg_fresh)
        assert (fresh_dir / "records.csv").read_text() == full

    def test_oversized_existing_restarts(self, tmp_path):
        cfg = make_cfg(tmp_path, trials=6)
        harness.run_experiment(cfg)
        cfg3 = make_cfg(tmp_path, trials=3)
        harness.run_experiment(cfg3)
        _, rows = harness._read_records(Path(cfg3.out_dir) / "records.csv")
        assert len(rows) == 3

    def test_corrupt_records_restart(self, tmp_path):
        cfg = make_cfg(tmp_path, trials=3)
        out = Path(cfg.out_dir)
        out.mkdir(parents=True)
        (out / "records.csv").write_text("\x00garbage")
        harness.run_experiment(cfg)
        _, rows = harness._read_records(out / "records.csv")
        assert len(rows) == 3


class TestFailureBudget:
    def test_budget_exceeded_raises(self, tmp_path, monkeypatch):
        cfg = make_cfg(tmp_path, trials=5)

        def bomb(ctx, i):
            raise RuntimeError("boom")

        monkeypatch.setitem(harness._TRIAL_BODIES, "eigenvalue_stats", bomb)
        with pytest.raises(RuntimeError):
            harness.run_experiment(cfg)


class TestRowExperiments:
    def test_tail_lemma(self, tmp_path):
        cfg = make_cfg(
            tmp_path,
            experiment="tail_lemma",
            L=4096,
            overrides={"a_L": 6.0, "R_L": 511, "r_L": 9},
        )
        path = harness.run_experiment(cfg)
        manifest = json.loads(path.read_text())
        assert "max_abs_ratio_err" in manifest["summary"]
        _, rows = harness._read_records(Path(cfg.out_dir) / "records.csv")
        assert len(rows) == 12  # 3 taus x 4 shifts
        for r in rows:
            assert r["restricted"] <= r["exact"] + 1e-12

    def test_bar_sweep_monotone(self, tmp_path):
        cfg = make_cfg(
            tmp_path,
            experiment="bar_sweep",
            L=64,
            overrides={"a_L": 6.0, "R_L": 15, "r_L": 9},
        )
        path = harness.run_experiment(cfg)
        manifest = json.loads(path.read_text())
        for fam, entry in manifest["summary"].items():
            assert entry["monotone_decreasing"]


class TestTrialExperiments:
    def test_potential_extremes(self, tmp_path):
        cfg = make_cfg(
            tmp_path,
            experiment="potential_extremes",
            model={"family": "iid"},
            L=256,
            trials=60,
            overrides={"R_L": 15, "r_L": 9},
        )
        path = harness.run_experiment(cfg)
        manifest = json.loads(path.read_text())
        assert "gumbel_ks" in manifest["tests"]
        assert "poisson_dispersion" in manifest["tests"]

    def test_localisation(self, tmp_path):
        cfg = make_cfg(
            tmp_path,
            experiment="localisation",
            L=83,
            trials=4,
            overrides={"a_L": 6.0, "R_L": 41, "r_L": 9},
        )
        path = harness.run_experiment(cfg)
        manifest = json.loads(path.read_text())
        assert manifest["summary"]["event_counts"]["n"] == 4
        assert "eig_err" in manifest["summary"]

    def test_rank_permutation(self, tmp_path):
        cfg = make_cfg(
            tmp_path,
            experiment="rank_permutation",
            model={"family": "iid"},
            L=512,
            trials=5,
            overrides={"k": 2, "R_L": 63, "r_L": 9},
        )
        path = harness.run_experiment(cfg)
        manifest = json.loads(path.read_text())
        assert "p_ell1_eq_1" in manifest["summary"]
        _, rows = harness._read_records(Path(cfg.out_dir) / "records.csv")
        for r in rows:
            assert r["ell_1"] >= 1 and r["ell_2"] >= 1
            assert r["ell_1"] != r["ell_2"]

    def test_macro_meso(self, tmp_path):
        cfg = make_cfg(
            tmp_path,
            experiment="macro_meso",
            model={"family": "iid"},
            L=60,
            trials=3,
            overrides={"k": 2, "R_L": 13, "r_L": 5, "a_L": 6.0},
        )
        path = harness.run_experiment(cfg)
        manifest = json.loads(path.read_text())
        assert "conditioning" in manifest["summary"]
        assert "rank_1" in manifest["summary"]


class TestReport:
    def test_report_prints_and_passes(self, tmp_path, capsys):
        cfg = make_cfg(
            tmp_path,
            experiment="potential_extremes",
            model={"family": "iid"},
            L=256,
            trials=60,
            overrides={"R_L": 15, "r_L": 9},
        )
        harness.run_experiment(cfg)
        harness.report(cfg.out_dir)
        text = capsys.readouterr().out
        assert "gumbel_ks" in text
        assert (Path(cfg.out_dir) / "cdf_vs_gumbel.csv").exists()

    def test_missing_manifest(self, tmp_path):
        with pytest.raises(FileNotFoundError):
            harness.report(tmp_path)

    def test_schema_mismatch(self, tmp_path):
        (tmp_path / "manifest.json").write_text(
            json.dumps({"schema_version": 999})
        )
        with pytest.raises(ValueError):
            harness.report(tmp_path)


class TestCLI:
    def test_sample_field(self, tmp_path, capsys):
        rc = cli.main(
            [
                "--seed",
                "3",
                "--out",
                str(tmp_path),
                "sample-field",
                "--family",
                "cube_indicator",
                "--param",
                "2",
                "--L",
                "33",
            ]
        )
        assert rc == 0
        out = json.loads(capsys.readouterr().out)
        assert Path(out["file"]).exists()

    def test_spectrum_command(self, capsys):
        rc = cli.main(["spectrum", "--L", "41", "--k", "2"])
        assert rc == 0
        data = json.loads(capsys.readouterr().out)
        assert len(data["eigenvalues"]) == 2

    def test_bar_problem_command(self, capsys):
        rc = cli.main(
            [
                "bar-problem",
                "--family",
                "cube_indicator",
                "--param",
                "2",
                "--a-L",
                "6.0",
                "--r-L",
                "9",
            ]
        )
        assert rc == 0
        data = json.loads(capsys.readouterr().out)
        assert data["bar_lambda"] < 0

    def test_ppp_reference_command(self, capsys):
        rc = cli.main(["--seed", "1", "ppp-reference", "--b", "0.0"])
        assert rc == 0
        data = json.loads(capsys.readouterr().out)
        assert data["ell"][:3] == [1, 2, 3]

    def test_experiment_and_report(self, tmp_path, capsys):
        cfg = {
            "experiment": "bar_sweep",
            "L": 64,
            "d": 1,
            "model": {"family": "iid"},
            "overrides": {"a_L": 6.0, "R_L": 15, "r_L": 9},
            "out_dir": str(tmp_path / "run"),
        }
        p = tmp_path / "cfg.json"
        p.write_text(json.dumps(cfg))
        rc = cli.main(["--config", str(p), "experiment"])
        assert rc == 0
        capsys.readouterr()
        rc = cli.main(["report", str(tmp_path / "run"), "--check"])
        assert rc == 0

    def test_missing_config_usage_error(self, capsys):
        assert cli.main(["experiment"]) == cli.EXIT_USAGE

    def test_config_error_exit_code(self, tmp_path):
        p = tmp_path / "bad.json"
        p.write_text(json.dumps({"experiment": "warp", "L": 64}))
        assert cli.main(["--config", str(p), "experiment"]) == cli.EXIT_CONFIG

    def test_runtime_error_exit_code(self, tmp_path):
        assert cli.main(["report", str(tmp_path / "nope")]) == cli.EXIT_RUNTIME

    def test_override_dot_path(self, tmp_path, capsys):
        cfg = {
            "experiment": "bar_sweep",
            "L": 64,
            "model": {"family": "iid"},
            "overrides": {"a_L": 6.0, "R_L": 15, "r_L": 9},
            "out_dir": str(tmp_path / "r1"),
        }
        p = tmp_path / "cfg.json"
        p.write_text(json.dumps(cfg))
        rc = cli.main(
            [
                "--config",
                str(p),
                "--override",
                "overrides.ratios=[10.0, 20.0]",
                "--out",
                str(tmp_path / "r2"),
                "experiment",
            ]
        )
        assert rc == 0
        manifest = json.loads((tmp_path / "r2" / "manifest.json").read_text())
        assert manifest["config"]["overrides"]["ratios"] == [10.0, 20.0]
