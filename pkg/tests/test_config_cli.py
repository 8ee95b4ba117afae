"""Configuration resolution, artifact round-trips, and the CLI surface."""

import json

import numpy as np
import pytest

from mapoca.cli import main
from mapoca.config import ConfigError, parse_config, resolve_config
from mapoca.trainer import MetricsRow, MetricsSeries, read_metrics_csv


class TestDefaults:
    def test_general_column_for_dungeon_run(self):
        cfg = resolve_config({"env": "dungeon_run"})
        assert cfg.minibatch_size == 1024
        assert cfg.buffer_size == 10240
        assert cfg.learning_rate == 0.0003
        assert cfg.gamma == 0.99
        assert cfg.lam == 0.95
        assert cfg.clip_epsilon == 0.2
        assert cfg.entropy_beta == 0.01
        assert cfg.hidden_units == 256
        assert cfg.fc_layers == 2
        assert cfg.attention_heads == 4
        assert cfg.attention_embedding == 256
        assert cfg.attention_layers == 1
        assert cfg.epochs == 3

    def test_simple_spread_column(self):
        cfg = resolve_config({"env": "simple_spread"})
        assert cfg.minibatch_size == 512
        assert cfg.buffer_size == 5120
        assert cfg.hidden_units == 128
        assert cfg.attention_embedding == 128

    def test_provenance_tracks_default_vs_user(self):
        cfg = resolve_config({"env": "dungeon_run", "gamma": 0.9})
        assert cfg.provenance["gamma"] == "user"
        assert cfg.provenance["lambda"] == "default"
        assert cfg.provenance["env.episode_limit"] == "default"
        for key in cfg.as_flat_dict():
            assert cfg.provenance.get(key) in ("default", "user")


class TestValidation:
    def test_unknown_key_reported_by_name(self):
        with pytest.raises(ConfigError, match="entropyy_beta"):
            resolve_config({"entropyy_beta": 0.1})

    def test_out_of_range_values(self):
        with pytest.raises(ConfigError, match="gamma"):
            resolve_config({"gamma": 1.5})
        with pytest.raises(ConfigError, match="lambda"):
            resolve_config({"lambda": -0.1})
        with pytest.raises(ConfigError, match="minibatch"):
            resolve_config({"minibatch_size": 0})

    def test_attention_keys_rejected_for_non_attention_algorithms(self):
        for algorithm in ("ppo", "coma"):
            with pytest.raises(ConfigError, match="attention_heads"):
                resolve_config({"algorithm": algorithm, "attention_heads": 2})

    def test_n_max_only_for_coma(self):
        cfg = resolve_config({"algorithm": "coma", "env": "baton_relay",
                              "env.n_max": 8})
        assert cfg.n_max == 8
        with pytest.raises(ConfigError, match="n_max"):
            resolve_config({"algorithm": "mapoca", "env.n_max": 8})

    def test_coma_without_n_max_defaults_to_environment_maximum(self):
        cfg = resolve_config({"algorithm": "coma", "env": "baton_relay"})
        assert cfg.n_max is None  # resolved to orb_goal + 1 by the trainer
        assert cfg.provenance["env.n_max"] == "default"

    def test_env_keys_validated_per_environment(self):
        with pytest.raises(ConfigError, match="env.orb_goal"):
            resolve_config({"env": "simple_spread", "env.orb_goal": 4})


class TestConfigFile:
    def test_parse_file_with_comments(self, tmp_path):
        path = tmp_path / "run.cfg"
        path.write_text(
            "# a comment\n"
            "algorithm = coma\n"
            "env = baton_relay\n"
            "gamma = 0.98  # inline comment\n"
            "env.orb_goal = 3\n"
            "normalize_advantages = false\n"
        )
        cfg = parse_config(path)
        assert cfg.algorithm == "coma"
        assert cfg.gamma == 0.98
        assert cfg.env_options["orb_goal"] == 3
        assert cfg.normalize_advantages is False

    def test_missing_file_rejected(self):
        with pytest.raises(ConfigError, match="not found"):
            parse_config("/nonexistent/path.cfg")

    def test_duplicate_key_rejected(self, tmp_path):
        path = tmp_path / "dup.cfg"
        path.write_text("gamma = 0.9\ngamma = 0.8\n")
        with pytest.raises(ConfigError, match="duplicate"):
            parse_config(path)

    def test_flat_dict_round_trips_through_a_file(self, tmp_path):
        cfg = resolve_config({"env": "dungeon_run", "gamma": 0.9, "seed": 3})
        path = tmp_path / "echo.cfg"
        path.write_text(
            "".join(f"{k} = {v}\n" for k, v in cfg.as_flat_dict().items())
        )
        again = parse_config(path)
        assert again.as_flat_dict() == cfg.as_flat_dict()


class TestMetricsRoundTrip:
    def test_csv_parse_emit_identity(self, tmp_path):
        rows = [
            MetricsRow(10, 1, -1.5, 25.0, 0.123456789012345, 0.2, -0.3,
                       1.0986122886681098, 2.5),
            MetricsRow(20, 3, 0.0, 12.5, 1e-9, 0.0, 0.25, 0.5, 3.0),
        ]
        series = MetricsSeries(rows=rows)
        path = tmp_path / "metrics.csv"
        series.write_csv(path)
        parsed = read_metrics_csv(path)
        assert parsed.rows == rows
        parsed.write_csv(tmp_path / "again.csv")
        assert (tmp_path / "again.csv").read_bytes() == path.read_bytes()

    def test_steps_must_strictly_increase(self):
        rows = [
            MetricsRow(10, 1, 0, 0, 0, 0, 0, 0, 1),
            MetricsRow(10, 2, 0, 0, 0, 0, 0, 0, 1),
        ]
        with pytest.raises(ValueError, match="strictly increase"):
            MetricsSeries(rows=rows)

    def test_values_must_be_finite(self):
        with pytest.raises(ValueError, match="non-finite"):
            MetricsSeries(rows=[MetricsRow(1, 1, float("nan"), 0, 0, 0, 0, 0, 1)])


SMALL_RUN = [
    "--set", "algorithm=ppo", "--set", "env=simple_spread",
    "--set", "max_steps=60", "--set", "buffer_size=75",
    "--set", "minibatch_size=25", "--set", "hidden_units=8",
    "--set", "seed=1",
]


class TestCli:
    def test_train_writes_csv_and_metadata(self, tmp_path):
        out = tmp_path / "runs"
        assert main(["train", *SMALL_RUN, "--out", str(out)]) == 0
        csv_path = out / "metrics_ppo_simple_spread_seed1.csv"
        series = read_metrics_csv(csv_path)
        assert len(series) >= 1
        steps = series.column("step")
        assert np.all(np.diff(steps) > 0)
        metadata = json.loads((out / "metadata_ppo_simple_spread_seed1.json").read_text())
        assert metadata["config"]["algorithm"] == "ppo"
        assert metadata["provenance"]["max_steps"] == "user"
        assert metadata["metrics_csv"] == csv_path.name

    def test_same_invocation_twice_is_byte_identical(self, tmp_path):
        out_a, out_b = tmp_path / "a", tmp_path / "b"
        assert main(["train", *SMALL_RUN, "--out", str(out_a)]) == 0
        assert main(["train", *SMALL_RUN, "--out", str(out_b)]) == 0
        name = "metrics_ppo_simple_spread_seed1.csv"
        assert (out_a / name).read_bytes() == (out_b / name).read_bytes()

    def test_config_error_exit_code(self, capsys):
        assert main(["train", "--set", "bogus_key=1"]) == 2
        assert "bogus_key" in capsys.readouterr().err

    def test_coma_n_max_below_population_is_a_config_error(self, tmp_path):
        code = main([
            "train", "--set", "algorithm=coma", "--set", "env=baton_relay",
            "--set", "env.n_max=2", "--set", "max_steps=50",
            "--set", "buffer_size=50", "--set", "minibatch_size=25",
            "--out", str(tmp_path),
        ])
        assert code == 2

    def test_numeric_and_environment_fault_exit_codes(self, tmp_path, monkeypatch):
        from mapoca import cli
        from mapoca.envs import EnvironmentFault
        from mapoca.trainer import NumericalAbort

        def numeric(_cfg):
            raise NumericalAbort("injected")

        def fault(_cfg):
            raise EnvironmentFault("injected")

        monkeypatch.setitem(cli.TRAINERS, "mapoca", numeric)
        assert main(["train", "--set", "max_steps=1", "--out", str(tmp_path)]) == 3
        monkeypatch.setitem(cli.TRAINERS, "mapoca", fault)
        assert main(["train", "--set", "max_steps=1", "--out", str(tmp_path)]) == 4

    def test_meanlab_guard_exit_code(self, tmp_path):
        code = main([
            "meanlab", "--ranges", "2-10", "--models", "fc", "--seeds", "1",
            "--steps", "5", "--o-abs", "0.4", "--out", str(tmp_path),
        ])
        assert code == 2

    def test_meanlab_run_counts_and_outputs(self, tmp_path):
        code = main([
            "meanlab", "--ranges", "8-10", "--seeds", "2", "--steps", "20",
            "--log-interval", "10", "--out", str(tmp_path), "--no-figures",
        ])
        assert code == 0
        run_files = sorted(p.name for p in tmp_path.glob("meanlab_*seed*.csv"))
        assert len(run_files) == 4  # 2 models x 2 seeds
        agg = (tmp_path / "meanlab_aggregate.csv").read_text().splitlines()
        assert agg[0] == "config,step,mean_mse,ci95,n_seeds"
        assert len(agg) == 1 + 2 * 3  # two configs, three logged steps

    def test_validate_config_prints_provenance(self, capsys):
        assert main(["validate-config", "--set", "env=dungeon_run"]) == 0
        out = capsys.readouterr().out
        assert "minibatch_size = 1024  [default]" in out
        assert "env = dungeon_run  [user]" in out

    def test_compare_on_identical_runs_has_zero_ci(self, tmp_path, capsys):
        out_a = tmp_path / "runs_a"
        main(["train", *SMALL_RUN, "--out", str(out_a)])
        # same seed again into another dir: identical series
        out_b = tmp_path / "runs_b"
        main(["train", *SMALL_RUN, "--out", str(out_b)])
        code = main([
            "compare", str(out_a), str(out_b), "--out", str(tmp_path / "cmp"),
            "--no-figures",
        ])
        assert code == 0
        lines = (tmp_path / "cmp" / "compare_summary.csv").read_text().splitlines()
        header = lines[0].split(",")
        row = dict(zip(header, lines[1].split(",")))
        assert row["env"] == "simple_spread"
        assert row["n_seeds"] == "2"
        assert float(row["ci95"]) == 0.0

    def test_compare_rejects_empty_dirs(self, tmp_path):
        assert main(["compare", str(tmp_path), "--no-figures", "--out",
                     str(tmp_path / "cmp")]) == 2

    def test_output_root_env_var(self, tmp_path, monkeypatch):
        monkeypatch.setenv("MAPOCA_OUTPUT_ROOT", str(tmp_path))
        assert main(["train", *SMALL_RUN, "--out", "nested/runs"]) == 0
        assert (tmp_path / "nested/runs/metrics_ppo_simple_spread_seed1.csv").exists()

    def test_metadata_round_trips(self, tmp_path):
        out = tmp_path / "runs"
        main(["train", *SMALL_RUN, "--out", str(out)])
        path = out / "metadata_ppo_simple_spread_seed1.json"
        metadata = json.loads(path.read_text())
        rewritten = json.dumps(metadata, indent=2, sort_keys=True) + "\n"
        assert rewritten == path.read_text()


class TestFigures:
    def test_meanlab_and_compare_figures_render(self, tmp_path):
        code = main([
            "meanlab", "--ranges", "8-10", "--models", "fc", "--seeds", "1",
            "--steps", "10", "--log-interval", "5", "--out", str(tmp_path / "ml"),
        ])
        assert code == 0
        assert (tmp_path / "ml" / "meanlab_curves.png").exists()

        out = tmp_path / "runs"
        main(["train", *SMALL_RUN, "--out", str(out)])
        assert main(["compare", str(out), "--out", str(tmp_path / "cmp")]) == 0
        assert (tmp_path / "cmp" / "compare_simple_spread.png").exists()
