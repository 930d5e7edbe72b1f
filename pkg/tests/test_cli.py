import json
from pathlib import Path

import numpy as np
import pytest
import yaml

from freeflyer_dock.cli import (
    EXIT_CONFIG,
    EXIT_EMPTY,
    EXIT_FINGERPRINT,
    EXIT_OK,
    main,
)

TINY = {
    "env": {"episode_length": 12},
    "ppo": {
        "horizon": 8,
        "n_envs": 2,
        "total_steps": 64,
        "epochs": 2,
        "minibatches": 2,
        "checkpoint_interval": 2,
        "hidden": [16, 16],
    },
}


def write_config(tmp_path, extra=None, name="config.yaml"):
    data = json.loads(json.dumps(TINY))
    for key, value in (extra or {}).items():
        data.setdefault(key, {}).update(value) if isinstance(value, dict) else data.__setitem__(key, value)
    path = tmp_path / name
    path.write_text(yaml.safe_dump(data))
    return path


class TestTrain:
    def test_creates_run_directory_with_artifacts(self, tmp_path):
        cfg = write_config(tmp_path)
        out = tmp_path / "run"
        assert main(["train", "--config", str(cfg), "--out", str(out)]) == EXIT_OK
        assert (out / "config.yaml").exists()
        assert (out / "train_log.jsonl").exists()
        assert (out / "checkpoints" / "ckpt_final.json").exists()
        checkpoints = list((out / "checkpoints").glob("ckpt_*.json"))
        assert len(checkpoints) >= 2  # periodic plus final

    def test_invalid_config_exits_2_with_field_path(self, tmp_path, capsys):
        cfg = write_config(tmp_path, extra={"rewards": {"kappa_p": -1.0}})
        assert main(["train", "--config", str(cfg), "--out", str(tmp_path / "x")]) == EXIT_CONFIG
        assert "rewards.kappa_p" in capsys.readouterr().err

    def test_unknown_key_exits_2(self, tmp_path, capsys):
        cfg = write_config(tmp_path, extra={"rewards": {"kappa_zz": 1.0}})
        assert main(["train", "--config", str(cfg), "--out", str(tmp_path / "x")]) == EXIT_CONFIG
        assert "kappa_zz" in capsys.readouterr().err

    def test_byte_identical_logs_for_same_seed(self, tmp_path):
        cfg = write_config(tmp_path)
        out_a, out_b = tmp_path / "a", tmp_path / "b"
        assert main(["train", "--config", str(cfg), "--seed", "7", "--out", str(out_a)]) == EXIT_OK
        assert main(["train", "--config", str(cfg), "--seed", "7", "--out", str(out_b)]) == EXIT_OK
        log_a = (out_a / "train_log.jsonl").read_bytes()
        log_b = (out_b / "train_log.jsonl").read_bytes()
        assert log_a == log_b
        ckpt_a = (out_a / "checkpoints" / "ckpt_final.json").read_bytes()
        ckpt_b = (out_b / "checkpoints" / "ckpt_final.json").read_bytes()
        assert ckpt_a == ckpt_b

    def test_different_seeds_differ(self, tmp_path):
        cfg = write_config(tmp_path)
        out_a, out_b = tmp_path / "a", tmp_path / "b"
        main(["train", "--config", str(cfg), "--seed", "1", "--out", str(out_a)])
        main(["train", "--config", str(cfg), "--seed", "2", "--out", str(out_b)])
        assert (out_a / "train_log.jsonl").read_bytes() != (out_b / "train_log.jsonl").read_bytes()

    def test_snapshot_reparses_to_resolved_config(self, tmp_path):
        from freeflyer_dock.config import load_run_config

        cfg = write_config(tmp_path, extra={"ablation": {
            "id": "D", "drag_dynamics": True, "polarity_mode": "alternating", "drag_penalty_enabled": False,
        }})
        out = tmp_path / "run"
        assert main(["train", "--config", str(cfg), "--out", str(out)]) == EXIT_OK
        snapshot = load_run_config(out / "config.yaml")
        assert snapshot.rewards.weights.drag == 0.0  # override is visible
        assert snapshot == load_run_config(cfg).resolved()


class TestEval:
    @pytest.fixture()
    def trained(self, tmp_path):
        cfg = write_config(tmp_path)
        out = tmp_path / "run"
        main(["train", "--config", str(cfg), "--out", str(out)])
        return out

    def test_eval_writes_summary_and_records(self, tmp_path, trained):
        ckpt = trained / "checkpoints" / "ckpt_final.json"
        out = tmp_path / "eval"
        assert main(["eval", "--checkpoint", str(ckpt), "--n-envs", "3", "--out", str(out)]) == EXIT_OK
        header = (out / "summary.csv").read_text().splitlines()[0]
        assert header.split(",") == [
            "Config", "Final Pos Err (m)", "Final Ori Err (deg)", "% Pos < thresh",
            "% Ori < thresh", "% Momentary Achievement", "% Stable Docking Success",
            "% Time Pos < thresh", "% Time Ori < thresh",
        ]
        assert len((out / "records.jsonl").read_text().splitlines()) == 3
        assert (out / "usage.csv").exists()

    def test_single_episode_eval(self, tmp_path, trained):
        ckpt = trained / "checkpoints" / "ckpt_final.json"
        out = tmp_path / "eval1"
        assert main(["eval", "--checkpoint", str(ckpt), "--n-envs", "1", "--out", str(out)]) == EXIT_OK
        assert len((out / "records.jsonl").read_text().splitlines()) == 1

    def test_eval_deterministic(self, tmp_path, trained):
        ckpt = trained / "checkpoints" / "ckpt_final.json"
        out_a, out_b = tmp_path / "ea", tmp_path / "eb"
        main(["eval", "--checkpoint", str(ckpt), "--n-envs", "2", "--seed", "3", "--out", str(out_a)])
        main(["eval", "--checkpoint", str(ckpt), "--n-envs", "2", "--seed", "3", "--out", str(out_b)])
        assert (out_a / "records.jsonl").read_bytes() == (out_b / "records.jsonl").read_bytes()

    def test_fingerprint_mismatch_exits_4(self, tmp_path, trained, capsys):
        ckpt = trained / "checkpoints" / "ckpt_final.json"
        other_cfg = write_config(tmp_path, extra={"rewards": {"kappa_p": 0.9}}, name="other.yaml")
        out = tmp_path / "eval"
        code = main([
            "eval", "--checkpoint", str(ckpt), "--config", str(other_cfg),
            "--n-envs", "1", "--out", str(out),
        ])
        assert code == EXIT_FINGERPRINT
        assert "mismatch" in capsys.readouterr().err

    def test_allow_mismatch_overrides(self, tmp_path, trained):
        ckpt = trained / "checkpoints" / "ckpt_final.json"
        other_cfg = write_config(tmp_path, extra={"rewards": {"kappa_p": 0.9}}, name="other.yaml")
        out = tmp_path / "eval"
        code = main([
            "eval", "--checkpoint", str(ckpt), "--config", str(other_cfg),
            "--n-envs", "1", "--out", str(out), "--allow-mismatch",
        ])
        assert code == EXIT_OK

    def test_corrupted_checkpoint_nonzero_exit(self, tmp_path, trained, capsys):
        bad = tmp_path / "bad.json"
        bad.write_text("{ not json")
        out = tmp_path / "eval"
        cfg = trained / "config.yaml"
        code = main(["eval", "--checkpoint", str(bad), "--config", str(cfg), "--n-envs", "1", "--out", str(out)])
        assert code not in (EXIT_OK,)
        assert "checkpoint" in capsys.readouterr().err


class TestAblateAndReport:
    def test_two_configs_one_seed(self, tmp_path):
        cfg = write_config(tmp_path)
        out = tmp_path / "study"
        code = main([
            "ablate", "--configs", "A,B", "--seeds", "0", "--config", str(cfg),
            "--out", str(out), "--eval-envs", "2",
        ])
        assert code == EXIT_OK
        table = (out / "metrics_summary.csv").read_text().splitlines()
        assert len(table) == 3  # header + A + B
        assert table[1].startswith("A,")
        assert table[2].startswith("B,")
        usage = (out / "propeller_usage.csv").read_text().splitlines()
        assert usage[0].split(",") == ["Config"] + [f"u{i}" for i in range(1, 9)]
        assert len(usage) == 3

    def test_config_c_trains_same_sign(self, tmp_path):
        from freeflyer_dock.config import load_run_config

        cfg = write_config(tmp_path)
        out = tmp_path / "study"
        code = main([
            "ablate", "--configs", "C", "--seeds", "0", "--config", str(cfg),
            "--out", str(out), "--eval-envs", "1",
        ])
        assert code == EXIT_OK
        snapshot = load_run_config(out / "C" / "seed_0" / "config.yaml")
        assert snapshot.propulsion.polarity_mode == "same_sign"

    def test_config_d_zeroes_drag_weight(self, tmp_path):
        from freeflyer_dock.config import load_run_config

        cfg = write_config(tmp_path)
        out = tmp_path / "study"
        main(["ablate", "--configs", "D", "--seeds", "0", "--config", str(cfg), "--out", str(out), "--eval-envs", "1"])
        snapshot = load_run_config(out / "D" / "seed_0" / "config.yaml")
        assert snapshot.rewards.weights.drag == 0.0

    def test_bad_config_id_exits_2(self, tmp_path):
        assert main(["ablate", "--configs", "A,Z", "--out", str(tmp_path / "s")]) == EXIT_CONFIG

    def test_report_regenerates_identical_tables(self, tmp_path):
        cfg = write_config(tmp_path)
        out = tmp_path / "study"
        main(["ablate", "--configs", "A,B", "--seeds", "0", "--config", str(cfg), "--out", str(out), "--eval-envs", "2"])
        inline = (out / "metrics_summary.csv").read_bytes()
        inline_usage = (out / "propeller_usage.csv").read_bytes()
        (out / "metrics_summary.csv").unlink()
        (out / "propeller_usage.csv").unlink()
        assert main(["report", "--runs", str(out)]) == EXIT_OK
        assert (out / "metrics_summary.csv").read_bytes() == inline
        assert (out / "propeller_usage.csv").read_bytes() == inline_usage

    def test_report_empty_dir_exits_5(self, tmp_path):
        empty = tmp_path / "none"
        empty.mkdir()
        assert main(["report", "--runs", str(empty)]) == EXIT_EMPTY

    def test_report_warns_on_incomplete_runs(self, tmp_path, capsys):
        cfg = write_config(tmp_path)
        out = tmp_path / "study"
        main(["ablate", "--configs", "A", "--seeds", "0", "--config", str(cfg), "--out", str(out), "--eval-envs", "2"])
        # fabricate an incomplete run: config without evaluation records
        incomplete = out / "B" / "seed_0"
        incomplete.mkdir(parents=True)
        (incomplete / "config.yaml").write_text((out / "A" / "seed_0" / "config.yaml").read_text())
        assert main(["report", "--runs", str(out)]) == EXIT_OK
        err = capsys.readouterr().err
        assert "warning" in err and "B" in err


class TestOutRoot:
    def test_env_var_prefixes_relative_out(self, tmp_path, monkeypatch):
        cfg = write_config(tmp_path)
        monkeypatch.setenv("FREEFLYER_DOCK_OUT_ROOT", str(tmp_path / "root"))
        assert main(["train", "--config", str(cfg), "--out", "nested/run"]) == EXIT_OK
        assert (tmp_path / "root" / "nested" / "run" / "train_log.jsonl").exists()

    def test_absolute_out_ignores_env_var(self, tmp_path, monkeypatch):
        cfg = write_config(tmp_path)
        monkeypatch.setenv("FREEFLYER_DOCK_OUT_ROOT", str(tmp_path / "root"))
        out = tmp_path / "abs_run"
        assert main(["train", "--config", str(cfg), "--out", str(out)]) == EXIT_OK
        assert (out / "train_log.jsonl").exists()
