import json
import os

import pytest

from seqpick import cli

TINY_SCENE = {"cols": 2, "rows": 2, "pixels_per_face": 4, "seed": 0}
TINY_DQL = {"total_steps": 120, "seed_steps": 20, "buffer_capacity": 200,
            "eval_every": 60, "n_eval_scenes": 1, "n_final_eval_scenes": 2}


def _write_config(tmp_path, doc, name="config.json"):
    path = tmp_path / name
    path.write_text(json.dumps(doc))
    return str(path)


def _collect(tmp_path, include_actions=False, n_episodes=2):
    cfg = _write_config(tmp_path, {
        "scene": TINY_SCENE,
        "expert": {"n_episodes": n_episodes, "noise_std": 0.0,
                   "include_actions": include_actions},
    }, name="collect.json")
    out = str(tmp_path / "expert")
    assert cli.main(["collect-expert", "--config", cfg, "--out", out]) == 0
    return os.path.join(out, "expert_dataset.bin")


class TestExitCodes:
    def test_missing_config_file(self, tmp_path, capsys):
        code = cli.main(["verify-theory", "--config",
                         str(tmp_path / "nope.json")])
        assert code == cli.EXIT_MISSING
        assert "not found" in capsys.readouterr().err

    def test_invalid_config(self, tmp_path, capsys):
        cfg = _write_config(tmp_path, {"scene": {"colz": 1}})
        assert cli.main(["verify-theory", "--config", cfg]) == cli.EXIT_CONFIG
        assert "config error" in capsys.readouterr().err

    def test_train_missing_dataset(self, tmp_path, capsys):
        cfg = _write_config(tmp_path, {
            "scene": TINY_SCENE, "dql": TINY_DQL,
            "expert": {"dataset": str(tmp_path / "missing.bin")}})
        code = cli.main(["train", "--algo", "bc", "--config", cfg,
                         "--out", str(tmp_path / "out")])
        assert code == cli.EXIT_MISSING

    def test_eval_missing_checkpoint(self, tmp_path):
        cfg = _write_config(tmp_path, {"scene": TINY_SCENE})
        code = cli.main(["eval", "--config", cfg,
                         "--checkpoint", str(tmp_path / "none.bin")])
        assert code == cli.EXIT_MISSING


class TestCollectExpert:
    def test_outputs(self, tmp_path, capsys):
        path = _collect(tmp_path, include_actions=True)
        assert os.path.exists(path)
        out_dir = os.path.dirname(path)
        manifest = json.load(open(os.path.join(out_dir, "manifest.json")))
        assert manifest["n_episodes"] == 2
        assert manifest["n_records"] == 2 * 4  # 4 parcels, actioned records
        assert os.path.exists(os.path.join(out_dir, "resolved_config.json"))
        assert json.loads(capsys.readouterr().out)["include_actions"] is True


class TestTrain:
    def test_dql_outputs_and_reproducibility(self, tmp_path, capsys):
        cfg = _write_config(tmp_path, {"scene": TINY_SCENE, "dql": TINY_DQL,
                                       "seeds": [0, 1]})
        out1, out2 = str(tmp_path / "r1"), str(tmp_path / "r2")
        assert cli.main(["train", "--algo", "dql", "--config", cfg,
                         "--out", out1, "--serial"]) == 0
        assert cli.main(["train", "--algo", "dql", "--config", cfg,
                         "--out", out2, "--serial"]) == 0
        capsys.readouterr()
        for name in ("summary.json", "curves.png", "metrics_seed0.csv",
                     "metrics_seed1.csv", "checkpoint_seed0.bin",
                     "resolved_config.json"):
            assert os.path.exists(os.path.join(out1, name)), name
        for seed in (0, 1):
            a = open(os.path.join(out1, f"metrics_seed{seed}.csv"), "rb").read()
            b = open(os.path.join(out2, f"metrics_seed{seed}.csv"), "rb").read()
            assert a == b
        summary = json.load(open(os.path.join(out1, "summary.json")))
        assert summary["algo"] == "dql" and summary["seeds"] == [0, 1]

    def test_seeds_flag_overrides(self, tmp_path, capsys):
        cfg = _write_config(tmp_path, {"scene": TINY_SCENE, "dql": TINY_DQL})
        out = str(tmp_path / "out")
        assert cli.main(["train", "--algo", "dql", "--config", cfg,
                         "--out", out, "--seeds", "5", "--serial"]) == 0
        capsys.readouterr()
        assert os.path.exists(os.path.join(out, "metrics_seed5.csv"))

    def test_bc(self, tmp_path, capsys):
        dataset = _collect(tmp_path, include_actions=True)
        cfg = _write_config(tmp_path, {
            "scene": TINY_SCENE, "dql": TINY_DQL,
            "bc": {"steps": 30, "learning_rate": 1e-3},
            "expert": {"dataset": dataset, "include_actions": True},
        }, name="bc.json")
        out = str(tmp_path / "bc_out")
        assert cli.main(["train", "--algo", "bc", "--config", cfg,
                         "--out", out, "--serial"]) == 0
        capsys.readouterr()
        assert os.path.exists(os.path.join(out, "bc_loss_seed0.png"))
        assert os.path.exists(os.path.join(out, "checkpoint_seed0.bin"))

    def test_ursfo(self, tmp_path, capsys):
        dataset = _collect(tmp_path)
        cfg = _write_config(tmp_path, {
            "scene": TINY_SCENE, "dql": TINY_DQL,
            "shaping": {"disc_hidden": 8,
                        "schedule": {"kind": "constant", "value": 1.0}},
            "expert": {"dataset": dataset},
        }, name="ursfo.json")
        out = str(tmp_path / "ursfo_out")
        assert cli.main(["train", "--algo", "ursfo", "--config", cfg,
                         "--out", out, "--serial"]) == 0
        capsys.readouterr()
        assert os.path.exists(os.path.join(out, "disc_loss_seed0.csv"))
        assert os.path.exists(os.path.join(out, "curves.png"))


class TestEval:
    def test_eval_checkpoint(self, tmp_path, capsys):
        cfg = _write_config(tmp_path, {"scene": TINY_SCENE, "dql": TINY_DQL})
        out = str(tmp_path / "train_out")
        assert cli.main(["train", "--algo", "dql", "--config", cfg,
                         "--out", out, "--serial"]) == 0
        capsys.readouterr()
        ckpt = os.path.join(out, "checkpoint_seed0.bin")
        eval_out = str(tmp_path / "eval_out")
        assert cli.main(["eval", "--config", cfg, "--checkpoint", ckpt,
                         "--out", eval_out]) == 0
        report = json.loads(capsys.readouterr().out)
        assert report["checkpoint"] == ckpt
        assert 0.0 <= report["success_percent"] <= 100.0
        assert os.path.exists(os.path.join(eval_out, "eval_report.json"))


class TestVerifyTheory:
    def test_small_run_passes_with_artifacts(self, tmp_path, capsys):
        cfg = _write_config(tmp_path, {
            "theory": {"n_instances": 30, "n_pinsker": 30, "n_lsgan": 10,
                       "seed": 0}})
        out = str(tmp_path / "theory_out")
        assert cli.main(["verify-theory", "--config", cfg, "--out", out]) == 0
        report = json.loads(capsys.readouterr().out)
        assert report["ok"] is True
        assert os.path.exists(os.path.join(out, "theory_report.json"))
        assert os.path.exists(os.path.join(out, "slack_hist.png"))
