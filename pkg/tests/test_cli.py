import json
import os
import struct
import subprocess
import sys

import numpy as np
import numpy.testing as npt
import pytest

from ffrnn.cli import main
from ffrnn.linalg import SeededRng
from ffrnn.model import ModelConfig, init_params, load_checkpoint, save_checkpoint
from ffrnn.task import TaskConfig, generate_dataset, save_dataset
from ffrnn.tensorio import sha256_file


def run_cli(*args):
    return main([str(a) for a in args])


def gen_args(out, samples=5, steps=60, seed=1, noise=0.05, **extra):
    args = ["gen", "--samples", samples, "--steps", steps, "--seed", seed,
            "--noise", noise, "--out", out]
    for k, v in extra.items():
        args += [f"--{k.replace('_', '-')}", v]
    return args


class TestGen:
    def test_deterministic_hashes(self, tmp_path):
        a, b = tmp_path / "a", tmp_path / "b"
        assert run_cli(*gen_args(a)) == 0
        assert run_cli(*gen_args(b)) == 0
        for name in ("x.rnt", "y.rnt"):
            assert sha256_file(a / name) == sha256_file(b / name)

    def test_header_dims(self, tmp_path):
        out = tmp_path / "d"
        assert run_cli(*gen_args(out, samples=7, steps=64)) == 0
        raw = (out / "x.rnt").read_bytes()
        version, rank, s, t, b = struct.unpack_from("<5I", raw, 4)
        assert (version, rank, s, t, b) == (1, 3, 7, 64, 3)

    def test_delay_flag_sets_target_lag(self, tmp_path):
        out = tmp_path / "d"
        assert run_cli(*gen_args(out, noise=0.0, delay=20)) == 0
        from ffrnn.task import load_dataset

        ds = load_dataset(out)
        assert ds.config.delay_steps == 20
        x, y = ds.x[0], ds.y[0]
        for c in range(3):
            pulsed = np.nonzero(np.abs(x[:, c]) > 0.5)[0]
            if pulsed.size == 0:
                continue
            onset = pulsed[0]
            falling = onset
            while falling < len(x) and abs(x[falling, c]) > 0.5:
                falling += 1
            effect = falling + 20
            if effect < len(y):
                assert y[effect, c] != 0
                assert y[effect - 1, c] == 0

    def test_full_scale_sample_count(self, tmp_path):
        out = tmp_path / "big"
        assert run_cli(*gen_args(out, samples=15000, steps=60)) == 0
        raw = (out / "x.rnt").read_bytes()
        version, rank, s, t, b = struct.unpack_from("<5I", raw, 4)
        assert (rank, s, t, b) == (3, 15000, 60, 3)

    def test_manifest_written(self, tmp_path):
        out = tmp_path / "d"
        run_cli(*gen_args(out))
        manifest = json.loads((out / "run_manifest.json").read_text())
        assert manifest["command"] == "gen"
        names = {o["path"] for o in manifest["outputs"]}
        assert {"x.rnt", "y.rnt", "config.json"} <= names

    def test_bad_flag_exits_2(self, tmp_path):
        with pytest.raises(SystemExit) as info:
            run_cli("gen", "--samples", "notanumber", "--out", tmp_path / "x")
        assert info.value.code == 2


@pytest.fixture(scope="module")
def small_data(tmp_path_factory):
    out = tmp_path_factory.mktemp("data")
    cfg = TaskConfig(t_steps=60, delay_steps=5, pulse_width=4, min_gap=8,
                     max_gap=20, seed=5)
    save_dataset(generate_dataset(cfg, 24), out)
    return out


class TestTrain:
    def test_epochs_zero_keeps_init(self, tmp_path, small_data):
        out = tmp_path / "ckpt"
        code = run_cli("train", "--data", small_data, "--units", 12,
                       "--epochs", 0, "--seed", 9, "--out", out)
        assert code == 0
        params, cfg, _ = load_checkpoint(out)
        fresh = init_params(ModelConfig(n_units=12), SeededRng(9))
        npt.assert_allclose(params.w_rec, fresh.w_rec, rtol=1e-6, atol=1e-7)

    def test_large_units_checkpoint_dims(self, tmp_path, small_data):
        out = tmp_path / "ckpt400"
        code = run_cli("train", "--data", small_data, "--units", 400,
                       "--epochs", 0, "--seed", 3, "--out", out)
        assert code == 0
        params, cfg, _ = load_checkpoint(out)
        assert params.w_rec.shape == (400, 400)
        assert cfg.n_units == 400

    def test_zero_lr_constant_history(self, tmp_path, small_data):
        out = tmp_path / "ckpt0"
        code = run_cli("train", "--data", small_data, "--units", 8,
                       "--epochs", 3, "--batch", 8, "--lr", 0.0,
                       "--seed", 4, "--out", out)
        assert code == 0
        rows = (out / "history.csv").read_text().strip().splitlines()
        assert rows[0] == "epoch,loss"
        losses = {float(r.split(",")[1]) for r in rows[1:]}
        assert len(rows) == 4
        assert max(losses) - min(losses) < 1e-12

    def test_missing_dataset_exits_2(self, tmp_path):
        code = run_cli("train", "--data", tmp_path / "nope", "--units", 8,
                       "--out", tmp_path / "out")
        assert code == 2

    def test_periodic_checkpoints(self, tmp_path, small_data):
        out = tmp_path / "ckpt_k"
        code = run_cli("train", "--data", small_data, "--units", 8,
                       "--epochs", 2, "--batch", 8, "--seed", 5,
                       "--checkpoint-every", 1, "--out", out)
        assert code == 0
        assert (out / "epoch_0000" / "w_rec.rnt").exists()
        assert (out / "epoch_0001" / "w_rec.rnt").exists()

    def test_divergent_data_exits_3(self, tmp_path):
        cfg = TaskConfig(t_steps=60, delay_steps=5, pulse_width=4,
                         min_gap=8, max_gap=20, seed=5)
        ds = generate_dataset(cfg, 8)
        ds.y[:, 30, 0] = np.nan
        data_dir = tmp_path / "nan_data"
        save_dataset(ds, data_dir)
        out = tmp_path / "out"
        code = run_cli("train", "--data", data_dir, "--units", 8,
                       "--epochs", 1, "--batch", 4, "--out", out)
        assert code == 3
        # last good parameters (the initialization) were still checkpointed
        params, _, manifest = load_checkpoint(out)
        assert manifest["diverged_at_epoch"] == 0
        assert np.isfinite(params.w_rec).all()

    def test_train_then_eval_pipeline(self, tmp_path, small_data):
        out = tmp_path / "ckpt_t"
        code = run_cli("train", "--data", small_data, "--units", 12,
                       "--epochs", 2, "--batch", 8, "--seed", 6, "--out", out)
        assert code == 0
        metrics_file = tmp_path / "metrics.json"
        code = run_cli("eval", "--checkpoint", out, "--data", small_data,
                       "--out", metrics_file)
        assert code == 0
        metrics = json.loads(metrics_file.read_text())
        assert 0.0 <= metrics["state_accuracy"] <= 1.0
        assert metrics["mse"] >= 0.0


def write_latch_checkpoint(out_dir, task_cfg):
    import dataclasses

    eye = np.eye(3)
    params_cls = __import__("ffrnn").RnnParams
    params = params_cls(w_in=1000.0 * eye, w_rec=1000.0 * eye, w_out=eye,
                        b_rec=np.zeros(3), b_out=np.zeros(3))
    cfg = ModelConfig(n_units=3)
    save_checkpoint(out_dir, params, cfg,
                    {"task": dataclasses.asdict(task_cfg)})


class TestEval:
    def test_latch_checkpoint_is_perfect(self, tmp_path):
        task_cfg = TaskConfig(noise_std=0.0, seed=8)
        data_dir = tmp_path / "data"
        save_dataset(generate_dataset(task_cfg, 4), data_dir)
        ckpt = tmp_path / "latch"
        write_latch_checkpoint(ckpt, task_cfg)
        out = tmp_path / "m.json"
        assert run_cli("eval", "--checkpoint", ckpt, "--data", data_dir,
                       "--out", out) == 0
        assert json.loads(out.read_text())["state_accuracy"] == 1.0

    def test_eval_on_probe_by_default(self, tmp_path):
        task_cfg = TaskConfig(noise_std=0.0, seed=9)
        ckpt = tmp_path / "latch"
        write_latch_checkpoint(ckpt, task_cfg)
        out = tmp_path / "m.json"
        assert run_cli("eval", "--checkpoint", ckpt, "--out", out) == 0
        assert json.loads(out.read_text())["state_accuracy"] == 1.0

    def test_corrupt_checkpoint_exits_2(self, tmp_path):
        ckpt = tmp_path / "bad"
        ckpt.mkdir()
        (ckpt / "manifest.json").write_text("{}")
        assert run_cli("eval", "--checkpoint", ckpt) == 2


class TestAnalysisCommands:
    @pytest.fixture()
    def fresh_ckpt(self, tmp_path):
        import dataclasses

        ckpt = tmp_path / "fresh"
        cfg = ModelConfig(n_units=24)
        params = init_params(cfg, SeededRng(10))
        save_checkpoint(ckpt, params, cfg,
                        {"task": dataclasses.asdict(TaskConfig())})
        return ckpt

    def test_spectrum_fresh_orthogonal(self, tmp_path, fresh_ckpt, capsys):
        out = tmp_path / "spec"
        assert run_cli("spectrum", "--checkpoint", fresh_ckpt, "--svg",
                       "--out", out) == 0
        summary = json.loads(capsys.readouterr().out)
        assert summary["n_outside"] == 0
        rows = (out / "spectrum.csv").read_text().strip().splitlines()
        assert len(rows) == 25
        assert (out / "spectrum.svg").exists()
        assert (out / "connectivity.csv").exists()

    def test_project_row_count(self, tmp_path, fresh_ckpt, capsys):
        out = tmp_path / "proj"
        assert run_cli("project", "--checkpoint", fresh_ckpt, "--svg",
                       "--out", out) == 0
        summary = json.loads(capsys.readouterr().out)
        rows = (out / "projection.csv").read_text().strip().splitlines()
        assert len(rows) - 1 == summary["points"]
        assert summary["points"] == 600 - summary["start_step"]
        assert (out / "projection_pc1_pc2.svg").exists()
        assert (out / "projection_pc1_pc3.svg").exists()

    def test_cube_report_written(self, tmp_path, fresh_ckpt):
        out = tmp_path / "cube"
        assert run_cli("cube", "--checkpoint", fresh_ckpt, "--out", out) == 0
        report = json.loads((out / "cube_report.json").read_text())
        assert "separation_ratio" in report
        assert "state_labels" in report

    def test_compare_rotated_latches(self, tmp_path):
        import dataclasses
        from ffrnn import RnnParams

        task_cfg = TaskConfig(noise_std=0.0, seed=13)
        meta = {"task": dataclasses.asdict(task_cfg)}
        cfg = ModelConfig(n_units=3)
        eye, k = np.eye(3), 1000.0
        # permuting which unit latches which channel rotates the cube while
        # keeping the outputs perfect
        perm = np.array([[0.0, 1.0, 0.0], [0.0, 0.0, 1.0], [1.0, 0.0, 0.0]])
        a, b = tmp_path / "a", tmp_path / "b"
        save_checkpoint(a, RnnParams(k * eye, k * eye, eye, np.zeros(3),
                                     np.zeros(3)), cfg, meta)
        save_checkpoint(b, RnnParams(k * perm, k * eye, perm.T, np.zeros(3),
                                     np.zeros(3)), cfg, meta)
        out = tmp_path / "cmp"
        assert run_cli("compare", "--checkpoints", a, b, "--out", out) == 0
        report = json.loads((out / "compare_report.json").read_text())
        # projection is variance-aligned, so a permuted latch lands on the
        # same cube coordinates: both distances collapse
        pair = report["pairwise"][0]
        assert pair["procrustes_residual"] <= 1e-6
        assert pair["raw_diff"] <= 1e-6
        assert len(report["per_report"]) == 2


class TestGradcheckCommand:
    def test_passes_with_defaults(self, capsys):
        assert run_cli("gradcheck", "--trials", 3) == 0
        assert "PASS" in capsys.readouterr().out

    def test_single_step_passes(self):
        assert run_cli("gradcheck", "--steps", 1, "--trials", 2) == 0

    def test_oversized_units_exit_2(self):
        assert run_cli("gradcheck", "--units", 32) == 2


class TestEntryPoint:
    def test_module_invocation(self, tmp_path):
        env = dict(os.environ, FFRNN_SEED="77")
        proc = subprocess.run(
            [sys.executable, "-m", "ffrnn.cli", "gen", "--samples", "2",
             "--steps", "60", "--out", str(tmp_path / "d")],
            capture_output=True, text=True, env=env)
        assert proc.returncode == 0
        cfg = json.loads((tmp_path / "d" / "config.json").read_text())
        assert cfg["seed"] == 77

    def test_config_file_defaults(self, tmp_path):
        cfg_file = tmp_path / "conf.json"
        cfg_file.write_text(json.dumps({"samples": 3, "steps": 64}))
        out = tmp_path / "d"
        assert run_cli("--config", cfg_file, "gen", "--out", out) == 0
        raw = (out / "x.rnt").read_bytes()
        _, _, s, t, _ = struct.unpack_from("<5I", raw, 4)
        assert (s, t) == (3, 64)
