import os
import subprocess

import numpy as np
import pytest

import mtl_balance as mb


def test_compose_takes_pixelwise_max():
    a = np.zeros((28, 28), np.float32)
    b = np.zeros((28, 28), np.float32)
    a[27, 27] = 0.25
    b[19, 19] = 0.75
    out = mb.compose_overlay(a, b)
    assert out.shape == (36, 36)
    assert out[27, 27] == np.float32(0.75)
    assert out.max() == np.float32(0.75)


def test_idx_round_trip():
    rng = np.random.default_rng(3)
    arr = rng.integers(0, 256, size=(5, 4, 3), dtype=np.uint8)
    data = mb.serialize_idx(arr)
    assert data[:4] == bytes([0, 0, 8, 3])
    np.testing.assert_array_equal(mb.parse_idx(data), arr)
    with pytest.raises(mb.FormatError):
        mb.parse_idx(data[:-1])


def test_glyphs_deterministic():
    i1, l1 = mb.make_glyph_set(20, 5)
    i2, l2 = mb.make_glyph_set(20, 5)
    assert i1.shape == (20, 28, 28)
    np.testing.assert_array_equal(i1, i2)
    np.testing.assert_array_equal(l1, l2)
    assert l1.max() < 10


def test_quadratic_step_shrinks_gradients():
    theta, out = mb.quadratic_step("proposed", [4.0, 1.0], [[0.0], [0.0]], [1.0], alpha=0.1, beta=0.01)
    assert out["shared_grad_norms_pre"] == pytest.approx([4.0, 1.0], abs=1e-15)
    assert out["shared_grad_norms_post"] == pytest.approx([2.4, 0.9], abs=1e-12)
    assert theta[0] == pytest.approx(1.0 - 0.01 * 3.3, abs=1e-15)


def test_quadratic_demo_csv():
    lines = mb.quadratic_demo([4.0, 1.0], alpha=0.1, steps=1).splitlines()
    assert lines[0] == "regime,step,theta,task,grad_pre,grad_post,factor,ratio"
    assert len(lines) == 1 + 2 * 2
    with pytest.raises(mb.ConfigError):
        mb.quadratic_demo([20.0, 1.0], alpha=0.1)


def test_model_steps_fit_one_batch():
    steps = mb.model_step_losses("proposed", seed=2, steps=6)
    assert all(len(o["post_losses"]) == 2 for o in steps)
    assert sum(steps[-1]["pre_losses"]) < sum(steps[0]["pre_losses"])


def test_config_errors_are_typed():
    with pytest.raises(mb.ConfigError, match="colour"):
        mb.normalize_config("colour = blue\n")
    assert "trainer = ordinary" in mb.normalize_config("trainer = ordinary\n")


def test_train_eval_round_trip(tmp_path):
    cfg = (
        "trainer = proposed\nalpha = 0.05\nbeta = 0.05\nbatch_size = 32\n"
        "synthetic_pool = 300\ntrain_size = 96\nval_size = 32\ntest_size = 32\nepochs = 2\n"
        f"out_dir = {tmp_path / 'run'}\ncache_dir = {tmp_path / 'cache'}\n"
    )
    code, summary = mb.run_training(cfg)
    assert code == mb.EXIT_OK
    assert summary["status"] == "completed"
    report = mb.evaluate_checkpoint(cfg, tmp_path / "run" / "best.ckpt", "test")
    assert report == summary["reports"]["test"]
    with pytest.raises(mb.FormatError):
        (tmp_path / "bad.ckpt").write_bytes(b"nope")
        mb.evaluate_checkpoint(cfg, tmp_path / "bad.ckpt")


@pytest.mark.skipif("MTL_CLI" not in os.environ, reason="MTL_CLI not set")
def test_cli_exit_code_for_bad_config(tmp_path):
    (tmp_path / "bad.cfg").write_text("alpha = -1\n")
    r = subprocess.run([os.environ["MTL_CLI"], "train", "--config", str(tmp_path / "bad.cfg")], capture_output=True)
    assert r.returncode == 2
    assert b"alpha" in r.stderr
