import math
import os
import subprocess

import numpy as np
import pytest

import panelnet as pn

CLI = os.environ.get("PANELNET_CLI", "panelnet")


def test_partition_merge_round_trip():
    cfg = pn.PanelConfig(interval=64, stride=16, width=256, height=32)
    x = np.random.default_rng(0).standard_normal((3, 32, 256)).astype(np.float32)
    panels = pn.partition(x, cfg)
    assert len(panels) == cfg.num_panels == 16
    assert panels[0].shape == (3, 32, 64)
    np.testing.assert_allclose(pn.merge(panels, cfg), x, rtol=1e-6, atol=0)


def test_panel_columns_wrap_the_seam():
    cfg = pn.PanelConfig(64, 16, 256, 32)
    assert cfg.erp_column(15, 20) == 4
    assert pn.covering_panels(0, cfg) == [0, 13, 14, 15]


def test_rejects_bad_config():
    with pytest.raises(pn.ConfigError):
        pn.PanelConfig(64, 24, 256, 32)


def test_pixel_angles():
    phi, theta = pn.pixel_to_angles(127.5, 63.5, 256, 128)
    assert phi == pytest.approx(0.0, abs=1e-12)
    assert theta == pytest.approx(math.pi / 2, abs=1e-12)


def test_losses_and_metrics():
    assert pn.berhu(0.4, 0.2) == pytest.approx(0.5)
    gt = np.array([1.0, 2.0, 0.0, 4.0], dtype=np.float32)
    m = pn.depth_metrics(gt, gt)
    assert m["rmse"] == 0 and m["delta1"] == 1
    labels = np.array([0, 1, 2, 3, 3], dtype=np.uint8)
    assert pn.seg_metrics(labels, labels, 4) == (1.0, 1.0)


def test_render_room():
    s = pn.render_room(3)
    assert s["rgb"].shape == (3, 128, 256)
    assert s["depth"].min() > 0
    assert s["semantics"].max() <= 2
    assert s["boundary"].shape == (256,)


def test_gradcheck_runs():
    results = pn.gradcheck("losses", 1)
    assert results and all(ok for _, ok, _ in results)


def run_cli(*args):
    return subprocess.run([CLI, *args], capture_output=True, text=True).returncode


def test_cli_exit_codes(tmp_path):
    data = tmp_path / "data"
    assert run_cli("render", "--out", str(data), "--count", "1", "--seed", "1", "--height", "64", "--width", "128") == 0
    assert pn.read_sample(str(data / "scene_00000"))["depth"].shape == (1, 64, 128)
    bad = tmp_path / "bad.cfg"
    bad.write_text("task=depth\nno_such_key=1\n")
    assert run_cli("train", "--config", str(bad), "--data", str(data), "--out", str(tmp_path / "run")) == 2
    assert run_cli("eval", "--checkpoint", str(tmp_path / "missing.pnck"), "--data", str(data), "--task", "depth") == 3
