import json
import subprocess
import sys

import numpy as np
import pytest

from conftest import similarity_truth
from srpair import __version__
from srpair.cli import main
from srpair.dataset import synthetic_content
from srpair.imfile import read_image, write_image


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    d = tmp_path_factory.mktemp("cli")
    assert main(["pattern", "layout", "--canvas", "512", "512", "--marker-side", "32", "--bar-period", "8",
                 "--margin", "64", "--out", str(d / "layout.json")]) == 0
    write_image(d / "content.png", synthetic_content(384, 384, seed=2))
    assert main(["pattern", "render", "--layout", str(d / "layout.json"), "--image", str(d / "content.png"),
                 "--out", str(d / "frame.png"), "--black", str(d / "black.png")]) == 0
    similarity_truth(512, 1.01, 0.003, (1.2, -0.7), 560, psf_sigma=0.7, noise_sigma=0.003,
                     backlight=0.02).save(d / "truth.json")
    return d


def test_module_entry_point():
    out = subprocess.run([sys.executable, "-m", "srpair.cli", "--version"], capture_output=True, text=True)
    assert out.returncode == 0 and out.stdout.strip() == __version__


def test_render_outputs(workspace):
    frame = read_image(workspace / "frame.png")
    assert frame.shape == (512, 512)
    assert not read_image(workspace / "black.png").any()


def test_placement_json(capsys):
    assert main(["placement", "--focal", "80", "--screen-pitch", "155.4", "--sensor-pitch", "4.8",
                 "--distance", "5300", "--json"]) == 0
    rep = json.loads(capsys.readouterr().out)
    assert rep["min_moire_free_distance_mm"] == pytest.approx(5180.0)
    assert rep["moire_free"] is True


def test_simulate_is_byte_identical(workspace):
    outs = []
    for name in ("a.png", "b.png"):
        assert main(["simulate", "--frame", str(workspace / "frame.png"), "--truth", str(workspace / "truth.json"),
                     "--seed", "9", "--out", str(workspace / name)]) == 0
        outs.append((workspace / name).read_bytes())
    assert outs[0] == outs[1]
    assert (workspace / "a.truth.json").exists()


def test_register_report(workspace):
    main(["simulate", "--frame", str(workspace / "frame.png"), "--truth", str(workspace / "truth.json"),
          "--seed", "4", "--out", str(workspace / "cap.png")])
    rc = main(["register", "--captured", str(workspace / "cap.png"), "--layout", str(workspace / "layout.json"),
               "--digital", str(workspace / "content.png"), "--report", str(workspace / "rep.json"),
               "--out", str(workspace / "aligned.png")])
    assert rc == 0
    rep = json.loads((workspace / "rep.json").read_text())
    truth = similarity_truth(512, 1.01, 0.003, (1.2, -0.7), 560).transform
    # digital-domain grid point at the content centre
    p = np.array([255.5, 255.5])
    est = np.array(rep["S"]) @ p + rep["b"]
    assert np.linalg.norm(est - truth.apply(p)) < 0.1
    assert read_image(workspace / "aligned.png").shape == (512, 512)


def test_loss_command(workspace, capsys):
    f = str(workspace / "frame.png")
    assert main(["loss", "--pred", f, "--captured-hr", f, "--digital", f, "--lambda", "0.1"]) == 0
    assert float(capsys.readouterr().out) == 0.0


def test_errors_exit_two(tmp_path, capsys):
    assert main(["pattern", "layout", "--canvas", "100", "100", "--marker-side", "16", "--margin", "60",
                 "--out", str(tmp_path / "x.json")]) == 2
    assert "error" in capsys.readouterr().err
    assert main(["loss", "--pred", "nope.png", "--captured-hr", "nope.png", "--digital", "nope.png"]) == 2
