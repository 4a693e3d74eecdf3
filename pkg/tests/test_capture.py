import numpy as np
import pytest

from srpair import AffineTransform, CaptureGroundTruth, simulate_capture
from srpair.capture import CameraScreenGeometry, capture_session, imaged_pixel_size, min_moire_distance
from srpair.errors import SingularTransformError
from srpair.pipeline import subtract_black


def test_geometry_validation():
    with pytest.raises(ValueError):
        CameraScreenGeometry(0, 100, 1, 1)
    with pytest.raises(ValueError):
        CameraScreenGeometry(50, 40, 1, 1)
    with pytest.raises(ValueError):
        CameraScreenGeometry(50, 100, -1, 1)


def test_unit_magnification():
    # d = f is excluded by the geometry; approach it from above
    g = CameraScreenGeometry(50.0, 50.0 * (1 + 1e-12), 155.4, 4.8)
    assert imaged_pixel_size(g) == pytest.approx(155.4, rel=1e-11)


def test_imaged_pixel_hand_value():
    g = CameraScreenGeometry(80.0, 5300.0, 155.4, 4.8)
    assert imaged_pixel_size(g) == pytest.approx(155.4 * 80 / 5300, rel=1e-15)
    assert imaged_pixel_size(g) == pytest.approx(2.346, abs=5e-4)


def test_doubling_distance_halves_pixel():
    g1 = CameraScreenGeometry(35.0, 1000.0, 200.0, 3.0)
    g2 = CameraScreenGeometry(35.0, 2000.0, 200.0, 3.0)
    assert imaged_pixel_size(g2) == pytest.approx(imaged_pixel_size(g1) / 2, rel=1e-15)


def test_moire_bound_equal_pitches():
    bound, _ = min_moire_distance(CameraScreenGeometry(18.0, 100.0, 4.8, 4.8))
    assert bound == pytest.approx(36.0, rel=1e-15)


def test_moire_bound_table_case():
    bound, ok = min_moire_distance(CameraScreenGeometry(80.0, 5300.0, 155.4, 4.8))
    assert bound == pytest.approx(5180.0, rel=1e-12)
    assert ok


def test_moire_bound_consistency_and_monotonicity():
    rng = np.random.default_rng(0)
    for _ in range(200):
        f, us, uc = rng.uniform(5, 200), rng.uniform(50, 500), rng.uniform(1, 10)
        d = rng.uniform(f * 1.01, 20000)
        g = CameraScreenGeometry(f, d, us, uc)
        bound, ok = min_moire_distance(g)
        assert ok == (uc > 2 * imaged_pixel_size(g))
        k = rng.uniform(1.01, 2)
        assert min_moire_distance(CameraScreenGeometry(f * k, d * k * 2, us, uc))[0] > bound
        assert min_moire_distance(CameraScreenGeometry(f, d, us * k, uc))[0] > bound
        assert min_moire_distance(CameraScreenGeometry(f, d, us, uc * k))[0] < bound


# ------------------------------------------------------------ simulator


def test_truth_validation():
    T = AffineTransform.identity()
    for kw in ({"psf_sigma": -1}, {"noise_sigma": -0.1}, {"backlight": 1.0}, {"downscale": 0}):
        with pytest.raises(ValueError):
            CaptureGroundTruth(T, **kw)


def test_truth_sidecar_round_trip(tmp_path):
    t = CaptureGroundTruth(AffineTransform.similarity(1.01, 0.02, (3, 4)), 1.0, 0.005, 0.02, 2.0, 11, (600, 400))
    t.save(tmp_path / "t.json")
    back = CaptureGroundTruth.load(tmp_path / "t.json")
    assert back.transform.allclose(t.transform, atol=0)
    assert back == CaptureGroundTruth(back.transform, 1.0, 0.005, 0.02, 2.0, 11, (600, 400))
    assert set(t.to_dict()) >= {"S", "b", "psf_sigma", "noise_sigma", "backlight", "downscale", "seed"}


def test_identity_pipeline():
    img = np.random.default_rng(1).random((40, 50))
    out = simulate_capture(img, CaptureGroundTruth(AffineTransform.identity()))
    assert np.array_equal(out, img)


def test_black_frame_backlight_statistics():
    blk = np.zeros((64, 64))
    sigma = 0.01
    out = simulate_capture(blk, CaptureGroundTruth(AffineTransform.identity(), noise_sigma=sigma, backlight=0.05, seed=3))
    assert abs(out.mean() - 0.05) < 3 * sigma / np.sqrt(out.size)


def test_seed_determinism():
    img = np.random.default_rng(2).random((30, 30))
    t = CaptureGroundTruth(AffineTransform.similarity(1.02, 0.01), 0.8, 0.01, 0.02, 1.0, seed=5)
    a, b = simulate_capture(img, t), simulate_capture(img, t)
    assert np.array_equal(a, b)
    assert not np.array_equal(a, simulate_capture(img, t.with_seed(6)))


def test_output_is_clamped():
    out = simulate_capture(np.ones((20, 20)), CaptureGroundTruth(AffineTransform.identity(), noise_sigma=0.2, backlight=0.5))
    assert out.min() >= 0 and out.max() <= 1


def test_downscale_size_and_divisibility():
    img = np.zeros((40, 40))
    assert simulate_capture(img, CaptureGroundTruth(AffineTransform.identity(), downscale=4.0)).shape == (10, 10)
    with pytest.raises(ValueError):
        simulate_capture(np.zeros((42, 42)), CaptureGroundTruth(AffineTransform.identity(), downscale=4.0))


def test_degenerate_truth_rejected():
    with pytest.raises(SingularTransformError):
        simulate_capture(np.zeros((8, 8)), CaptureGroundTruth(AffineTransform(np.zeros((2, 2)), [0, 0])))


def test_effective_transform_tracks_a_point():
    # a smooth blob lands where the effective transform predicts
    ys, xs = np.mgrid[0:64, 0:64]
    img = np.exp(-((xs - 21.0) ** 2 + (ys - 30.0) ** 2) / (2 * 3.0**2))
    T = AffineTransform(np.eye(2), [4.0, 6.0])
    t = CaptureGroundTruth(T, downscale=2.0)
    out = simulate_capture(img, t)
    ys, xs = np.mgrid[0:32, 0:32]
    c = np.array([(xs * out).sum(), (ys * out).sum()]) / out.sum()
    assert np.allclose(c, t.effective_transform().apply([21.0, 30.0]), atol=1e-3)


def test_session_shapes_and_blacks(small_layout):
    c = small_layout.content
    digital = np.full((c.h, c.w), 0.5)
    T = AffineTransform.identity()
    lr = CaptureGroundTruth(T, 0.0, 0.0, 0.03, 4.0, 1)
    hr = CaptureGroundTruth(T, 0.0, 0.0, 0.03, 1.0, 2)
    ses = capture_session(digital, small_layout, lr, hr)
    assert ses.hr.shape == (512, 512) and ses.lr.shape == (128, 128)
    assert np.all(ses.lr_black == 0.03) and np.all(ses.hr_black == 0.03)
    # black subtraction recovers the backlight-free capture up to the clamp at 1
    clean = simulate_capture(ses.frame, CaptureGroundTruth(T, downscale=4.0))
    assert np.allclose(subtract_black(ses.lr, ses.lr_black), np.minimum(clean, 0.97), atol=1e-12)
