import numpy as np
import pytest

from srpair import AffineTransform, CaptureGroundTruth, simulate_capture
from srpair.errors import DegenerateAnchorsError, MarkerNotFoundError
from srpair.pattern import Rect
from srpair.spatial import (
    AnchorSet,
    MarkerSegment,
    centroid,
    coarse_transform,
    extract_marker_segment,
    locate_markers,
    objective_f1,
    solve_affine_ls,
)


def brute_force_affine(src, dst):
    """Independent 6-unknown least squares: one row per coordinate equation."""
    rows, rhs = [], []
    for (x, y), (u, v) in zip(src, dst):
        rows.append([x, y, 0, 0, 1, 0])
        rhs.append(u)
        rows.append([0, 0, x, y, 0, 1])
        rhs.append(v)
    p, *_ = np.linalg.lstsq(np.array(rows), np.array(rhs), rcond=None)
    return np.array([[p[0], p[1]], [p[2], p[3]]]), p[4:]


def square_image(h, w, x0, y0, side, value=1.0):
    img = np.zeros((h, w))
    img[y0 : y0 + side, x0 : x0 + side] = value
    return img


# ------------------------------------------------------------- segments


def test_clean_marker_segment():
    img = square_image(40, 40, 12, 10, 9, 0.8)
    seg = extract_marker_segment(img, Rect(12, 10, 9, 9), 1.5)
    assert seg.pixels.max() == pytest.approx(0.8)
    assert seg.local_background == 0.0


def test_black_window_not_found():
    with pytest.raises(MarkerNotFoundError) as e:
        extract_marker_segment(np.zeros((30, 30)), Rect(10, 10, 5, 5), 1.5, index=3)
    assert e.value.index == 3


def test_window_out_of_bounds():
    with pytest.raises(MarkerNotFoundError):
        extract_marker_segment(np.ones((20, 20)), Rect(17, 17, 6, 6), 1.5, index=0)


def test_noisy_mass_close_to_clean():
    clean = square_image(48, 48, 16, 16, 16)
    win = Rect(16, 16, 16, 16)
    ref = extract_marker_segment(clean, win).mass
    rng = np.random.default_rng(0)
    for _ in range(10):
        noisy = clean + rng.normal(0, 0.01, clean.shape)
        assert abs(extract_marker_segment(noisy, win).mass - ref) / ref < 0.02


def test_background_removed():
    img = square_image(40, 40, 12, 12, 8) + 0.1
    seg = extract_marker_segment(img, Rect(12, 12, 8, 8))
    assert seg.local_background == pytest.approx(0.1)
    assert seg.mass == pytest.approx(64.0)


# ------------------------------------------------------------- centroids


def test_centroid_symmetric_square():
    img = square_image(31, 31, 10, 8, 7)
    c = centroid(extract_marker_segment(img, Rect(10, 8, 7, 7)))
    assert np.allclose(c, [13.0, 11.0], atol=1e-12)


def test_centroid_hand_evaluated():
    seg = MarkerSegment(Rect(0, 0, 3, 1), np.array([[1.0, 0.0, 3.0]]), 0.0)
    assert centroid(seg)[0] == pytest.approx(1.5)


def test_centroid_scale_invariant_and_translation_equivariant():
    rng = np.random.default_rng(1)
    a = rng.random((6, 7))
    seg = MarkerSegment(Rect(3, 4, 7, 6), a, 0.0)
    c = centroid(seg)
    for k in (0.1, 2.0, 17.5):
        assert np.allclose(centroid(MarkerSegment(seg.window, k * a, 0.0)), c, atol=1e-12)
    shifted = MarkerSegment(Rect(3 + 5, 4 - 2, 7, 6), a, 0.0)
    assert np.array_equal(centroid(shifted) - c, [5.0, -2.0])


def test_centroid_zero_mass():
    with pytest.raises(ValueError):
        centroid(MarkerSegment(Rect(0, 0, 2, 2), np.zeros((2, 2)), 0.0))


# ---------------------------------------------------------------- solver


def test_identity_correspondences():
    pts = np.random.default_rng(2).uniform(0, 100, (8, 2))
    T, diag = solve_affine_ls(AnchorSet(pts, pts))
    assert T.allclose(AffineTransform.identity(), atol=1e-10)
    assert diag["f1"] < 1e-10


def test_exact_rotation_recovery():
    th = np.deg2rad(5.0)
    R = np.array([[np.cos(th), -np.sin(th)], [np.sin(th), np.cos(th)]])
    dst = np.random.default_rng(3).uniform(0, 500, (8, 2))
    src = dst @ R.T + [3.0, -2.0]
    T, diag = solve_affine_ls(AnchorSet(src, dst))
    # T maps src back onto dst, so it is the inverse of the forward map
    assert np.allclose(T.S, np.linalg.inv(R), atol=1e-12)
    assert diag["f1"] < 1e-9


def test_matches_brute_force_on_noisy_anchors():
    rng = np.random.default_rng(4)
    for _ in range(20):
        src = rng.uniform(0, 1000, (8, 2))
        dst = src @ rng.normal(size=(2, 2)).T + rng.normal(0, 50, 2) + rng.normal(0, 1.0, (8, 2))
        T, _ = solve_affine_ls(AnchorSet(src, dst))
        S, b = brute_force_affine(src, dst)
        assert np.allclose(T.S, S, atol=1e-10, rtol=0) and np.allclose(T.b, b, atol=1e-10, rtol=0)


def test_degenerate_anchors():
    t = np.linspace(0, 1, 8)
    src = np.column_stack([t, 2 * t + 1])
    with pytest.raises(DegenerateAnchorsError):
        solve_affine_ls(AnchorSet(src, src))


def test_local_optimality():
    rng = np.random.default_rng(5)
    src = rng.uniform(0, 500, (8, 2))
    dst = src + rng.normal(0, 0.5, (8, 2))
    anchors = AnchorSet(src, dst)
    T, diag = solve_affine_ls(anchors)
    p = T.params()
    for _ in range(1000):
        q = p + rng.normal(0, 1, 6) * np.array([1e-4] * 4 + [1e-2] * 2)
        assert objective_f1(AffineTransform.from_params(q), anchors) >= diag["f1"]


def test_jackknife_stability():
    rng = np.random.default_rng(6)
    dst = np.array([[100, 100], [500, 100], [900, 100], [900, 500], [900, 900], [500, 900], [100, 900], [100, 500]], float)
    Tt = AffineTransform.similarity(0.5, 0.01, (3, 4))
    sigma = 0.02
    src = Tt.apply(dst) + rng.normal(0, sigma, (8, 2))
    full, _ = solve_affine_ls(AnchorSet(src, dst))
    probe = dst
    for k in range(8):
        keep = np.arange(8) != k
        T_k, _ = solve_affine_ls(AnchorSet(src[keep], dst[keep]))
        dev = np.abs(T_k.apply(Tt.apply(probe)) - full.apply(Tt.apply(probe))).max()
        assert dev < 20 * sigma / 0.5


def test_anchor_count_mismatch():
    with pytest.raises(ValueError):
        AnchorSet(np.zeros((8, 2)), np.zeros((7, 2)))


# --------------------------------------------------------- marker search


def test_locate_markers_on_simulated_capture(small_layout, small_frame):
    S = AffineTransform.similarity(1.02, 0.01).S
    # canvas centre lands near the capture centre; resolution drops in the downscale step
    T = AffineTransform(S, np.array([299.5 + 2.4, 299.5 - 1.4]) - S @ [255.5, 255.5])
    truth = CaptureGroundTruth(T, 1.0, 0.002, 0.0, 2.0, 3, (600, 600))
    cap = simulate_capture(small_frame, truth)
    guess = coarse_transform(small_layout, cap.shape, 0.5)
    anchors, segs, passes = locate_markers(cap, small_layout, guess)
    assert len(segs) == 8 and passes >= 2
    err = np.linalg.norm(anchors.src - truth.effective_transform().apply(small_layout.anchors), axis=1)
    # 16 px markers in the capture: the 25% gate drops partially covered edge
    # pixels depending on sub-pixel phase, which costs up to ~0.1 px
    assert err.max() < 0.1
