"""Marker segmentation, intensity-weighted centroids and closed-form affine fit."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateAnchorsError, MarkerNotFoundError
from .pattern import Rect
from .raster import AffineTransform

GATE_FRACTION = 0.25
MAX_COND = 1e12


@dataclass(frozen=True)
class MarkerSegment:
    window: Rect
    pixels: np.ndarray  # background-subtracted, gated weights
    local_background: float

    @property
    def mass(self):
        return float(self.pixels.sum())


@dataclass(frozen=True)
class AnchorSet:
    """Corresponding points: measured marker centroids in the captured frame
    (``src``) and their analytic positions in the digital frame (``dst``)."""

    src: np.ndarray
    dst: np.ndarray

    def __post_init__(self):
        src = np.asarray(self.src, dtype=float).reshape(-1, 2)
        dst = np.asarray(self.dst, dtype=float).reshape(-1, 2)
        if src.shape != dst.shape:
            raise ValueError("source and destination point counts differ")
        object.__setattr__(self, "src", src)
        object.__setattr__(self, "dst", dst)


def _luminance(img):
    return img if img.ndim == 2 else img.mean(axis=2)


def expand_window(window, expansion):
    """Scale a rectangle about its center, rounding outward to whole pixels."""
    cx = window.x + (window.w - 1) / 2.0
    cy = window.y + (window.h - 1) / 2.0
    hw = window.w * expansion / 2.0
    hh = window.h * expansion / 2.0
    x0 = math.floor(cx - hw + 0.5)
    y0 = math.floor(cy - hh + 0.5)
    x1 = math.ceil(cx + hw - 0.5)
    y1 = math.ceil(cy + hh - 0.5)
    return Rect(x0, y0, x1 - x0 + 1, y1 - y0 + 1)


def extract_marker_segment(captured, nominal_window, expansion=1.5, index=None):
    """Cut out a marker window, subtract its local background and gate noise.

    The background is the median of the window's one-pixel border ring; pixels
    below ``background + 0.25 * (max - background)`` are zeroed.
    """
    img = _luminance(captured)
    h, w = img.shape
    win = expand_window(nominal_window, expansion)
    if not win.inside(w, h) or win.w < 3 or win.h < 3:
        raise MarkerNotFoundError(index, f"window {win} outside {w}x{h} image")
    patch = img[win.slices()]
    ring = np.concatenate([patch[0], patch[-1], patch[1:-1, 0], patch[1:-1, -1]])
    bg = float(np.median(ring))
    peak = float(patch.max())
    if not peak > bg:
        raise MarkerNotFoundError(index, "window holds no signal above background")
    thr = bg + GATE_FRACTION * (peak - bg)
    weights = np.where(patch >= thr, patch - bg, 0.0)
    seg = MarkerSegment(win, weights, bg)
    if not seg.mass > 0:
        raise MarkerNotFoundError(index, "zero mass after gating")
    return seg


def centroid(segment):
    """Intensity-weighted centroid ``(x, y)`` in captured-frame coordinates."""
    a = segment.pixels
    mass = a.sum()
    if not mass > 0:
        raise ValueError("segment has zero mass")
    ys, xs = np.mgrid[0 : a.shape[0], 0 : a.shape[1]]
    cx = (xs * a).sum() / mass + segment.window.x
    cy = (ys * a).sum() / mass + segment.window.y
    return np.array([cx, cy])


def _homogeneous(pts):
    return np.vstack([pts.T, np.ones(len(pts))])


def anchor_residual(T, anchors):
    """Per-anchor residual vectors ``T(src) - dst``, shape (n, 2)."""
    return T.apply(anchors.src) - anchors.dst


def objective_f1(T, anchors):
    """Frobenius norm of the homogeneous fit residual ``[S b; 0 1] A - B``."""
    return float(np.linalg.norm(anchor_residual(T, anchors)))


def solve_affine_ls(anchors):
    """Closed-form least-squares affine map taking ``src`` onto ``dst``.

    Solves ``M = B A' (A A')^{-1}`` with ``A``, ``B`` the homogeneous point
    matrices.  Returns ``(transform, diagnostics)``.

    Raises
    ------
    DegenerateAnchorsError
        When ``A A'`` has condition number above 1e12 (collinear or repeated
        source points).
    """
    A = _homogeneous(anchors.src)
    B = _homogeneous(anchors.dst)
    AAt = A @ A.T
    cond = float(np.linalg.cond(AAt))
    if not np.isfinite(cond) or cond > MAX_COND:
        raise DegenerateAnchorsError(f"anchor matrix is rank deficient (cond = {cond:.3g})")
    # M (AA') = B A'  ->  (AA') M' = A B'
    M = np.linalg.solve(AAt, A @ B.T).T
    T = AffineTransform(M[:2, :2], M[:2, 2])
    res = anchor_residual(T, anchors)
    diag = {
        "f1": float(np.linalg.norm(res)),
        "condition_number": cond,
        "marker_residuals": np.hypot(res[:, 0], res[:, 1]).tolist(),
    }
    return T, diag


def coarse_transform(layout, captured_shape, scale=None):
    """Centered similarity guess mapping the digital frame into the capture.

    ``scale`` is captured pixels per digital pixel; when omitted the canvas is
    assumed to fill the captured frame.
    """
    h, w = captured_shape[:2]
    if scale is None:
        scale = min(w / layout.width, h / layout.height)
    c_dig = np.array([(layout.width - 1) / 2.0, (layout.height - 1) / 2.0])
    c_cap = np.array([(w - 1) / 2.0, (h - 1) / 2.0])
    return AffineTransform(scale * np.eye(2), c_cap - scale * c_dig)


def _nominal_window(marker, T, size):
    c = T.apply(marker.center)
    half = size / 2.0
    x0 = math.floor(c[0] - half + 0.5)
    y0 = math.floor(c[1] - half + 0.5)
    n = max(int(round(size)), 1)
    return Rect(x0, y0, n, n)


def locate_markers(captured, layout, guess, expansion=1.5, max_passes=6, tol=1e-3):
    """Find all eight marker centroids, starting from a coarse digital-to-captured guess.

    The first pass uses windows as wide as the layout's black clearance ring
    allows; later passes re-center ``expansion``-sized windows on the current
    affine fit until the centroids move less than ``tol`` pixels.

    Returns ``(anchors, segments, passes)``.
    """
    T = guess
    scale = math.sqrt(abs(guess.det))
    clear = layout.clearance
    side = layout.markers[0].side
    first = (side + 1.6 * clear) / side if clear > 0 else expansion
    prev = None
    for n in range(max_passes):
        exp_n = first if n == 0 else expansion
        segs, pts = [], []
        for k, m in enumerate(layout.markers):
            win = _nominal_window(m, T, m.side * scale)
            seg = extract_marker_segment(captured, win, exp_n, index=k)
            segs.append(seg)
            pts.append(centroid(seg))
        pts = np.array(pts)
        anchors = AnchorSet(pts, layout.anchors)
        fit, _ = solve_affine_ls(anchors)
        T = fit.inverse()
        scale = math.sqrt(abs(T.det))
        if prev is not None and np.max(np.abs(pts - prev)) < tol:
            break
        prev = pts
    return anchors, segs, n + 1
