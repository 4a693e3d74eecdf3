"""Display-frame layout and rendering.

A frame is a black canvas carrying eight white square markers (four at the
corners, four at the side midpoints), four sinusoidal bar bands and the
content window holding the training image.  Markers and bands share a border
strip of width ``margin``; each band sits between a corner marker and a
side-midpoint marker in pinwheel order, so every element is surrounded by a
black clearance ring of ``(margin - marker_side) // 2`` pixels.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import LayoutError
from .raster import as_image, resize


@dataclass(frozen=True)
class Rect:
    """Pixel rectangle covering columns ``[x, x + w)`` and rows ``[y, y + h)``."""

    x: int
    y: int
    w: int
    h: int

    @property
    def x1(self):
        return self.x + self.w

    @property
    def y1(self):
        return self.y + self.h

    def slices(self):
        return slice(self.y, self.y1), slice(self.x, self.x1)

    def intersects(self, other):
        return not (
            self.x1 <= other.x or other.x1 <= self.x or self.y1 <= other.y or other.y1 <= self.y
        )

    def inside(self, w, h):
        return self.x >= 0 and self.y >= 0 and self.x1 <= w and self.y1 <= h

    def to_dict(self):
        return {"x": self.x, "y": self.y, "w": self.w, "h": self.h}

    @classmethod
    def from_dict(cls, d):
        return cls(d["x"], d["y"], d["w"], d["h"])


@dataclass(frozen=True)
class MarkerSpec:
    cx: float
    cy: float
    side: float

    @property
    def center(self):
        return np.array([self.cx, self.cy])

    def pixel_rect(self):
        """Pixels whose unit squares lie inside the marker square."""
        half = self.side / 2.0
        x0 = math.ceil(self.cx - half + 0.5 - 1e-9)
        x1 = math.floor(self.cx + half - 0.5 + 1e-9)
        y0 = math.ceil(self.cy - half + 0.5 - 1e-9)
        y1 = math.floor(self.cy + half - 0.5 + 1e-9)
        return Rect(x0, y0, x1 - x0 + 1, y1 - y0 + 1)

    def to_dict(self):
        return {"cx": self.cx, "cy": self.cy, "side": self.side}

    @classmethod
    def from_dict(cls, d):
        return cls(d["cx"], d["cy"], d["side"])


@dataclass(frozen=True)
class BarSpec:
    """A periodic bar band.

    ``freq`` is in cycles per pixel along the band axis (x for horizontal
    bands, y for vertical ones); ``phase`` is in cycles at the band origin.
    """

    rect: Rect
    orient: str
    freq: float
    phase: float = 0.0

    def __post_init__(self):
        if self.orient not in ("horizontal", "vertical"):
            raise LayoutError(f"bad bar orientation {self.orient!r}")
        if not 0 < self.freq < 0.5:
            raise LayoutError(f"bar frequency {self.freq} outside (0, 0.5)")
        if not 0 <= self.phase < 1:
            raise LayoutError(f"bar phase {self.phase} outside [0, 1)")

    @property
    def axis(self):
        """Unit vector of the frequency direction, ``(x, y)``."""
        return np.array([1.0, 0.0]) if self.orient == "horizontal" else np.array([0.0, 1.0])

    def coords(self, region=None):
        """Digital pixel coordinates of the band (or a sub-rectangle ``region``)
        and their along-axis offset ``t`` from the band origin."""
        r = self.rect if region is None else region
        ys, xs = np.mgrid[r.y : r.y1, r.x : r.x1].astype(float)
        t = xs - self.rect.x if self.orient == "horizontal" else ys - self.rect.y
        return xs.ravel(), ys.ravel(), t.ravel()

    def interior(self, depth_fraction=0.125, end_periods=1):
        """Band rectangle shrunk away from its blurred edges.

        The depth is inset by ``depth_fraction`` on each side and whole periods
        are trimmed from both ends, so the phase origin stays on the period
        grid.  Falls back to the full band when it is too small to trim.
        """
        r = self.rect
        depth = r.h if self.orient == "horizontal" else r.w
        length = r.w if self.orient == "horizontal" else r.h
        period = 1.0 / self.freq
        di = max(1, int(round(depth * depth_fraction)))
        trim = int(round(end_periods * period))
        if depth - 2 * di < 1 or abs(trim - end_periods * period) > 1e-9 or length - 2 * trim < 2 * period:
            return r
        if self.orient == "horizontal":
            return Rect(r.x + trim, r.y + di, r.w - 2 * trim, r.h - 2 * di)
        return Rect(r.x + di, r.y + trim, r.w - 2 * di, r.h - 2 * trim)

    def profile(self, t, kind="sine"):
        arg = 2 * np.pi * (self.freq * t - self.phase)
        if kind == "sine":
            return 0.5 + 0.5 * np.cos(arg)
        if kind == "hard":
            return (np.cos(arg) >= 0).astype(float)
        raise ValueError(f"unknown bar profile {kind!r}")

    def to_dict(self):
        return {"rect": self.rect.to_dict(), "orient": self.orient, "freq": self.freq, "phase": self.phase}

    @classmethod
    def from_dict(cls, d):
        return cls(Rect.from_dict(d["rect"]), d["orient"], d["freq"], d["phase"])


@dataclass(frozen=True)
class LayoutSpec:
    width: int
    height: int
    markers: tuple
    bars: tuple
    content: Rect
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if len(self.markers) != 8:
            raise LayoutError(f"need exactly 8 markers, got {len(self.markers)}")
        if len(self.bars) != 4:
            raise LayoutError(f"need exactly 4 bars, got {len(self.bars)}")
        orients = sorted(b.orient for b in self.bars)
        if orients != ["horizontal", "horizontal", "vertical", "vertical"]:
            raise LayoutError("need two horizontal and two vertical bars")
        rects = [m.pixel_rect() for m in self.markers]
        for k, r in enumerate(rects):
            if not r.inside(self.width, self.height):
                raise LayoutError(f"marker {k} leaves the canvas")
            for j in range(k):
                if r.intersects(rects[j]):
                    raise LayoutError(f"markers {j} and {k} overlap")
        for m, bar in enumerate(self.bars):
            if not bar.rect.inside(self.width, self.height):
                raise LayoutError(f"bar {m} leaves the canvas")
            if bar.rect.intersects(self.content):
                raise LayoutError(f"bar {m} overlaps the content window")
            for k, r in enumerate(rects):
                if bar.rect.intersects(r):
                    raise LayoutError(f"bar {m} overlaps marker {k}")
        if self.content.w < 1 or self.content.h < 1:
            raise LayoutError("content window is empty")
        for k, r in enumerate(rects):
            if r.intersects(self.content):
                raise LayoutError(f"marker {k} overlaps the content window")

    @property
    def anchors(self):
        """Analytic marker centroids in digital coordinates, shape (8, 2)."""
        return np.array([[m.cx, m.cy] for m in self.markers])

    @property
    def clearance(self):
        """Black ring width guaranteed around every marker."""
        return self.meta.get("clearance", 0)

    def to_dict(self):
        return {
            "canvas": {"w": self.width, "h": self.height},
            "markers": [m.to_dict() for m in self.markers],
            "bars": [b.to_dict() for b in self.bars],
            "content": self.content.to_dict(),
        }

    @classmethod
    def from_dict(cls, d):
        markers = tuple(MarkerSpec.from_dict(m) for m in d["markers"])
        layout = cls(
            d["canvas"]["w"],
            d["canvas"]["h"],
            markers,
            tuple(BarSpec.from_dict(b) for b in d["bars"]),
            Rect.from_dict(d["content"]),
        )
        layout.meta["clearance"] = _measure_clearance(layout)
        return layout

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2)

    @classmethod
    def from_json(cls, text):
        return cls.from_dict(json.loads(text))

    def save(self, path):
        with open(path, "w") as fh:
            fh.write(self.to_json() + "\n")

    @classmethod
    def load(cls, path):
        with open(path) as fh:
            return cls.from_json(fh.read())

    def element_mask(self):
        """Boolean canvas mask of all marker and bar pixels."""
        mask = np.zeros((self.height, self.width), dtype=bool)
        for m in self.markers:
            mask[m.pixel_rect().slices()] = True
        for bar in self.bars:
            mask[bar.rect.slices()] = True
        return mask


def _measure_clearance(layout):
    # smallest black gap between a marker and any other element or the canvas edge
    gaps = []
    others = [b.rect for b in layout.bars] + [layout.content]
    rects = [m.pixel_rect() for m in layout.markers]
    for k, r in enumerate(rects):
        gaps += [r.x, r.y, layout.width - r.x1, layout.height - r.y1]
        for o in others + rects[:k] + rects[k + 1 :]:
            dx = max(o.x - r.x1, r.x - o.x1, 0)
            dy = max(o.y - r.y1, r.y - o.y1, 0)
            gaps.append(max(dx, dy))
    return int(min(gaps))


def make_layout(canvas_w, canvas_h, marker_side=64, bar_period=16, margin=96):
    """Build the standard frame layout.

    Raises
    ------
    LayoutError
        If the margin strips overlap, the clearance ring around markers is
        narrower than a quarter of the marker side, the bar period is at or
        below two pixels, or a bar band would hold fewer than two periods.
    """
    W, H, s, M = int(canvas_w), int(canvas_h), int(marker_side), int(margin)
    if s < 2:
        raise LayoutError("marker side must be at least 2 pixels")
    if W - 2 * M < 1 or H - 2 * M < 1:
        raise LayoutError(f"margin bands overlap: 2 x margin {M} >= canvas {W}x{H}")
    pad = (M - s) // 2
    if pad < s / 4:
        raise LayoutError(f"margin {M} too narrow for marker side {s}: clearance {pad} < {s / 4}")
    if not bar_period > 2:
        raise LayoutError(f"bar period {bar_period} is at or below the Nyquist limit")

    lo = pad + (s - 1) / 2.0  # near strip center
    mx = (W - s) // 2 + (s - 1) / 2.0
    my = (H - s) // 2 + (s - 1) / 2.0
    fx, fy = W - 1 - lo, H - 1 - lo
    centers = [(lo, lo), (mx, lo), (fx, lo), (fx, my), (fx, fy), (mx, fy), (lo, fy), (lo, my)]
    markers = tuple(MarkerSpec(float(cx), float(cy), s) for cx, cy in centers)

    freq = 1.0 / bar_period

    def span(start, stop):
        avail = stop - start
        n = math.floor(avail / bar_period)
        if n < 2:
            raise LayoutError(f"bar band of {avail} px holds fewer than two periods of {bar_period}")
        return int(math.floor(n * bar_period))

    mid_x0 = (W - s) // 2
    mid_y0 = (H - s) // 2
    # top: between TL and top-mid markers; right: TR to right-mid;
    # bottom: bottom-mid to BR; left: BL to left-mid (walking the pinwheel)
    x_start, x_stop = pad + s + pad, mid_x0 - pad
    top = Rect(x_start, pad, span(x_start, x_stop), s)
    y_start, y_stop = pad + s + pad, mid_y0 - pad
    right = Rect(W - pad - s, y_start, s, span(y_start, y_stop))
    bx_start, bx_stop = mid_x0 + s + pad, W - 2 * pad - s
    bottom = Rect(bx_start, H - pad - s, span(bx_start, bx_stop), s)
    ly_start, ly_stop = mid_y0 + s + pad, H - 2 * pad - s
    left = Rect(pad, ly_start, s, span(ly_start, ly_stop))
    bars = (
        BarSpec(top, "horizontal", freq, 0.0),
        BarSpec(right, "vertical", freq, 0.0),
        BarSpec(bottom, "horizontal", freq, 0.0),
        BarSpec(left, "vertical", freq, 0.0),
    )
    content = Rect(M, M, W - 2 * M, H - 2 * M)
    layout = LayoutSpec(W, H, markers, bars, content)
    layout.meta["clearance"] = _measure_clearance(layout)
    return layout


def fit_to_content(digital, layout, method="bicubic"):
    """Resample ``digital`` to exactly the content window size if needed."""
    img = as_image(digital)
    c = layout.content
    if img.shape[:2] != (c.h, c.w):
        img = resize(img, c.w, c.h, method)
    return img


def render_target(digital, layout, profile="sine"):
    """Render the full display frame carrying ``digital`` in the content window."""
    img = fit_to_content(digital, layout)
    shape = (layout.height, layout.width) + img.shape[2:]
    frame = np.zeros(shape)
    for m in layout.markers:
        frame[m.pixel_rect().slices()] = 1.0
    for bar in layout.bars:
        r = bar.rect
        _, _, t = bar.coords()
        vals = bar.profile(t, profile).reshape(r.h, r.w)
        frame[r.slices()] = vals if frame.ndim == 2 else vals[:, :, None]
    frame[layout.content.slices()] = img
    return frame


def render_black(layout, channels=1):
    shape = (layout.height, layout.width) if channels == 1 else (layout.height, layout.width, channels)
    return np.zeros(shape)
