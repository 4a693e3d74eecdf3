"""End-to-end steps: black-frame subtraction, pair registration, triplet
export, registration-error metrics and the dual-reference loss."""
from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DimensionMismatchError, SrpairError, StageError
from .freq import RefineOptions, refine_dual_domain
from .imfile import write_image
from .pattern import Rect
from .raster import AffineTransform, as_image, image_gradient, resize, warp_affine
from .spatial import coarse_transform, locate_markers, solve_affine_ls

log = logging.getLogger(__name__)

GRID = 32
XPAD = 2


class TripletRejectedError(SrpairError):
    def __init__(self, triplet_id, reason):
        self.triplet_id = triplet_id
        self.reason = reason
        super().__init__(f"triplet {triplet_id} rejected: {reason}")


def subtract_black(captured, black):
    """Remove the display's black level: ``max(captured - black, 0)``."""
    captured = as_image(captured)
    black = as_image(black)
    if captured.shape != black.shape:
        raise DimensionMismatchError(f"captured {captured.shape} vs black {black.shape}")
    return np.maximum(captured - black, 0.0)


@dataclass
class RegisteredPair:
    """A black-corrected capture and its digital-to-captured registration."""

    captured: np.ndarray
    result: object  # RegistrationResult

    @property
    def transform(self):
        return self.result.transform


def register_pair(captured, digital_frame, layout, opts=None, scale_guess=None):
    """Register a capture to the digital frame.

    Locates the markers, fits the closed-form affine map and refines it in the
    frequency domain.  Returns ``(aligned, result)`` where ``aligned`` is the
    capture resampled onto the digital frame's pixel grid.  The spatial-only
    transform and its anchor diagnostics are kept in ``result.diagnostics``.

    Raises
    ------
    StageError
        Wrapping whatever failed, tagged with ``locate``, ``solve`` or ``refine``.
    """
    captured = as_image(captured)
    digital_frame = as_image(digital_frame)
    if digital_frame.shape[:2] != (layout.height, layout.width):
        raise DimensionMismatchError(
            f"digital frame {digital_frame.shape[1]}x{digital_frame.shape[0]} does not match "
            f"layout canvas {layout.width}x{layout.height}"
        )
    opts = opts or RefineOptions()
    try:
        guess = coarse_transform(layout, captured.shape, scale_guess)
        anchors, segs, passes = locate_markers(captured, layout, guess)
    except SrpairError as e:
        raise StageError("locate", e) from e
    try:
        fit, diag = solve_affine_ls(anchors)
        init = fit.inverse()
    except SrpairError as e:
        raise StageError("solve", e) from e
    try:
        result = refine_dual_domain(captured, init, anchors, layout.bars, opts)
    except SrpairError as e:
        raise StageError("refine", e) from e
    result.diagnostics.update(
        {
            "centroids": anchors.src.tolist(),
            "spatial": {
                "S": init.S.tolist(),
                "b": init.b.tolist(),
                "f1": diag["f1"],
                "condition_number": diag["condition_number"],
                "marker_residuals": diag["marker_residuals"],
                "passes": passes,
            },
        }
    )
    aligned = warp_affine(captured, result.transform, layout.width, layout.height)
    return aligned, result


def spatial_transform(result):
    """The centroid-only transform stored by :func:`register_pair`."""
    sp = result.diagnostics["spatial"]
    return AffineTransform(sp["S"], sp["b"])


# ---------------------------------------------------------------- metrics


def grid_points(region, n=GRID):
    """``n x n`` cell-centred sample points covering ``region``."""
    ys, xs = np.mgrid[0:n, 0:n]
    px = region.x + (xs.ravel() + 0.5) * region.w / n - 0.5
    py = region.y + (ys.ravel() + 0.5) * region.h / n - 0.5
    return np.column_stack([px, py])


def polar_angle(S):
    """Rotation angle of the orthogonal factor of ``S = R P``."""
    U, _, Vt = np.linalg.svd(np.asarray(S, dtype=float))
    R = U @ Vt
    return math.atan2(R[1, 0], R[0, 0])


@dataclass
class ErrorReport:
    """Registration errors; a single trial or the aggregate of several.

    Scale and rotation errors of an aggregate are means over trials, the
    displacement mean is the mean of per-trial means, the maximum is global.
    """

    mean_displacement: float
    max_displacement: float
    scale_error: float
    rotation_error: float
    trials: list = field(default_factory=list)

    @classmethod
    def combine(cls, reports):
        if not reports:
            raise ValueError("no reports to combine")
        rows = [row for r in reports for row in r.trials]
        return cls(
            float(np.mean([r.mean_displacement for r in reports])),
            float(max(r.max_displacement for r in reports)),
            float(np.mean([r.scale_error for r in reports])),
            float(np.mean([r.rotation_error for r in reports])),
            rows,
        )

    def to_dict(self):
        return {
            "mean_displacement": self.mean_displacement,
            "max_displacement": self.max_displacement,
            "scale_error": self.scale_error,
            "rotation_error": self.rotation_error,
            "trials": self.trials,
        }


def registration_error(estimated, truth, region):
    """Compare two digital-to-captured transforms over a 32x32 grid in ``region``.

    Displacements are in captured pixels.  Scale error is
    ``|sqrt(det S_est) - sqrt(det S_truth)|``, rotation error the absolute
    difference of the polar-decomposition angles (radians).
    """
    pts = grid_points(region)
    d = np.linalg.norm(estimated.apply(pts) - truth.apply(pts), axis=1)
    scale = abs(math.sqrt(abs(estimated.det)) - math.sqrt(abs(truth.det)))
    dang = polar_angle(estimated.S) - polar_angle(truth.S)
    rot = abs(math.atan2(math.sin(dang), math.cos(dang)))
    row = {
        "mean_displacement": float(d.mean()),
        "max_displacement": float(d.max()),
        "scale_error": float(scale),
        "rotation_error": float(rot),
    }
    return ErrorReport(row["mean_displacement"], row["max_displacement"], row["scale_error"], rot, [row])


# ------------------------------------------------------------------- loss


def dual_reference_loss(pred, Y, digital, lam=0.1):
    """``mean|pred - Y| + lam * max|grad pred - grad digital|``.

    The first term is a per-pixel mean; the maximum runs over both gradient
    components and all channels.
    """
    if lam < 0:
        raise ValueError("lambda must be non-negative")
    pred, Y, digital = (np.asarray(a, dtype=float) for a in (pred, Y, digital))
    if not (pred.shape == Y.shape == digital.shape):
        raise DimensionMismatchError(f"shapes differ: {pred.shape}, {Y.shape}, {digital.shape}")
    fidelity = float(np.mean(np.abs(pred - Y)))
    if lam == 0:
        return fidelity
    gdiff = np.abs(image_gradient(pred) - image_gradient(digital))
    return fidelity + lam * float(gdiff.max())


# --------------------------------------------------------------- triplets


@dataclass
class TripletRecord:
    id: str
    x_path: str
    y_path: str
    digital_path: str
    registration_x: dict
    registration_y: dict
    crop: Rect
    size: tuple
    provenance: dict = field(default_factory=dict)

    def to_dict(self):
        return {
            "id": self.id,
            "paths": {"X": self.x_path, "Y": self.y_path, "digital": self.digital_path},
            "registration": {"X": self.registration_x, "Y": self.registration_y},
            "crop": self.crop.to_dict(),
            "size": list(self.size),
            "provenance": self.provenance,
        }

    @classmethod
    def from_dict(cls, d):
        return cls(
            d["id"],
            d["paths"]["X"],
            d["paths"]["Y"],
            d["paths"]["digital"],
            d["registration"]["X"],
            d["registration"]["Y"],
            Rect.from_dict(d["crop"]),
            tuple(d["size"]),
            d.get("provenance", {}),
        )


def _grid_warp(captured, T, crop, out_w, out_h, apron=0):
    # output pixel i sits at digital x = crop.x - 0.5 + (i - apron + 0.5) * crop.w / out_w
    sx, sy = crop.w / out_w, crop.h / out_h
    G = AffineTransform(
        np.diag([sx, sy]),
        [crop.x - 0.5 + (0.5 - apron) * sx, crop.y - 0.5 + (0.5 - apron) * sy],
    )
    return warp_affine(captured, T.compose(G), out_w + 2 * apron, out_h + 2 * apron, method="bicubic")


def triplet_grid(crop, y_transform, sr_factor):
    """Output size for a crop: Y's native sampling, rounded so that the LR
    grid is exactly ``1/sr_factor`` of it."""
    r = math.sqrt(abs(y_transform.det))
    wy = max(1, int(round(crop.w * r / sr_factor))) * sr_factor
    hy = max(1, int(round(crop.h * r / sr_factor))) * sr_factor
    return wy, hy


def build_triplet(x_reg, y_reg, digital, layout, sr_factor, out_dir=None, triplet_id="0", inset=None,
                  provenance=None):
    """Crop X, Y and the digital frame to the content window and bring them to Y's size.

    Y is resampled from its capture onto the crop at its own native
    resolution, X onto the same crop at ``1/sr_factor`` of that grid and then
    upsampled by ``sr_factor``; the digital crop is resized to match (all
    bicubic).  When ``out_dir`` is given the three images are written as 16-bit
    PNGs.  Returns ``(record, (X, Y, D))``.

    ``inset`` trims the content window on every side.  The default keeps the
    LR sampling margin of ``XPAD`` LR pixels inside the content, clear of the
    black clearance ring.

    Raises
    ------
    TripletRejectedError
        If either registration did not converge.
    """
    for name, reg in (("X", x_reg), ("Y", y_reg)):
        if not reg.result.converged:
            raise TripletRejectedError(triplet_id, f"{name} registration did not converge")
    if sr_factor < 1 or int(sr_factor) != sr_factor:
        raise ValueError("sr_factor must be a positive integer")
    sr_factor = int(sr_factor)
    digital = as_image(digital)
    if inset is None:
        inset = 2 + XPAD * sr_factor
    c = layout.content
    crop = Rect(c.x + inset, c.y + inset, c.w - 2 * inset, c.h - 2 * inset)
    if crop.w < 1 or crop.h < 1:
        raise ValueError("inset leaves an empty crop")
    wy, hy = triplet_grid(crop, y_reg.transform, sr_factor)
    Y = _grid_warp(y_reg.captured, y_reg.transform, crop, wy, hy)
    # X is sampled with a margin of bicubic support so upsampling sees no clamped edge
    X_lr = _grid_warp(x_reg.captured, x_reg.transform, crop, wy // sr_factor, hy // sr_factor, XPAD)
    pad = XPAD * sr_factor
    X = resize(X_lr, wy + 2 * pad, hy + 2 * pad, method="bicubic")[pad:-pad, pad:-pad]
    if digital.shape[:2] == (layout.height, layout.width):
        D = digital[crop.slices()]
    elif digital.shape[:2] == (c.h, c.w):
        D = digital[inset : inset + crop.h, inset : inset + crop.w]
    else:
        raise DimensionMismatchError(f"digital image {digital.shape} fits neither canvas nor content window")
    D = resize(D, wy, hy, method="bicubic")
    paths = {"X": "", "Y": "", "digital": ""}
    if out_dir is not None:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        for key, img in (("X", X), ("Y", Y), ("digital", D)):
            name = f"{triplet_id}_{key}.png"
            write_image(out_dir / name, img)
            paths[key] = name
    rec = TripletRecord(
        str(triplet_id),
        paths["X"],
        paths["Y"],
        paths["digital"],
        x_reg.result.to_dict(),
        y_reg.result.to_dict(),
        crop,
        (wy, hy),
        dict(provenance or {}),
    )
    return rec, (X, Y, D)


def write_manifest(records, path):
    """One JSON object per line, in the given order."""
    with open(path, "w") as fh:
        for rec in records:
            fh.write(json.dumps(rec.to_dict(), sort_keys=True) + "\n")


def read_manifest(path):
    with open(path) as fh:
        return [TripletRecord.from_dict(json.loads(line)) for line in fh if line.strip()]
