"""Raster primitives: affine transforms, bilinear sampling, warping, resampling.

Images are plain float64 numpy arrays, either ``(H, W)`` for grayscale or
``(H, W, 3)`` for RGB, holding linear intensities nominally in [0, 1].
Values are never clamped here; clamping happens only on export.

Coordinate convention: pixel centers sit at integer coordinates, the origin is
the center of the top-left pixel, ``x`` runs along columns and ``y`` along
rows.  A point is an ``(x, y)`` pair.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage, sparse

from .errors import SingularTransformError

DET_EPS = 1e-12


@dataclass(frozen=True, eq=False)
class AffineTransform:
    """The map ``x -> S @ x + b``.

    Parameters
    ----------
    S : (2, 2) array_like
        Rotation/scale part (dimensionless).
    b : (2,) array_like
        Translation in pixels.
    """

    S: np.ndarray
    b: np.ndarray

    def __post_init__(self):
        S = np.array(self.S, dtype=float).reshape(2, 2)
        b = np.array(self.b, dtype=float).reshape(2)
        S.flags.writeable = False
        b.flags.writeable = False
        object.__setattr__(self, "S", S)
        object.__setattr__(self, "b", b)

    @classmethod
    def identity(cls):
        return cls(np.eye(2), np.zeros(2))

    @classmethod
    def from_params(cls, p):
        """Build from ``[S11, S12, S21, S22, b1, b2]``."""
        p = np.asarray(p, dtype=float)
        return cls(p[:4].reshape(2, 2), p[4:6])

    @classmethod
    def similarity(cls, scale=1.0, angle=0.0, shift=(0.0, 0.0), center=(0.0, 0.0)):
        """Rotation by ``angle`` (radians) and isotropic ``scale`` about
        ``center``, followed by ``shift``."""
        c, s = np.cos(angle), np.sin(angle)
        S = scale * np.array([[c, -s], [s, c]])
        center = np.asarray(center, dtype=float)
        return cls(S, center - S @ center + np.asarray(shift, dtype=float))

    def params(self):
        return np.concatenate([self.S.ravel(), self.b])

    @property
    def det(self):
        return float(np.linalg.det(self.S))

    def apply(self, pts):
        """Map points of shape ``(..., 2)``."""
        pts = np.asarray(pts, dtype=float)
        return pts @ self.S.T + self.b

    def compose(self, other):
        """Return ``self ∘ other``, i.e. apply ``other`` first."""
        return AffineTransform(self.S @ other.S, self.S @ other.b + self.b)

    def inverse(self):
        if abs(self.det) <= DET_EPS:
            raise SingularTransformError(f"det(S) = {self.det:g}")
        Si = np.linalg.inv(self.S)
        return AffineTransform(Si, -Si @ self.b)

    def allclose(self, other, atol=1e-12):
        return np.allclose(self.S, other.S, atol=atol, rtol=0) and np.allclose(
            self.b, other.b, atol=atol, rtol=0
        )

    def to_dict(self):
        return {"S": self.S.tolist(), "b": self.b.tolist()}

    @classmethod
    def from_dict(cls, d):
        return cls(d["S"], d["b"])

    def __repr__(self):
        return f"AffineTransform(S={self.S.tolist()}, b={self.b.tolist()})"


def as_image(data):
    """Validate and convert to a float64 image array."""
    img = np.asarray(data, dtype=np.float64)
    if img.ndim not in (2, 3) or (img.ndim == 3 and img.shape[2] not in (1, 3)):
        raise ValueError(f"expected (H, W) or (H, W, 3) image, got shape {img.shape}")
    if img.ndim == 3 and img.shape[2] == 1:
        img = img[:, :, 0]
    if img.size == 0:
        raise ValueError("empty image")
    if not np.all(np.isfinite(img)):
        raise ValueError("image contains non-finite values")
    return img


def n_channels(img):
    return 1 if img.ndim == 2 else img.shape[2]


def sample_bilinear(img, xs, ys):
    """Bilinear interpolation at arrays of points.

    Returns ``(values, inside)``.  ``values`` has the broadcast shape of the
    coordinates (plus a trailing channel axis for RGB); samples outside
    ``[0, W-1] x [0, H-1]`` are 0 and flagged False in ``inside``.
    """
    h, w = img.shape[:2]
    xs = np.asarray(xs, dtype=float)
    ys = np.asarray(ys, dtype=float)
    xs, ys = np.broadcast_arrays(xs, ys)
    inside = (xs >= 0) & (xs <= w - 1) & (ys >= 0) & (ys <= h - 1)
    xc = np.where(inside, xs, 0.0)
    yc = np.where(inside, ys, 0.0)
    x0 = np.floor(xc).astype(np.intp)
    y0 = np.floor(yc).astype(np.intp)
    # keep x0 + 1 in range on the last column/row; the weight there is then 1
    x0 = np.minimum(x0, max(w - 2, 0))
    y0 = np.minimum(y0, max(h - 2, 0))
    fx = xc - x0
    fy = yc - y0
    x1 = np.minimum(x0 + 1, w - 1)
    y1 = np.minimum(y0 + 1, h - 1)
    if img.ndim == 3:
        fx = fx[..., None]
        fy = fy[..., None]
    top = img[y0, x0] * (1 - fx) + img[y0, x1] * fx
    bot = img[y1, x0] * (1 - fx) + img[y1, x1] * fx
    vals = top * (1 - fy) + bot * fy
    mask = inside[..., None] if img.ndim == 3 else inside
    return np.where(mask, vals, 0.0), inside


def sample_bicubic(img, xs, ys):
    """Catmull-Rom interpolation at arrays of points, same contract as
    :func:`sample_bilinear` (taps beyond the border are edge-replicated)."""
    h, w = img.shape[:2]
    xs = np.asarray(xs, dtype=float)
    ys = np.asarray(ys, dtype=float)
    xs, ys = np.broadcast_arrays(xs, ys)
    inside = (xs >= 0) & (xs <= w - 1) & (ys >= 0) & (ys <= h - 1)
    xc = np.where(inside, xs, 0.0)
    yc = np.where(inside, ys, 0.0)
    x0 = np.floor(xc).astype(np.intp)
    y0 = np.floor(yc).astype(np.intp)
    fx = xc - x0
    fy = yc - y0
    wx = [_cubic_weights(fx - o) for o in (-1, 0, 1, 2)]
    wy = [_cubic_weights(fy - o) for o in (-1, 0, 1, 2)]
    cols = [np.clip(x0 + o, 0, w - 1) for o in (-1, 0, 1, 2)]
    vals = 0.0
    for j, o in enumerate((-1, 0, 1, 2)):
        row = np.clip(y0 + o, 0, h - 1)
        acc = 0.0
        for i in range(4):
            wi = wx[i] if img.ndim == 2 else wx[i][..., None]
            acc = acc + img[row, cols[i]] * wi
        wj = wy[j] if img.ndim == 2 else wy[j][..., None]
        vals = vals + acc * wj
    mask = inside[..., None] if img.ndim == 3 else inside
    return np.where(mask, vals, 0.0), inside


def bilinear_sample(img, p, channel=0):
    """Sample one channel at a single point ``p = (x, y)``.

    Returns ``(value, inside)``; outside points give ``(0.0, False)``.
    """
    if channel >= n_channels(img):
        raise IndexError(f"channel {channel} out of range")
    plane = img if img.ndim == 2 else img[:, :, channel]
    v, inside = sample_bilinear(plane, p[0], p[1])
    return float(v), bool(inside)


def pixel_grid(width, height):
    ys, xs = np.mgrid[0:height, 0:width].astype(float)
    return xs, ys


def warp_affine(img, T, out_width, out_height, method="bilinear"):
    """Inverse-mapping warp: output pixel ``x`` takes ``img`` at ``T(x)``.

    Regions mapping outside the input are 0.
    """
    if T.det <= DET_EPS:
        raise SingularTransformError(f"degenerate transform, det(S) = {T.det:g}")
    xs, ys = pixel_grid(out_width, out_height)
    S, b = T.S, T.b
    sx = S[0, 0] * xs + S[0, 1] * ys + b[0]
    sy = S[1, 0] * xs + S[1, 1] * ys + b[1]
    sampler = sample_bicubic if method == "bicubic" else sample_bilinear
    out, _ = sampler(img, sx, sy)
    return out


def _cubic_weights(t):
    # Catmull-Rom (a = -0.5); t is the distance to the tap
    a = -0.5
    t = np.abs(t)
    w = np.where(
        t <= 1,
        (a + 2) * t**3 - (a + 3) * t**2 + 1,
        np.where(t < 2, a * t**3 - 5 * a * t**2 + 8 * a * t - 4 * a, 0.0),
    )
    return w


def interp_matrix(n_in, n_out, method="bicubic"):
    """Sparse ``(n_out, n_in)`` 1-D interpolation matrix.

    Output sample ``i`` sits at input coordinate ``(i + 0.5) * n_in / n_out - 0.5``;
    taps beyond the border are clamped (edge replication).
    """
    src = (np.arange(n_out) + 0.5) * (n_in / n_out) - 0.5
    base = np.floor(src).astype(np.intp)
    if method == "bilinear":
        offsets = np.array([0, 1])
    elif method == "bicubic":
        offsets = np.array([-1, 0, 1, 2])
    else:
        raise ValueError(f"unknown method {method!r}")
    taps = base[:, None] + offsets[None, :]
    d = src[:, None] - taps
    if method == "bilinear":
        w = np.maximum(0.0, 1.0 - np.abs(d))
    else:
        w = _cubic_weights(d)
    cols = np.clip(taps, 0, n_in - 1)
    rows = np.repeat(np.arange(n_out), len(offsets))
    m = sparse.coo_matrix((w.ravel(), (rows, cols.ravel())), shape=(n_out, n_in))
    return m.tocsr()


def resize(img, out_width, out_height, method="bicubic"):
    """Resample to an explicit output size.

    Axes that shrink get a Gaussian prefilter with sigma ``0.5 / factor``
    (in input pixels) before interpolation.
    """
    if out_width < 1 or out_height < 1:
        raise ValueError(f"output size {out_width}x{out_height} is empty")
    h, w = img.shape[:2]
    if (out_width, out_height) == (w, h):
        return img.copy()
    fx, fy = out_width / w, out_height / h
    sig = [0.5 / fy if fy < 1 else 0.0, 0.5 / fx if fx < 1 else 0.0]
    if img.ndim == 3:
        sig.append(0.0)
    if any(sig):
        img = ndimage.gaussian_filter(img, sigma=sig, mode="nearest", truncate=4.0)
    my = interp_matrix(h, out_height, method)
    mx = interp_matrix(w, out_width, method)
    if img.ndim == 2:
        return np.asarray(my @ (mx @ img.T).T)
    planes = [np.asarray(my @ (mx @ img[:, :, c].T).T) for c in range(img.shape[2])]
    return np.stack(planes, axis=2)


def resample(img, factor, method="bicubic"):
    """Scale an image by ``factor``; output dims are rounded to the nearest integer."""
    if not factor > 0:
        raise ValueError("factor must be positive")
    h, w = img.shape[:2]
    ow, oh = int(round(w * factor)), int(round(h * factor))
    if ow < 1 or oh < 1:
        raise ValueError(f"factor {factor} yields a zero-size image")
    return resize(img, ow, oh, method)


def image_gradient(img):
    """Central-difference gradient with replicated borders.

    Returns an array with a trailing axis of length 2 holding ``(d/dx, d/dy)``;
    shape ``(H, W, 2)`` for grayscale and ``(H, W, 3, 2)`` for RGB.
    """
    h, w = img.shape[:2]
    if h < 2 or w < 2:
        raise ValueError("gradient needs at least a 2x2 image")
    xi = np.arange(w)
    yi = np.arange(h)
    xp, xm = np.minimum(xi + 1, w - 1), np.maximum(xi - 1, 0)
    yp, ym = np.minimum(yi + 1, h - 1), np.maximum(yi - 1, 0)
    gx = (img[:, xp] - img[:, xm]) / 2.0
    gy = (img[yp, :] - img[ym, :]) / 2.0
    return np.stack([gx, gy], axis=-1)
