"""Screen-shooting simulator with known ground truth, and the moire-free
camera placement calculator."""
from __future__ import annotations

import json
from dataclasses import dataclass, replace

import numpy as np
from scipy import ndimage

from .pattern import render_black, render_target
from .raster import AffineTransform, as_image, resize, warp_affine


@dataclass(frozen=True)
class CameraScreenGeometry:
    """Focal length ``f`` and distance ``d`` in mm, pixel pitches in micrometres."""

    f: float
    d: float
    u_s: float
    u_c: float

    def __post_init__(self):
        for name in ("f", "d", "u_s", "u_c"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if not self.d > self.f:
            raise ValueError("object distance must exceed focal length")


def imaged_pixel_size(g):
    """Size (um) of one screen pixel projected onto the sensor: ``u_s * f / d``."""
    return g.u_s * g.f / g.d


def min_moire_distance(g):
    """Smallest moire-free camera distance (mm), ``2 f u_s / u_c``.

    Returns ``(bound, ok)`` where ``ok`` tells whether ``g.d`` exceeds it.
    """
    bound = 2.0 * g.f * g.u_s / g.u_c
    return bound, bool(g.d > bound)


@dataclass(frozen=True)
class CaptureGroundTruth:
    """Parameters of one simulated capture.

    ``transform`` maps digital-frame coordinates to the full-resolution
    optical image, before ``downscale``.  ``out_size`` is that full-resolution
    extent as ``(width, height)``; ``None`` means the target's own size.

    The warp samples the target without area integration, so keep
    ``transform`` near unit scale and let ``downscale`` (which prefilters)
    model the resolution loss.
    """

    transform: AffineTransform
    psf_sigma: float = 0.0
    noise_sigma: float = 0.0
    backlight: float = 0.0
    downscale: float = 1.0
    seed: int = 0
    out_size: tuple | None = None

    def __post_init__(self):
        if self.psf_sigma < 0 or self.noise_sigma < 0:
            raise ValueError("psf_sigma and noise_sigma must be non-negative")
        if not 0 <= self.backlight < 1:
            raise ValueError("backlight must lie in [0, 1)")
        if not self.downscale > 0:
            raise ValueError("downscale must be positive")

    def effective_transform(self):
        """Digital frame to final (downscaled) captured pixel coordinates."""
        s = 1.0 / self.downscale
        down = AffineTransform(s * np.eye(2), np.full(2, 0.5 * s - 0.5))
        return down.compose(self.transform)

    def with_seed(self, seed):
        return replace(self, seed=int(seed))

    def to_dict(self):
        d = {
            "S": self.transform.S.tolist(),
            "b": self.transform.b.tolist(),
            "psf_sigma": self.psf_sigma,
            "noise_sigma": self.noise_sigma,
            "backlight": self.backlight,
            "downscale": self.downscale,
            "seed": self.seed,
        }
        if self.out_size is not None:
            d["out_size"] = list(self.out_size)
        return d

    @classmethod
    def from_dict(cls, d):
        out = d.get("out_size")
        return cls(
            AffineTransform(d["S"], d["b"]),
            psf_sigma=float(d.get("psf_sigma", 0.0)),
            noise_sigma=float(d.get("noise_sigma", 0.0)),
            backlight=float(d.get("backlight", 0.0)),
            downscale=float(d.get("downscale", 1.0)),
            seed=int(d.get("seed", 0)),
            out_size=tuple(out) if out is not None else None,
        )

    def save(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=2)
            fh.write("\n")

    @classmethod
    def load(cls, path):
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


def simulate_capture(target, truth):
    """Forward model: warp, PSF blur, downscale, backlight, noise, clamp."""
    target = as_image(target)
    h, w = target.shape[:2]
    ow, oh = truth.out_size if truth.out_size is not None else (w, h)
    img = warp_affine(target, truth.transform.inverse(), ow, oh)
    if truth.psf_sigma > 0:
        sig = [truth.psf_sigma, truth.psf_sigma] + ([0.0] if img.ndim == 3 else [])
        img = ndimage.gaussian_filter(img, sigma=sig, mode="constant", truncate=4.0)
    if truth.downscale != 1.0:
        sw = int(round(ow / truth.downscale))
        sh = int(round(oh / truth.downscale))
        if (sw * truth.downscale, sh * truth.downscale) != (ow, oh):
            raise ValueError(f"output extent {ow}x{oh} is not divisible by downscale {truth.downscale}")
        img = resize(img, sw, sh, method="bilinear")
    img = img + truth.backlight
    if truth.noise_sigma > 0:
        rng = np.random.default_rng(truth.seed)
        img = img + rng.normal(0.0, truth.noise_sigma, size=img.shape)
    return np.clip(img, 0.0, 1.0)


@dataclass
class CaptureSession:
    lr: np.ndarray
    hr: np.ndarray
    lr_black: np.ndarray
    hr_black: np.ndarray
    lr_truth: CaptureGroundTruth
    hr_truth: CaptureGroundTruth
    frame: np.ndarray


def black_seed(seed):
    """Noise seed for the black frame that accompanies a capture seeded ``seed``."""
    return int(np.random.SeedSequence([int(seed), 1]).generate_state(1)[0])


def capture_session(digital, layout, lr_truth, hr_truth, profile="sine"):
    """Render the frame once and simulate LR/HR captures plus their black frames."""
    frame = render_target(digital, layout, profile)
    black = render_black(layout, 1 if frame.ndim == 2 else frame.shape[2])
    return CaptureSession(
        lr=simulate_capture(frame, lr_truth),
        hr=simulate_capture(frame, hr_truth),
        lr_black=simulate_capture(black, lr_truth.with_seed(black_seed(lr_truth.seed))),
        hr_black=simulate_capture(black, hr_truth.with_seed(black_seed(hr_truth.seed))),
        lr_truth=lr_truth,
        hr_truth=hr_truth,
        frame=frame,
    )
