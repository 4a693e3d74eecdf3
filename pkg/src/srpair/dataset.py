"""Dataset assembly from a jobs file, and the simulated precision benchmark."""
from __future__ import annotations

import json
import logging
import math
import time
from pathlib import Path

import numpy as np
from scipy import ndimage

from .capture import CaptureGroundTruth, black_seed, capture_session, simulate_capture
from .errors import SrpairError
from .freq import RefineOptions
from .imfile import read_image
from .pattern import LayoutSpec, make_layout, render_black, render_target
from .pipeline import (
    ErrorReport,
    RegisteredPair,
    TripletRejectedError,
    build_triplet,
    register_pair,
    registration_error,
    spatial_transform,
    subtract_black,
    write_manifest,
)
from .raster import AffineTransform

log = logging.getLogger(__name__)


def synthetic_content(width, height, seed=0, channels=1, smooth=4.0):
    """Smoothed uniform noise stretched to [0.05, 0.95]; a stand-in for a photo."""
    rng = np.random.default_rng(seed)
    shape = (height, width) if channels == 1 else (height, width, channels)
    sig = (smooth, smooth) if channels == 1 else (smooth, smooth, 0)
    img = ndimage.gaussian_filter(rng.random(shape), sig)
    lo, hi = img.min(), img.max()
    return 0.05 + 0.9 * (img - lo) / (hi - lo)


# -------------------------------------------------------------- jobs file


def _layout_from(cfg, base):
    if isinstance(cfg, str):
        return LayoutSpec.load(base / cfg)
    if "markers" in cfg:
        return LayoutSpec.from_dict(cfg)
    w, h = cfg.get("canvas", [1024, 1024])
    return make_layout(w, h, cfg.get("marker_side", 64), cfg.get("bar_period", 16), cfg.get("margin", 128))


def _digital_from(cfg, layout, base):
    if isinstance(cfg, dict) and "synthetic" in cfg:
        s = cfg["synthetic"]
        c = layout.content
        return synthetic_content(c.w, c.h, s.get("seed", 0), s.get("channels", 1))
    return read_image(base / cfg)


def _simulated_pair(job, frame_digital, layout):
    sim = job["simulate"]
    lr = CaptureGroundTruth.from_dict(sim["lr"])
    hr = CaptureGroundTruth.from_dict(sim["hr"])
    ses = capture_session(frame_digital, layout, lr, hr)
    return (ses.lr, ses.lr_black, lr), (ses.hr, ses.hr_black, hr), ses.frame


def build_dataset(jobs_path, out_dir, sr_factor, opts=None):
    """Run every job in a jobs file and write triplets plus ``manifest.jsonl``.

    Jobs either simulate their captures from ground-truth sidecars or point
    at captured LR/HR images and black frames.  Rejected jobs are listed in
    ``rejected.jsonl``.  Output depends only on the inputs.

    Returns ``(records, rejected)``.
    """
    jobs_path = Path(jobs_path)
    base = jobs_path.parent
    with open(jobs_path) as fh:
        cfg = json.load(fh)
    layout = _layout_from(cfg.get("layout", {}), base)
    if opts is None:
        opts = RefineOptions(beta=cfg["beta"]) if "beta" in cfg else RefineOptions()
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    layout.save(out_dir / "layout.json")
    records, rejected = [], []
    for job in cfg["jobs"]:
        jid = str(job["id"])
        try:
            digital = _digital_from(job["digital"], layout, base)
            guesses = job.get("scale_guess", {})
            provenance = {}
            if "simulate" in job:
                (x, xb, xt), (y, yb, yt), frame = _simulated_pair(job, digital, layout)
                for key, t in (("lr", xt), ("hr", yt)):
                    name = f"{jid}_{key}_truth.json"
                    t.save(out_dir / name)
                    provenance[f"{key}_truth"] = name
                gx = guesses.get("lr", 1.0 / xt.downscale)
                gy = guesses.get("hr", 1.0 / yt.downscale)
            else:
                cap = job["captured"]
                x, y = read_image(base / cap["lr"]), read_image(base / cap["hr"])
                xb = read_image(base / cap["lr_black"]) if "lr_black" in cap else np.zeros_like(x)
                yb = read_image(base / cap["hr_black"]) if "hr_black" in cap else np.zeros_like(y)
                frame = render_target(digital, layout)
                gx, gy = guesses.get("lr"), guesses.get("hr")
            x = subtract_black(x, xb)
            y = subtract_black(y, yb)
            _, rx = register_pair(x, frame, layout, opts, gx)
            _, ry = register_pair(y, frame, layout, opts, gy)
            if "simulate" in job:
                c = layout.content
                provenance["lr_error"] = registration_error(rx.transform, xt.effective_transform(), c).trials[0]
                provenance["hr_error"] = registration_error(ry.transform, yt.effective_transform(), c).trials[0]
            rec, _ = build_triplet(
                RegisteredPair(x, rx), RegisteredPair(y, ry), frame, layout, sr_factor,
                out_dir, jid, provenance=provenance,
            )
            records.append(rec)
        except (SrpairError, OSError, ValueError, KeyError) as e:
            reason = e.reason if isinstance(e, TripletRejectedError) else f"{type(e).__name__}: {e}"
            log.warning("job %s rejected: %s", jid, reason)
            rejected.append({"id": jid, "reason": reason})
    write_manifest(records, out_dir / "manifest.jsonl")
    with open(out_dir / "rejected.jsonl", "w") as fh:
        for r in rejected:
            fh.write(json.dumps(r, sort_keys=True) + "\n")
    return records, rejected


# -------------------------------------------------------------- benchmark

PROFILES = {
    "default": dict(
        canvas=1024, marker_side=64, bar_period=16, margin=128, out_size=1180,
        psf_sigma=1.0, noise_sigma=0.005, backlight=0.02, downscale=2.0,
        scale_range=(0.95, 1.05), max_rotation_deg=1.0, max_shift=10.0,
    ),
    "noiseless": dict(
        canvas=1024, marker_side=64, bar_period=16, margin=128, out_size=1180,
        psf_sigma=0.0, noise_sigma=0.0, backlight=0.0, downscale=2.0,
        scale_range=(0.95, 1.05), max_rotation_deg=1.0, max_shift=10.0,
    ),
}


def random_truth(rng, prof, seed):
    """Random similarity about the canvas centre, placed in the middle of the
    capture extent."""
    s = rng.uniform(*prof["scale_range"])
    a = math.radians(rng.uniform(-prof["max_rotation_deg"], prof["max_rotation_deg"]))
    t = rng.uniform(-prof["max_shift"], prof["max_shift"], 2)
    c = (prof["canvas"] - 1) / 2.0
    T = AffineTransform.similarity(s, a, t, center=(c, c))
    off = (prof["out_size"] - prof["canvas"]) / 2.0
    T = AffineTransform(T.S, T.b + off)
    truth = CaptureGroundTruth(
        T, prof["psf_sigma"], prof["noise_sigma"], prof["backlight"], prof["downscale"], seed,
        (prof["out_size"], prof["out_size"]),
    )
    return truth, (s, a, t)


def run_precision_bench(trials=50, seed=0, profile="default", opts=None, progress=None):
    """Simulated registration precision over seeded random truths.

    Each trial renders a fresh content image, simulates the capture and its
    black frame, registers, and scores both the centroid-only and refined
    transforms against the truth.  Returns ``(refined, spatial, rows)``:
    two :class:`ErrorReport` aggregates and one dict per trial.
    """
    prof = PROFILES[profile]
    opts = opts or RefineOptions()
    n = prof["canvas"]
    layout = make_layout(n, n, prof["marker_side"], prof["bar_period"], prof["margin"])
    children = np.random.SeedSequence(seed).spawn(trials)
    rows, ref_reports, sp_reports = [], [], []
    for k, ss in enumerate(children):
        rng = np.random.default_rng(ss)
        noise_seed = int(rng.integers(2**31))
        truth, (s, a, t) = random_truth(rng, prof, noise_seed)
        c = layout.content
        digital = synthetic_content(c.w, c.h, int(rng.integers(2**31)))
        t0 = time.perf_counter()
        frame = render_target(digital, layout)
        black = simulate_capture(render_black(layout), truth.with_seed(black_seed(noise_seed)))
        cap = subtract_black(simulate_capture(frame, truth), black)
        _, res = register_pair(cap, frame, layout, opts, 1.0 / prof["downscale"])
        elapsed = time.perf_counter() - t0
        eff = truth.effective_transform()
        er = registration_error(res.transform, eff, c)
        es = registration_error(spatial_transform(res), eff, c)
        ref_reports.append(er)
        sp_reports.append(es)
        row = {
            "trial": k,
            "seed": noise_seed,
            "scale": s,
            "rotation_deg": math.degrees(a),
            "shift_x": float(t[0]),
            "shift_y": float(t[1]),
            "spatial_mean_displacement": es.mean_displacement,
            "spatial_scale_error": es.scale_error,
            "spatial_rotation_error": es.rotation_error,
            "mean_displacement": er.mean_displacement,
            "max_displacement": er.max_displacement,
            "scale_error": er.scale_error,
            "rotation_error": er.rotation_error,
            "improved": er.mean_displacement < es.mean_displacement,
            "iterations": res.iterations,
            "converged": res.converged,
            "seconds": elapsed,
        }
        rows.append(row)
        if progress:
            progress(row)
    return ErrorReport.combine(ref_reports), ErrorReport.combine(sp_reports), rows
