"""Command-line interface: ``srpair <command> ...``."""
import argparse
import csv
import json
import logging
import sys
import time
from pathlib import Path

from . import __version__
from .capture import CameraScreenGeometry, CaptureGroundTruth, imaged_pixel_size, min_moire_distance, simulate_capture
from .errors import SrpairError
from .freq import RefineOptions
from .imfile import read_image, write_image
from .pattern import LayoutSpec, make_layout, render_black, render_target
from .pipeline import dual_reference_loss, register_pair, subtract_black

log = logging.getLogger("srpair")

BENCH_LIMITS = {"mean_displacement": 0.25, "scale_error": 1e-4, "rotation_error": 1e-3}


def _dump(obj, path=None):
    text = json.dumps(obj, indent=2)
    if path:
        with open(path, "w") as fh:
            fh.write(text + "\n")
    else:
        print(text)


def cmd_pattern_layout(args):
    layout = make_layout(args.canvas[0], args.canvas[1], args.marker_side, args.bar_period, args.margin)
    layout.save(args.out)
    c = layout.content
    print(f"layout {layout.width}x{layout.height}: content {c.w}x{c.h} at ({c.x}, {c.y}), "
          f"clearance {layout.clearance} px -> {args.out}")


def cmd_pattern_render(args):
    layout = LayoutSpec.load(args.layout)
    frame = render_target(read_image(args.image), layout, args.profile)
    write_image(args.out, frame)
    if args.black:
        channels = 1 if frame.ndim == 2 else frame.shape[2]
        write_image(args.black, render_black(layout, channels))


def cmd_placement(args):
    d = args.distance if args.distance is not None else 1e12
    g = CameraScreenGeometry(args.focal, max(d, args.focal * (1 + 1e-9)), args.screen_pitch, args.sensor_pitch)
    bound, ok = min_moire_distance(g)
    out = {"focal_mm": args.focal, "screen_pitch_um": args.screen_pitch,
           "sensor_pitch_um": args.sensor_pitch, "min_moire_free_distance_mm": bound}
    if args.distance is not None:
        out["distance_mm"] = args.distance
        out["imaged_pixel_um"] = imaged_pixel_size(g)
        out["moire_free"] = ok
    if args.json:
        _dump(out)
        return
    print(f"moire-free distance bound: d > {bound:.4f} mm")
    if args.distance is not None:
        verdict = "satisfied" if ok else "VIOLATED"
        print(f"imaged screen pixel at d = {args.distance:g} mm: {out['imaged_pixel_um']:.6f} um")
        print(f"bound {verdict} ({args.distance:g} mm vs {bound:.4f} mm)")


def cmd_simulate(args):
    truth = CaptureGroundTruth.load(args.truth)
    if args.seed is not None:
        truth = truth.with_seed(args.seed)
    cap = simulate_capture(read_image(args.frame), truth)
    write_image(args.out, cap)
    side = Path(args.out).with_suffix(".truth.json")
    truth.save(side)
    print(f"wrote {args.out} and {side}")


def _load_frame(path, layout):
    img = read_image(path)
    if img.shape[:2] == (layout.height, layout.width):
        return img
    # a bare content image: build the frame around it
    return render_target(img, layout)


def cmd_register(args):
    layout = LayoutSpec.load(args.layout)
    cap = read_image(args.captured)
    if args.black:
        cap = subtract_black(cap, read_image(args.black))
    frame = _load_frame(args.digital, layout)
    opts = RefineOptions() if args.beta is None else RefineOptions(beta=args.beta)
    aligned, result = register_pair(cap, frame, layout, opts, args.scale_guess)
    if args.out:
        write_image(args.out, aligned)
    rep = result.to_dict()
    _dump(rep, args.report)
    if not result.converged:
        log.warning("registration did not converge")
        return 3
    return 0


def cmd_dataset_build(args):
    from .dataset import build_dataset

    records, rejected = build_dataset(args.manifest, args.out_dir, args.sr_factor)
    print(f"{len(records)} triplets, {len(rejected)} rejected -> {Path(args.out_dir) / 'manifest.jsonl'}")
    return 0 if records or not rejected else 3


def cmd_loss(args):
    pred, hr, dig = (read_image(p) for p in (args.pred, args.captured_hr, args.digital))
    value = dual_reference_loss(pred, hr, dig, args.lam)
    print(f"{value:.10g}")


def cmd_bench_precision(args):
    from .dataset import run_precision_bench
    from .plotting import plot_error_histogram, plot_trial_scatter

    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    opts = RefineOptions() if args.beta is None else RefineOptions(beta=args.beta)

    def progress(row):
        log.info("trial %2d  centroid %.4f px  refined %.4f px  (%.1f s)", row["trial"],
                 row["spatial_mean_displacement"], row["mean_displacement"], row["seconds"])

    t0 = time.perf_counter()
    refined, spatial, rows = run_precision_bench(args.trials, args.seed, args.profile, opts, progress)
    wall = time.perf_counter() - t0
    with open(out / "trials.csv", "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=list(rows[0]))
        w.writeheader()
        w.writerows(rows)
    improved = sum(r["improved"] for r in rows)
    summary = {
        "profile": args.profile,
        "trials": args.trials,
        "seed": args.seed,
        "beta": opts.beta,
        "refined": {k: v for k, v in refined.to_dict().items() if k != "trials"},
        "spatial": {k: v for k, v in spatial.to_dict().items() if k != "trials"},
        "improved_trials": improved,
        "limits": BENCH_LIMITS,
        "within_limits": {k: getattr(refined, k) < v for k, v in BENCH_LIMITS.items()},
        "seconds": wall,
    }
    _dump(summary, out / "summary.json")
    plot_error_histogram(rows, out / "displacement_hist.png")
    plot_trial_scatter(rows, out / "trial_scatter.png")
    print(f"mean displacement {refined.mean_displacement:.4f} px (centroids only {spatial.mean_displacement:.4f}), "
          f"scale {refined.scale_error:.2e}, rotation {refined.rotation_error:.2e} rad, "
          f"improved {improved}/{len(rows)}, {wall:.0f} s -> {out}")
    return 0 if all(summary["within_limits"].values()) else 3


def build_parser():
    p = argparse.ArgumentParser(prog="srpair", description="Registration and simulation tools for screen-captured SR training pairs.")
    p.add_argument("--version", action="version", version=__version__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    pat = sub.add_parser("pattern", help="layouts and display frames").add_subparsers(dest="action", required=True)
    a = pat.add_parser("layout", help="write a layout JSON")
    a.add_argument("--canvas", type=int, nargs=2, default=[1024, 1024], metavar=("W", "H"))
    a.add_argument("--marker-side", type=int, default=64)
    a.add_argument("--bar-period", type=int, default=16)
    a.add_argument("--margin", type=int, default=128)
    a.add_argument("--out", required=True)
    a.set_defaults(func=cmd_pattern_layout)
    a = pat.add_parser("render", help="render a display frame around an image")
    a.add_argument("--layout", required=True)
    a.add_argument("--image", required=True)
    a.add_argument("--out", required=True)
    a.add_argument("--black", help="also write the black calibration frame here")
    a.add_argument("--profile", choices=["sine", "hard"], default="sine")
    a.set_defaults(func=cmd_pattern_render)

    a = sub.add_parser("placement", help="moire-free camera distance")
    a.add_argument("--focal", type=float, required=True, help="mm")
    a.add_argument("--screen-pitch", type=float, required=True, help="um")
    a.add_argument("--sensor-pitch", type=float, required=True, help="um")
    a.add_argument("--distance", type=float, help="mm")
    a.add_argument("--json", action="store_true")
    a.set_defaults(func=cmd_placement)

    a = sub.add_parser("simulate", help="simulate a capture of a frame")
    a.add_argument("--frame", required=True)
    a.add_argument("--truth", required=True)
    a.add_argument("--seed", type=int)
    a.add_argument("--out", required=True)
    a.set_defaults(func=cmd_simulate)

    a = sub.add_parser("register", help="register a capture to its digital frame")
    a.add_argument("--captured", required=True)
    a.add_argument("--layout", required=True)
    a.add_argument("--digital", required=True, help="rendered frame, or the bare content image")
    a.add_argument("--beta", type=float)
    a.add_argument("--report")
    a.add_argument("--scale-guess", type=float, help="captured px per digital px")
    a.add_argument("--black", help="black frame to subtract first")
    a.add_argument("--out", help="write the aligned capture here")
    a.set_defaults(func=cmd_register)

    ds = sub.add_parser("dataset", help="triplet datasets").add_subparsers(dest="action", required=True)
    a = ds.add_parser("build")
    a.add_argument("--manifest", required=True, help="jobs JSON")
    a.add_argument("--out-dir", required=True)
    a.add_argument("--sr-factor", type=int, default=4)
    a.set_defaults(func=cmd_dataset_build)

    a = sub.add_parser("loss", help="evaluate the dual-reference loss")
    a.add_argument("--pred", required=True)
    a.add_argument("--captured-hr", required=True)
    a.add_argument("--digital", required=True)
    a.add_argument("--lambda", dest="lam", type=float, default=0.1)
    a.set_defaults(func=cmd_loss)

    bn = sub.add_parser("bench", help="benchmarks").add_subparsers(dest="action", required=True)
    a = bn.add_parser("precision", help="simulated registration precision")
    a.add_argument("--trials", type=int, default=50)
    a.add_argument("--seed", type=int, default=0)
    a.add_argument("--profile", default="default", choices=["default", "noiseless"])
    a.add_argument("--beta", type=float)
    a.add_argument("--out-dir", default="bench_out")
    a.set_defaults(func=cmd_bench_precision)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args) or 0
    except (SrpairError, OSError, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
