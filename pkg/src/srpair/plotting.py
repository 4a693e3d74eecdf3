"""Figures for the precision benchmark, rendered off-screen to files."""
import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402


def plot_error_histogram(rows, path, threshold=None):
    """Histogram of per-trial mean displacement, centroid-only vs refined."""
    sp = np.array([r["spatial_mean_displacement"] for r in rows])
    rf = np.array([r["mean_displacement"] for r in rows])
    hi = max(sp.max(), rf.max()) if len(rows) else 1.0
    bins = np.linspace(0, hi * 1.05, 25)
    fig, ax = plt.subplots(figsize=(5, 3.5))
    ax.hist(sp, bins=bins, alpha=0.6, label="centroids only")
    ax.hist(rf, bins=bins, alpha=0.6, label="dual-domain refined")
    if threshold is not None and threshold <= hi * 1.05:
        ax.axvline(threshold, color="k", ls="--", lw=1)
    ax.set_xlabel("mean displacement error (captured px)")
    ax.set_ylabel("trials")
    ax.legend(frameon=False)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def plot_trial_scatter(rows, path):
    """Refined vs centroid-only error per trial; points below the diagonal improved."""
    sp = np.array([r["spatial_mean_displacement"] for r in rows])
    rf = np.array([r["mean_displacement"] for r in rows])
    fig, ax = plt.subplots(figsize=(4, 4))
    ok = rf < sp
    ax.scatter(sp[ok], rf[ok], s=14, label=f"improved ({ok.sum()})")
    ax.scatter(sp[~ok], rf[~ok], s=14, marker="x", color="C3", label=f"not improved ({(~ok).sum()})")
    hi = max(sp.max(), rf.max()) * 1.1 if len(rows) else 1.0
    ax.plot([0, hi], [0, hi], "k-", lw=0.8)
    ax.set_xlim(0, hi)
    ax.set_ylim(0, hi)
    ax.set_xlabel("centroid-only error (px)")
    ax.set_ylabel("refined error (px)")
    ax.legend(frameon=False, loc="upper left")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
