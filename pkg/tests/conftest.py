import numpy as np
import pytest

from srpair import AffineTransform, CaptureGroundTruth, make_layout, render_target
from srpair.dataset import synthetic_content


@pytest.fixture(scope="session")
def small_layout():
    # 512 canvas, 32 px markers, period 8: quick to simulate and register
    return make_layout(512, 512, marker_side=32, bar_period=8, margin=64)


@pytest.fixture(scope="session")
def small_frame(small_layout):
    c = small_layout.content
    return render_target(synthetic_content(c.w, c.h, seed=7), small_layout)


@pytest.fixture(scope="session")
def bench_layout():
    return make_layout(1024, 1024, marker_side=64, bar_period=16, margin=128)


@pytest.fixture(scope="session")
def bench_frame(bench_layout):
    c = bench_layout.content
    return render_target(synthetic_content(c.w, c.h, seed=3), bench_layout)


def similarity_truth(canvas, scale, angle, shift, out, **kw):
    """Similarity about the canvas centre, centred in an ``out``-wide capture."""
    c = (canvas - 1) / 2.0
    T = AffineTransform.similarity(scale, angle, shift, center=(c, c))
    T = AffineTransform(T.S, T.b + (out - canvas) / 2.0)
    return CaptureGroundTruth(T, out_size=(out, out), **kw)


def grid_error(Ta, Tb, region, n=32):
    ys, xs = np.mgrid[0:n, 0:n]
    pts = np.column_stack([region.x + (xs.ravel() + 0.5) * region.w / n - 0.5,
                           region.y + (ys.ravel() + 0.5) * region.h / n - 0.5])
    return float(np.linalg.norm(Ta.apply(pts) - Tb.apply(pts), axis=1).mean())
