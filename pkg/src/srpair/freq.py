"""Dual-domain refinement of the marker-based affine fit.

Each bar band is probed by a single-frequency Fourier coefficient.  Its
phase, compared with the designed one, measures residual misalignment along
the band axis; its magnitude drops when scale or rotation are off.  Two
probes are provided.  :class:`BandSampler` resamples the captured image at
the candidate-warped band coordinates and sums over the digital band
(bilinear interpolation).  :class:`AffineBandProbe` sums over captured pixels
with the phase pulled back through the candidate transform and a smooth
window, which avoids interpolation bias; the refinement uses it by default.

The refinement minimises ``f1 - beta * f2``, where ``f1`` is the mean squared
anchor residual in digital pixels and ``f2`` sums the real parts of the
phase-corrected, normalised probes.

Transforms here map digital-frame coordinates into the captured image,
``z(x) = captured(S x + b)``.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import InsufficientOverlapError
from .raster import DET_EPS, AffineTransform, sample_bicubic, sample_bilinear
from .spatial import anchor_residual

MIN_OVERLAP = 0.5


@dataclass(frozen=True)
class FrequencyProbe:
    Z: complex
    H_ref_mag: float
    overlap: float = 1.0


class BandSampler:
    """Cached band coordinates and phasors for repeated probing of one bar."""

    def __init__(self, bar, interior=False, interp="bilinear"):
        self.bar = bar
        self.sample = sample_bicubic if interp == "bicubic" else sample_bilinear
        self.region = bar.interior() if interior else bar.rect
        self.xs, self.ys, t = bar.coords(self.region)
        self.phasor = np.exp(2j * np.pi * bar.freq * t)
        ideal = bar.profile(t)
        self.H_ref_mag = float(np.abs(np.sum((ideal - ideal.mean()) * self.phasor)))

    def probe(self, captured, T):
        lum = captured if captured.ndim == 2 else captured.mean(axis=2)
        S, b = T.S, T.b
        sx = S[0, 0] * self.xs + S[0, 1] * self.ys + b[0]
        sy = S[1, 0] * self.xs + S[1, 1] * self.ys + b[1]
        vals, inside = self.sample(lum, sx, sy)
        n_in = int(inside.sum())
        overlap = n_in / inside.size
        if overlap < MIN_OVERLAP:
            raise InsufficientOverlapError(
                f"only {overlap:.0%} of the {self.bar.orient} bar at {self.bar.rect} maps into the capture"
            )
        mean = vals.sum() / n_in
        centered = np.where(inside, vals - mean, 0.0)
        Z = complex(np.dot(centered, self.phasor))
        return FrequencyProbe(Z, self.H_ref_mag, overlap)


def _ramp(u, lo, hi, width):
    """C1 raised-cosine plateau: 0 outside [lo, hi], 1 inside the ramps."""
    a = np.clip((u - lo) / width, 0.0, 1.0)
    b = np.clip((hi - u) / width, 0.0, 1.0)
    return (0.5 - 0.5 * np.cos(np.pi * a)) * (0.5 - 0.5 * np.cos(np.pi * b))


def _spline_edge(a):
    # integral of a unit triangle on [0, 1]: quadratic, C1
    a = np.clip(a, 0.0, 1.0)
    return np.where(a < 0.5, 2 * a * a, 1 - 2 * (1 - a) ** 2)


def _period_window(u, lo, hi, period):
    """Plateau window on [lo, hi] equal to a box convolved with two boxes of
    one period.  When ``hi - lo`` is a whole number of periods its spectrum has
    a triple zero at the design frequency and at twice it, so neither the
    mean nor the conjugate image leaks into the probe, even to first order in
    a small frequency mismatch."""
    w = 2.0 * period
    return _spline_edge((u - lo) / w) * _spline_edge((hi - u) / w)


class AffineBandProbe:
    """Band coefficient evaluated on the captured pixel grid.

    By the affine theorem, the coefficient of ``z(x) = h(S x + b)`` at ``w`` is
    the captured segment's transform at ``S^-T w`` times ``exp(j 2 pi b' S^-T w)
    / det S``.  The sum therefore runs over captured pixels ``p``, with the
    digital phase ``w t(T^-1 p)`` and a smooth band window pulled back through
    ``T``.  Nothing is interpolated, so the result carries no dependence on
    where samples fall between captured pixels, and it is smooth in ``T``.
    """

    def __init__(self, bar, edge_fraction=0.125):
        self.bar = bar
        r = bar.rect
        self.length = r.w if bar.orient == "horizontal" else r.h
        self.depth = r.h if bar.orient == "horizontal" else r.w
        self.period = 1.0 / bar.freq
        self.d_guard = float(max(1, int(self.depth * edge_fraction)))
        # half a period of guard at each end keeps the support a whole number
        # of periods; short bands give it up
        self.guard = self.period / 2 if self.length >= 6 * self.period else 0.0
        # ideal normaliser: same window on the digital grid
        xs, ys, t = bar.coords()
        wgt = self._window(xs, ys)
        ideal = bar.profile(t)
        mu = np.sum(wgt * ideal) / np.sum(wgt)
        self.H_ref_mag = float(np.abs(np.sum(wgt * (ideal - mu) * np.exp(2j * np.pi * bar.freq * t))))
        self.corners = np.array([[r.x - 0.5, r.y - 0.5], [r.x1 - 0.5, r.y - 0.5],
                                 [r.x - 0.5, r.y1 - 0.5], [r.x1 - 0.5, r.y1 - 0.5]])

    def _window(self, xs, ys):
        r = self.bar.rect
        if self.bar.orient == "horizontal":
            u, v = xs - (r.x - 0.5), ys - (r.y - 0.5)
        else:
            u, v = ys - (r.y - 0.5), xs - (r.x - 0.5)
        p, g = self.period, self.d_guard
        return _period_window(u, self.guard, self.length - self.guard, p) * _period_window(v, g, self.depth - g, g)

    def probe(self, captured, T):
        lum = captured if captured.ndim == 2 else captured.mean(axis=2)
        h, w = lum.shape
        box = T.apply(self.corners)
        x0 = int(np.floor(box[:, 0].min()))
        x1 = int(np.ceil(box[:, 0].max()))
        y0 = int(np.floor(box[:, 1].min()))
        y1 = int(np.ceil(box[:, 1].max()))
        Ti = T.inverse()
        full = None
        if x0 < 0 or y0 < 0 or x1 > w - 1 or y1 > h - 1:
            full = np.mgrid[y0 : y1 + 1, x0 : x1 + 1].astype(float)
        cx0, cy0 = max(x0, 0), max(y0, 0)
        cx1, cy1 = min(x1, w - 1), min(y1, h - 1)
        if cx1 < cx0 or cy1 < cy0:
            raise InsufficientOverlapError(f"{self.bar.orient} bar at {self.bar.rect} maps outside the capture")
        py, px = np.mgrid[cy0 : cy1 + 1, cx0 : cx1 + 1].astype(float)
        px, py = px.ravel(), py.ravel()
        qx = Ti.S[0, 0] * px + Ti.S[0, 1] * py + Ti.b[0]
        qy = Ti.S[1, 0] * px + Ti.S[1, 1] * py + Ti.b[1]
        wgt = self._window(qx, qy)
        mass = wgt.sum()
        if full is not None:
            fx = Ti.S[0, 0] * full[1] + Ti.S[0, 1] * full[0] + Ti.b[0]
            fy = Ti.S[1, 0] * full[1] + Ti.S[1, 1] * full[0] + Ti.b[1]
            overlap = mass / max(self._window(fx, fy).sum(), 1e-300)
        else:
            overlap = 1.0
        if overlap < MIN_OVERLAP or not mass > 0:
            raise InsufficientOverlapError(
                f"only {overlap:.0%} of the {self.bar.orient} bar at {self.bar.rect} maps into the capture"
            )
        vals = lum[cy0 : cy1 + 1, cx0 : cx1 + 1].ravel()
        mu = np.dot(wgt, vals) / mass
        t = qx - self.bar.rect.x if self.bar.orient == "horizontal" else qy - self.bar.rect.y
        phasor = np.exp(2j * np.pi * self.bar.freq * t)
        Z = complex(np.dot(wgt * (vals - mu), phasor)) / abs(T.det)
        return FrequencyProbe(Z, self.H_ref_mag, float(overlap))


def probe_coefficient(captured, T, bar, interior=False):
    """Single-bin Fourier coefficient of ``captured`` sampled on the warped band.

    ``Z = sum_x (z(x) - mean z) * exp(+j 2 pi w t(x))`` over the band's digital
    pixels ``x``, with ``t`` the along-axis offset from the band origin, so that
    an aligned band with designed phase ``theta`` yields ``arg Z = 2 pi theta``.
    With ``interior`` set only the band's inset interior is summed, keeping
    the blurred band edges out of the magnitude.
    """
    return BandSampler(bar, interior).probe(captured, T)


def delta_m(probe, theta, T=None, normalize=True):
    """Phase-corrected probe ``Z exp(-j 2 pi theta)``, optionally divided by the
    ideal pattern's coefficient magnitude.

    ``T`` is accepted for interface symmetry; the determinant and warped
    spectrum factors are already carried by re-probing the warped band.
    """
    d = probe.Z * np.exp(-2j * np.pi * theta)
    if normalize and probe.H_ref_mag > 0:
        d /= probe.H_ref_mag
    return complex(d)


def objective_f2(captured, T, bars, normalize=True, samplers=None):
    """Sum of ``Re(delta_m)`` over the four bars."""
    if samplers is None:
        samplers = [BandSampler(b) for b in bars]
    total = 0.0
    for smp in samplers:
        total += delta_m(smp.probe(captured, T), smp.bar.phase, T, normalize).real
    return total


@dataclass
class RefineOptions:
    """Hyperparameters of the joint refinement.

    ``precondition`` selects the descent metric.  ``"curvature"`` scales the
    gradient by the inverse of a finite-difference curvature matrix estimated
    at the starting point (re-estimated when the line search struggles);
    ``"groups"`` uses the plain per-group steps ``step_S`` and ``step_b``.
    ``step_S`` of ``None`` derives the S-entry step from ``step_b`` and the
    spread of the band and anchor coordinates, which equalises the curvature
    of the two parameter groups.

    ``probe`` picks the band coefficient used inside the objective:
    ``"affine"`` (:class:`AffineBandProbe`) or ``"sampled"``
    (:class:`BandSampler` with ``probe_interp`` interpolation).
    """

    beta: float = 1000.0
    step_b: float = 0.05
    step_S: float | None = None
    max_iters: int = 300
    tol_b: float = 1e-4
    tol_S: float = 1e-7
    grad_tol: float = 1e-9
    fd_step_b: float = 1e-4
    fd_step_S: float = 1e-6
    max_halvings: int = 20
    normalize: bool = True
    probe: str = "affine"
    probe_interp: str = "bilinear"
    precondition: str = "curvature"
    hess_step_factor: float = 50.0

    def __post_init__(self):
        if self.beta < 0:
            raise ValueError("beta must be non-negative")
        if self.precondition not in ("curvature", "groups"):
            raise ValueError(f"unknown precondition {self.precondition!r}")
        if self.probe not in ("affine", "sampled"):
            raise ValueError(f"unknown probe {self.probe!r}")
        if not (self.tol_b > 0 and self.tol_S > 0):
            raise ValueError("thresholds must be positive")

    def to_dict(self):
        return dict(self.__dict__)


@dataclass
class RegistrationResult:
    transform: AffineTransform
    f1_final: float
    f2_final: float
    iterations: int
    per_marker_residuals: list
    converged: bool
    objective: float = float("nan")
    line_search_failed: bool = False
    history: list = field(default_factory=list)
    diagnostics: dict = field(default_factory=dict)

    def to_dict(self):
        d = {
            "S": self.transform.S.tolist(),
            "b": self.transform.b.tolist(),
            "f1": self.f1_final,
            "f2": self.f2_final,
            "iters": self.iterations,
            "converged": self.converged,
            "marker_residuals": list(self.per_marker_residuals),
        }
        if self.diagnostics:
            d["diagnostics"] = self.diagnostics
        return d

    @classmethod
    def from_dict(cls, d):
        return cls(
            AffineTransform(d["S"], d["b"]),
            d["f1"],
            d["f2"],
            d["iters"],
            d["marker_residuals"],
            d["converged"],
            diagnostics=d.get("diagnostics", {}),
        )


class JointObjective:
    """``f1 - beta * f2`` over the centred parameter vector
    ``q = [S11, S12, S21, S22, c1, c2]`` with ``c = S @ center + b``."""

    def __init__(self, captured, anchors, bars, opts, center):
        self.captured = captured
        self.anchors = anchors
        if opts.probe == "affine":
            self.samplers = [AffineBandProbe(b) for b in bars]
        else:
            self.samplers = [BandSampler(b, interp=opts.probe_interp) for b in bars]
        self.opts = opts
        self.center = np.asarray(center, dtype=float)
        self.n_evals = 0

    def to_transform(self, q):
        S = q[:4].reshape(2, 2)
        return AffineTransform(S, q[4:] - S @ self.center)

    def to_params(self, T):
        return np.concatenate([T.S.ravel(), T.S @ self.center + T.b])

    def f1_terms(self, T):
        # anchor residual in the digital frame: T^-1(src) - dst
        res = anchor_residual(T.inverse(), self.anchors)
        return float(np.mean(np.sum(res**2, axis=1))), res

    def f2(self, T):
        return objective_f2(self.captured, T, None, self.opts.normalize, self.samplers)

    def __call__(self, q):
        self.n_evals += 1
        T = self.to_transform(q)
        f1, _ = self.f1_terms(T)
        if self.opts.beta == 0:
            return f1
        return f1 - self.opts.beta * self.f2(T)

    def fd_steps(self):
        return np.array([self.opts.fd_step_S] * 4 + [self.opts.fd_step_b] * 2)

    def gradient(self, q):
        h = self.fd_steps()
        g = np.empty(6)
        for i in range(6):
            e = np.zeros(6)
            e[i] = h[i]
            g[i] = (self(q + e) - self(q - e)) / (2 * h[i])
        return g

    def hessian(self, q, f0=None):
        """Second-difference curvature matrix with steps ``hess_step_factor``
        times the gradient steps."""
        h = self.fd_steps() * self.opts.hess_step_factor
        f0 = self(q) if f0 is None else f0
        H = np.empty((6, 6))
        E = np.diag(h)
        for i in range(6):
            H[i, i] = (self(q + E[i]) - 2 * f0 + self(q - E[i])) / h[i] ** 2
            for j in range(i):
                v = (self(q + E[i] + E[j]) - self(q + E[i] - E[j])
                     - self(q - E[i] + E[j]) + self(q - E[i] - E[j])) / (4 * h[i] * h[j])
                H[i, j] = H[j, i] = v
        return H


def _metric(H, floor=1e-8):
    """Inverse of ``H`` with eigenvalues replaced by their magnitudes,
    floored relative to the largest, so the direction always descends."""
    lam, V = np.linalg.eigh(0.5 * (H + H.T))
    mag = np.abs(lam)
    top = mag.max() if mag.size and mag.max() > 0 else 1.0
    mag = np.maximum(mag, floor * top)
    return (V / mag) @ V.T


def _coordinate_spread(bars, anchors, center):
    pts = [np.column_stack(b.coords()[:2]) for b in bars] + [anchors.dst]
    d = np.vstack(pts) - center
    return float(np.mean(np.sum(d**2, axis=1)) / 2.0)


def refine_dual_domain(captured, init, anchors, bars, opts=None):
    """Gradient descent on ``f1 - beta * f2`` from a marker-based initial transform.

    Uses central-difference gradients, a fixed descent metric (see
    :class:`RefineOptions`) and a backtracking line search (step halved until
    the objective decreases, at most ``opts.max_halvings`` times).  Accepted
    iterates never increase the objective.
    """
    opts = opts or RefineOptions()
    center = anchors.dst.mean(axis=0)
    J = JointObjective(captured, anchors, bars, opts, center)
    step_S = opts.step_S
    if step_S is None:
        step_S = opts.step_b / _coordinate_spread(bars, anchors, center)
    scale = np.array([step_S] * 4 + [opts.step_b] * 2)
    tol = np.array([opts.tol_S] * 4 + [opts.tol_b] * 2)
    curv = opts.precondition == "curvature"

    q = J.to_params(init)
    fq = J(q)
    history = [fq]
    P = _metric(J.hessian(q, fq)) if curv else None
    alpha = 1.0
    converged = False
    ls_failed = False
    it = 0
    while it < opts.max_iters:
        it += 1
        g = J.gradient(q)
        d = -P @ g if curv else -scale * g
        if np.linalg.norm(g) < opts.grad_tol:
            converged = True
            break
        a = alpha
        accepted = False
        for _ in range(opts.max_halvings + 1):
            qn = q + a * d
            Sn = qn[:4].reshape(2, 2)
            if np.linalg.det(Sn) > DET_EPS:
                try:
                    fn = J(qn)
                except InsufficientOverlapError:
                    fn = np.inf
                if fn < fq:
                    accepted = True
                    break
            a /= 2
        if not accepted:
            # no descent along the scaled gradient: stationary up to the step floor
            converged = bool(np.all(np.abs(d) < tol))
            ls_failed = not converged
            break
        step = qn - q
        q, fq = qn, fn
        history.append(fq)
        if curv:
            if a < 0.125:
                # the quadratic model is poor here; measure the curvature afresh
                P = _metric(J.hessian(q, fq))
            alpha = min(a * 2, 1.0)
        else:
            alpha = min(a * 2, 1e6)
        if np.all(np.abs(step) < tol):
            converged = True
            break

    T = J.to_transform(q)
    f1_ms, res = J.f1_terms(T)
    f2 = J.f2(T)
    return RegistrationResult(
        transform=T,
        f1_final=float(np.linalg.norm(res)),
        f2_final=f2,
        iterations=it,
        per_marker_residuals=np.hypot(res[:, 0], res[:, 1]).tolist(),
        converged=converged,
        objective=fq,
        line_search_failed=ls_failed,
        history=history,
        diagnostics={"objective_init": history[0], "objective": fq, "evaluations": J.n_evals},
    )
