"""Synthetic pendulum camera and state extraction.

render_frame draws a cart and pendulum over a lightly graded background;
extract_state recovers cart position (darkness-weighted centroid) and
pendulum angle (Hough peak with parabolic refinement), plus velocities by
backward differences.  Rendering is deterministic; edges are drawn with
coverage weighting so centroids track sub-pixel motion.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, replace

import numpy as np

from .errors import DataError, NoLineFound
from .image import as_image

BG_BASE = 140.0
BG_SPAN_COL = 30.0
BG_SPAN_ROW = 10.0
INK = 30.0
DARK_THRESHOLD = 100
THETA_STEP = math.radians(0.25)


@dataclass(frozen=True)
class CameraModel:
    """Virtual camera geometry; defaults give a +-0.48 m visible rail."""

    width: int = 480
    height: int = 240
    meters_per_pixel: float = 0.002
    rail_row: int = 170
    pendulum_length_px: int = 100
    cart_width_px: int = 48
    cart_height_px: int = 16

    def __post_init__(self):
        if self.meters_per_pixel <= 0:
            raise DataError("meters_per_pixel must be > 0")
        if not (
            0 < self.cart_height_px <= self.rail_row
            and self.rail_row + self.cart_height_px // 2 < self.height
        ):
            raise DataError("cart geometry does not fit the frame")

    @property
    def center_col(self) -> float:
        return (self.width - 1) / 2.0

    def column_of(self, alpha: float) -> float:
        return self.center_col + alpha / self.meters_per_pixel

    def alpha_of(self, column: float) -> float:
        return (column - self.center_col) * self.meters_per_pixel


@dataclass(frozen=True)
class StateEstimate:
    """Extracted state; velocities are backward differences, zero on the
    first frame.  valid=False flags a hold-last estimate after an
    extraction failure."""

    alpha: float
    theta: float
    alpha_dot: float
    theta_dot: float
    valid: bool = True

    @property
    def vector(self) -> np.ndarray:
        return np.array(
            [self.alpha, self.theta, self.alpha_dot, self.theta_dot], dtype=float
        )


def _blend_span(canvas: np.ndarray, row: int, lo: float, hi: float, value: float):
    """Paint [lo, hi] on one row with per-pixel coverage weighting."""
    if row < 0 or row >= canvas.shape[0] or hi <= lo:
        return
    w = canvas.shape[1]
    j0 = max(0, int(math.floor(lo - 0.5)))
    j1 = min(w - 1, int(math.ceil(hi + 0.5)))
    if j1 < j0:
        return
    js = np.arange(j0, j1 + 1)
    cov = np.clip(np.minimum(js + 0.5, hi) - np.maximum(js - 0.5, lo), 0.0, 1.0)
    canvas[row, j0 : j1 + 1] *= 1.0 - cov
    canvas[row, j0 : j1 + 1] += value * cov


def draw_line(canvas, r0: float, c0: float, r1: float, c1: float,
              thickness: float = 2.5, value: float = INK) -> None:
    """Draw an anti-aliased segment onto a float canvas (in place)."""
    dr, dc = r1 - r0, c1 - c0
    if abs(dr) >= abs(dc):
        if dr == 0:
            return
        half = thickness * math.hypot(dr, dc) / abs(dr) / 2.0
        step = 1 if dr > 0 else -1
        for r in range(int(round(r0)), int(round(r1)) + step, step):
            c = c0 + (r - r0) * dc / dr
            _blend_span(canvas, r, c - half, c + half, value)
    else:
        half = thickness * math.hypot(dr, dc) / abs(dc) / 2.0
        cT = canvas.T
        step = 1 if dc > 0 else -1
        for c in range(int(round(c0)), int(round(c1)) + step, step):
            r = r0 + (c - c0) * dr / dc
            _blend_span(cT, c, r - half, r + half, value)


def render_frame(alpha: float, theta: float, cam: CameraModel | None = None) -> np.ndarray:
    """Deterministic frame: graded light background, dark cart at alpha,
    dark pendulum at angle theta from vertical (positive = tip to the
    right).  alpha values that push the cart off the rail are clamped with
    a warning."""
    cam = cam or CameraModel()
    h, w = cam.height, cam.width
    cols = np.linspace(0.0, 1.0, w)
    rows = np.linspace(0.0, 1.0, h)
    canvas = BG_BASE + BG_SPAN_COL * cols[None, :] + BG_SPAN_ROW * rows[:, None]

    half_w = cam.cart_width_px / 2.0
    cc = cam.column_of(alpha)
    lo_c, hi_c = half_w, w - 1 - half_w
    if cc < lo_c or cc > hi_c:
        warnings.warn(
            f"cart position {alpha} m is outside the visible rail; clamping",
            stacklevel=2,
        )
        cc = min(max(cc, lo_c), hi_c)

    top = cam.rail_row - cam.cart_height_px // 2
    bot = cam.rail_row + cam.cart_height_px // 2
    for r in range(top, bot):
        _blend_span(canvas, r, cc - half_w, cc + half_w, INK)

    length = cam.pendulum_length_px
    pivot_r, pivot_c = float(top), cc
    tip_r = pivot_r - length * math.cos(theta)
    tip_c = pivot_c + length * math.sin(theta)
    draw_line(canvas, pivot_r, pivot_c, tip_r, tip_c, thickness=2.5, value=INK)

    return np.clip(np.rint(canvas), 0, 255).astype(np.uint8)


def hough_peak(img: np.ndarray, theta_max: float = math.radians(50.0),
               theta_step: float = THETA_STEP, dark_threshold: int = DARK_THRESHOLD,
               min_score: float = 25.0):
    """Strongest line through the dark pixels of img.

    Angles are measured from vertical (theta=0 is a vertical line); rho is
    col*cos(theta) + row*sin(theta) in pixels.  The angle estimate is
    refined by a parabolic fit over the vote envelope, giving resolution
    well below the bin width.  Raises NoLineFound (carrying the best score)
    when no bin collects min_score votes.
    """
    img = as_image(img)
    pts = np.argwhere(img < dark_threshold)
    if pts.shape[0] == 0:
        raise NoLineFound(0.0)
    rows = pts[:, 0].astype(np.float64)
    cols = pts[:, 1].astype(np.float64)
    thetas = np.arange(-theta_max, theta_max + theta_step / 2, theta_step)
    offset = int(math.ceil(math.hypot(*img.shape)))
    nrho = 2 * offset + 1
    envelope = np.empty(len(thetas))
    peak_rho = np.empty(len(thetas), dtype=np.intp)
    for ti, theta in enumerate(thetas):
        rho_idx = np.rint(cols * math.cos(theta) + rows * math.sin(theta)).astype(
            np.intp
        ) + offset
        counts = np.bincount(rho_idx, minlength=nrho)
        ri = int(np.argmax(counts))
        envelope[ti] = counts[ri]
        peak_rho[ti] = ri
    score = float(envelope.max())
    if score < min_score:
        raise NoLineFound(score)
    # a thick line supports the max score over a plateau of bins; take its
    # middle rather than the first hit
    plateau = np.flatnonzero(envelope == score)
    ti = int(plateau[len(plateau) // 2])
    theta = float(thetas[ti])
    rho = float(peak_rho[ti] - offset)
    # refine the quantized angle with a principal-axis fit over the pixels
    # in a corridor around the winning line
    dist = np.abs(cols * math.cos(theta) + rows * math.sin(theta) - rho)
    inliers = dist <= 2.5
    if int(inliers.sum()) >= 10:
        r_in = rows[inliers] - rows[inliers].mean()
        c_in = cols[inliers] - cols[inliers].mean()
        cov = np.array(
            [
                [np.dot(r_in, r_in), np.dot(r_in, c_in)],
                [np.dot(r_in, c_in), np.dot(c_in, c_in)],
            ]
        )
        evals, evecs = np.linalg.eigh(cov)
        v_r, v_c = evecs[:, int(np.argmax(evals))]
        if v_r > 0:
            v_r, v_c = -v_r, -v_c
        refined = math.atan2(v_c, -v_r)
        if abs(refined - theta) <= 5 * theta_step:
            theta = refined
            r_mid = rows[inliers].mean()
            c_mid = cols[inliers].mean()
            rho = c_mid * math.cos(theta) + r_mid * math.sin(theta)
    return rho, theta, score


def extract_state(img: np.ndarray, prev: StateEstimate | None, dt: float,
                  cam: CameraModel | None = None, region=None) -> StateEstimate:
    """Cart position from the darkness-weighted centroid of the cart band,
    pendulum angle from the Hough peak above the cart.

    `region` optionally restricts analysis to the column band that was
    encrypted/transmitted.  Failures (blank frame, saturated noise, no
    line) are signalled by returning the previous estimate with
    valid=False rather than raising.
    """
    cam = cam or CameraModel()
    img = as_image(img)
    h, w = img.shape
    if region is not None:
        x0 = region.x0
        x1 = min(w, region.x0 + region.cols)
    else:
        x0, x1 = 0, w

    def _fail() -> StateEstimate:
        if prev is not None:
            return replace(prev, valid=False)
        return StateEstimate(0.0, 0.0, 0.0, 0.0, valid=False)

    sub = img[:, x0:x1]
    dark_fraction = float(np.mean(sub < DARK_THRESHOLD))
    if dark_fraction > 0.5:
        return _fail()

    top = cam.rail_row - cam.cart_height_px // 2
    bot = cam.rail_row + cam.cart_height_px // 2
    cart_band = img[top:bot, x0:x1].astype(np.float64)
    weights = np.clip(DARK_THRESHOLD - cart_band, 0.0, None)
    mass = float(weights.sum())
    # roughly 10% of the ideal cart mass; below this the cart is not visible
    min_mass = 0.1 * cam.cart_width_px * cam.cart_height_px * (DARK_THRESHOLD - INK)
    if mass < min_mass:
        return _fail()
    col_centers = np.arange(x0, x1, dtype=np.float64)
    centroid = float((weights.sum(axis=0) * col_centers).sum() / mass)
    alpha = cam.alpha_of(centroid)

    sky = img[:top, x0:x1]
    try:
        _rho, theta, _score = hough_peak(
            sky, theta_max=math.radians(30.0), min_score=20.0
        )
    except NoLineFound:
        return _fail()

    if prev is not None and dt > 0:
        alpha_dot = (alpha - prev.alpha) / dt
        theta_dot = (theta - prev.theta) / dt
    else:
        alpha_dot = 0.0
        theta_dot = 0.0
    return StateEstimate(alpha, theta, alpha_dot, theta_dot, valid=True)
