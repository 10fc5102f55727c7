"""Security and fidelity metrics for 8-bit grayscale images."""

from __future__ import annotations

import math
from dataclasses import dataclass, asdict

import numpy as np

from .errors import DataError
from .image import as_image

PEAK = 255.0


def _check_pair(a, b):
    a, b = as_image(a), as_image(b)
    if a.shape != b.shape:
        raise DataError(f"image shapes differ: {a.shape} vs {b.shape}")
    return a, b


def npcr(a: np.ndarray, b: np.ndarray) -> float:
    """Percentage of pixel positions at which the two images differ."""
    a, b = _check_pair(a, b)
    return 100.0 * float(np.count_nonzero(a != b)) / a.size


def uaci(a: np.ndarray, b: np.ndarray) -> float:
    """Mean absolute intensity difference as a percentage of full scale."""
    a, b = _check_pair(a, b)
    diff = np.abs(a.astype(np.int64) - b.astype(np.int64))
    return 100.0 * float(diff.mean()) / PEAK


def adjacency_correlation(img: np.ndarray, direction: str = "h",
                          pairs: int = 2000, seed: int = 0) -> float:
    """Pearson correlation of randomly sampled adjacent pixel pairs.

    direction 'h' pairs (r,c)-(r,c+1), 'v' pairs (r,c)-(r+1,c),
    'd' pairs (r,c)-(r+1,c+1); positions lacking a neighbour are excluded.
    Returns nan when the sampled values are constant (undefined
    correlation).
    """
    img = as_image(img)
    h, w = img.shape
    if direction == "h":
        dr, dc = 0, 1
    elif direction == "v":
        dr, dc = 1, 0
    elif direction == "d":
        dr, dc = 1, 1
    else:
        raise DataError(f"direction must be h, v or d, got {direction!r}")
    if h - dr < 1 or w - dc < 1:
        raise DataError(f"image too small for direction {direction!r}")
    rng = np.random.Generator(np.random.PCG64(seed))
    rows = rng.integers(0, h - dr, size=pairs)
    cols = rng.integers(0, w - dc, size=pairs)
    x = img[rows, cols].astype(np.float64)
    y = img[rows + dr, cols + dc].astype(np.float64)
    if x.std() == 0.0 or y.std() == 0.0:
        return float("nan")
    return float(np.corrcoef(x, y)[0, 1])


def histogram(img: np.ndarray) -> np.ndarray:
    """256-bin intensity histogram; counts sum to the pixel count."""
    img = as_image(img)
    return np.bincount(img.reshape(-1), minlength=256)


def entropy(img: np.ndarray) -> float:
    """Shannon entropy (bits) of the intensity histogram."""
    counts = histogram(img)
    p = counts[counts > 0] / counts.sum()
    return float(-(p * np.log2(p)).sum())


def histogram_chi2(img: np.ndarray) -> float:
    """Chi-square statistic of the histogram against uniform (255 dof)."""
    counts = histogram(img)
    expected = counts.sum() / 256.0
    return float(((counts - expected) ** 2 / expected).sum())


def psnr(ref: np.ndarray, test: np.ndarray) -> float:
    """Peak signal-to-noise ratio in dB; +inf for identical images."""
    ref, test = _check_pair(ref, test)
    mse = float(
        np.mean((ref.astype(np.float64) - test.astype(np.float64)) ** 2)
    )
    if mse == 0.0:
        return math.inf
    return 10.0 * math.log10(PEAK * PEAK / mse)


@dataclass(frozen=True)
class MetricsReport:
    npcr: float
    uaci: float
    corr_h: float
    corr_v: float
    corr_d: float
    entropy: float
    psnr: float

    def to_dict(self) -> dict:
        return asdict(self)


def report(ref: np.ndarray, test: np.ndarray, seed: int = 0,
           pairs: int = 2000) -> MetricsReport:
    """Full metric sweep: pairwise metrics between ref and test, adjacency
    correlations and entropy of the test image."""
    return MetricsReport(
        npcr=npcr(ref, test),
        uaci=uaci(ref, test),
        corr_h=adjacency_correlation(test, "h", pairs=pairs, seed=seed),
        corr_v=adjacency_correlation(test, "v", pairs=pairs, seed=seed + 1),
        corr_d=adjacency_correlation(test, "d", pairs=pairs, seed=seed + 2),
        entropy=entropy(test),
        psnr=psnr(ref, test),
    )
