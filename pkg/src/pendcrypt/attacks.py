"""Seeded eavesdropping-attack injectors for transmitted frames.

Each attack is a pure function of (image, parameters, seed); seeds drive a
PCG64 generator so every experiment is replayable from its recorded seed.
The injection_time on AttackSpec is metadata consumed by the closed-loop
scheduler (attacks need wall-clock time to modify pixels in transit).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DataError
from .image import as_image

KINDS = ("shear", "salt_pepper", "gaussian")
DEFAULT_INJECTION_TIME = 0.001  # seconds


@dataclass(frozen=True)
class AttackSpec:
    """One attack: kind plus its magnitude parameters and a seed."""

    kind: str
    rate: float | None = None  # shear: fraction of pixels zeroed
    density: float | None = None  # salt_pepper: per-pixel flip probability
    mu: float | None = None  # gaussian: mean, gray levels
    sigma: float | None = None  # gaussian: std deviation, gray levels
    seed: int = 0
    injection_time: float = DEFAULT_INJECTION_TIME

    def __post_init__(self):
        if self.kind not in KINDS:
            raise DataError(f"unknown attack kind {self.kind!r}, expected {KINDS}")
        if self.injection_time < 0:
            raise DataError("injection_time must be >= 0")
        if self.kind == "shear":
            if self.rate is None or not 0.0 <= self.rate <= 1.0:
                raise DataError(f"shear rate must be in [0, 1], got {self.rate}")
        elif self.kind == "salt_pepper":
            if self.density is None or not 0.0 <= self.density <= 1.0:
                raise DataError(
                    f"salt/pepper density must be in [0, 1], got {self.density}"
                )
        else:
            if self.mu is None or self.sigma is None or self.sigma < 0:
                raise DataError("gaussian attack needs mu and sigma >= 0")

    def apply(self, img: np.ndarray, seed: int | None = None) -> np.ndarray:
        seed = self.seed if seed is None else seed
        if self.kind == "shear":
            return apply_shear(img, self.rate, seed)
        if self.kind == "salt_pepper":
            return apply_salt_pepper(img, self.density, seed)
        return apply_gaussian(img, self.mu, self.sigma, seed)

    def describe(self) -> dict:
        out = {"kind": self.kind, "seed": self.seed,
               "injection_time": self.injection_time}
        for name in ("rate", "density", "mu", "sigma"):
            value = getattr(self, name)
            if value is not None:
                out[name] = value
        return out


def _rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(seed))


def apply_shear(img: np.ndarray, rate: float, seed: int) -> np.ndarray:
    """Zero a contiguous block of exactly round(rate*W*H) pixels.

    The block is a rectangle whose aspect ratio roughly follows the image
    (plus a partial final column when the area does not factor), placed
    uniformly at random by the seed.
    """
    img = as_image(img)
    if not 0.0 <= rate <= 1.0:
        raise DataError(f"shear rate must be in [0, 1], got {rate}")
    h, w = img.shape
    area = int(round(rate * w * h))
    out = img.copy()
    if area == 0:
        return out
    rng = _rng(seed)
    # rows spanned: aspect-matched, but tall enough that columns fit
    rh = int(round((area * h / w) ** 0.5))
    rh = max(rh, -(-area // w))  # ceil(area / w)
    rh = min(rh, h, area)
    full_cols = area // rh
    rem = area - rh * full_cols
    ncols = full_cols + (1 if rem else 0)
    r0 = int(rng.integers(0, h - rh + 1))
    c0 = int(rng.integers(0, w - ncols + 1))
    out[r0 : r0 + rh, c0 : c0 + full_cols] = 0
    if rem:
        out[r0 : r0 + rem, c0 + full_cols] = 0
    return out


def apply_salt_pepper(img: np.ndarray, density: float, seed: int) -> np.ndarray:
    """Replace each pixel independently with 0 or 255 (equal odds) with
    probability density."""
    img = as_image(img)
    if not 0.0 <= density <= 1.0:
        raise DataError(f"density must be in [0, 1], got {density}")
    rng = _rng(seed)
    mask = rng.random(img.shape) < density
    values = (rng.integers(0, 2, size=img.shape) * 255).astype(np.uint8)
    return np.where(mask, values, img)


def apply_gaussian(img: np.ndarray, mu: float, sigma: float, seed: int) -> np.ndarray:
    """Add rounded N(mu, sigma^2) noise per pixel, clamped to [0, 255]."""
    img = as_image(img)
    if sigma < 0:
        raise DataError(f"sigma must be >= 0, got {sigma}")
    rng = _rng(seed)
    noise = np.rint(rng.normal(mu, sigma, size=img.shape))
    return np.clip(img.astype(np.int64) + noise.astype(np.int64), 0, 255).astype(
        np.uint8
    )
