"""Fast scaled-selective image cipher.

Pipeline per frame: optionally downscale (bilinear), pick the band of the
image that actually contains the pendulum and cart, then run T rounds of

  1. cyclic row/column permutation driven by chaotic shift sequences, and
  2. bidirectional ciphertext-feedback diffusion over the flattened raster.

Keystream material comes from one chaotic orbit (see chaos.py); encryptor
and decryptor derive identical keystreams from the shared key parameters,
so no key material ever travels with the frame.  Region geometry does
travel, as a small plaintext header.

Diffusion feedback uses the previous *output* byte (ciphertext feedback).
A corrupted ciphertext byte therefore damages only a three-byte
neighbourhood of the recovered plaintext, which is what keeps the decrypted
image usable under mild tampering, while a one-byte plaintext change still
avalanches across the entire ciphertext.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, replace

import numpy as np

from .chaos import ChaosParams, ChaosStream
from .errors import DataError
from .image import as_image

QUANT_SCALE = 10**5
DEFAULT_BAND_WIDTH = 100


@dataclass(frozen=True)
class Region:
    """Rectangle inside an image: x0/y0 are column/row offsets."""

    x0: int
    y0: int
    rows: int
    cols: int

    def __post_init__(self):
        if self.rows < 1 or self.cols < 1:
            raise DataError(f"region must be at least 1x1, got {self}")
        if self.x0 < 0 or self.y0 < 0:
            raise DataError(f"region offsets must be >= 0, got {self}")

    def check_fits(self, img: np.ndarray) -> None:
        h, w = img.shape
        if self.y0 + self.rows > h or self.x0 + self.cols > w:
            raise DataError(
                f"region {self} does not fit inside a {h}x{w} image"
            )

    def slice_of(self, img: np.ndarray) -> np.ndarray:
        return img[self.y0 : self.y0 + self.rows, self.x0 : self.x0 + self.cols]


@dataclass(frozen=True)
class KeyStream:
    """Quantized shift and diffusion material for one cipher round."""

    row_shifts: np.ndarray  # rows values in [0, rows-1]
    col_shifts: np.ndarray  # cols values in [0, cols-1]
    diffusion: np.ndarray  # rows*cols bytes

    @property
    def rows(self) -> int:
        return len(self.row_shifts)

    @property
    def cols(self) -> int:
        return len(self.col_shifts)

    @property
    def draws(self) -> int:
        return self.rows + self.cols + self.rows * self.cols


@dataclass(frozen=True)
class CipherConfig:
    key: ChaosParams
    rounds: int = 1
    scale_factor: float = 1.0
    region: Region | None = None  # None -> auto-select on encrypt
    band_width: int = DEFAULT_BAND_WIDTH

    def __post_init__(self):
        if self.rounds < 1:
            raise DataError(f"rounds must be >= 1, got {self.rounds}")
        if not 0.0 < self.scale_factor <= 1.0:
            raise DataError(
                f"scale factor must be in (0, 1], got {self.scale_factor}"
            )


@dataclass(frozen=True)
class FrameHeader:
    """Plaintext sidecar describing what was encrypted where.

    Only pixel contents are secret; geometry travels in the clear.
    """

    x0: int
    y0: int
    M: int  # region rows
    N: int  # region cols
    scale: float
    rounds: int

    @property
    def region(self) -> Region:
        return Region(x0=self.x0, y0=self.y0, rows=self.M, cols=self.N)

    def to_json(self) -> str:
        return json.dumps(
            {
                "x0": self.x0,
                "y0": self.y0,
                "M": self.M,
                "N": self.N,
                "scale": self.scale,
                "rounds": self.rounds,
            }
        )

    @classmethod
    def from_json(cls, text: str) -> "FrameHeader":
        try:
            raw = json.loads(text)
            return cls(
                x0=int(raw["x0"]),
                y0=int(raw["y0"]),
                M=int(raw["M"]),
                N=int(raw["N"]),
                scale=float(raw["scale"]),
                rounds=int(raw["rounds"]),
            )
        except (ValueError, KeyError, TypeError) as exc:
            raise DataError(f"bad frame header: {exc}") from exc


def quantize(values: np.ndarray, modulus: int) -> np.ndarray:
    """Map orbit reals to unsigned ints: floor(v * 1e5) mod m."""
    return (np.floor(values * QUANT_SCALE).astype(np.int64)) % modulus


class KeystreamSource:
    """Derives per-round keystreams from one chaotic orbit.

    Round r consumes the next rows + cols + rows*cols orbit values, in the
    fixed order row shifts, column shifts, diffusion bytes.  `draws` counts
    orbit values consumed so far.
    """

    def __init__(self, key: ChaosParams):
        self._stream = ChaosStream(key)

    @property
    def draws(self) -> int:
        return self._stream.draws

    def keystream(self, rows: int, cols: int) -> KeyStream:
        if rows < 1 or cols < 1:
            raise DataError(f"keystream dims must be >= 1, got {rows}x{cols}")
        row_vals = self._stream.draw(rows)
        col_vals = self._stream.draw(cols)
        diff_vals = self._stream.draw(rows * cols)
        return KeyStream(
            row_shifts=quantize(row_vals, rows),
            col_shifts=quantize(col_vals, cols),
            diffusion=quantize(diff_vals, 256).astype(np.uint8),
        )


def round_keystreams(key: ChaosParams, rows: int, cols: int, rounds: int):
    """All keystreams for a T-round encryption, in application order."""
    src = KeystreamSource(key)
    return [src.keystream(rows, cols) for _ in range(rounds)]


# --- permutation stage ----------------------------------------------------


def permute(block: np.ndarray, ks: KeyStream) -> np.ndarray:
    """Cyclically right-shift row i by row_shifts[i], then down-shift
    column j by col_shifts[j].  Preserves the byte multiset."""
    rows, cols = block.shape
    if rows != ks.rows or cols != ks.cols:
        raise DataError(
            f"block {block.shape} does not match keystream {ks.rows}x{ks.cols}"
        )
    j = np.arange(cols)
    out = block[np.arange(rows)[:, None], (j[None, :] - ks.row_shifts[:, None]) % cols]
    i = np.arange(rows)
    out = out[(i[:, None] - ks.col_shifts[None, :]) % rows, j[None, :]]
    return out


def unpermute(block: np.ndarray, ks: KeyStream) -> np.ndarray:
    """Exact inverse of permute (columns undone first, then rows)."""
    rows, cols = block.shape
    if rows != ks.rows or cols != ks.cols:
        raise DataError(
            f"block {block.shape} does not match keystream {ks.rows}x{ks.cols}"
        )
    i = np.arange(rows)
    j = np.arange(cols)
    out = block[(i[:, None] + ks.col_shifts[None, :]) % rows, j[None, :]]
    out = out[np.arange(rows)[:, None], (j[None, :] + ks.row_shifts[:, None]) % cols]
    return out


# --- diffusion stage ------------------------------------------------------


def diffuse(block: np.ndarray, ks: KeyStream) -> np.ndarray:
    """Two chained passes over the flattened raster (uint8, mod-256).

    Forward:  C1[0] = (P[0] ^ K[0]) + K[0];
              C1[p] = ((P[p] ^ K[p]) + K[p-1]) ^ C1[p-1].
    Backward: C2[L-1] = (C1[L-1] ^ K[L-1]) + K[L-1];
              C2[p] = ((C1[p] ^ K[p]) + K[p+1]) ^ C2[p+1].

    Both cumulative xors vectorize; with uint8 arithmetic the +K is already
    taken mod 256.
    """
    shape = block.shape
    p = block.reshape(-1)
    k = ks.diffusion
    if p.size != k.size:
        raise DataError(
            f"block {shape} does not match diffusion keystream of {k.size} bytes"
        )
    k_prev = np.concatenate((k[:1], k[:-1]))
    w = (p ^ k) + k_prev
    c1 = np.bitwise_xor.accumulate(w)
    k_next = np.concatenate((k[1:], k[-1:]))
    u = (c1 ^ k) + k_next
    c2 = np.bitwise_xor.accumulate(u[::-1])[::-1]
    return np.ascontiguousarray(c2).reshape(shape)


def undiffuse(block: np.ndarray, ks: KeyStream) -> np.ndarray:
    """Exact inverse of diffuse; fully vectorized since the feedback bytes
    are ciphertext and thus available up front."""
    shape = block.shape
    c2 = block.reshape(-1)
    k = ks.diffusion
    if c2.size != k.size:
        raise DataError(
            f"block {shape} does not match diffusion keystream of {k.size} bytes"
        )
    k_next = np.concatenate((k[1:], k[-1:]))
    c2_next = np.concatenate((c2[1:], np.zeros(1, dtype=np.uint8)))
    c1 = ((c2 ^ c2_next) - k_next) ^ k
    k_prev = np.concatenate((k[:1], k[:-1]))
    c1_prev = np.concatenate((np.zeros(1, dtype=np.uint8), c1[:-1]))
    p = ((c1 ^ c1_prev) - k_prev) ^ k
    return np.ascontiguousarray(p).reshape(shape)


# --- scaling and region selection -----------------------------------------


def scale_bilinear(img: np.ndarray, factor: float) -> np.ndarray:
    """Downscale by bilinear interpolation (pixel centers aligned).

    Output dims are round(dim * factor); values are rounded to the nearest
    byte with ties to even.
    """
    img = as_image(img)
    if not 0.0 < factor <= 1.0:
        raise DataError(f"scale factor must be in (0, 1], got {factor}")
    h, w = img.shape
    oh = int(round(h * factor))
    ow = int(round(w * factor))
    if oh < 1 or ow < 1:
        raise DataError(
            f"scaling a {h}x{w} image by {factor} gives degenerate size {oh}x{ow}"
        )
    if (oh, ow) == (h, w):
        return img.copy()
    ys = np.clip((np.arange(oh) + 0.5) / factor - 0.5, 0.0, h - 1.0)
    xs = np.clip((np.arange(ow) + 0.5) / factor - 0.5, 0.0, w - 1.0)
    y0 = np.floor(ys).astype(np.intp)
    x0 = np.floor(xs).astype(np.intp)
    y1 = np.minimum(y0 + 1, h - 1)
    x1 = np.minimum(x0 + 1, w - 1)
    fy = (ys - y0)[:, None]
    fx = (xs - x0)[None, :]
    src = img.astype(np.float64)
    top = src[y0[:, None], x0[None, :]] * (1 - fx) + src[y0[:, None], x1[None, :]] * fx
    bot = src[y1[:, None], x0[None, :]] * (1 - fx) + src[y1[:, None], x1[None, :]] * fx
    out = top * (1 - fy) + bot * fy
    return np.rint(out).astype(np.uint8)


def select_region(img: np.ndarray, band_width: int = DEFAULT_BAND_WIDTH) -> Region:
    """Full-height band of the given width centred on the detected pendulum.

    Uses the Hough line detector; raises NoLineFound (with the peak score)
    on images without a detectable dark line.
    """
    from . import vision  # deferred: vision does not import cipher

    img = as_image(img)
    h, w = img.shape
    if band_width < 1:
        raise DataError(f"band width must be >= 1, got {band_width}")
    rho, theta, _score = vision.hough_peak(img)
    if band_width >= w:
        return Region(x0=0, y0=0, rows=h, cols=w)
    r_mid = (h - 1) / 2.0
    center = (rho - r_mid * math.sin(theta)) / math.cos(theta)
    x0 = int(round(center)) - band_width // 2
    x0 = max(0, min(x0, w - band_width))
    return Region(x0=x0, y0=0, rows=h, cols=band_width)


# --- full cipher ----------------------------------------------------------


def encrypt_region(img: np.ndarray, region: Region, keystreams) -> np.ndarray:
    """Apply (permute, diffuse) rounds to one region; rest of img untouched."""
    region.check_fits(img)
    out = img.copy()
    block = region.slice_of(out).copy()
    for ks in keystreams:
        block = diffuse(permute(block, ks), ks)
    region.slice_of(out)[:] = block
    return out


def decrypt_region(img: np.ndarray, region: Region, keystreams) -> np.ndarray:
    """Exact inverse of encrypt_region (same keystream list)."""
    region.check_fits(img)
    out = img.copy()
    block = region.slice_of(out).copy()
    for ks in reversed(keystreams):
        block = unpermute(undiffuse(block, ks), ks)
    region.slice_of(out)[:] = block
    return out


def resolve_region(img: np.ndarray, cfg: CipherConfig) -> Region:
    """Region that encrypt() will use for this (already scaled) image."""
    if cfg.region is not None:
        cfg.region.check_fits(img)
        return cfg.region
    return select_region(img, cfg.band_width)


def encrypt(img: np.ndarray, cfg: CipherConfig) -> tuple[np.ndarray, FrameHeader]:
    """Scale, select the region, run cfg.rounds cipher rounds.

    Returns the ciphertext frame (scaled dimensions) and the plaintext
    header needed for decryption.
    """
    img = as_image(img)
    scaled = scale_bilinear(img, cfg.scale_factor)
    region = resolve_region(scaled, cfg)
    keys = round_keystreams(cfg.key, region.rows, region.cols, cfg.rounds)
    out = encrypt_region(scaled, region, keys)
    header = FrameHeader(
        x0=region.x0,
        y0=region.y0,
        M=region.rows,
        N=region.cols,
        scale=cfg.scale_factor,
        rounds=cfg.rounds,
    )
    return out, header


def decrypt(img: np.ndarray, cfg: CipherConfig) -> np.ndarray:
    """Invert encrypt on an already-scaled ciphertext frame.

    cfg.region must be explicit (take it from the frame header); scaling is
    lossy and is not undone.
    """
    img = as_image(img)
    if cfg.region is None:
        raise DataError("decryption requires an explicit region (see FrameHeader)")
    cfg.region.check_fits(img)
    keys = round_keystreams(cfg.key, cfg.region.rows, cfg.region.cols, cfg.rounds)
    return decrypt_region(img, cfg.region, keys)


def config_from_header(key: ChaosParams, header: FrameHeader) -> CipherConfig:
    return CipherConfig(
        key=key,
        rounds=header.rounds,
        scale_factor=header.scale,
        region=header.region,
    )


def shear_compromise_probability(ni: int, ns: int) -> float:
    """Probability 1 / C(ni, ns) that a shear of ns of ni uniformly spread
    pixels captures one specific ns-subset; computed in log-space."""
    if ni < 0 or ns < 0 or ns > ni:
        raise DataError(f"need 0 <= ns <= ni, got ni={ni}, ns={ns}")
    log_comb = (
        math.lgamma(ni + 1) - math.lgamma(ns + 1) - math.lgamma(ni - ns + 1)
    )
    return math.exp(-log_comb)
