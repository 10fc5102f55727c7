"""8-bit grayscale images and binary PGM (P5) I/O.

Images are plain ``numpy`` arrays of shape ``(height, width)`` and dtype
``uint8``, row-major.  Nothing in the package uses another representation.
"""

from __future__ import annotations

import numpy as np

from .errors import DataError


def as_image(arr) -> np.ndarray:
    """Validate and return a (H, W) uint8 image array.

    Accepts anything array-like already holding integer values in [0, 255].
    """
    img = np.asarray(arr)
    if img.ndim != 2:
        raise DataError(f"image must be 2-D, got shape {img.shape}")
    if img.shape[0] < 1 or img.shape[1] < 1:
        raise DataError(f"image dimensions must be >= 1, got {img.shape}")
    if img.dtype != np.uint8:
        if not np.issubdtype(img.dtype, np.integer):
            raise DataError(f"image dtype must be integer, got {img.dtype}")
        if img.min() < 0 or img.max() > 255:
            raise DataError("image values outside [0, 255]")
        img = img.astype(np.uint8)
    return img


def read_pgm(path) -> np.ndarray:
    """Read a binary (P5) PGM file with maxval 255."""
    with open(path, "rb") as fh:
        data = fh.read()
    fields = []
    pos = 0
    # Header: magic, width, height, maxval; '#' comments allowed anywhere.
    while len(fields) < 4:
        if pos >= len(data):
            raise DataError(f"{path}: truncated PGM header")
        ch = data[pos : pos + 1]
        if ch.isspace():
            pos += 1
        elif ch == b"#":
            nl = data.find(b"\n", pos)
            pos = len(data) if nl < 0 else nl + 1
        else:
            end = pos
            while end < len(data) and not data[end : end + 1].isspace():
                end += 1
            fields.append(data[pos:end])
            pos = end
    pos += 1  # single whitespace byte after maxval
    magic, w, h, maxval = fields
    if magic != b"P5":
        raise DataError(f"{path}: not a binary PGM (magic {magic!r})")
    try:
        w, h, maxval = int(w), int(h), int(maxval)
    except ValueError as exc:
        raise DataError(f"{path}: bad PGM header") from exc
    if maxval != 255:
        raise DataError(f"{path}: only maxval 255 supported, got {maxval}")
    raster = data[pos : pos + w * h]
    if len(raster) != w * h:
        raise DataError(f"{path}: expected {w * h} raster bytes, got {len(raster)}")
    return np.frombuffer(raster, dtype=np.uint8).reshape(h, w).copy()


def write_pgm(path, img) -> None:
    """Write a binary (P5) PGM file with maxval 255."""
    img = as_image(img)
    h, w = img.shape
    with open(path, "wb") as fh:
        fh.write(b"P5\n%d %d\n255\n" % (w, h))
        fh.write(img.tobytes())
