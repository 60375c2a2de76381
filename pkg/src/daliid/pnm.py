"""Binary PGM (P5) / PPM (P6) image files, 8-bit, maxval 255.

Intensities map linearly between [0, 1] floats and [0, 255] bytes with
round-half-up on write. Parse errors report the byte offset of the
offending token.
"""

from __future__ import annotations

import numpy as np


class PnmParseError(ValueError):
    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (byte offset {offset})")
        self.offset = offset


def save_pnm(path, pixels: np.ndarray) -> None:
    """Write a (H, W) or (H, W, 3) float array in [0, 1] as PGM/PPM."""
    pixels = np.asarray(pixels, dtype=np.float64)
    if pixels.ndim == 2:
        magic, data = b"P5", pixels
    elif pixels.ndim == 3 and pixels.shape[2] == 3:
        magic, data = b"P6", pixels
    else:
        raise ValueError(f"unsupported image shape {pixels.shape}")
    h, w = data.shape[:2]
    quantized = np.floor(np.clip(data, 0.0, 1.0) * 255.0 + 0.5).astype(np.uint8)
    with open(path, "wb") as fh:
        fh.write(magic + b"\n%d %d\n255\n" % (w, h))
        fh.write(quantized.tobytes())


def load_pnm(path) -> np.ndarray:
    """Read a binary PGM/PPM into floats in [0, 1]; shape (H, W) or (H, W, 3)."""
    with open(path, "rb") as fh:
        raw = fh.read()
    if raw[:2] not in (b"P5", b"P6"):
        raise PnmParseError("bad magic bytes, expected P5 or P6", 0)
    channels = 1 if raw[:2] == b"P5" else 3
    pos = 2
    fields = []
    while len(fields) < 3:
        while pos < len(raw) and raw[pos:pos + 1].isspace():
            pos += 1
        if pos < len(raw) and raw[pos:pos + 1] == b"#":
            while pos < len(raw) and raw[pos:pos + 1] != b"\n":
                pos += 1
            continue
        start = pos
        while pos < len(raw) and not raw[pos:pos + 1].isspace():
            pos += 1
        token = raw[start:pos]
        if not token.isdigit():
            raise PnmParseError(f"expected integer header field, got {token!r}", start)
        fields.append(int(token))
    width, height, maxval = fields
    if maxval != 255:
        raise PnmParseError(f"unsupported maxval {maxval}", pos)
    pos += 1  # single whitespace byte before raster
    count = width * height * channels
    raster = raw[pos:pos + count]
    if len(raster) != count:
        raise PnmParseError(
            f"truncated raster: expected {count} bytes, got {len(raster)}", pos)
    data = np.frombuffer(raster, dtype=np.uint8).astype(np.float64) / 255.0
    if channels == 1:
        return data.reshape(height, width)
    return data.reshape(height, width, 3)
