"""Seeded, level-parameterized image distortion: smooth random warp + blur.

Severity is an integer level 0..5 (0 = clean). Each level maps to a warp
RMS displacement, a warp-field correlation length, and a blur sigma; warp
is always applied before blur. Border handling is edge-clamp everywhere.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .numerics import SeedStream

LEVELS = (0, 1, 2, 3, 4, 5)


@dataclass(frozen=True)
class DistortionParams:
    """Per-level severity table, calibrated for a 32px reference size.

    warp_rms and blur_sigma scale with min(W, H) / ref_size so severity is
    size-relative; corr_len is corr_frac * min(W, H).
    """

    warp_rms_per_level: float = 1.0
    blur_sigma_per_level: float = 1.4
    corr_frac: float = 0.25
    ref_size: float = 32.0

    def for_level(self, level: int, width: int, height: int):
        if level not in LEVELS:
            raise ValueError(f"distortion level must be in 0..5, got {level}")
        scale = min(width, height) / self.ref_size
        warp_rms = self.warp_rms_per_level * level * scale
        blur_sigma = self.blur_sigma_per_level * level * scale
        corr_len = self.corr_frac * min(width, height)
        return warp_rms, corr_len, blur_sigma


def gaussian_kernel(sigma: float) -> np.ndarray:
    """1-D Gaussian kernel truncated at radius ceil(3*sigma), sum exactly 1."""
    if sigma <= 0:
        return np.array([1.0])
    radius = int(np.ceil(3.0 * sigma))
    x = np.arange(-radius, radius + 1, dtype=np.float64)
    k = np.exp(-0.5 * (x / sigma) ** 2)
    return k / k.sum()


def _convolve_axis(data: np.ndarray, kernel: np.ndarray, axis: int) -> np.ndarray:
    radius = (len(kernel) - 1) // 2
    if radius == 0:
        return data.copy()
    pad = [(0, 0)] * data.ndim
    pad[axis] = (radius, radius)
    padded = np.pad(data, pad, mode="edge")
    moved = np.moveaxis(padded, axis, -1)
    out = np.zeros(np.moveaxis(data, axis, -1).shape, dtype=np.float64)
    for i, kv in enumerate(kernel):
        out += kv * moved[..., i:i + out.shape[-1]]
    return np.moveaxis(out, -1, axis)


def blur(img: np.ndarray, sigma: float) -> np.ndarray:
    """Separable Gaussian blur with edge-clamp borders; sigma=0 is identity."""
    if sigma < 0:
        raise ValueError("sigma must be nonnegative")
    img = np.asarray(img, dtype=np.float64)
    if sigma == 0:
        return img.copy()
    kernel = gaussian_kernel(sigma)
    out = _convolve_axis(img, kernel, axis=0)
    out = _convolve_axis(out, kernel, axis=1)
    return np.clip(out, 0.0, 1.0)


def make_warp_field(width: int, height: int, warp_rms: float, corr_len: float,
                    rng: SeedStream) -> np.ndarray:
    """Smooth random displacement field, shape (H, W, 2) as (dx, dy).

    i.i.d. standard-normal components are correlated with a Gaussian filter
    of std corr_len, then rescaled so the empirical RMS displacement
    magnitude equals warp_rms exactly.
    """
    if width < 4 or height < 4:
        raise ValueError("warp field requires width, height >= 4")
    gen = rng.generator()
    field = gen.standard_normal((height, width, 2))
    if warp_rms == 0:
        return np.zeros((height, width, 2))
    kernel = gaussian_kernel(corr_len)
    field = _convolve_axis(field, kernel, axis=0)
    field = _convolve_axis(field, kernel, axis=1)
    rms = np.sqrt(np.mean(field[..., 0] ** 2 + field[..., 1] ** 2))
    if rms == 0:
        return np.zeros((height, width, 2))
    return field * (warp_rms / rms)


def warp(img: np.ndarray, field: np.ndarray) -> np.ndarray:
    """Backward-warp by bilinear sampling at (x+dx, y+dy), edge-clamped."""
    img = np.asarray(img, dtype=np.float64)
    h, w = img.shape[:2]
    if field.shape[:2] != (h, w):
        raise ValueError(
            f"field shape {field.shape[:2]} does not match image {(h, w)}")
    ys, xs = np.mgrid[0:h, 0:w].astype(np.float64)
    sx = np.clip(xs + field[..., 0], 0.0, w - 1.0)
    sy = np.clip(ys + field[..., 1], 0.0, h - 1.0)
    x0 = np.floor(sx).astype(np.intp)
    y0 = np.floor(sy).astype(np.intp)
    x1 = np.minimum(x0 + 1, w - 1)
    y1 = np.minimum(y0 + 1, h - 1)
    fx = sx - x0
    fy = sy - y0
    if img.ndim == 3:
        fx = fx[..., None]
        fy = fy[..., None]
    out = (img[y0, x0] * (1 - fx) * (1 - fy)
           + img[y0, x1] * fx * (1 - fy)
           + img[y1, x0] * (1 - fx) * fy
           + img[y1, x1] * fx * fy)
    return np.clip(out, 0.0, 1.0)


def distort(img: np.ndarray, level: int, params: DistortionParams,
            rng: SeedStream) -> np.ndarray:
    """Apply level-l distortion: warp then blur. Level 0 returns a copy."""
    img = np.asarray(img, dtype=np.float64)
    h, w = img.shape[:2]
    warp_rms, corr_len, blur_sigma = params.for_level(level, w, h)
    if level == 0:
        return img.copy()
    field = make_warp_field(w, h, warp_rms, corr_len, rng)
    return blur(warp(img, field), blur_sigma)
