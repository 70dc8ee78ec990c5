"""PSNR and SSIM with optional region masks.

Both metrics accept a single (H, W, 3) image or an (N, H, W, 3) clip, with a
matching (H, W) or (N, H, W) boolean region mask.  Masked variants restrict
the computation to the given region, which is how occlusion-only quality is
reported: pass the disocclusion mask and only those pixels count.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, asdict

import numpy as np
from scipy.ndimage import minimum_filter, uniform_filter

PSNR_CAP_DB = 99.0
SSIM_WINDOW = 7
SSIM_C1 = 0.01 ** 2
SSIM_C2 = 0.03 ** 2


def _as_clip(a: np.ndarray) -> np.ndarray:
    a = np.asarray(a, dtype=np.float64)
    if a.ndim == 3:
        a = a[None]
    if a.ndim != 4 or a.shape[-1] != 3:
        raise ValueError(f"expected (H,W,3) or (N,H,W,3), got shape {np.asarray(a).shape}")
    return a


def _as_mask(mask, clip_shape) -> np.ndarray:
    m = np.asarray(mask).astype(bool)
    if m.ndim == 2:
        m = m[None]
    if m.shape != clip_shape[:3]:
        raise ValueError(f"mask shape {np.asarray(mask).shape} does not match images {clip_shape[:3]}")
    return m


def psnr(a, b, region_mask=None) -> float:
    """Peak signal-to-noise ratio in dB with peak 1.0, capped at 99 dB.

    With a region mask, only masked pixels enter the mean squared error.
    """
    a = _as_clip(a)
    b = _as_clip(b)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    err = (a - b) ** 2
    if region_mask is not None:
        m = _as_mask(region_mask, a.shape)
        if not m.any():
            raise ValueError("region mask selects no pixels")
        mse = err[m].mean()
    else:
        mse = err.mean()
    if mse == 0.0:
        return PSNR_CAP_DB
    return min(PSNR_CAP_DB, 10.0 * math.log10(1.0 / mse))


def _ssim_map(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Local SSIM per pixel for one 2-D channel, uniform 7x7 window."""
    mu_x = uniform_filter(x, SSIM_WINDOW)
    mu_y = uniform_filter(y, SSIM_WINDOW)
    var_x = uniform_filter(x * x, SSIM_WINDOW) - mu_x * mu_x
    var_y = uniform_filter(y * y, SSIM_WINDOW) - mu_y * mu_y
    cov = uniform_filter(x * y, SSIM_WINDOW) - mu_x * mu_y
    num = (2 * mu_x * mu_y + SSIM_C1) * (2 * cov + SSIM_C2)
    den = (mu_x ** 2 + mu_y ** 2 + SSIM_C1) * (var_x + var_y + SSIM_C2)
    return num / den


def ssim(a, b, region_mask=None) -> float:
    """Mean structural similarity over 7x7 windows, averaged across channels.

    Windows must lie fully inside the image; with a region mask, only windows
    fully inside the mask contribute.
    """
    a = _as_clip(a)
    b = _as_clip(b)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    n, h, w, _ = a.shape
    half = SSIM_WINDOW // 2
    if h < SSIM_WINDOW or w < SSIM_WINDOW:
        raise ValueError(f"image {h}x{w} smaller than the {SSIM_WINDOW}x{SSIM_WINDOW} SSIM window")

    interior = np.zeros((h, w), dtype=bool)
    interior[half:h - half, half:w - half] = True
    if region_mask is not None:
        m = _as_mask(region_mask, a.shape)
        # A window counts only if every pixel under it is inside the mask.
        full = np.stack([minimum_filter(m[i].astype(np.uint8), SSIM_WINDOW) > 0
                         for i in range(n)], axis=0)
        keep = full & interior[None]
    else:
        keep = np.broadcast_to(interior, (n, h, w))
    if not keep.any():
        raise ValueError("no SSIM window fits inside the region mask")

    total = 0.0
    for i in range(n):
        for c in range(3):
            smap = _ssim_map(a[i, :, :, c], b[i, :, :, c])
            total += smap[keep[i]].mean()
    return total / (n * 3)


@dataclass
class MetricReport:
    """Full/masked PSNR and SSIM plus the pixel counts behind each number."""

    psnr_all: float
    ssim_all: float
    psnr_masked: float | None = None
    ssim_masked: float | None = None
    pixels_all: int = 0
    pixels_masked: int = 0

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2)


def compare(a, b, region_mask=None) -> MetricReport:
    """Compute the standard report: unmasked metrics plus masked variants."""
    a_clip = _as_clip(a)
    report = MetricReport(
        psnr_all=psnr(a, b),
        ssim_all=ssim(a, b),
        pixels_all=int(np.prod(a_clip.shape[:3])),
    )
    if region_mask is not None:
        m = _as_mask(region_mask, a_clip.shape)
        report.psnr_masked = psnr(a, b, region_mask)
        report.ssim_masked = ssim(a, b, region_mask)
        report.pixels_masked = int(m.sum())
    return report
