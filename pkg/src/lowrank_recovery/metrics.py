"""Image quality metrics."""

from __future__ import annotations

import math

import numpy as np
from scipy.ndimage import gaussian_filter

from .errors import InvalidInputError

SSIM_SIGMA = 1.5
SSIM_WINDOW = 11
# scipy truncates the kernel at int(truncate * sigma + 0.5) = 5 pixels: an 11x11 window
_TRUNCATE = 3.5


def _pair(reference, estimate):
    a = np.asarray(reference, dtype=np.float64)
    b = np.asarray(estimate, dtype=np.float64)
    if a.shape != b.shape:
        raise InvalidInputError(f"image shapes differ: {a.shape} vs {b.shape}")
    if a.ndim not in (2, 3) or a.size == 0:
        raise InvalidInputError("images must be 2-D, or 3-D with channels last")
    return a, b


def psnr(reference, estimate, peak: float = 255.0) -> float:
    """``10 log10(peak^2 / MSE)``; ``math.inf`` when the images are identical."""
    if not peak > 0:
        raise InvalidInputError("peak must be positive")
    a, b = _pair(reference, estimate)
    mse = float(np.mean((a - b) ** 2))
    if mse == 0.0:
        return math.inf
    return 10.0 * math.log10(peak * peak / mse)


def _ssim_map(a: np.ndarray, b: np.ndarray, peak: float) -> np.ndarray:
    c1 = (0.01 * peak) ** 2
    c2 = (0.03 * peak) ** 2

    def blur(x):
        return gaussian_filter(x, SSIM_SIGMA, truncate=_TRUNCATE, mode="reflect")

    mu_a, mu_b = blur(a), blur(b)
    var_a = blur(a * a) - mu_a * mu_a
    var_b = blur(b * b) - mu_b * mu_b
    cov = blur(a * b) - mu_a * mu_b
    num = (2 * mu_a * mu_b + c1) * (2 * cov + c2)
    den = (mu_a * mu_a + mu_b * mu_b + c1) * (var_a + var_b + c2)
    return num / den


def ssim(reference, estimate, peak: float = 255.0) -> float:
    """Mean structural similarity with an 11x11 Gaussian window (sigma 1.5).

    Local statistics use population (not sample) moments; the mean is taken
    over the pixels whose window lies fully inside the image. Colour images
    average the per-channel values.
    """
    if not peak > 0:
        raise InvalidInputError("peak must be positive")
    a, b = _pair(reference, estimate)
    if min(a.shape[0], a.shape[1]) < SSIM_WINDOW:
        raise InvalidInputError(f"images must be at least {SSIM_WINDOW}x{SSIM_WINDOW}")
    pad = SSIM_WINDOW // 2
    if a.ndim == 2:
        a, b = a[..., None], b[..., None]
    vals = [float(np.mean(_ssim_map(a[..., c], b[..., c], peak)[pad:-pad, pad:-pad]))
            for c in range(a.shape[2])]
    return float(np.mean(vals))
