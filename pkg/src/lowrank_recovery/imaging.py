"""Image completion: entry sampling on pixel grids, solve, clamp, score."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError, InvalidInputError
from .metrics import psnr, ssim
from .operators import MeasurementOp, ProblemInstance, apply_op
from .solvers import RecoveryResult, SolverConfig, solve

PEAK = 255.0
BT601 = np.array([0.299, 0.587, 0.114])
MODES = ("luminance", "per-channel")


def luminance(image: np.ndarray) -> np.ndarray:
    """BT.601 luma rounded back to 8 bits; grayscale input is returned as is."""
    img = np.asarray(image)
    if img.ndim == 2:
        return img.astype(np.uint8)
    y = img.astype(np.float64) @ BT601
    return np.clip(np.rint(y), 0, 255).astype(np.uint8)


@dataclass(frozen=True)
class ImageTask:
    source: np.ndarray  # uint8, (h, w) or (h, w, 3)
    observed_fraction: float = 0.5
    mask_seed: int = 0
    rank: int = 30
    mode: str = "luminance"

    def __post_init__(self):
        src = np.asarray(self.source)
        if src.dtype != np.uint8 or src.ndim not in (2, 3) or (src.ndim == 3 and src.shape[2] != 3):
            raise InvalidInputError("source must be an 8-bit (h, w) or (h, w, 3) array")
        if src.shape[0] < 2 or src.shape[1] < 2:
            raise InvalidInputError("image must be at least 2x2")
        if not 0 < self.observed_fraction <= 1:
            raise InvalidInputError("observed fraction must lie in (0, 1]")
        if self.mode not in MODES:
            raise ConfigurationError(f"mode must be one of {MODES}")
        if not 1 <= self.rank <= min(src.shape[:2]):
            raise ConfigurationError(f"rank {self.rank} out of range for {src.shape[:2]}")

    @property
    def reference(self) -> np.ndarray:
        """The image the restoration is scored against."""
        return luminance(self.source) if self.mode == "luminance" else self.source

    def mask(self) -> np.ndarray:
        h, w = self.source.shape[:2]
        count = max(1, int(np.floor(self.observed_fraction * h * w + 1e-9)))
        rng = np.random.default_rng(np.random.SeedSequence([int(self.mask_seed), 1]))
        lin = np.sort(rng.choice(h * w, size=count, replace=False))
        return np.column_stack([lin // w, lin % w])


@dataclass
class ImageResult:
    restored: np.ndarray
    psnr: float
    ssim: float
    runs: list[RecoveryResult] = field(default_factory=list)


def image_complete(task: ImageTask, solver: str, cfg: SolverConfig, **solver_kwargs) -> ImageResult:
    """Complete every channel from the same pixel mask and score the result.

    Estimates are clamped to ``[0, 255]`` and rounded to 8 bits before the
    metrics are computed, so the scores describe the image actually produced.
    """
    ref = task.reference
    chans = ref[..., None] if ref.ndim == 2 else ref
    h, w = chans.shape[:2]
    op = MeasurementOp.entry_sampling(task.mask(), (h, w))
    out = np.empty(chans.shape, dtype=np.uint8)
    runs = []
    for c in range(chans.shape[2]):
        truth = chans[..., c].astype(np.float64)
        inst = ProblemInstance(op, apply_op(op, truth), task.rank, truth, noiseless=True)
        res = solve(solver, inst, cfg, **solver_kwargs)
        runs.append(res)
        out[..., c] = np.rint(np.clip(res.estimate, 0.0, PEAK)).astype(np.uint8)
    restored = out[..., 0] if ref.ndim == 2 else out
    return ImageResult(restored, psnr(ref, restored, PEAK), ssim(ref, restored, PEAK), runs)


def sample_image(size: int = 256, name: str = "moon") -> np.ndarray:
    """Grayscale picture from scikit-image's data set, resampled to ``size``."""
    try:
        from skimage import color, data, transform
    except ImportError as exc:  # pragma: no cover
        raise ImportError("the bundled sample images need scikit-image") from exc
    img = np.asarray(getattr(data, name)())
    if img.ndim == 3:
        img = color.rgb2gray(img[..., :3]) * 255.0
    img = img.astype(np.float64)
    if img.shape != (size, size):
        img = transform.resize(img, (size, size), anti_aliasing=True, preserve_range=True)
    return np.clip(np.rint(img), 0, 255).astype(np.uint8)
