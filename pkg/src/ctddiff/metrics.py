"""Image reconstruction metrics: MSE, PSNR and MS-SSIM on (C, H, W) arrays."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.ndimage import correlate1d

from .errors import InvalidParameterError, ShapeError

__all__ = ["mse", "psnr", "ms_ssim", "MsSsimConfig", "max_scales", "DEFAULT_PSNR_CAP"]

DEFAULT_PSNR_CAP = 100.0
STANDARD_WEIGHTS = (0.0448, 0.2856, 0.3001, 0.2363, 0.1333)


def _pair(a, b):
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ShapeError(f"image shapes differ: {a.shape} vs {b.shape}")
    if a.size == 0:
        raise ShapeError("empty image")
    return a, b


def mse(a, b) -> float:
    a, b = _pair(a, b)
    return float(np.mean((a - b) ** 2))


def psnr(a, b, max_value: float = 1.0, cap: float = DEFAULT_PSNR_CAP) -> float:
    if not max_value > 0:
        raise InvalidParameterError("max_value must be positive")
    err = mse(a, b)
    if err == 0:
        return cap
    return float(10.0 * np.log10(max_value**2 / err))


@dataclass(frozen=True)
class MsSsimConfig:
    """``num_scales=None`` picks the largest feasible count (at most 5). Fewer
    scales than weights use a prefix rescaled to the full list's sum."""

    num_scales: int | None = None
    weights: tuple = STANDARD_WEIGHTS
    window_size: int = 11
    window_sigma: float = 1.5
    k1: float = 0.01
    k2: float = 0.03
    max_value: float = 1.0
    boundary: str = "reflect"  # "reflect" is symmetric padding; "wrap" is circular

    def __post_init__(self):
        if self.window_size % 2 != 1 or self.window_size < 1:
            raise InvalidParameterError("window size must be odd")
        if any(w < 0 for w in self.weights):
            raise InvalidParameterError("weights must be non-negative")
        if self.num_scales is not None and not 1 <= self.num_scales <= len(self.weights):
            raise InvalidParameterError(f"num_scales must be in [1, {len(self.weights)}]")
        if self.boundary not in ("reflect", "wrap"):
            raise InvalidParameterError(f"unknown boundary mode {self.boundary!r}")


def max_scales(height: int, width: int, window_size: int = 11) -> int:
    """Largest M such that the coarsest of M dyadic scales is still >= window."""
    m, side = 0, min(height, width)
    while side >= window_size:
        m += 1
        side //= 2
    return m


def _gauss_window(size, sigma):
    x = np.arange(size, dtype=np.float64) - size // 2
    g = np.exp(-(x**2) / (2 * sigma**2))
    return g / g.sum()


def _filter(img, win, mode):
    out = correlate1d(img, win, axis=-1, mode=mode)
    return correlate1d(out, win, axis=-2, mode=mode)


def _ssim_terms(x, y, win, c1, c2, mode):
    """Per-channel mean luminance term and contrast-structure term."""
    mu_x, mu_y = _filter(x, win, mode), _filter(y, win, mode)
    sxx = _filter(x * x, win, mode) - mu_x**2
    syy = _filter(y * y, win, mode) - mu_y**2
    sxy = _filter(x * y, win, mode) - mu_x * mu_y
    lum = (2 * mu_x * mu_y + c1) / (mu_x**2 + mu_y**2 + c1)
    cs = (2 * sxy + c2) / (sxx + syy + c2)
    return lum.mean(axis=(-2, -1)), cs.mean(axis=(-2, -1))


def _downsample(img):
    h, w = img.shape[-2] // 2 * 2, img.shape[-1] // 2 * 2
    img = img[..., :h, :w]
    return 0.25 * (img[..., 0::2, 0::2] + img[..., 1::2, 0::2] + img[..., 0::2, 1::2] + img[..., 1::2, 1::2])


def ms_ssim(a, b, cfg: MsSsimConfig = MsSsimConfig()) -> float:
    """Multi-scale SSIM averaged over channels.

    Contrast-structure products are taken at every scale and luminance only at
    the coarsest, each raised to that scale's weight. Negative
    contrast-structure values are clipped to 0 before exponentiation.
    """
    a, b = _pair(a, b)
    if a.ndim == 2:
        a, b = a[None], b[None]
    if a.ndim != 3:
        raise ShapeError("images must be (C, H, W) or (H, W)")
    feasible = min(max_scales(a.shape[1], a.shape[2], cfg.window_size), len(cfg.weights))
    if feasible < 1:
        raise InvalidParameterError(
            f"image {a.shape[1]}x{a.shape[2]} is smaller than the {cfg.window_size}px window"
        )
    M = feasible if cfg.num_scales is None else cfg.num_scales
    if M > feasible:
        raise InvalidParameterError(
            f"{M} scales need a larger image; at most {feasible} fit {a.shape[1]}x{a.shape[2]}"
        )
    w = np.asarray(cfg.weights[:M], dtype=np.float64)
    # a truncated prefix keeps the full list's total weight
    if w.sum() > 0:
        w = w * (sum(cfg.weights) / w.sum())

    win = _gauss_window(cfg.window_size, cfg.window_sigma)
    c1 = (cfg.k1 * cfg.max_value) ** 2
    c2 = (cfg.k2 * cfg.max_value) ** 2
    mode = cfg.boundary
    x, y = a, b
    result = np.ones(a.shape[0])
    for m in range(M):
        lum, cs = _ssim_terms(x, y, win, c1, c2, mode)
        result = result * np.maximum(cs, 0.0) ** w[m]
        if m == M - 1:
            result = result * np.maximum(lum, 0.0) ** w[m]
        else:
            x, y = _downsample(x), _downsample(y)
    return float(result.mean())
