"""Reference-quality PSNR and SSIM on numpy images in [0, 1].

SSIM uses the same constants as the training loss (gaussian window 11,
sigma 1.5, k1 0.01, k2 0.03, valid-region mean) so scores and loss terms are
directly comparable.
"""

from __future__ import annotations

import numpy as np
from scipy import signal

SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_K1 = 0.01
SSIM_K2 = 0.03

__all__ = ["psnr", "ssim", "mse"]


def _check(a: np.ndarray, b: np.ndarray):
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch {a.shape} vs {b.shape}")
    return a, b


def mse(a: np.ndarray, b: np.ndarray) -> float:
    a, b = _check(a, b)
    return float(np.mean((a - b) ** 2))


def psnr(a: np.ndarray, b: np.ndarray) -> float:
    """10 log10(1 / MSE) for unit-range images; +inf for an exact match."""
    m = mse(a, b)
    if m == 0.0:
        return float("inf")
    return float(10.0 * np.log10(1.0 / m))


def _gaussian1d(window: int, sigma: float) -> np.ndarray:
    half = window // 2
    xs = np.arange(-half, half + 1, dtype=np.float64)
    k = np.exp(-(xs ** 2) / (2 * sigma ** 2))
    return k / k.sum()


def _filter_valid(img: np.ndarray, k: np.ndarray) -> np.ndarray:
    tmp = signal.fftconvolve(img, k[None, :], mode="valid")
    return signal.fftconvolve(tmp, k[:, None], mode="valid")


def ssim(a: np.ndarray, b: np.ndarray, window: int = SSIM_WINDOW,
         sigma: float = SSIM_SIGMA, k1: float = SSIM_K1, k2: float = SSIM_K2,
         data_range: float = 1.0) -> float:
    """Mean gaussian-weighted SSIM over the valid region; channels averaged.

    Windows shrink (with proportional sigma) when an image side is smaller
    than 11 px, mirroring the training-loss behaviour.
    """
    a, b = _check(a, b)
    if a.ndim == 2:
        a, b = a[..., None], b[..., None]
    h, w = a.shape[:2]
    fit = min(window, h if h % 2 else h - 1, w if w % 2 else w - 1)
    if fit < 1:
        raise ValueError(f"image {a.shape} too small for SSIM")
    if fit < window:
        sigma = sigma * fit / window
        window = fit
    k = _gaussian1d(window, sigma)
    c1 = (k1 * data_range) ** 2
    c2 = (k2 * data_range) ** 2
    scores = []
    for c in range(a.shape[2]):
        x, y = a[..., c], b[..., c]
        mu_x = _filter_valid(x, k)
        mu_y = _filter_valid(y, k)
        var_x = _filter_valid(x * x, k) - mu_x ** 2
        var_y = _filter_valid(y * y, k) - mu_y ** 2
        cov = _filter_valid(x * y, k) - mu_x * mu_y
        num = (2 * mu_x * mu_y + c1) * (2 * cov + c2)
        den = (mu_x ** 2 + mu_y ** 2 + c1) * (var_x + var_y + c2)
        scores.append(np.mean(num / den))
    return float(np.mean(scores))
