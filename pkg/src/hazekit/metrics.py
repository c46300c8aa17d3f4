"""PSNR and SSIM on RGB images in [0, 1], computed in double precision."""
from __future__ import annotations

import math

import numpy as np
from scipy.signal import correlate

K1, K2 = 0.01, 0.03
WINDOW = 11
SIGMA = 1.5


def _pair(a, b) -> tuple[np.ndarray, np.ndarray]:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"image shapes differ: {a.shape} vs {b.shape}")
    return a, b


def psnr(a, b) -> float:
    """Peak signal-to-noise ratio with peak 1.0; +inf for identical images."""
    a, b = _pair(a, b)
    mse = float(np.mean((a - b) ** 2))
    if mse == 0.0:
        return math.inf
    return 10.0 * math.log10(1.0 / mse)


def gaussian_window(size: int = WINDOW, sigma: float = SIGMA) -> np.ndarray:
    ax = np.arange(size) - (size - 1) / 2
    g = np.exp(-(ax**2) / (2 * sigma**2))
    w = np.outer(g, g)
    return w / w.sum()


def ssim_terms(a: np.ndarray, b: np.ndarray, data_range: float = 1.0) -> tuple[np.ndarray, np.ndarray]:
    """Luminance and contrast-structure maps over valid 11x11 Gaussian windows of one channel."""
    win = gaussian_window()
    filt = lambda x: correlate(x, win, mode="valid", method="direct")
    c1, c2 = (K1 * data_range) ** 2, (K2 * data_range) ** 2
    mu_a, mu_b = filt(a), filt(b)
    var_a = filt(a * a) - mu_a**2
    var_b = filt(b * b) - mu_b**2
    cov = filt(a * b) - mu_a * mu_b
    luminance = (2 * mu_a * mu_b + c1) / (mu_a**2 + mu_b**2 + c1)
    contrast_structure = (2 * cov + c2) / (var_a + var_b + c2)
    return luminance, contrast_structure


def ssim_map(a: np.ndarray, b: np.ndarray, data_range: float = 1.0) -> np.ndarray:
    luminance, cs = ssim_terms(a, b, data_range)
    return luminance * cs


def ssim(a, b) -> float:
    """Mean SSIM over windows and channels (K1=0.01, K2=0.03, Gaussian sigma 1.5)."""
    a, b = _pair(a, b)
    if a.ndim == 2:
        a, b = a[..., None], b[..., None]
    if min(a.shape[:2]) < WINDOW:
        raise ValueError(f"images must be at least {WINDOW}x{WINDOW} for SSIM, got {a.shape[:2]}")
    maps = [ssim_map(a[..., c], b[..., c]) for c in range(a.shape[2])]
    return float(np.mean(maps))
