"""Atmospheric scattering model: haze synthesis, inversion and random haze parameters.

Images are float arrays of shape (H, W, 3) in [0, 1]. Per-pixel maps
(depth, transmission) are (H, W). All functions are pure.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch
from scipy import ndimage

DEFAULT_T_FLOOR = 0.05
DEFAULT_D_MAX = 3.0
MIN_SIZE = 8


@dataclass(frozen=True)
class AsmParams:
    """Physics bundle for one image: airlight, scattering, depth, transmission."""

    A: np.ndarray
    beta: float
    depth: np.ndarray
    transmission: np.ndarray

    @classmethod
    def from_depth(cls, A, beta: float, depth) -> "AsmParams":
        depth = np.asarray(depth, dtype=np.float64)
        return cls(
            A=np.asarray(A, dtype=np.float64).reshape(3),
            beta=float(beta),
            depth=depth,
            transmission=transmission_from_depth(depth, beta),
        )

    @classmethod
    def from_transmission(cls, A, transmission) -> "AsmParams":
        """Build params directly from a transmission map (beta and depth unknown)."""
        t = np.asarray(transmission, dtype=np.float64)
        if np.any(t <= 0) or np.any(t > 1):
            raise ValueError("transmission must lie in (0, 1]")
        return cls(A=np.asarray(A, dtype=np.float64).reshape(3), beta=float("nan"), depth=np.full_like(t, np.nan), transmission=t)


def check_image(img: np.ndarray, name: str = "image") -> np.ndarray:
    img = np.asarray(img)
    if img.ndim != 3 or img.shape[2] != 3:
        raise ValueError(f"{name} must have shape (H, W, 3), got {img.shape}")
    if img.shape[0] < MIN_SIZE or img.shape[1] < MIN_SIZE:
        raise ValueError(f"{name} must be at least {MIN_SIZE}x{MIN_SIZE}, got {img.shape[:2]}")
    return img


def transmission_from_depth(depth, beta: float) -> np.ndarray:
    """t = exp(-beta * depth), elementwise."""
    depth = np.asarray(depth, dtype=np.float64)
    if beta < 0:
        raise ValueError(f"beta must be non-negative, got {beta}")
    if np.any(depth < 0):
        raise ValueError(f"depth must be non-negative, min entry is {depth.min()}")
    return np.exp(-beta * depth)


def _check_params(img: np.ndarray, params: AsmParams) -> None:
    if params.transmission.shape != img.shape[:2]:
        raise ValueError(
            f"transmission shape {params.transmission.shape} does not match image {img.shape[:2]}"
        )
    if np.any(params.A < 0) or np.any(params.A > 1):
        raise ValueError(f"atmospheric light must lie in [0, 1], got {params.A}")


def synthesize_haze(clean: np.ndarray, params: AsmParams, clamp: bool = True) -> np.ndarray:
    """I = J t + A (1 - t), clamped to [0, 1] afterwards unless ``clamp`` is False."""
    clean = check_image(clean, "clean")
    _check_params(clean, params)
    t = params.transmission[..., None]
    hazy = clean * t + params.A * (1.0 - t)
    return np.clip(hazy, 0.0, 1.0) if clamp else hazy


def invert_asm(hazy: np.ndarray, params: AsmParams, t_floor: float = DEFAULT_T_FLOOR, clamp: bool = True) -> np.ndarray:
    """Recover J = (I - A (1 - t)) / max(t, t_floor)."""
    if not 0.0 < t_floor < 1.0:
        raise ValueError(f"t_floor must lie in (0, 1), got {t_floor}")
    hazy = check_image(hazy, "hazy")
    _check_params(hazy, params)
    t = np.maximum(params.transmission, t_floor)[..., None]
    clean = (hazy - params.A * (1.0 - t)) / t
    return np.clip(clean, 0.0, 1.0) if clamp else clean


def rehaze(clean: torch.Tensor, t: torch.Tensor, A: torch.Tensor) -> torch.Tensor:
    """Differentiable batched haze synthesis.

    clean: (B, 3, H, W); t: (B, H, W); A: (B, 3). Returns (B, 3, H, W) clamped to [0, 1].
    """
    t = t.unsqueeze(1)
    return (clean * t + A[:, :, None, None] * (1.0 - t)).clamp(0.0, 1.0)


def _check_range(rng_range, lo: float, hi: float, name: str) -> tuple[float, float]:
    a, b = (float(v) for v in rng_range)
    if a > b:
        raise ValueError(f"{name} is empty: {rng_range}")
    if a < lo or b > hi:
        raise ValueError(f"{name} must lie within [{lo}, {hi}], got {rng_range}")
    return a, b


def random_depth(height: int, width: int, rng: np.random.Generator, d_max: float = DEFAULT_D_MAX) -> np.ndarray:
    """Smooth depth field: three random planar ramps plus blurred noise, scaled to [0, d_max]."""
    ys, xs = np.meshgrid(np.linspace(-1, 1, height), np.linspace(-1, 1, width), indexing="ij")
    depth = np.zeros((height, width))
    for angle in rng.uniform(0, 2 * np.pi, size=3):
        depth += rng.uniform(0.5, 1.5) * (np.cos(angle) * xs + np.sin(angle) * ys)
    sigma = max(height, width) / 8
    noise = ndimage.gaussian_filter(rng.standard_normal((height, width)), sigma, mode="reflect")
    noise /= np.abs(noise).max() + 1e-12
    depth += 0.5 * noise
    depth -= depth.min()
    span = depth.max()
    return d_max * depth / span if span > 0 else depth


def random_asm_params(
    height: int,
    width: int,
    rng_seed: int,
    beta_range=(0.4, 1.2),
    a_range=(0.7, 1.0),
    d_max: float = DEFAULT_D_MAX,
) -> AsmParams:
    """Deterministic random haze parameters for a (height, width) image."""
    b_lo, b_hi = _check_range(beta_range, 0.0, np.inf, "beta_range")
    a_lo, a_hi = _check_range(a_range, 0.0, 1.0, "a_range")
    rng = np.random.default_rng(rng_seed)
    depth = random_depth(height, width, rng, d_max)
    beta = rng.uniform(b_lo, b_hi)
    A = rng.uniform(a_lo, a_hi, size=3)
    return AsmParams.from_depth(A, beta, depth)
