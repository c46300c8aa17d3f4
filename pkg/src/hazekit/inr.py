"""Coordinate-conditioned implicit decoder: grids, positional encoding, feature unfolding."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F

log = logging.getLogger(__name__)


@dataclass
class InrConfig:
    L: int = 4
    hidden: int = 64
    depth: int = 4
    unfold_radius: int = 1


def make_grid(height: int, width: int, dtype=torch.float32) -> torch.Tensor:
    """Pixel-centre coordinates in [-1, 1]^2, shape (H, W, 2) ordered (x, y)."""
    if height < 1 or width < 1:
        raise ValueError(f"grid size must be positive, got {height}x{width}")
    ys = (2 * torch.arange(height, dtype=dtype) + 1) / height - 1
    xs = (2 * torch.arange(width, dtype=dtype) + 1) / width - 1
    gy, gx = torch.meshgrid(ys, xs, indexing="ij")
    return torch.stack([gx, gy], dim=-1)


def window_grid(windows, size: tuple[int, int], dtype=torch.float32) -> torch.Tensor:
    """Coordinates of crops taken from larger images, shape (B, h, w, 2).

    ``windows`` rows are (top, left, source_h, source_w); each crop gets the
    coordinates its pixels have in the grid of the full source image.
    """
    h, w = size
    grids = []
    for top, left, src_h, src_w in np.asarray(windows, dtype=np.int64).reshape(-1, 4):
        if top < 0 or left < 0 or top + h > src_h or left + w > src_w:
            raise ValueError(f"window at ({top}, {left}) of size {h}x{w} exceeds source {src_h}x{src_w}")
        grids.append(make_grid(int(src_h), int(src_w), dtype)[top : top + h, left : left + w])
    return torch.stack(grids)


def positional_encode(x: torch.Tensor, L: int = 4) -> torch.Tensor:
    """[sin(2^0 pi x), cos(2^0 pi x), ..., sin(2^{L-1} pi x), cos(2^{L-1} pi x)] per coordinate.

    The last axis of ``x`` holds the coordinates; output width is 2 * L * x.shape[-1].
    """
    if L < 1:
        raise ValueError(f"L must be at least 1, got {L}")
    freqs = torch.pi * 2.0 ** torch.arange(L, dtype=x.dtype)
    angles = x.unsqueeze(-1) * freqs
    enc = torch.stack([angles.sin(), angles.cos()], dim=-1)
    return enc.reshape(*x.shape[:-1], x.shape[-1] * 2 * L)


def feature_unfold(e: torch.Tensor, radius: int = 1) -> torch.Tensor:
    """Concatenate each pixel's (2r+1)^2 neighbourhood, neighbour-major in row-major order.

    e: (B, C, H, W) or (C, H, W). Borders are replicate-padded.
    """
    if radius < 0:
        raise ValueError(f"radius must be non-negative, got {radius}")
    if radius == 0:
        return e
    squeeze = e.dim() == 3
    if squeeze:
        e = e.unsqueeze(0)
    b, c, h, w = e.shape
    k = 2 * radius + 1
    padded = F.pad(e, (radius,) * 4, mode="replicate")
    patches = F.unfold(padded, k)  # (B, C*k*k, H*W), channel-major
    out = patches.reshape(b, c, k * k, h, w).transpose(1, 2).reshape(b, k * k * c, h, w)
    return out[0] if squeeze else out


class InrDecoder(nn.Module):
    """Per-pixel MLP on [features, encoded coordinates] with a sigmoid output."""

    def __init__(self, feature_width: int, L: int = 4, hidden: int = 64, depth: int = 4, out_width: int = 3):
        super().__init__()
        self.feature_width, self.L = feature_width, L
        self.in_width = feature_width + 4 * L
        widths = [self.in_width] + [hidden] * depth
        layers: list[nn.Module] = []
        for a, b in zip(widths, widths[1:]):
            layers += [nn.Linear(a, b), nn.SiLU()]
        layers.append(nn.Linear(widths[-1], out_width))
        self.mlp = nn.Sequential(*layers)

    def forward(self, feats: torch.Tensor, enc: torch.Tensor) -> torch.Tensor:
        """feats: (B, C', H, W); enc: (H, W, 4L) or (B, H, W, 4L). Returns (B, 3, H, W)."""
        b, c, h, w = feats.shape
        if c + enc.shape[-1] != self.in_width:
            raise ValueError(f"decoder expects {self.in_width} inputs, got {c} features + {enc.shape[-1]} encoding")
        if enc.dim() == 3:
            enc = enc.unsqueeze(0).expand(b, -1, -1, -1)
        x = torch.cat([feats.permute(0, 2, 3, 1), enc.to(feats.dtype)], dim=-1)
        return torch.sigmoid(self.mlp(x)).permute(0, 3, 1, 2)


def inr_decode(decoder: InrDecoder, feats: torch.Tensor, enc: torch.Tensor) -> torch.Tensor:
    """Single-image convenience: feats (C', H, W), enc (H, W, 4L) -> image (H, W, 3)."""
    return decoder(feats.unsqueeze(0), enc)[0].permute(1, 2, 0)


class Idrm(nn.Module):
    """Unfold refined features, append encoded pixel coordinates, decode to RGB."""

    def __init__(self, feature_width: int, cfg: InrConfig | None = None):
        super().__init__()
        self.cfg = cfg or InrConfig()
        k = 2 * self.cfg.unfold_radius + 1
        self.decoder = InrDecoder(feature_width * k * k, self.cfg.L, self.cfg.hidden, self.cfg.depth)

    def forward(self, feats: torch.Tensor, coords: torch.Tensor | None = None) -> torch.Tensor:
        """``coords`` (H, W, 2) or (B, H, W, 2) defaults to the grid of the feature map itself."""
        _, _, h, w = feats.shape
        if coords is None:
            coords = make_grid(h, w, feats.dtype)
        if coords.shape[-3:] != (h, w, 2):
            raise ValueError(f"coordinates of shape {tuple(coords.shape)} do not match features {h}x{w}")
        enc = positional_encode(coords.to(feats.dtype), self.cfg.L)
        return self.decoder(feature_unfold(feats, self.cfg.unfold_radius), enc)


@dataclass
class FitResult:
    decoder: InrDecoder
    reconstruction: np.ndarray
    losses: list[float] = field(default_factory=list)


def fit_image(
    target: np.ndarray,
    cfg: InrConfig | None = None,
    iterations: int = 2000,
    lr: float = 1e-3,
    rng_seed: int = 0,
    callback=None,
) -> FitResult:
    """Fit a coordinate-only decoder to ``target`` (H, W, 3) by full-batch Adam on MSE."""
    from .training import Adam

    if iterations < 1:
        raise ValueError(f"iterations must be at least 1, got {iterations}")
    cfg = cfg or InrConfig()
    torch.manual_seed(rng_seed)
    h, w, _ = target.shape
    decoder = InrDecoder(0, cfg.L, cfg.hidden, cfg.depth)
    enc = positional_encode(make_grid(h, w), cfg.L)
    feats = torch.zeros(1, 0, h, w)
    tgt = torch.tensor(np.asarray(target), dtype=torch.float32).permute(2, 0, 1).unsqueeze(0)
    opt = Adam(decoder.parameters(), lr=lr)
    losses = []
    for it in range(iterations):
        loss = F.mse_loss(decoder(feats, enc), tgt)
        opt.zero_grad()
        loss.backward()
        opt.step()
        losses.append(loss.item())
        if callback is not None:
            callback(it, losses[-1])
    with torch.no_grad():
        recon = decoder(feats, enc)[0].permute(1, 2, 0).double().numpy()
    log.debug("fit_image: final loss %.3g after %d iterations", losses[-1], iterations)
    return FitResult(decoder, recon, losses)
