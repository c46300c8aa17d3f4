"""The dehazing generator: multi-scale encoder, KAN-CID enhancement, fusion, IDRM + DREM head."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F

from .drem import DremModule
from .inr import Idrm, InrConfig
from .kan_cid import KanCidBlock

T_EPS = 1e-3


@dataclass
class NetConfig:
    encoder_widths: tuple[int, int, int] = (16, 32, 48)
    channels: int = 48
    refine_width: int = 16
    drem_channels: int = 16
    drem_growth: int = 16
    drem_layers: int = 3
    kan_grid_sizes: tuple[int, ...] = (5, 8)
    inr: InrConfig = field(default_factory=InrConfig)
    use_kan_cid: bool = True
    use_idrm: bool = True
    use_drem: bool = True


def conv_act(c_in: int, c_out: int, stride: int = 1) -> nn.Sequential:
    return nn.Sequential(nn.Conv2d(c_in, c_out, 3, stride=stride, padding=1), nn.LeakyReLU(0.2))


class Encoder(nn.Module):
    """Three-scale pyramid at full, 1/2 and 1/4 resolution."""

    def __init__(self, widths=(16, 32, 48)):
        super().__init__()
        w1, w2, w3 = widths
        self.widths = tuple(widths)
        self.stages = nn.ModuleList([
            nn.Sequential(conv_act(3, w1), conv_act(w1, w1)),
            nn.Sequential(conv_act(w1, w2, stride=2), conv_act(w2, w2)),
            nn.Sequential(conv_act(w2, w3, stride=2), conv_act(w3, w3)),
        ])

    def forward(self, x: torch.Tensor) -> list[torch.Tensor]:
        h, w = x.shape[-2:]
        if h % 4 or w % 4:
            raise ValueError(
                f"image size {h}x{w} must be divisible by 4; pad by {(-h) % 4} rows and {(-w) % 4} columns"
            )
        feats = []
        for stage in self.stages:
            x = stage(x)
            feats.append(x)
        return feats


class FeatureFusion(nn.Module):
    """Coarse-to-fine merge: nearest upsample, concatenate with the finer scale, conv."""

    def __init__(self, channels: int):
        super().__init__()
        self.merge = nn.ModuleList([conv_act(2 * channels, channels), conv_act(2 * channels, channels)])

    def forward(self, pyramid: list[torch.Tensor]) -> torch.Tensor:
        fine_to_coarse = list(pyramid)
        x = fine_to_coarse[-1]
        for merge, skip in zip(self.merge, reversed(fine_to_coarse[:-1])):
            if skip.shape[-2:] != (2 * x.shape[-2], 2 * x.shape[-1]):
                raise ValueError(f"inconsistent pyramid scales {tuple(skip.shape[-2:])} vs {tuple(x.shape[-2:])}")
            x = merge(torch.cat([F.interpolate(x, scale_factor=2, mode="nearest"), skip], dim=1))
        return x


class AsmHead(nn.Module):
    """Per-pixel transmission in (0, 1) and global airlight in [0, 1]^3."""

    def __init__(self, channels: int):
        super().__init__()
        self.t_conv = nn.Conv2d(channels, 1, 3, padding=1)
        self.a_fc = nn.Linear(channels, 3)
        nn.init.constant_(self.a_fc.bias, 1.5)

    def forward(self, feats: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
        t = T_EPS + (1 - 2 * T_EPS) * torch.sigmoid(self.t_conv(feats)[:, 0])
        A = torch.sigmoid(self.a_fc(feats.mean(dim=(2, 3))))
        return t, A


class DehazeGenerator(nn.Module):
    def __init__(self, cfg: NetConfig | None = None):
        super().__init__()
        self.cfg = cfg = cfg or NetConfig()
        c = cfg.channels
        self.encoder = Encoder(cfg.encoder_widths)
        self.chn_mappers = nn.ModuleList(nn.Conv2d(w, c, 1) for w in cfg.encoder_widths)
        if cfg.use_kan_cid:
            self.kan_cid_blocks = nn.ModuleList(
                KanCidBlock(c, cfg.kan_grid_sizes, rng_seed=i) for i in range(3)
            )
        self.fusion = FeatureFusion(c)
        r = cfg.refine_width
        self.refine4 = nn.Sequential(conv_act(c, r), conv_act(r, r), conv_act(r, r), conv_act(r, r))
        if cfg.use_idrm:
            self.idrm = Idrm(r, cfg.inr)
        if cfg.use_drem:
            drem_in = r + 3 if cfg.use_idrm else r
            self.drem = DremModule(drem_in, cfg.drem_channels, cfg.drem_growth, cfg.drem_layers)
        if not (cfg.use_idrm or cfg.use_drem):
            self.plain_head = nn.Conv2d(r, 3, 3, padding=1)
            nn.init.zeros_(self.plain_head.weight)
            nn.init.zeros_(self.plain_head.bias)
        self.asm_head = AsmHead(c)

    def extract_multiscale(self, image: torch.Tensor) -> list[torch.Tensor]:
        return self.encoder(image)

    def enhance(self, pyramid: list[torch.Tensor]) -> list[torch.Tensor]:
        mapped = [m(f) for m, f in zip(self.chn_mappers, pyramid)]
        if self.cfg.use_kan_cid:
            mapped = [blk(f) for blk, f in zip(self.kan_cid_blocks, mapped)]
        return mapped

    def forward(self, hazy: torch.Tensor, coords: torch.Tensor | None = None) -> tuple[torch.Tensor, torch.Tensor, torch.Tensor]:
        """hazy: (B, 3, H, W) in [0, 1] -> (clean (B, 3, H, W), t (B, H, W), A (B, 3)).

        ``coords`` overrides the pixel coordinates seen by the IDRM, for crops of larger images.
        """
        fused = self.fusion(self.enhance(self.extract_multiscale(hazy)))
        refined = self.refine4(fused)
        if self.cfg.use_idrm:
            enhanced = self.idrm(refined, coords)
            if self.cfg.use_drem:
                clean = self.drem(torch.cat([refined, enhanced], dim=1), hazy)
            else:
                clean = enhanced
        elif self.cfg.use_drem:
            clean = self.drem(refined, hazy)
        else:
            clean = (hazy - self.plain_head(refined)).clamp(0.0, 1.0)
        t, A = self.asm_head(fused)
        return clean, t, A


def chn_mapper(c_in: int, c_out: int, bias: bool = True, identity: bool = False) -> nn.Conv2d:
    """1x1 channel adapter; ``identity`` initialises it to pass channels through (needs c_in == c_out)."""
    conv = nn.Conv2d(c_in, c_out, 1, bias=bias)
    if identity:
        if c_in != c_out:
            raise ValueError("identity initialisation requires equal channel counts")
        with torch.no_grad():
            conv.weight.copy_(torch.eye(c_in).reshape(c_in, c_in, 1, 1))
            if bias:
                conv.bias.zero_()
    return conv


def dehaze_image(gen: DehazeGenerator, hazy: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Single (H, W, 3) image in, (clean (H, W, 3), t (H, W), A (3,)) out."""
    dtype = next(gen.parameters()).dtype
    x = torch.as_tensor(np.asarray(hazy), dtype=dtype).permute(2, 0, 1).unsqueeze(0)
    with torch.no_grad():
        clean, t, A = gen(x)
    return clean[0].permute(1, 2, 0).double().numpy(), t[0].double().numpy(), A[0].double().numpy()
