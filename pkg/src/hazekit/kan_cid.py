"""Channel-independent / channel-dependent feature block.

A depthwise 7x7 convolution extracts spatial structure per channel; a KAN
stack applied at every pixel then mixes channels. Both branch outputs are
concatenated, fused by a 1x1 convolution and added back onto the input.
"""
from __future__ import annotations

import torch
import torch.nn as nn

from .kan import KanStack, build_stack


class KanCidBlock(nn.Module):
    def __init__(self, channels: int, grid_sizes=(5, 8), kernel_size: int = 7, rng_seed: int = 0):
        super().__init__()
        if channels < 1:
            raise ValueError(f"channels must be positive, got {channels}")
        self.channels = channels
        self.dw = nn.Conv2d(
            channels, channels, kernel_size, padding=kernel_size // 2,
            groups=channels, bias=False, padding_mode="replicate",
        )
        self.cd_stack = build_stack([channels] * (len(grid_sizes) + 1), grid_sizes, rng_seed=rng_seed)
        self.fusion = nn.Conv2d(2 * channels, channels, 1)
        nn.init.zeros_(self.fusion.weight)
        nn.init.zeros_(self.fusion.bias)

    def _check(self, x: torch.Tensor) -> None:
        if x.dim() != 4 or x.shape[1] != self.channels:
            raise ValueError(f"expected (B, {self.channels}, H, W) input, got {tuple(x.shape)}")

    def channel_independent(self, x: torch.Tensor) -> torch.Tensor:
        self._check(x)
        return self.dw(x)

    def channel_dependent(self, x: torch.Tensor) -> torch.Tensor:
        self._check(x)
        b, c, h, w = x.shape
        # every pixel is one row of the KAN batch
        flat = x.permute(0, 2, 3, 1).reshape(-1, c)
        return self.cd_stack(flat).reshape(b, h, w, c).permute(0, 3, 1, 2)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        ci = self.channel_independent(x)
        cd = self.channel_dependent(ci)
        return x + self.fusion(torch.cat([ci, cd], dim=1))


def make_block(channels: int, cd_stack: KanStack | None = None, **kwargs) -> KanCidBlock:
    """Block with an optional externally built channel-dependent stack."""
    block = KanCidBlock(channels, **kwargs)
    if cd_stack is not None:
        if cd_stack.n_in != channels or cd_stack.n_out != channels:
            raise ValueError(
                f"channel-dependent stack must map {channels} -> {channels}, "
                f"got {cd_stack.n_in} -> {cd_stack.n_out}"
            )
        block.cd_stack = cd_stack
    return block
