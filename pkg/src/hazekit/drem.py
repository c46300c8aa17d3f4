"""Residual dense blocks and the dense residual enhanced module."""
from __future__ import annotations

import torch
import torch.nn as nn


class ResidualDenseBlock(nn.Module):
    """Dense 3x3 conv cascade, 1x1 local fusion back to C channels, residual add."""

    def __init__(self, channels: int, growth: int = 16, n_layers: int = 3):
        super().__init__()
        self.channels, self.growth = channels, growth
        self.convs = nn.ModuleList(
            nn.Conv2d(channels + i * growth, growth, 3, padding=1) for i in range(n_layers)
        )
        self.local_fusion = nn.Conv2d(channels + n_layers * growth, channels, 1)
        self.act = nn.LeakyReLU(0.2)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        if x.shape[1] != self.channels:
            raise ValueError(f"expected {self.channels} channels, got {x.shape[1]}")
        feats = [x]
        for conv in self.convs:
            feats.append(self.act(conv(torch.cat(feats, dim=1))))
        return x + self.local_fusion(torch.cat(feats, dim=1))


class DremModule(nn.Module):
    """Predicts a residual layer from features and subtracts it from the original image.

    The exit convolution starts at zero, so an untrained module returns ``original``.
    """

    def __init__(self, in_channels: int, channels: int = 16, growth: int = 16, n_layers: int = 3):
        super().__init__()
        self.entry_conv = nn.Conv2d(in_channels, channels, 3, padding=1)
        self.rdb_pair = nn.Sequential(
            ResidualDenseBlock(channels, growth, n_layers),
            ResidualDenseBlock(channels, growth, n_layers),
        )
        self.exit_conv = nn.Conv2d(channels, 3, 3, padding=1)
        nn.init.zeros_(self.exit_conv.weight)
        nn.init.zeros_(self.exit_conv.bias)

    def residual(self, features: torch.Tensor) -> torch.Tensor:
        return self.exit_conv(self.rdb_pair(self.entry_conv(features)))

    def forward(self, features: torch.Tensor, original: torch.Tensor) -> torch.Tensor:
        if features.shape[-2:] != original.shape[-2:]:
            raise ValueError(
                f"feature map {tuple(features.shape[-2:])} and image {tuple(original.shape[-2:])} differ in size"
            )
        return (original - self.residual(features)).clamp(0.0, 1.0)
