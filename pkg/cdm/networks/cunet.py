"""
Cross-conditioned UNet
Source-to-target image network whose encoder scales fuse the target latent
"""

import logging
from typing import List, Optional, Tuple

import torch
import torch.nn as nn
import torch.nn.functional as F

from ..exceptions import CDMValidationError

logger = logging.getLogger(__name__)


class ConditionEmbedding(nn.Module):
    """Fuse a feature map with the latent condition, then halve the spatial dims

    Feature path: LayerNorm -> SiLU -> 1x1 conv. Condition path: Linear -> SiLU -> Linear,
    broadcast over positions and added to the feature path. A stride-2 conv downsamples.
    """

    def __init__(self, in_channels: int, out_channels: int, latent_dim: int,
                 use_condition: bool = True):
        super().__init__()
        self.in_channels = in_channels
        self.latent_dim = latent_dim
        # GroupNorm with one group normalizes over (C, H, W) per sample
        self.norm = nn.GroupNorm(1, in_channels)
        self.conv = nn.Conv2d(in_channels, out_channels, 1)
        self.cond_mlp = nn.Sequential(
            nn.Linear(latent_dim, out_channels),
            nn.SiLU(),
            nn.Linear(out_channels, out_channels),
        ) if use_condition else None
        self.downsample = nn.Conv2d(out_channels, out_channels, 3, stride=2, padding=1)

    def fuse(self, feature: torch.Tensor, condition: Optional[torch.Tensor]) -> torch.Tensor:
        if feature.dim() != 4 or feature.shape[1] != self.in_channels:
            raise CDMValidationError(
                f"expected (N, {self.in_channels}, H, W) feature, got {tuple(feature.shape)}"
            )
        fused = self.conv(F.silu(self.norm(feature)))
        if self.cond_mlp is None:
            return fused
        if condition is None or condition.dim() != 2 or condition.shape[-1] != self.latent_dim:
            shape = None if condition is None else tuple(condition.shape)
            raise CDMValidationError(f"expected (N, {self.latent_dim}) condition, got {shape}")
        if condition.shape[0] != feature.shape[0]:
            raise CDMValidationError(
                f"condition batch {condition.shape[0]} != feature batch {feature.shape[0]}"
            )
        return fused + self.cond_mlp(condition)[:, :, None, None]

    def forward(self, feature: torch.Tensor,
                condition: Optional[torch.Tensor]) -> Tuple[torch.Tensor, torch.Tensor]:
        """(downsampled, fused); the fused map feeds the decoder skip at this scale"""
        fused = self.fuse(feature, condition)
        return self.downsample(fused), fused


def cond_embed(block: ConditionEmbedding, feature: torch.Tensor,
               condition: Optional[torch.Tensor]) -> torch.Tensor:
    """Fused and downsampled feature map"""
    return block(feature, condition)[0]


class ConvBlock(nn.Sequential):
    def __init__(self, in_channels: int, out_channels: int):
        super().__init__(
            nn.Conv2d(in_channels, out_channels, 3, padding=1),
            nn.GroupNorm(1, out_channels),
            nn.SiLU(),
        )


class UpBlock(nn.Module):
    """Transposed-conv upsampling, concat with the encoder skip, conv block"""

    def __init__(self, in_channels: int, skip_channels: int, out_channels: int):
        super().__init__()
        self.up = nn.ConvTranspose2d(in_channels, out_channels, 2, stride=2)
        self.merge = ConvBlock(out_channels + skip_channels, out_channels)

    def forward(self, x: torch.Tensor, skip: torch.Tensor) -> torch.Tensor:
        return self.merge(torch.cat([self.up(x), skip], dim=1))


class CrossConditionedUNet(nn.Module):
    """Two source channels in, two target channels out; the latent conditions every encoder scale"""

    def __init__(self, in_channels: int = 2, out_channels: int = 2, base_width: int = 32,
                 scales: int = 4, latent_dim: int = 256, use_condition: bool = True):
        super().__init__()
        if scales < 2:
            raise CDMValidationError(f"at least two scales are required, got {scales}")
        self.in_channels = in_channels
        self.scales = scales
        self.latent_dim = latent_dim
        self.use_condition = use_condition

        widths = [base_width * (2 ** k) for k in range(scales)]
        self.stem = nn.Conv2d(in_channels, widths[0], 3, padding=1)
        self.encoder = nn.ModuleList()
        channels = widths[0]
        for width in widths:
            self.encoder.append(ConditionEmbedding(channels, width, latent_dim, use_condition))
            channels = width
        self.bottleneck = nn.Sequential(ConvBlock(channels, channels), ConvBlock(channels, channels))
        self.decoder = nn.ModuleList()
        for width in reversed(widths):
            self.decoder.append(UpBlock(channels, width, width))
            channels = width
        self.output_layer = nn.Conv2d(channels, out_channels, 1)

    @classmethod
    def from_config(cls, config) -> "CrossConditionedUNet":
        return cls(base_width=config.cunet_base_width, scales=config.cunet_scales,
                   latent_dim=config.latent_dim, use_condition=config.use_condition)

    def forward(self, source: torch.Tensor, condition: Optional[torch.Tensor] = None) -> torch.Tensor:
        if source.dim() != 4 or source.shape[1] != self.in_channels:
            raise CDMValidationError(
                f"expected (N, {self.in_channels}, H, W) source batch, got {tuple(source.shape)}"
            )
        height, width = source.shape[-2:]
        factor = 2 ** self.scales
        if height != width or height % factor:
            raise CDMValidationError(
                f"source must be square with sides divisible by {factor}, got {height}x{width}"
            )

        x = self.stem(source)
        skips: List[torch.Tensor] = []
        for block in self.encoder:
            x, fused = block(x, condition)
            skips.append(fused)
        x = self.bottleneck(x)
        for block, skip in zip(self.decoder, reversed(skips)):
            x = block(x, skip)
        return self.output_layer(x)


def cunet_forward(model: CrossConditionedUNet, source: torch.Tensor,
                  condition: Optional[torch.Tensor]) -> torch.Tensor:
    """Two-channel (T1c, T2f) prediction in network units"""
    return model(source, condition)


def synthesis_loss(pred: torch.Tensor, gt: torch.Tensor) -> torch.Tensor:
    """Mean over all pixels and channels of the squared difference"""
    if pred.shape != gt.shape:
        raise CDMValidationError(f"pred shape {tuple(pred.shape)} != gt shape {tuple(gt.shape)}")
    return F.mse_loss(pred, gt)
