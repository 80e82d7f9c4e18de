"""
Modality-specific Representation Model
Masked-patch autoencoder over the target modalities; its encoder yields the target latent y0
"""

import logging
from dataclasses import dataclass
from typing import Sequence, Tuple, Union

import numpy as np
import torch
import torch.nn as nn

from ..exceptions import CDMValidationError

logger = logging.getLogger(__name__)

ENCODER_STAGES = 4


@dataclass(frozen=True)
class PatchMask:
    """Boolean patch grid; True cells are masked"""

    patch_size: int
    masked: np.ndarray

    def __post_init__(self):
        if self.patch_size < 1:
            raise CDMValidationError(f"patch_size must be >= 1, got {self.patch_size}")
        if self.masked.ndim != 2 or self.masked.dtype != np.bool_:
            raise CDMValidationError("masked must be a 2D boolean grid")

    @property
    def grid_h(self) -> int:
        return int(self.masked.shape[0])

    @property
    def grid_w(self) -> int:
        return int(self.masked.shape[1])

    @property
    def num_masked(self) -> int:
        return int(self.masked.sum())

    def as_tensor(self, device=None) -> torch.Tensor:
        return torch.as_tensor(self.masked, dtype=torch.bool, device=device)


MaskLike = Union[PatchMask, torch.Tensor]


def sample_mask(grid_h: int, grid_w: int, mask_ratio: float, rng: np.random.Generator,
                patch_size: int = 1) -> PatchMask:
    """Exactly round(ratio * cells) cells, chosen uniformly without replacement"""
    if grid_h < 1 or grid_w < 1:
        raise CDMValidationError(f"grid dims must be >= 1, got {grid_h}x{grid_w}")
    if not 0.0 <= mask_ratio <= 1.0:
        raise CDMValidationError(f"mask_ratio must lie in [0,1], got {mask_ratio}")

    cells = grid_h * grid_w
    count = int(round(mask_ratio * cells))
    flat = np.zeros(cells, dtype=np.bool_)
    flat[rng.choice(cells, size=count, replace=False)] = True
    return PatchMask(patch_size=patch_size, masked=flat.reshape(grid_h, grid_w))


def sample_mask_batch(batch: int, channels: int, grid_h: int, grid_w: int, mask_ratio: float,
                      generator: torch.Generator) -> torch.Tensor:
    """Independent masks per sample and per modality channel, shape (B, C, gh, gw)"""
    cells = grid_h * grid_w
    count = int(round(mask_ratio * cells))
    scores = torch.rand(batch, channels, cells, generator=generator)
    ranks = scores.argsort(dim=-1).argsort(dim=-1)
    return (ranks < count).reshape(batch, channels, grid_h, grid_w)


def _grid_tensor(mask: MaskLike, images: torch.Tensor, patch_size: int) -> torch.Tensor:
    grid = mask.as_tensor(images.device) if isinstance(mask, PatchMask) else mask.to(images.device)
    height, width = images.shape[-2:]
    if grid.shape[-2] * patch_size != height or grid.shape[-1] * patch_size != width:
        raise CDMValidationError(
            f"mask grid {tuple(grid.shape[-2:])} x patch {patch_size} does not tile image {height}x{width}"
        )
    return grid


def apply_mask(images: torch.Tensor, mask: MaskLike, fill: float = 0.0,
               patch_size: int = None) -> torch.Tensor:
    """Replace masked patches with `fill`; a PatchMask applies to every channel"""
    if patch_size is None:
        if not isinstance(mask, PatchMask):
            raise CDMValidationError("patch_size is required for tensor masks")
        patch_size = mask.patch_size
    grid = _grid_tensor(mask, images, patch_size)
    pixels = grid.repeat_interleave(patch_size, dim=-2).repeat_interleave(patch_size, dim=-1)
    return torch.where(pixels, torch.full_like(images, fill), images)


def patchify(images: torch.Tensor, patch_size: int) -> torch.Tensor:
    """(..., H, W) -> (..., gh, gw, p*p) row-major patches"""
    *lead, height, width = images.shape
    gh, gw = height // patch_size, width // patch_size
    patches = images.reshape(*lead, gh, patch_size, gw, patch_size)
    patches = patches.transpose(-3, -2)
    return patches.reshape(*lead, gh, gw, patch_size * patch_size)


def mrm_loss(pred: torch.Tensor, target: torch.Tensor, mask: MaskLike,
             patch_size: int = None) -> torch.Tensor:
    """Mean over masked patches of the per-patch Euclidean norm of pred - target"""
    if pred.shape != target.shape:
        raise CDMValidationError(f"pred shape {tuple(pred.shape)} != target shape {tuple(target.shape)}")
    if patch_size is None:
        if not isinstance(mask, PatchMask):
            raise CDMValidationError("patch_size is required for tensor masks")
        patch_size = mask.patch_size
    grid = _grid_tensor(mask, pred, patch_size)

    norms = torch.linalg.vector_norm(patchify(pred - target, patch_size), dim=-1)
    selected = torch.broadcast_to(grid, norms.shape)
    count = int(selected.sum())
    if count == 0:
        raise CDMValidationError("mask selects no patches; |R| must be >= 1")
    return norms[selected].sum() / count


def _widths(base_width: int) -> Sequence[int]:
    return [base_width * (2 ** k) for k in range(ENCODER_STAGES)]


class FeatureEncoder(nn.Module):
    """Strided conv stack, global average pool, affine map to the latent dimension"""

    def __init__(self, in_channels: int, base_width: int, latent_dim: int):
        super().__init__()
        layers = []
        channels = in_channels
        for width in _widths(base_width):
            layers += [nn.Conv2d(channels, width, 3, stride=2, padding=1), nn.SiLU()]
            channels = width
        self.stages = nn.Sequential(*layers)
        self.to_latent = nn.Linear(channels, latent_dim)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        features = self.stages(x)
        return self.to_latent(features.mean(dim=(-2, -1)))


class FeatureDecoder(nn.Module):
    """Affine map to a coarse grid, transposed-conv upsampling, linear output conv"""

    def __init__(self, out_channels: int, base_width: int, latent_dim: int, image_size: int):
        super().__init__()
        widths = list(_widths(base_width))
        self.coarse_size = image_size // (2 ** ENCODER_STAGES)
        self.coarse_channels = widths[-1]
        self.from_latent = nn.Linear(latent_dim, self.coarse_channels * self.coarse_size ** 2)

        layers = []
        channels = widths[-1]
        for width in reversed(widths):
            layers += [nn.ConvTranspose2d(channels, width, 4, stride=2, padding=1), nn.SiLU()]
            channels = width
        self.stages = nn.Sequential(*layers)
        self.output_layer = nn.Conv2d(channels, out_channels, 3, padding=1)

    def forward(self, latent: torch.Tensor) -> torch.Tensor:
        coarse = self.from_latent(latent).reshape(
            -1, self.coarse_channels, self.coarse_size, self.coarse_size
        )
        return self.output_layer(self.stages(coarse))


class ModalityRepresentationModel(nn.Module):
    """FE + FD pair trained to restore masked target modalities"""

    def __init__(self, in_channels: int = 2, base_width: int = 16, latent_dim: int = 256,
                 image_size: int = 64):
        super().__init__()
        if image_size % (2 ** ENCODER_STAGES):
            raise CDMValidationError(f"image_size must be divisible by {2 ** ENCODER_STAGES}")
        self.in_channels = in_channels
        self.latent_dim = latent_dim
        self.image_size = image_size
        self.encoder = FeatureEncoder(in_channels, base_width, latent_dim)
        self.decoder = FeatureDecoder(in_channels, base_width, latent_dim, image_size)

    @classmethod
    def from_config(cls, config) -> "ModalityRepresentationModel":
        return cls(in_channels=2, base_width=config.mrm_base_width,
                   latent_dim=config.latent_dim, image_size=config.image_size)

    def check_input(self, x: torch.Tensor) -> None:
        if x.dim() != 4 or x.shape[1] != self.in_channels:
            raise CDMValidationError(
                f"expected (N, {self.in_channels}, H, W) target batch, got {tuple(x.shape)}"
            )
        if x.shape[-2:] != (self.image_size, self.image_size):
            raise CDMValidationError(
                f"expected {self.image_size}x{self.image_size} images, got {tuple(x.shape[-2:])}"
            )

    def forward(self, masked_targets: torch.Tensor) -> Tuple[torch.Tensor, torch.Tensor]:
        self.check_input(masked_targets)
        latent = self.encoder(masked_targets)
        return self.decoder(latent), latent

    def encode(self, targets: torch.Tensor) -> torch.Tensor:
        self.check_input(targets)
        return self.encoder(targets)


def mrm_forward(model: ModalityRepresentationModel,
                masked_targets: torch.Tensor) -> Tuple[torch.Tensor, torch.Tensor]:
    """(reconstruction, latent) for a channel-concatenated masked target batch"""
    return model(masked_targets)


def encode(model: ModalityRepresentationModel, targets: torch.Tensor) -> torch.Tensor:
    """Target latent y0 of unmasked targets through FE only"""
    return model.encode(targets)
