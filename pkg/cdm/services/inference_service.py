"""
Inference Service
Two-phase synthesis: sample a target latent with the MDN, then run the C-UNet on the sources
"""

import logging
from typing import Optional

import numpy as np
import torch

from ..data.normalization import denormalize, normalize_for_network
from ..exceptions import CDMValidationError
from ..models.data_models import Stage
from ..networks.cunet import cunet_forward
from ..networks.mdn import mdn_sample
from ..networks.schedules import make_linear_schedule
from .checkpoint_service import CheckpointBundle

logger = logging.getLogger(__name__)


class InferenceService:
    """Frozen copies of the MDN and C-UNet from a complete bundle"""

    def __init__(self, bundle: CheckpointBundle):
        bundle.require(*Stage)
        self.config = bundle.config
        self.mdn = bundle.build(Stage.MDN)
        self.cunet = bundle.build(Stage.CUNET)
        self.schedule = make_linear_schedule(self.config.timesteps, self.config.beta_start,
                                             self.config.beta_end)

    def _as_batch(self, source_images) -> torch.Tensor:
        array = np.asarray(source_images, dtype=np.float32)
        if array.ndim == 3:
            array = array[np.newaxis]
        size = self.config.image_size
        if array.ndim != 4 or array.shape[1:] != (2, size, size):
            raise CDMValidationError(
                f"expected source images of shape (2, {size}, {size}) or (N, 2, {size}, {size}), "
                f"got {array.shape}"
            )
        return torch.from_numpy(normalize_for_network(array).astype(np.float32))

    @torch.no_grad()
    def sample_conditions(self, count: int, generator: torch.Generator,
                          n_sampling: Optional[int] = None) -> Optional[torch.Tensor]:
        """One latent per image; None for an unconditioned C-UNet"""
        if not self.config.use_condition:
            return None
        return mdn_sample(self.mdn, self.schedule, n_sampling or self.config.n_sampling, generator,
                          num_samples=count, latent_dim=self.config.latent_dim)

    @torch.no_grad()
    def synthesize(self, source_images, seed: int, n_sampling: Optional[int] = None) -> np.ndarray:
        """(T1c, T2f) in [0,1] for (T1, T2) sources in [0,1]; batched inputs keep their batch axis"""
        squeeze = np.ndim(source_images) == 3
        sources = self._as_batch(source_images)
        generator = torch.Generator().manual_seed(seed)
        condition = self.sample_conditions(sources.shape[0], generator, n_sampling)
        output = denormalize(cunet_forward(self.cunet, sources, condition)).clamp(0.0, 1.0)
        output = output.numpy().astype(np.float32)
        return output[0] if squeeze else output


def synthesize(bundle: CheckpointBundle, source_images, seed: int,
               n_sampling: Optional[int] = None) -> np.ndarray:
    return InferenceService(bundle).synthesize(source_images, seed, n_sampling)
