"""
Intensity normalization between the [0,1] image space and the [-1,1] network space
"""

import logging
import threading

import numpy as np
import torch

logger = logging.getLogger(__name__)


class IntensityNormalizer:
    """x -> 2x - 1 and back; out-of-range inputs are clamped and counted"""

    def __init__(self):
        self.clamp_count = 0
        self._lock = threading.Lock()

    def normalize(self, images):
        if isinstance(images, torch.Tensor):
            outside = int(((images < 0) | (images > 1)).sum())
            clipped = images.clamp(0.0, 1.0)
        else:
            images = np.asarray(images)
            outside = int(np.count_nonzero((images < 0) | (images > 1)))
            clipped = np.clip(images, 0.0, 1.0)
        if outside:
            with self._lock:
                self.clamp_count += outside
            logger.warning(f"⚠️ Clamped {outside} values outside [0,1] before normalization")
        return clipped * 2.0 - 1.0

    def denormalize(self, images):
        return (images + 1.0) / 2.0

    def reset(self) -> None:
        with self._lock:
            self.clamp_count = 0


default_normalizer = IntensityNormalizer()


def normalize_for_network(images):
    """[0,1] -> [-1,1]"""
    return default_normalizer.normalize(images)


def denormalize(images):
    """[-1,1] -> [0,1]; no clamping"""
    return default_normalizer.denormalize(images)
