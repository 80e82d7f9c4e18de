"""
Image quality metrics: PSNR, SSIM and MAE on [0,1] images
"""

import logging
import math

import numpy as np
from skimage.metrics import structural_similarity

from ..exceptions import CDMValidationError

logger = logging.getLogger(__name__)

SSIM_SIGMA = 1.5
SSIM_WINDOW = 11
SSIM_K1 = 0.01
SSIM_K2 = 0.03


def _pair(a, b):
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise CDMValidationError(f"shape mismatch: {a.shape} vs {b.shape}")
    return a, b


def psnr(a, b, max_value: float = 1.0) -> float:
    """10 log10(max^2 / MSE); identical inputs give +inf"""
    if max_value <= 0:
        raise CDMValidationError(f"max_value must be > 0, got {max_value}")
    a, b = _pair(a, b)
    mse = float(np.mean((a - b) ** 2))
    if mse == 0.0:
        return math.inf
    return 10.0 * math.log10(max_value ** 2 / mse)


def ssim(a, b) -> float:
    """Gaussian-window SSIM (11x11, sigma 1.5, K1=0.01, K2=0.03, data range 1)"""
    a, b = _pair(a, b)
    if a.ndim != 2:
        raise CDMValidationError(f"ssim expects single-channel 2D images, got shape {a.shape}")
    if min(a.shape) < SSIM_WINDOW:
        raise CDMValidationError(f"image {a.shape} smaller than the {SSIM_WINDOW}x{SSIM_WINDOW} window")
    return float(structural_similarity(
        a, b,
        data_range=1.0,
        gaussian_weights=True,
        sigma=SSIM_SIGMA,
        use_sample_covariance=False,
        K1=SSIM_K1,
        K2=SSIM_K2,
    ))


def mae(a, b) -> float:
    a, b = _pair(a, b)
    return float(np.mean(np.abs(a - b)))
