"""
Synthetic multi-modal brain phantom
Shared ellipse anatomy rendered through per-modality contrast transfers, with optional tumor
"""

import logging
from dataclasses import dataclass
from typing import Dict, Optional

import numpy as np
from scipy import ndimage

from ..exceptions import CDMValidationError
from ..models.data_models import ALL_MODALITIES, PhantomSpec

logger = logging.getLogger(__name__)

# Tissue classes, indexing the three transfer knots
CSF, GRAY_MATTER, WHITE_MATTER = 0, 1, 2


@dataclass(eq=False)
class CaseRecord:
    """Four co-registered single-channel images in [0,1] plus the tumor mask"""

    case_id: str
    images: Dict[str, np.ndarray]
    tumor_mask: np.ndarray

    def __post_init__(self):
        missing = [m for m in ALL_MODALITIES if m not in self.images]
        if missing:
            raise CDMValidationError(f"{self.case_id}: missing modalities {missing}")
        shapes = {self.images[m].shape for m in ALL_MODALITIES}
        if len(shapes) != 1:
            raise CDMValidationError(f"{self.case_id}: modality shapes differ: {shapes}")
        shape = shapes.pop()
        if len(shape) != 2 or shape[0] != shape[1]:
            raise CDMValidationError(f"{self.case_id}: images must be square 2D, got {shape}")
        if self.tumor_mask.shape != shape:
            raise CDMValidationError(f"{self.case_id}: tumor mask shape {self.tumor_mask.shape} != {shape}")
        for m in ALL_MODALITIES:
            image = self.images[m]
            if not np.all(np.isfinite(image)) or image.min() < 0.0 or image.max() > 1.0:
                raise CDMValidationError(f"{self.case_id}: {m} values must lie in [0,1]")

    @property
    def image_size(self) -> int:
        return int(self.tumor_mask.shape[0])

    @property
    def has_tumor(self) -> bool:
        return bool(self.tumor_mask.any())

    def stack(self, modalities) -> np.ndarray:
        return np.stack([self.images[m] for m in modalities]).astype(np.float32)

    def __eq__(self, other) -> bool:
        if not isinstance(other, CaseRecord):
            return NotImplemented
        return (
            self.case_id == other.case_id
            and np.array_equal(self.tumor_mask, other.tumor_mask)
            and all(np.array_equal(self.images[m], other.images[m]) for m in ALL_MODALITIES)
        )


def _ellipse(xx, yy, cx, cy, a, b, angle) -> np.ndarray:
    cos_a, sin_a = np.cos(angle), np.sin(angle)
    xr = cos_a * (xx - cx) + sin_a * (yy - cy)
    yr = -sin_a * (xx - cx) + cos_a * (yy - cy)
    return (xr / a) ** 2 + (yr / b) ** 2 <= 1.0


def _render(spec: PhantomSpec, modality: str, tissue: np.ndarray, head: np.ndarray) -> np.ndarray:
    knots = spec.transfers[modality]
    return head * np.interp(tissue, [CSF, GRAY_MATTER, WHITE_MATTER], knots)


def generate_phantom_case(spec: PhantomSpec, seed: int, case_id: Optional[str] = None) -> CaseRecord:
    """Deterministic phantom case for (spec, seed)"""
    rng = np.random.default_rng(seed)
    n = spec.image_size
    coords = (np.arange(n) + 0.5) / n * 2.0 - 1.0
    yy, xx = np.meshgrid(coords, coords, indexing="ij")

    # Head outline with a gray-matter rim around white matter
    cx, cy = rng.uniform(-0.05, 0.05, size=2)
    a, b = rng.uniform(0.72, 0.88), rng.uniform(0.62, 0.80)
    angle = rng.uniform(-0.2, 0.2)
    head = _ellipse(xx, yy, cx, cy, a, b, angle)
    tissue = np.full((n, n), WHITE_MATTER, dtype=np.float64)
    tissue[head & ~_ellipse(xx, yy, cx, cy, 0.85 * a, 0.85 * b, angle)] = GRAY_MATTER

    low, high = spec.ellipse_count_range
    for _ in range(int(rng.integers(low, high + 1))):
        label = GRAY_MATTER if rng.random() < 0.6 else CSF
        ex, ey = rng.uniform(-0.45, 0.45, size=2)
        ea, eb = rng.uniform(0.05, 0.22, size=2)
        tissue[_ellipse(xx, yy, cx + ex * a, cy + ey * b, ea, eb, rng.uniform(0.0, np.pi)) & head] = label

    # Ventricles
    spread = rng.uniform(0.08, 0.14)
    for side in (-1.0, 1.0):
        ventricle = _ellipse(xx, yy, cx + side * spread, cy, 0.06, rng.uniform(0.15, 0.25), side * 0.3)
        tissue[ventricle & head] = CSF

    head_f = head.astype(np.float64)
    if spec.smoothing_sigma > 0:
        tissue = ndimage.gaussian_filter(tissue, spec.smoothing_sigma)
        head_f = ndimage.gaussian_filter(head_f, spec.smoothing_sigma)
    images = {m: _render(spec, m, tissue, head_f) for m in ALL_MODALITIES}

    tumor_mask = np.zeros((n, n), dtype=np.bool_)
    if rng.random() < spec.tumor_probability:
        radius = rng.uniform(0.0, 0.45)
        theta = rng.uniform(0.0, 2.0 * np.pi)
        tx, ty = cx + radius * a * np.cos(theta), cy + radius * b * np.sin(theta)
        ta, tb = rng.uniform(0.12, 0.22, size=2)
        tumor_mask = _ellipse(xx, yy, tx, ty, ta, tb, rng.uniform(0.0, np.pi)) & head
        core = ndimage.binary_erosion(tumor_mask, iterations=max(1, n // 32))
        rim = tumor_mask & ~core
        for m in ALL_MODALITIES:
            images[m][tumor_mask] = spec.tumor_intensity[m]
        # Contrast enhancement on the rim only
        images["T1c"][rim] = spec.enhancing_rim_intensity

    for m in ALL_MODALITIES:
        if spec.noise_std > 0:
            images[m] = images[m] + rng.normal(0.0, spec.noise_std, size=(n, n))
        images[m] = np.clip(images[m], 0.0, 1.0).astype(np.float32)

    return CaseRecord(case_id=case_id or f"seed_{seed}", images=images, tumor_mask=tumor_mask)
