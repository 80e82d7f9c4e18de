"""
Data models for the Cross-conditioned Diffusion Model toolkit
Pydantic models for configuration, dataset bookkeeping and reports
"""

from enum import Enum
from typing import Dict, List, Optional, Tuple

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

SOURCE_MODALITIES: Tuple[str, str] = ("T1", "T2")
TARGET_MODALITIES: Tuple[str, str] = ("T1c", "T2f")
ALL_MODALITIES: Tuple[str, ...] = SOURCE_MODALITIES + TARGET_MODALITIES


class SplitTag(str, Enum):
    TRAIN = "train"
    TEST = "test"


class Stage(str, Enum):
    MRM = "mrm"
    MDN = "mdn"
    CUNET = "cunet"


class ConditionSource(str, Enum):
    FE = "fe"
    MDN = "mdn"


class TrainConfig(BaseModel):
    """Experiment settings shared by every training stage and by inference"""

    model_config = ConfigDict(extra="forbid", validate_assignment=True)

    image_size: int = Field(64, gt=0)
    latent_dim: int = Field(256, gt=0)
    timesteps: int = Field(1000, gt=0)
    beta_start: float = Field(1e-4, gt=0.0, lt=1.0)
    beta_end: float = Field(0.02, gt=0.0, lt=1.0)
    n_sampling: int = Field(30, gt=0)
    mask_ratio: float = Field(0.6, ge=0.0, le=1.0)
    patch_size: int = Field(0, ge=0)
    mrm_base_width: int = Field(16, gt=0)
    mdn_blocks: int = Field(3, gt=0)
    mdn_hidden: int = Field(0, ge=0)
    mdn_time_dim: int = Field(128, gt=0)
    mdn_decouple: bool = True
    cunet_base_width: int = Field(32, gt=0)
    cunet_scales: int = Field(4, ge=2)
    use_condition: bool = True
    cunet_condition_source: ConditionSource = ConditionSource.FE
    batch_size: int = Field(12, gt=0)
    mrm_epochs: int = Field(20, ge=0)
    mdn_epochs: int = Field(200, ge=0)
    cunet_epochs: int = Field(30, ge=0)
    mrm_lr: float = Field(1e-4, ge=0.0)
    mdn_lr: float = Field(1e-4, ge=0.0)
    cunet_lr: float = Field(1e-4, ge=0.0)
    weight_decay: float = Field(1e-5, ge=0.0)
    seed: int = Field(0, ge=0)

    @field_validator("latent_dim", "mdn_time_dim")
    @classmethod
    def validate_even(cls, v):
        if v % 2:
            raise ValueError("must be even")
        return v

    @model_validator(mode="after")
    def validate_geometry(self):
        if self.beta_start > self.beta_end:
            raise ValueError("beta_start must not exceed beta_end")
        if self.n_sampling > self.timesteps:
            raise ValueError("n_sampling must not exceed timesteps")
        if self.image_size % 16:
            raise ValueError("image_size must be divisible by 16 (four encoder stages)")
        if self.image_size % (2 ** self.cunet_scales):
            raise ValueError("image_size must be divisible by 2**cunet_scales")
        if self.image_size % self.effective_patch_size:
            raise ValueError("image_size must be divisible by patch_size")
        if self.mdn_decouple and self.effective_mdn_hidden % 2:
            raise ValueError("mdn_hidden must be even when mdn_decouple is set")
        return self

    @property
    def effective_patch_size(self) -> int:
        return self.patch_size or max(1, self.image_size // 8)

    @property
    def effective_mdn_hidden(self) -> int:
        return self.mdn_hidden or 4 * self.latent_dim

    @property
    def grid_size(self) -> int:
        return self.image_size // self.effective_patch_size


class PhantomSpec(BaseModel):
    """Recipe for the synthetic multi-modal brain phantom"""

    model_config = ConfigDict(extra="forbid")

    image_size: int = Field(64, ge=16)
    ellipse_count_range: Tuple[int, int] = (3, 7)
    tumor_probability: float = Field(0.5, ge=0.0, le=1.0)
    smoothing_sigma: float = Field(1.0, ge=0.0)
    noise_std: float = Field(0.0, ge=0.0)
    # Intensities at tissue classes CSF, gray matter, white matter; linear in between
    transfers: Dict[str, List[float]] = Field(
        default_factory=lambda: {
            "T1": [0.15, 0.45, 0.80],
            "T2": [0.90, 0.60, 0.40],
            "T1c": [0.35, 0.40, 0.60],
            "T2f": [0.08, 0.45, 0.55],
        }
    )
    tumor_intensity: Dict[str, float] = Field(
        default_factory=lambda: {"T1": 0.30, "T2": 0.85, "T1c": 0.30, "T2f": 0.95}
    )
    enhancing_rim_intensity: float = Field(0.95, ge=0.0, le=1.0)

    @field_validator("ellipse_count_range")
    @classmethod
    def validate_range(cls, v):
        low, high = v
        if low < 0 or high < low:
            raise ValueError("ellipse_count_range must satisfy 0 <= low <= high")
        return v

    @field_validator("transfers")
    @classmethod
    def validate_transfers(cls, v):
        missing = [m for m in ALL_MODALITIES if m not in v]
        if missing:
            raise ValueError(f"transfers missing modalities: {missing}")
        for modality, knots in v.items():
            if len(knots) != 3:
                raise ValueError(f"{modality}: expected 3 knots, got {len(knots)}")
            if any(k < 0.0 or k > 1.0 for k in knots):
                raise ValueError(f"{modality}: transfer outputs must lie in [0,1]")
            rising = all(a <= b for a, b in zip(knots, knots[1:]))
            falling = all(a >= b for a, b in zip(knots, knots[1:]))
            if not (rising or falling):
                raise ValueError(f"{modality}: transfer must be monotone")
        return v

    @field_validator("tumor_intensity")
    @classmethod
    def validate_tumor_intensity(cls, v):
        for modality in ALL_MODALITIES:
            value = v.get(modality)
            if value is None or not 0.0 <= value <= 1.0:
                raise ValueError(f"tumor_intensity[{modality}] must lie in [0,1]")
        return v


class ManifestEntry(BaseModel):
    case_id: str
    split: Optional[SplitTag] = None

    @field_validator("case_id")
    @classmethod
    def validate_case_id(cls, v):
        if not v or any(ch in v for ch in ",=/\\\n") or v.strip() != v:
            raise ValueError(f"invalid case id: {v!r}")
        return v


class DatasetManifest(BaseModel):
    """Case listing with train/test split tags"""

    version: int = 1
    image_size: int = Field(64, gt=0)
    seed: int = 0
    cases: List[ManifestEntry] = Field(default_factory=list)

    @model_validator(mode="after")
    def validate_unique(self):
        ids = [c.case_id for c in self.cases]
        if len(ids) != len(set(ids)):
            raise ValueError("duplicate case ids in manifest")
        return self

    def ids_for(self, split: SplitTag) -> List[str]:
        return [c.case_id for c in self.cases if c.split == split]


class MetricRow(BaseModel):
    """One line of a MetricReport"""

    case_id: str
    modality: str
    psnr: float
    ssim: float = Field(ge=-1.0, le=1.0)
    mae: float = Field(ge=0.0)


class BenchRow(BaseModel):
    """One line of the sampling benchmark table"""

    n_sampling: int
    seconds_per_image: float
    fps: float
    psnr_avg: float
    ssim_avg: float
    mae_avg: float
    mdn_seconds_per_image: float
    cunet_seconds_per_pass: float
    mdn_to_cunet30_ratio: float


class StageFlags(BaseModel):
    mrm: bool = False
    mdn: bool = False
    cunet: bool = False

    def is_complete(self) -> bool:
        return self.mrm and self.mdn and self.cunet
