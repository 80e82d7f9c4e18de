"""
Models package for the Cross-conditioned Diffusion Model toolkit
Contains Pydantic models for configuration and reports
"""

from .data_models import (
    ALL_MODALITIES,
    SOURCE_MODALITIES,
    TARGET_MODALITIES,
    BenchRow,
    ConditionSource,
    DatasetManifest,
    ManifestEntry,
    MetricRow,
    PhantomSpec,
    SplitTag,
    Stage,
    StageFlags,
    TrainConfig,
)

__all__ = [
    'ALL_MODALITIES',
    'SOURCE_MODALITIES',
    'TARGET_MODALITIES',
    'BenchRow',
    'ConditionSource',
    'DatasetManifest',
    'ManifestEntry',
    'MetricRow',
    'PhantomSpec',
    'SplitTag',
    'Stage',
    'StageFlags',
    'TrainConfig',
]
