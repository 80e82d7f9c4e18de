"""
Torch dataset over case files and the dataset generation job
"""

import logging
from typing import List, Optional, Sequence

import numpy as np
import torch
from pydantic import ValidationError
from torch.utils.data import DataLoader, Dataset

from ..exceptions import CDMValidationError
from ..models.data_models import (
    SOURCE_MODALITIES,
    TARGET_MODALITIES,
    DatasetManifest,
    ManifestEntry,
    PhantomSpec,
    SplitTag,
)
from .case_io import read_case, write_case
from .manifest import read_manifest, split_dataset, write_manifest
from .normalization import normalize_for_network
from .phantom import CaseRecord, generate_phantom_case

logger = logging.getLogger(__name__)


def case_seeds(seed: int, count: int) -> List[int]:
    """Independent per-case seeds derived from one dataset seed"""
    children = np.random.SeedSequence(seed).spawn(count)
    return [int(child.generate_state(1, dtype=np.uint32)[0]) for child in children]


def case_id_for(index: int, count: int) -> str:
    return f"case_{index:0{max(4, len(str(count - 1)))}d}"


def generate_dataset(directory: str, cases: int, image_size: int, seed: int,
                     spec: Optional[PhantomSpec] = None) -> DatasetManifest:
    """Write `cases` phantom case files plus a split manifest"""
    if cases < 2:
        raise CDMValidationError(f"need at least 2 cases, got {cases}")
    try:
        spec = PhantomSpec.model_validate({**(spec or PhantomSpec()).model_dump(), "image_size": image_size})
    except ValidationError as e:
        raise CDMValidationError(f"invalid phantom settings: {e}") from e

    logger.info(f"🚀 Generating {cases} phantom cases ({image_size}x{image_size}, seed {seed})")
    entries = []
    for index, case_seed in enumerate(case_seeds(seed, cases)):
        record = generate_phantom_case(spec, case_seed, case_id=case_id_for(index, cases))
        write_case(record, directory)
        entries.append(ManifestEntry(case_id=record.case_id))

    manifest = split_dataset(DatasetManifest(image_size=image_size, seed=seed, cases=entries), seed)
    write_manifest(manifest, directory)
    logger.info(f"✅ Dataset written to {directory}")
    return manifest


def record_tensors(record: CaseRecord):
    """(source, target) network-space tensors, each (2, H, W) float32"""
    source = torch.from_numpy(normalize_for_network(record.stack(SOURCE_MODALITIES)).astype(np.float32))
    target = torch.from_numpy(normalize_for_network(record.stack(TARGET_MODALITIES)).astype(np.float32))
    return source, target


class CaseDataset(Dataset):
    """Cases of one split, loaded eagerly and kept in network space"""

    def __init__(self, directory: str, case_ids: Sequence[str]):
        if not case_ids:
            raise CDMValidationError(f"no cases selected from {directory}")
        self.directory = directory
        self.case_ids = list(case_ids)
        self.records = [read_case(directory, case_id) for case_id in self.case_ids]
        self._tensors = [record_tensors(record) for record in self.records]

    @classmethod
    def from_split(cls, directory: str, split: SplitTag) -> "CaseDataset":
        manifest = read_manifest(directory)
        case_ids = manifest.ids_for(split)
        if not case_ids:
            raise CDMValidationError(f"{split.value} split of {directory} is empty")
        return cls(directory, case_ids)

    @property
    def image_size(self) -> int:
        return self.records[0].image_size

    def __len__(self) -> int:
        return len(self.records)

    def __getitem__(self, index: int):
        return self._tensors[index]

    def sources(self) -> torch.Tensor:
        return torch.stack([source for source, _ in self._tensors])

    def targets(self) -> torch.Tensor:
        return torch.stack([target for _, target in self._tensors])


def make_loader(dataset: Dataset, batch_size: int, seed: int, shuffle: bool = True) -> DataLoader:
    """Single-process loader whose shuffle order is fixed by `seed`"""
    generator = torch.Generator().manual_seed(seed)
    return DataLoader(dataset, batch_size=batch_size, shuffle=shuffle, generator=generator, num_workers=0)
