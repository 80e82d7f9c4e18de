"""
Dataset manifest
Line-oriented key=value listing of cases with their train/test split tags
"""

import logging
import math
import os
from typing import List

import numpy as np

from ..exceptions import CDMIOError, CDMValidationError, CorruptFileError
from ..models.data_models import DatasetManifest, ManifestEntry, SplitTag

logger = logging.getLogger(__name__)

MANIFEST_NAME = "manifest.txt"
TRAIN_FRACTION = 0.7


def split_dataset(manifest: DatasetManifest, seed: int) -> DatasetManifest:
    """Random 70/30 case-level split; both sides non-empty"""
    n = len(manifest.cases)
    if n < 2:
        raise CDMValidationError(f"need at least 2 cases to split, got {n}")

    n_train = min(max(math.floor(TRAIN_FRACTION * n + 0.5), 1), n - 1)
    order = np.random.default_rng(seed).permutation(n)
    train = set(int(i) for i in order[:n_train])
    cases = [
        ManifestEntry(case_id=entry.case_id, split=SplitTag.TRAIN if i in train else SplitTag.TEST)
        for i, entry in enumerate(manifest.cases)
    ]
    logger.info(f"📋 Split {n} cases: {n_train} train / {n - n_train} test (seed {seed})")
    return manifest.model_copy(update={"cases": cases})


def serialize_manifest(manifest: DatasetManifest) -> str:
    lines = [
        f"version={manifest.version}",
        f"image_size={manifest.image_size}",
        f"seed={manifest.seed}",
    ]
    for entry in manifest.cases:
        tag = f",{entry.split.value}" if entry.split is not None else ""
        lines.append(f"case={entry.case_id}{tag}")
    return "\n".join(lines) + "\n"


def parse_manifest(text: str) -> DatasetManifest:
    header = {}
    cases: List[ManifestEntry] = []
    try:
        for number, raw in enumerate(text.splitlines(), start=1):
            line = raw.strip()
            if not line or line.startswith('#'):
                continue
            if '=' not in line:
                raise CorruptFileError(f"manifest line {number}: expected key=value")
            key, value = (part.strip() for part in line.split('=', 1))
            if key == "case":
                case_id, _, split = value.partition(',')
                cases.append(ManifestEntry(case_id=case_id, split=split or None))
            elif key in ("version", "image_size", "seed"):
                header[key] = int(value)
            else:
                raise CorruptFileError(f"manifest line {number}: unknown key {key!r}")
        return DatasetManifest(cases=cases, **header)
    except ValueError as e:
        raise CorruptFileError(f"malformed manifest: {e}") from e


def manifest_path(directory: str) -> str:
    return os.path.join(directory, MANIFEST_NAME)


def write_manifest(manifest: DatasetManifest, directory: str) -> str:
    path = manifest_path(directory)
    try:
        os.makedirs(directory, exist_ok=True)
        with open(path, 'w', encoding='utf-8', newline='\n') as f:
            f.write(serialize_manifest(manifest))
    except OSError as e:
        raise CDMIOError(f"Cannot write manifest {path}: {e}") from e
    return path


def read_manifest(directory: str) -> DatasetManifest:
    path = manifest_path(directory)
    try:
        with open(path, 'r', encoding='utf-8') as f:
            text = f.read()
    except OSError as e:
        raise CDMIOError(f"Cannot read manifest {path}: {e}") from e
    return parse_manifest(text)
