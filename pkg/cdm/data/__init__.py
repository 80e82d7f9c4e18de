"""
Data package
Phantom generator, case file codec, manifest, normalization and torch datasets
"""

from .case_io import decode_case, encode_case, expected_case_file_size, read_case, write_case
from .dataset import CaseDataset, generate_dataset, make_loader, record_tensors
from .manifest import read_manifest, split_dataset, write_manifest
from .normalization import IntensityNormalizer, denormalize, normalize_for_network
from .phantom import CaseRecord, generate_phantom_case

__all__ = [
    'decode_case',
    'encode_case',
    'expected_case_file_size',
    'read_case',
    'write_case',
    'CaseDataset',
    'generate_dataset',
    'make_loader',
    'record_tensors',
    'read_manifest',
    'split_dataset',
    'write_manifest',
    'IntensityNormalizer',
    'denormalize',
    'normalize_for_network',
    'CaseRecord',
    'generate_phantom_case',
]
