"""
Case file codec
Bit-exact little-endian case files: header, float32 modality planes, packed tumor bits, CRC32
"""

import logging
import os
import struct
import zlib

import numpy as np

from ..exceptions import CDMIOError, CDMValidationError, CorruptFileError
from ..models.data_models import ALL_MODALITIES
from .phantom import CaseRecord

logger = logging.getLogger(__name__)

CASE_MAGIC = b"CDMC"
CASE_FORMAT_VERSION = 1
CASE_SUFFIX = ".cdmc"
_HEADER = struct.Struct("<4sHHB")
_CRC = struct.Struct("<I")
MAX_IMAGE_SIZE = 0xFFFF


def case_path(directory: str, case_id: str) -> str:
    return os.path.join(directory, f"{case_id}{CASE_SUFFIX}")


def expected_case_file_size(image_size: int) -> int:
    pixels = image_size * image_size
    mask_bytes = (pixels + 7) // 8
    return _HEADER.size + len(ALL_MODALITIES) * pixels * 4 + mask_bytes + _CRC.size


def encode_case(record: CaseRecord) -> bytes:
    size = record.image_size
    if size > MAX_IMAGE_SIZE:
        raise CDMValidationError(f"image size {size} overflows the u16 header field")

    parts = [_HEADER.pack(CASE_MAGIC, CASE_FORMAT_VERSION, size, len(ALL_MODALITIES))]
    for modality in ALL_MODALITIES:
        parts.append(np.ascontiguousarray(record.images[modality], dtype="<f4").tobytes())
    parts.append(np.packbits(record.tumor_mask.ravel(), bitorder="big").tobytes())
    body = b"".join(parts)
    return body + _CRC.pack(zlib.crc32(body) & 0xFFFFFFFF)


def decode_case(payload: bytes, case_id: str) -> CaseRecord:
    if len(payload) < _HEADER.size + _CRC.size:
        raise CorruptFileError(f"{case_id}: file truncated ({len(payload)} bytes)")
    body, (stored_crc,) = payload[:-_CRC.size], _CRC.unpack(payload[-_CRC.size:])
    if zlib.crc32(body) & 0xFFFFFFFF != stored_crc:
        raise CorruptFileError(f"{case_id}: checksum mismatch")

    magic, version, size, modality_count = _HEADER.unpack_from(body)
    if magic != CASE_MAGIC:
        raise CorruptFileError(f"{case_id}: bad magic {magic!r}")
    if version != CASE_FORMAT_VERSION:
        raise CorruptFileError(f"{case_id}: unsupported format version {version}")
    if modality_count != len(ALL_MODALITIES):
        raise CorruptFileError(f"{case_id}: expected {len(ALL_MODALITIES)} modalities, got {modality_count}")
    if size == 0 or len(payload) != expected_case_file_size(size):
        raise CorruptFileError(
            f"{case_id}: header declares {size}x{size} images but file holds {len(payload)} bytes"
        )

    pixels = size * size
    offset = _HEADER.size
    images = {}
    for modality in ALL_MODALITIES:
        plane = np.frombuffer(body, dtype="<f4", count=pixels, offset=offset)
        images[modality] = plane.astype(np.float32).reshape(size, size)
        offset += pixels * 4
    bits = np.frombuffer(body, dtype=np.uint8, offset=offset)
    mask = np.unpackbits(bits, count=pixels, bitorder="big").astype(np.bool_).reshape(size, size)
    try:
        return CaseRecord(case_id=case_id, images=images, tumor_mask=mask)
    except CDMValidationError as e:
        raise CorruptFileError(str(e)) from e


def write_case(record: CaseRecord, directory: str) -> str:
    """Write one case file; returns its path"""
    path = case_path(directory, record.case_id)
    payload = encode_case(record)
    try:
        os.makedirs(directory, exist_ok=True)
        with open(path, "wb") as f:
            f.write(payload)
    except OSError as e:
        raise CDMIOError(f"Cannot write case file {path}: {e}") from e
    logger.debug(f"Wrote {record.case_id} ({len(payload)} bytes)")
    return path


def read_case(directory: str, case_id: str) -> CaseRecord:
    path = case_path(directory, case_id)
    try:
        with open(path, "rb") as f:
            payload = f.read()
    except FileNotFoundError as e:
        raise CDMValidationError(f"Unknown case {case_id!r}: {path} not found") from e
    except OSError as e:
        raise CDMIOError(f"Cannot read case file {path}: {e}") from e
    return decode_case(payload, case_id)
