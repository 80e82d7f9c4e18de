"""
Checkpoint Service
CheckpointBundle and its single-file, sectioned, CRC-protected codec
"""

import hashlib
import logging
import os
import struct
import zlib
from dataclasses import dataclass, field
from typing import Dict, Optional

import numpy as np
import torch
import torch.nn as nn

from cdm_config.run_config import parse_key_value_lines, parse_run_config, serialize_run_config

from ..exceptions import CDMIOError, CDMValidationError, CorruptFileError, PipelineOrderError
from ..models.data_models import Stage, StageFlags, TrainConfig
from ..networks.cunet import CrossConditionedUNet
from ..networks.mdn import ModalityDecoupledDiffusionNetwork
from ..networks.mrm import ModalityRepresentationModel

logger = logging.getLogger(__name__)

BUNDLE_MAGIC = b"CDMB"
BUNDLE_FORMAT_VERSION = 1

_FILE_HEADER = struct.Struct("<4sHH")
_SECTION_NAME_LEN = struct.Struct("<B")
_SECTION_LEN = struct.Struct("<Q")
_U32 = struct.Struct("<I")
_TENSOR_HEADER = struct.Struct("<HBB")

_DTYPE_CODES = {torch.float32: 0, torch.float64: 1, torch.int64: 2}
_CODE_DTYPES = {0: ("<f4", torch.float32), 1: ("<f8", torch.float64), 2: ("<i8", torch.int64)}

StateDict = Dict[str, torch.Tensor]

MODEL_BUILDERS = {
    Stage.MRM: ModalityRepresentationModel.from_config,
    Stage.MDN: ModalityDecoupledDiffusionNetwork.from_config,
    Stage.CUNET: CrossConditionedUNet.from_config,
}


def config_hash(config: TrainConfig) -> str:
    return hashlib.sha256(serialize_run_config(config).encode("utf-8")).hexdigest()


@dataclass
class CheckpointBundle:
    """Config snapshot, stage flags and the parameters of every completed stage"""

    config: TrainConfig
    flags: StageFlags = field(default_factory=StageFlags)
    states: Dict[Stage, StateDict] = field(default_factory=dict)
    version: int = BUNDLE_FORMAT_VERSION

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        for stage in Stage:
            flagged = getattr(self.flags, stage.value)
            if flagged != (stage in self.states):
                raise CDMValidationError(
                    f"stage {stage.value}: flag is {flagged} but parameters are "
                    f"{'present' if stage in self.states else 'absent'}"
                )
        for stage, state in self.states.items():
            expected = MODEL_BUILDERS[stage](self.config).state_dict()
            shapes = {k: tuple(v.shape) for k, v in state.items()}
            wanted = {k: tuple(v.shape) for k, v in expected.items()}
            if shapes != wanted:
                raise CDMValidationError(f"stage {stage.value}: parameter shapes do not match the config")

    def has(self, stage: Stage) -> bool:
        return getattr(self.flags, stage.value)

    def require(self, *stages: Stage) -> None:
        missing = [s.value for s in stages if not self.has(s)]
        if missing:
            raise PipelineOrderError(f"prerequisite stage(s) not completed: {', '.join(missing)}")

    def with_stage(self, stage: Stage, model: nn.Module) -> "CheckpointBundle":
        """New bundle with `stage` set from `model`; the receiver is left untouched"""
        states = dict(self.states)
        states[stage] = {k: v.detach().clone() for k, v in model.state_dict().items()}
        flags = self.flags.model_copy(update={stage.value: True})
        return CheckpointBundle(config=self.config, flags=flags, states=states, version=self.version)

    def build(self, stage: Stage) -> nn.Module:
        """Fresh module for `stage` loaded with the stored parameters, in eval mode"""
        self.require(stage)
        model = MODEL_BUILDERS[stage](self.config)
        model.load_state_dict(self.states[stage])
        model.eval()
        return model


def _encode_state(state: StateDict) -> bytes:
    parts = [_U32.pack(len(state))]
    for name in sorted(state):
        tensor = state[name].detach().cpu().contiguous()
        if tensor.dtype not in _DTYPE_CODES:
            raise CDMValidationError(f"unsupported tensor dtype {tensor.dtype} for {name}")
        code = _DTYPE_CODES[tensor.dtype]
        encoded_name = name.encode("utf-8")
        parts.append(_TENSOR_HEADER.pack(len(encoded_name), code, tensor.dim()))
        parts.append(encoded_name)
        parts.append(b"".join(_U32.pack(d) for d in tensor.shape))
        parts.append(tensor.numpy().astype(_CODE_DTYPES[code][0]).tobytes())
    return b"".join(parts)


def _decode_state(payload: bytes) -> StateDict:
    state: StateDict = {}
    try:
        (count,), offset = _U32.unpack_from(payload), _U32.size
        for _ in range(count):
            name_len, code, ndim = _TENSOR_HEADER.unpack_from(payload, offset)
            offset += _TENSOR_HEADER.size
            if offset + name_len + 4 * ndim > len(payload):
                raise CorruptFileError("truncated tensor header")
            name = payload[offset:offset + name_len].decode("utf-8")
            offset += name_len
            shape = tuple(_U32.unpack_from(payload, offset + 4 * i)[0] for i in range(ndim))
            offset += 4 * ndim
            if code not in _CODE_DTYPES:
                raise CorruptFileError(f"unknown dtype code {code} for {name}")
            np_dtype, torch_dtype = _CODE_DTYPES[code]
            count_items = int(np.prod(shape, dtype=np.int64)) if shape else 1
            if offset + count_items * np.dtype(np_dtype).itemsize > len(payload):
                raise CorruptFileError(f"tensor {name} runs past the end of its section")
            array = np.frombuffer(payload, dtype=np_dtype, count=count_items, offset=offset)
            offset += array.nbytes
            state[name] = torch.from_numpy(array.astype(np_dtype[1:]).reshape(shape)).to(torch_dtype)
    except (struct.error, ValueError, UnicodeDecodeError) as e:
        raise CorruptFileError(f"malformed tensor section: {e}") from e
    if offset != len(payload):
        raise CorruptFileError("trailing bytes in tensor section")
    return state


def _section(name: str, payload: bytes) -> bytes:
    encoded = name.encode("ascii")
    return b"".join([
        _SECTION_NAME_LEN.pack(len(encoded)), encoded,
        _SECTION_LEN.pack(len(payload)), payload,
        _U32.pack(zlib.crc32(payload) & 0xFFFFFFFF),
    ])


def encode_bundle(bundle: CheckpointBundle) -> bytes:
    flags_text = "".join(
        f"{stage.value}={'true' if bundle.has(stage) else 'false'}\n" for stage in Stage
    ) + f"config_hash={config_hash(bundle.config)}\n"
    sections = [
        _section("config", serialize_run_config(bundle.config).encode("utf-8")),
        _section("flags", flags_text.encode("utf-8")),
    ]
    for stage in Stage:
        if stage in bundle.states:
            sections.append(_section(stage.value, _encode_state(bundle.states[stage])))
    body = _FILE_HEADER.pack(BUNDLE_MAGIC, bundle.version, len(sections)) + b"".join(sections)
    return body + _U32.pack(zlib.crc32(body) & 0xFFFFFFFF)


def decode_bundle(payload: bytes) -> CheckpointBundle:
    if len(payload) < _FILE_HEADER.size + _U32.size:
        raise CorruptFileError("checkpoint truncated")
    body, (stored_crc,) = payload[:-_U32.size], _U32.unpack(payload[-_U32.size:])
    if zlib.crc32(body) & 0xFFFFFFFF != stored_crc:
        raise CorruptFileError("checkpoint checksum mismatch")
    magic, version, section_count = _FILE_HEADER.unpack_from(body)
    if magic != BUNDLE_MAGIC:
        raise CorruptFileError(f"bad checkpoint magic {magic!r}")
    if version != BUNDLE_FORMAT_VERSION:
        raise CorruptFileError(f"unsupported checkpoint version {version}")

    sections: Dict[str, bytes] = {}
    offset = _FILE_HEADER.size
    try:
        for _ in range(section_count):
            (name_len,) = _SECTION_NAME_LEN.unpack_from(body, offset)
            offset += _SECTION_NAME_LEN.size
            name = body[offset:offset + name_len].decode("ascii")
            offset += name_len
            (length,) = _SECTION_LEN.unpack_from(body, offset)
            offset += _SECTION_LEN.size
            data = body[offset:offset + length]
            offset += length
            (crc,) = _U32.unpack_from(body, offset)
            offset += _U32.size
            if len(data) != length or zlib.crc32(data) & 0xFFFFFFFF != crc:
                raise CorruptFileError(f"section {name!r} failed CRC validation")
            sections[name] = data
    except (struct.error, UnicodeDecodeError) as e:
        raise CorruptFileError(f"malformed checkpoint section table: {e}") from e
    if offset != len(body):
        raise CorruptFileError("trailing bytes after checkpoint sections")

    try:
        config = parse_run_config(sections["config"].decode("utf-8"))
        flag_values, _ = parse_key_value_lines(sections["flags"].decode("utf-8"))
    except KeyError as e:
        raise CorruptFileError(f"checkpoint missing section {e}") from e
    if flag_values.get("config_hash") != config_hash(config):
        raise CorruptFileError("config hash does not match the stored config")
    flags = StageFlags(**{s.value: flag_values.get(s.value) == "true" for s in Stage})
    states = {Stage(name): _decode_state(data) for name, data in sections.items()
              if name in {s.value for s in Stage}}
    return CheckpointBundle(config=config, flags=flags, states=states, version=version)


def save_bundle(bundle: CheckpointBundle, path: str) -> str:
    payload = encode_bundle(bundle)
    try:
        directory = os.path.dirname(path)
        if directory:
            os.makedirs(directory, exist_ok=True)
        with open(path, "wb") as f:
            f.write(payload)
    except OSError as e:
        raise CDMIOError(f"Cannot write checkpoint {path}: {e}") from e
    logger.info(f"💾 Checkpoint saved: {path} ({len(payload)} bytes)")
    return path


def load_bundle(path: str) -> CheckpointBundle:
    try:
        with open(path, "rb") as f:
            payload = f.read()
    except OSError as e:
        raise CDMIOError(f"Cannot read checkpoint {path}: {e}") from e
    return decode_bundle(payload)


def load_or_create_bundle(path: str, config: Optional[TrainConfig]) -> CheckpointBundle:
    """Existing checkpoint (whose config must match `config`) or a fresh one"""
    if os.path.exists(path):
        bundle = load_bundle(path)
        if config is not None and bundle.config != config:
            raise CDMValidationError(f"config differs from the one stored in {path}")
        return bundle
    if config is None:
        raise CDMValidationError(f"checkpoint {path} does not exist and no config was given")
    return CheckpointBundle(config=config)
