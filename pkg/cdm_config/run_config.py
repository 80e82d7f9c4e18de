"""
Run configuration files
UTF-8 key=value lines mirroring TrainConfig, '#' comments, unknown keys rejected
"""

import logging
from typing import Dict, Tuple

from pydantic import ValidationError

from cdm.exceptions import CDMIOError, CDMValidationError
from cdm.models.data_models import TrainConfig

logger = logging.getLogger(__name__)


def _format_value(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    if hasattr(value, "value"):
        return str(value.value)
    return str(value)


def serialize_run_config(config: TrainConfig) -> str:
    """Every field in declaration order, one key=value per line"""
    lines = [f"{name}={_format_value(getattr(config, name))}" for name in TrainConfig.model_fields]
    return "\n".join(lines) + "\n"


def parse_run_config(text: str) -> TrainConfig:
    """Parse the key=value dialect; errors name the 1-based line number"""
    values: Dict[str, str] = {}
    line_of: Dict[str, int] = {}

    for number, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith('#'):
            continue
        if '=' not in line:
            raise CDMValidationError(f"line {number}: expected key=value, got {raw!r}")
        key, value = line.split('=', 1)
        key, value = key.strip(), value.strip()
        if key not in TrainConfig.model_fields:
            raise CDMValidationError(f"line {number}: unknown key {key!r}")
        if key in values:
            raise CDMValidationError(f"line {number}: duplicate key {key!r} (first on line {line_of[key]})")
        if not value:
            raise CDMValidationError(f"line {number}: empty value for {key!r}")
        values[key] = value
        line_of[key] = number

    try:
        return TrainConfig(**values)
    except ValidationError as e:
        first = e.errors()[0]
        field = first["loc"][0] if first["loc"] else None
        where = f"line {line_of[field]}: " if field in line_of else ""
        raise CDMValidationError(f"{where}{field or 'config'}: {first['msg']}") from e


def load_run_config(path: str) -> TrainConfig:
    """Read and parse a run configuration file"""
    try:
        with open(path, 'r', encoding='utf-8') as f:
            text = f.read()
    except OSError as e:
        raise CDMIOError(f"Cannot read run config {path}: {e}") from e
    config = parse_run_config(text)
    logger.info(f"✅ Run configuration loaded from: {path}")
    return config


def save_run_config(config: TrainConfig, path: str) -> None:
    try:
        with open(path, 'w', encoding='utf-8', newline='\n') as f:
            f.write(serialize_run_config(config))
    except OSError as e:
        raise CDMIOError(f"Cannot write run config {path}: {e}") from e


def parse_key_value_lines(text: str) -> Tuple[Dict[str, str], Dict[str, int]]:
    """Generic key=value reader used for the checkpoint flag section; later keys win"""
    values: Dict[str, str] = {}
    line_of: Dict[str, int] = {}
    for number, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith('#'):
            continue
        if '=' not in line:
            raise CDMValidationError(f"line {number}: expected key=value, got {raw!r}")
        key, value = line.split('=', 1)
        values[key.strip()] = value.strip()
        line_of[key.strip()] = number
    return values, line_of
