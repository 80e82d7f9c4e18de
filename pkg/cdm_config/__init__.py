"""
Configuration package
Application settings (config.json) and run configuration files
"""

from .config_loader import (
    ConfigLoader,
    get_benchmark_settings,
    get_logging_settings,
    get_output_settings,
    setup_logging,
)
from .run_config import (
    load_run_config,
    parse_run_config,
    save_run_config,
    serialize_run_config,
)

__all__ = [
    'ConfigLoader',
    'get_benchmark_settings',
    'get_logging_settings',
    'get_output_settings',
    'setup_logging',
    'load_run_config',
    'parse_run_config',
    'save_run_config',
    'serialize_run_config',
]
