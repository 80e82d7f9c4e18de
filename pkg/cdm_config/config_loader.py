"""
Configuration Loader for the Cross-conditioned Diffusion Model toolkit
Centralized application settings from config.json and logging setup
"""

import json
import logging
import os
import sys
from typing import Any, Dict, Optional

logger = logging.getLogger(__name__)

DEFAULT_LOG_FORMAT = "%(asctime)s - %(levelname)s - %(message)s"


class ConfigLoader:
    """Loads and manages application settings from config.json"""

    def __init__(self, config_file: Optional[str] = None):
        if config_file is None:
            # Default to config.json in project root
            current_dir = os.path.dirname(os.path.abspath(__file__))
            project_root = os.path.dirname(current_dir)
            config_file = os.path.join(project_root, "config.json")

        self.config_file = config_file
        self._config = self._load_config()

    def _load_config(self) -> Dict[str, Any]:
        """Load configuration from JSON file, merged over the defaults"""
        config = self._get_default_config()
        if not os.path.exists(self.config_file):
            logger.warning(f"⚠️ Config file not found: {self.config_file}, using defaults")
            return config

        try:
            with open(self.config_file, 'r', encoding='utf-8') as f:
                loaded = json.load(f)
        except (OSError, json.JSONDecodeError) as e:
            logger.error(f"❌ Error loading config {self.config_file}: {e}")
            return config

        for section, values in loaded.items():
            if isinstance(values, dict) and isinstance(config.get(section), dict):
                config[section].update(values)
            else:
                config[section] = values
        logger.debug(f"✅ Configuration loaded from: {self.config_file}")
        return config

    def _get_default_config(self) -> Dict[str, Any]:
        """Return default configuration if file is not found"""
        return {
            "logging": {
                "level": "INFO",
                "file": None,
                "format": DEFAULT_LOG_FORMAT,
            },
            "outputs": {
                "loss_curve_suffix": "_loss.csv",
                "pgm_suffix": ".pgm",
                "raw_suffix": ".f32",
                "pgm_max_value": 65535,
            },
            "benchmark": {
                "repetitions": 3,
                "warmup_runs": 1,
            },
        }

    def get_logging_settings(self) -> Dict[str, Any]:
        """Get logging section"""
        return dict(self._config.get("logging", {}))

    def get_output_settings(self) -> Dict[str, Any]:
        """Get output naming section"""
        return dict(self._config.get("outputs", {}))

    def get_benchmark_settings(self) -> Dict[str, Any]:
        """Get benchmark section"""
        return dict(self._config.get("benchmark", {}))

    def get_section(self, section_name: str) -> Dict[str, Any]:
        """Get a specific configuration section"""
        return dict(self._config.get(section_name, {}))


# Global configuration instance
config = ConfigLoader()


def get_logging_settings() -> Dict[str, Any]:
    """Get logging settings from the global config instance"""
    return config.get_logging_settings()


def get_output_settings() -> Dict[str, Any]:
    """Get output naming settings from the global config instance"""
    return config.get_output_settings()


def get_benchmark_settings() -> Dict[str, Any]:
    """Get benchmark settings from the global config instance"""
    return config.get_benchmark_settings()


def setup_logging(level: Optional[str] = None) -> None:
    """Send log records to stderr (and the configured log file, if any)"""
    settings = get_logging_settings()
    handlers = [logging.StreamHandler(sys.stderr)]
    log_file = settings.get("file")
    if log_file:
        log_dir = os.path.dirname(log_file)
        if log_dir:
            os.makedirs(log_dir, exist_ok=True)
        handlers.append(logging.FileHandler(log_file))

    logging.basicConfig(
        level=(level or settings.get("level") or "INFO").upper(),
        format=settings.get("format") or DEFAULT_LOG_FORMAT,
        handlers=handlers,
        force=True,
    )
