"""Utility modules."""

from hd_cbps.utils.config import load_config, save_config, get_default_config
from hd_cbps.utils.io import ingest_csv, write_dataset_csv, write_json
from hd_cbps.utils.logger import setup_logger

__all__ = [
    "load_config",
    "save_config",
    "get_default_config",
    "ingest_csv",
    "write_dataset_csv",
    "write_json",
    "setup_logger",
]
