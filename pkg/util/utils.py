import json
import logging
import os
from typing import Any, Dict, Iterable, List, Optional

import pandas as pd
from dotenv import dotenv_values

from config.config import LOG_FILE_PATH, LOG_LEVEL
from util.errors import ConfigError

# Configure logging
logging.basicConfig(
    level=getattr(logging, LOG_LEVEL.upper(), logging.INFO),
    format='%(asctime)s - %(name)s - %(levelname)s - %(message)s',
    handlers=[
        logging.FileHandler(LOG_FILE_PATH),
        logging.StreamHandler()
    ]
)

logger = logging.getLogger('ehsim')

JSON_SCHEMA_VERSION = 1
CSV_FLOAT_FORMAT = '%.12g'


def load_run_config(config_path: Optional[str] = None) -> Dict[str, str]:
    """
    Load a flat key=value run configuration file.

    Args:
        config_path: Path to the configuration file; None yields an empty config

    Returns:
        Dict of raw string values keyed by lower-cased key

    Raises:
        ConfigError: If the file does not exist or contains keys without values
    """
    if config_path is None:
        return {}

    if not os.path.exists(config_path):
        logger.error(f"Run config file not found at {config_path}")
        raise ConfigError(f"Run config file not found at {config_path}")

    try:
        raw = dotenv_values(config_path)
    except Exception as e:
        logger.error(f"Error reading run config {config_path}: {str(e)}")
        raise ConfigError(f"Error reading run config {config_path}: {str(e)}")

    values = {}
    for key, value in raw.items():
        if value is None:
            raise ConfigError(f"Key '{key}' in {config_path} has no value")
        values[key.strip().lower()] = value.strip()

    logger.info(f"Loaded run config {config_path} with keys {sorted(values)}")
    return values


def parse_float_list(text: str, key: str = 'value') -> List[float]:
    """
    Parse a comma separated list of numbers; an empty string gives an empty list.

    Args:
        text: Raw text such as "0.1,0.2,0.5"
        key: Name used in error messages

    Returns:
        List of floats in the given order

    Raises:
        ConfigError: If any item is not a number
    """
    items = [item.strip() for item in str(text).split(',') if item.strip()]
    try:
        return [float(item) for item in items]
    except ValueError as e:
        raise ConfigError(f"Could not parse '{key}' list {text!r}: {str(e)}")


def format_sig(value: float) -> str:
    """Format a number with 12 significant digits, the CSV contract."""
    return CSV_FLOAT_FORMAT % value


def to_json(payload: Dict[str, Any]) -> str:
    """Serialize a report with the schema version stamped in, keys sorted."""
    document = {'schema_version': JSON_SCHEMA_VERSION}
    document.update(payload)
    return json.dumps(document, sort_keys=True, indent=2, allow_nan=True)


def write_text(file_path: str, text: str) -> None:
    """Write text to a file, creating the parent directory."""
    directory = os.path.dirname(file_path)
    if directory:
        os.makedirs(directory, exist_ok=True)
    with open(file_path, 'w', encoding='utf-8', newline='\n') as handle:
        handle.write(text)
        if not text.endswith('\n'):
            handle.write('\n')


def write_csv(rows: Iterable[Dict[str, Any]], columns: List[str], file_path: str) -> pd.DataFrame:
    """
    Write rows to CSV with a pinned column order and number format.

    Args:
        rows: Row dictionaries; missing keys become empty cells
        columns: Column order of the output, also the header for empty input
        file_path: Destination path

    Returns:
        The DataFrame that was written
    """
    return write_frame(pd.DataFrame(list(rows), columns=columns), file_path)


def write_frame(df: pd.DataFrame, file_path: str) -> pd.DataFrame:
    """Write a DataFrame with the pinned CSV number format, creating the parent directory."""
    directory = os.path.dirname(file_path)
    if directory:
        os.makedirs(directory, exist_ok=True)
    try:
        df.to_csv(file_path, index=False, encoding='utf-8', float_format=CSV_FLOAT_FORMAT,
                  lineterminator='\n')
        logger.info(f"Wrote {len(df)} rows to {file_path}")
    except Exception as e:
        logger.error(f"Error writing CSV file {file_path}: {str(e)}")
        raise
    return df
