#!/usr/bin/env python3
# -*- coding: utf-8 -*-

import json
import sys
import zlib
from pathlib import Path
from typing import Any, List, Union


def check_min_python_version(major: int, minor: int) -> bool:
    """Check if the current Python version is at least the given version.

    Args:
        major (int): The major version to check.
        minor (int): The minor version to check.

    Returns:
        bool: True if the current Python version is at least the given version.
    """
    current_major, current_minor = sys.version_info[:2]
    if current_major > major:
        return True
    if current_major == major and current_minor >= minor:
        return True

    print(f"ERROR: Python {major}.{minor} or higher is required. "
          f"You are using Python {current_major}.{current_minor}.")
    return False


def ensure_dir_exists(path: Union[str, Path]) -> bool:
    """Ensure a directory exists.

    Args:
        path (Union[str, Path]): The directory path.

    Returns:
        bool: True if the directory exists or was created, False otherwise.
    """
    from backend.base.logging import LOGGER

    if isinstance(path, str):
        path = Path(path)

    try:
        path.mkdir(parents=True, exist_ok=True)
        LOGGER.debug(f"Directory created or already exists: {path}")
        return True
    except Exception as e:
        LOGGER.error(f"Error creating directory {path}: {e}")
        return False


def write_json(path: Union[str, Path], data: Any) -> None:
    """Write JSON with a fixed layout so equal data gives equal bytes.

    Args:
        path (Union[str, Path]): The target file.
        data (Any): JSON-serialisable data.
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        json.dump(data, f, indent=2, sort_keys=True, allow_nan=False)
        f.write("\n")


def read_json(path: Union[str, Path]) -> Any:
    """Read a JSON file.

    Args:
        path (Union[str, Path]): The file to read.

    Returns:
        Any: The decoded document.
    """
    with open(path, "r", encoding="utf-8") as f:
        return json.load(f)


def list_scenario_files(folder: Union[str, Path]) -> List[Path]:
    """List the scenario files of a dataset folder in a stable order.

    Args:
        folder (Union[str, Path]): The dataset folder.

    Returns:
        List[Path]: The scenario files sorted by name.
    """
    from backend.base.definitions import Constants

    folder = Path(folder)
    if not folder.is_dir():
        return []
    return sorted(
        p for p in folder.iterdir()
        if p.is_file() and p.suffix == Constants.SCENARIO_SUFFIX
    )


def stable_seed(seed: int, key: str) -> int:
    """Derive a seed for one item that does not depend on processing order.

    Args:
        seed (int): The run seed.
        key (str): The item key, e.g. a scenario id.

    Returns:
        int: A non-negative 32 bit seed.
    """
    return (zlib.crc32(key.encode("utf-8")) ^ (seed & 0xFFFFFFFF)) & 0xFFFFFFFF
