#!/usr/bin/env python3
# -*- coding: utf-8 -*-

"""
Parameter checkpoints: `<name>.json` manifest plus `<name>.bin`
little-endian float32 blob.
"""

from pathlib import Path
from typing import Any, Dict, Optional, Tuple, Union

import numpy as np

from backend.base.custom_exceptions import CheckpointError
from backend.base.helpers import read_json, write_json
from backend.base.logging import LOGGER
from backend.features.nn.params import ParamStore

BLOB_DTYPE = "<f4"
FORMAT_VERSION = 1


def _paths(path: Union[str, Path]) -> Tuple[Path, Path]:
    path = Path(path)
    if path.suffix in (".json", ".bin"):
        path = path.with_suffix("")
    return path.with_suffix(".json"), path.with_suffix(".bin")


def save_checkpoint(
    params: ParamStore,
    path: Union[str, Path],
    config: Optional[Dict[str, Any]] = None
) -> Path:
    """Write the parameters and the model config.

    Args:
        params (ParamStore): The parameters.
        path (Union[str, Path]): Checkpoint path without suffix.
        config (Optional[Dict[str, Any]], optional): Model settings needed to
        rebuild the network.
            Defaults to None.

    Returns:
        Path: The manifest file.
    """
    manifest_path, blob_path = _paths(path)
    manifest_path.parent.mkdir(parents=True, exist_ok=True)

    entries = []
    offset = 0
    chunks = []
    for name in params.names():
        value = params[name]
        entries.append({"name": name, "shape": list(value.shape), "offset": offset})
        offset += int(value.size)
        chunks.append(value.reshape(-1).astype(BLOB_DTYPE))

    blob = np.concatenate(chunks) if chunks else np.zeros(0, dtype=BLOB_DTYPE)
    with open(blob_path, "wb") as f:
        f.write(blob.astype(BLOB_DTYPE).tobytes())

    write_json(manifest_path, {
        "format": FORMAT_VERSION,
        "dtype": BLOB_DTYPE,
        "seed": params.seed,
        "count": offset,
        "params": entries,
        "config": config or {}
    })
    LOGGER.info(f"Saved checkpoint with {len(entries)} tensors to {manifest_path}")
    return manifest_path


def load_checkpoint(path: Union[str, Path]) -> Tuple[ParamStore, Dict[str, Any]]:
    """Read a checkpoint written by `save_checkpoint`.

    Raises:
        CheckpointError: Files are missing or inconsistent.

    Returns:
        Tuple[ParamStore, Dict[str, Any]]: The parameters and the model config.
    """
    manifest_path, blob_path = _paths(path)
    if not manifest_path.is_file() or not blob_path.is_file():
        raise CheckpointError(f"Checkpoint {manifest_path.with_suffix('')} not found. Run train first")

    try:
        manifest = read_json(manifest_path)
        entries = manifest["params"]
        count = int(manifest["count"])
    except (ValueError, KeyError, TypeError) as e:
        raise CheckpointError(f"Checkpoint manifest {manifest_path} is malformed: {e}")

    blob = np.fromfile(blob_path, dtype=BLOB_DTYPE)
    if blob.size != count:
        raise CheckpointError(
            f"Checkpoint blob {blob_path} holds {blob.size} values, manifest says {count}"
        )

    params = ParamStore(int(manifest.get("seed", 0)))
    for entry in entries:
        shape = tuple(int(s) for s in entry["shape"])
        size = int(np.prod(shape)) if shape else 1
        start = int(entry["offset"])
        if start + size > count:
            raise CheckpointError(f"Checkpoint tensor {entry['name']} runs past the end of {blob_path}")
        params[entry["name"]] = blob[start:start + size].astype(float).reshape(shape)

    LOGGER.debug(f"Loaded checkpoint {manifest_path} ({len(entries)} tensors)")
    return params, dict(manifest.get("config", {}))
