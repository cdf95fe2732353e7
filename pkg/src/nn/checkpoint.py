"""Weight checkpoint files.

A checkpoint is a JSON document holding a format version, free-form metadata and a
list of named arrays. Array values are stored as base64-encoded little-endian float64
bytes so that saving and loading is bit-exact.
"""

import base64
import json
import logging
from pathlib import Path
from typing import Any, Dict, Tuple, Union

import numpy as np

from src.utils.config import CHECKPOINT_VERSION
from src.utils.exceptions import CheckpointError

logger = logging.getLogger(__name__)

_DTYPE = "<f8"


def encode_array(array: np.ndarray) -> Dict[str, Any]:
    """Return the JSON record of one array."""
    data = np.ascontiguousarray(array, dtype=_DTYPE)
    return {
        "shape": list(data.shape),
        "dtype": _DTYPE,
        "data": base64.b64encode(data.tobytes()).decode("ascii"),
    }


def decode_array(record: Dict[str, Any]) -> np.ndarray:
    """Rebuild an array from its JSON record."""
    if record.get("dtype") != _DTYPE:
        raise CheckpointError(f"Unsupported array dtype {record.get('dtype')!r}")
    raw = base64.b64decode(record["data"])
    array = np.frombuffer(raw, dtype=_DTYPE)
    shape = tuple(record["shape"])
    if array.size != int(np.prod(shape)):
        raise CheckpointError(f"Array of {array.size} values cannot have shape {shape}")
    return array.reshape(shape).astype(np.float64)


def save_checkpoint(
    path: Union[str, Path], arrays: Dict[str, np.ndarray], metadata: Dict[str, Any]
) -> Path:
    """Write named arrays and metadata to ``path``.

    Args:
        path (Union[str, Path]): Destination file.
        arrays (Dict[str, np.ndarray]): Arrays keyed by unique name, in order.
        metadata (Dict[str, Any]): JSON-serialisable description of the model.

    Returns:
        Path: The written path.
    """
    path = Path(path)
    document = {
        "version": CHECKPOINT_VERSION,
        "metadata": metadata,
        "arrays": [{"name": name, **encode_array(a)} for name, a in arrays.items()],
    }
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(document), encoding="utf-8")
    except OSError as e:
        raise CheckpointError(f"Cannot write checkpoint {path}: {e}") from e
    logger.debug("Saved %d arrays to %s", len(arrays), path)
    return path


def load_checkpoint(
    path: Union[str, Path]
) -> Tuple[Dict[str, np.ndarray], Dict[str, Any]]:
    """Read a checkpoint written by :func:`save_checkpoint`.

    Returns:
        Tuple[Dict[str, np.ndarray], Dict[str, Any]]: Arrays by name and metadata.

    Raises:
        CheckpointError: If the file is missing, unreadable or of another version.
    """
    path = Path(path)
    try:
        document = json.loads(path.read_text(encoding="utf-8"))
    except (OSError, ValueError) as e:
        raise CheckpointError(f"Cannot read checkpoint {path}: {e}") from e
    if document.get("version") != CHECKPOINT_VERSION:
        raise CheckpointError(
            f"Checkpoint {path} has version {document.get('version')}, "
            f"expected {CHECKPOINT_VERSION}"
        )
    arrays: Dict[str, np.ndarray] = {}
    try:
        for record in document["arrays"]:
            if record["name"] in arrays:
                raise CheckpointError(f"Duplicate array name {record['name']!r}")
            arrays[record["name"]] = decode_array(record)
    except CheckpointError:
        raise
    except (KeyError, TypeError, ValueError) as e:
        raise CheckpointError(f"Malformed checkpoint {path}: {e}") from e
    return arrays, document.get("metadata", {})
