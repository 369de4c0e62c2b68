"""
Integrity utilities for meshes, configurations and run artifacts.

Every hash is SHA256 over a canonical byte representation, prefixed with
'sha256:' so manifests stay self-describing.
"""

from __future__ import annotations

import hashlib
import json
from pathlib import Path
from typing import Any, Dict, Union

import numpy as np
from numpy.typing import ArrayLike


def compute_content_hash(content: Union[str, bytes]) -> str:
    """
    Compute SHA256 hash of a string or byte payload.

    Returns:
        SHA256 hash as hex string prefixed with 'sha256:'.
    """
    data = content.encode("utf-8") if isinstance(content, str) else content
    return f"sha256:{hashlib.sha256(data).hexdigest()}"


def canonical_json(payload: Dict[str, Any]) -> str:
    """Sorted keys, no extra whitespace."""
    return json.dumps(payload, sort_keys=True, separators=(",", ":"))


def compute_config_hash(config: Dict[str, Any]) -> str:
    """Hash of a configuration dictionary's canonical JSON representation."""
    return compute_content_hash(canonical_json(config))


def compute_array_hash(*arrays: ArrayLike) -> str:
    """
    Hash of one or more arrays: dtype, shape and little-endian C-order bytes.
    """
    digest = hashlib.sha256()
    for arr in arrays:
        a = np.ascontiguousarray(arr)
        a = a.astype(a.dtype.newbyteorder("<"), copy=False)
        digest.update(f"{a.dtype.str}{a.shape}".encode("utf-8"))
        digest.update(a.tobytes())
    return f"sha256:{digest.hexdigest()}"


def compute_file_hash(path: Union[str, Path]) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            digest.update(chunk)
    return f"sha256:{digest.hexdigest()}"


def verify_file_integrity(path: Union[str, Path], expected_hash: str) -> bool:
    """True if the file on disk still matches the recorded hash."""
    return compute_file_hash(path) == expected_hash
