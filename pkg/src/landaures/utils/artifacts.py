"""
Artifact writers: CSV tables, binary matrix containers with JSON headers and
run manifests. Output is byte-identical across reruns of the same inputs.
"""

from __future__ import annotations

import json
from pathlib import Path
from typing import Any, Dict, Sequence, Tuple, Union

import numpy as np
import pandas as pd
from numpy.typing import NDArray

from landaures.exceptions import SchemaMismatchError
from landaures.models import ArtifactEntry, RunRecord
from landaures.utils.integrity import compute_array_hash, compute_file_hash

FLOAT_FORMAT = "%.12e"
MANIFEST_NAME = "run.json"

PathLike = Union[str, Path]


def write_csv(
    rows: Sequence[Dict[str, Any]],
    path: PathLike,
    columns: Sequence[str],
    name: str = "",
) -> ArtifactEntry:
    """Write rows with a mandatory header and a fixed float format."""
    p = Path(path)
    p.parent.mkdir(parents=True, exist_ok=True)
    df = pd.DataFrame(list(rows), columns=list(columns))
    df.to_csv(
        p,
        index=False,
        encoding="utf-8",
        float_format=FLOAT_FORMAT,
        lineterminator="\n",
    )
    return ArtifactEntry(
        name=name or p.stem, path=p.name, sha256=compute_file_hash(p), rows=len(df)
    )


def read_csv(path: PathLike) -> pd.DataFrame:
    return pd.read_csv(path, encoding="utf-8")


def write_matrix(
    matrix: NDArray[Any], path: PathLike, header: Dict[str, Any]
) -> ArtifactEntry:
    """
    Write ``<path>.npy`` plus ``<path>.json``; the header gains shape, dtype
    and the payload hash.
    """
    base = Path(path).with_suffix("")
    base.parent.mkdir(parents=True, exist_ok=True)
    arr = np.ascontiguousarray(matrix)
    np.save(base.with_suffix(".npy"), arr, allow_pickle=False)
    full_header = dict(header)
    full_header.update(
        {
            "shape": list(arr.shape),
            "dtype": arr.dtype.str,
            "payload_sha256": compute_array_hash(arr),
        }
    )
    base.with_suffix(".json").write_text(
        json.dumps(full_header, sort_keys=True, indent=2) + "\n", encoding="utf-8"
    )
    return ArtifactEntry(
        name=base.name,
        path=base.with_suffix(".npy").name,
        sha256=compute_file_hash(base.with_suffix(".npy")),
        rows=int(arr.shape[0]) if arr.ndim else None,
    )


def read_matrix(path: PathLike) -> Tuple[NDArray[Any], Dict[str, Any]]:
    """Load a matrix container and check the payload against its header."""
    base = Path(path).with_suffix("")
    header = json.loads(base.with_suffix(".json").read_text(encoding="utf-8"))
    arr = np.load(base.with_suffix(".npy"), allow_pickle=False)
    if compute_array_hash(arr) != header.get("payload_sha256"):
        raise SchemaMismatchError(f"matrix payload {base} does not match its header")
    return arr, header


def write_manifest(record: RunRecord, out_dir: PathLike) -> Path:
    p = Path(out_dir) / MANIFEST_NAME
    p.parent.mkdir(parents=True, exist_ok=True)
    p.write_text(record.model_dump_json(indent=2) + "\n", encoding="utf-8")
    return p


def read_manifest(out_dir: PathLike) -> RunRecord:
    p = Path(out_dir)
    if p.is_dir():
        p = p / MANIFEST_NAME
    if not p.exists():
        raise SchemaMismatchError(f"no run manifest at {p}")
    return RunRecord.model_validate_json(p.read_text(encoding="utf-8"))
