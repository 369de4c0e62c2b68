"""
Run comparison utilities for regression baselines.

Compares the artifacts of two experiment runs by manifest, reporting the
numeric difference of every artifact that changed.
"""

from pathlib import Path
from typing import Dict, List, Optional, Tuple, Union

import numpy as np
import pandas as pd

from landaures.exceptions import SchemaMismatchError
from landaures.models import ArtifactDiff, ArtifactEntry, RunDiff
from landaures.utils.artifacts import read_csv, read_manifest, read_matrix
from landaures.utils.integrity import verify_file_integrity


def _numeric_diff(
    base: np.ndarray, comparison: np.ndarray
) -> Tuple[Optional[float], Optional[float]]:
    if base.shape != comparison.shape:
        return None, None
    if base.size == 0:
        return 0.0, 0.0
    delta = np.abs(base - comparison)
    scale = np.maximum(np.abs(base), np.abs(comparison))
    rel = np.divide(delta, scale, out=np.zeros_like(delta), where=scale > 0)
    return float(np.max(delta)), float(np.max(rel))


def _load_numeric(path: Path) -> np.ndarray:
    if path.suffix == ".npy":
        arr, _ = read_matrix(path)
        return np.asarray(arr)
    df = read_csv(path)
    numeric = df.select_dtypes(include="number")
    return numeric.to_numpy(dtype=np.float64)


def _columns(path: Path) -> List[str]:
    if path.suffix != ".csv":
        return []
    return list(pd.read_csv(path, nrows=0).columns)


def _verify_outputs(run_dir: Path, outputs: List[ArtifactEntry]) -> None:
    for entry in outputs:
        path = run_dir / entry.path
        if not path.exists() or not verify_file_integrity(path, entry.sha256):
            raise SchemaMismatchError(
                f"artifact {entry.name!r} in {run_dir} does not match its manifest"
            )


def compare_artifacts(
    base_dir: Path,
    base_outputs: List[ArtifactEntry],
    comparison_dir: Path,
    comparison_outputs: List[ArtifactEntry],
    tolerance: float,
) -> Tuple[List[ArtifactDiff], int, int, int]:
    """
    Compare the artifacts of two runs.

    Returns:
        Tuple of (artifact_diffs, added_count, removed_count, modified_count)
    """
    diffs: List[ArtifactDiff] = []
    added = 0
    removed = 0
    modified = 0

    base_map: Dict[str, ArtifactEntry] = {a.name: a for a in base_outputs}
    comparison_map: Dict[str, ArtifactEntry] = {a.name: a for a in comparison_outputs}

    for name in sorted(set(base_map) | set(comparison_map)):
        base_entry = base_map.get(name)
        comp_entry = comparison_map.get(name)

        if base_entry is None:
            diffs.append(ArtifactDiff(name=name, change_type="added"))
            added += 1
        elif comp_entry is None:
            diffs.append(ArtifactDiff(name=name, change_type="removed"))
            removed += 1
        elif base_entry.sha256 == comp_entry.sha256:
            continue
        else:
            base_path = base_dir / base_entry.path
            comp_path = comparison_dir / comp_entry.path
            if _columns(base_path) != _columns(comp_path):
                raise SchemaMismatchError(
                    f"artifact {name!r} has different columns in the two runs"
                )
            abs_diff, rel_diff = _numeric_diff(
                _load_numeric(base_path), _load_numeric(comp_path)
            )
            diffs.append(
                ArtifactDiff(
                    name=name,
                    change_type="changed",
                    max_abs_diff=abs_diff,
                    max_rel_diff=rel_diff,
                    within_tolerance=abs_diff is not None and abs_diff <= tolerance,
                )
            )
            modified += 1

    return diffs, added, removed, modified


def compare_runs(
    path_a: Union[str, Path],
    path_b: Union[str, Path],
    tolerance: float = 1e-10,
) -> RunDiff:
    """
    Per-artifact numeric diff of two run directories.

    Identical runs give an empty diff. Diff magnitudes are reported without
    a pass/fail verdict; ``within_tolerance`` only flags each artifact.

    Raises:
        SchemaMismatchError: the runs are of different experiment kinds, an
            artifact no longer matches the hash in its manifest, or an
            artifact changed its columns.
    """
    dir_a, dir_b = Path(path_a), Path(path_b)
    base = read_manifest(dir_a)
    comparison = read_manifest(dir_b)
    if base.experiment != comparison.experiment:
        raise SchemaMismatchError(
            f"cannot compare a {base.experiment} run with a "
            f"{comparison.experiment} run"
        )
    _verify_outputs(dir_a, base.outputs)
    _verify_outputs(dir_b, comparison.outputs)
    diffs, _, _, _ = compare_artifacts(
        dir_a, base.outputs, dir_b, comparison.outputs, tolerance
    )
    return RunDiff(experiment=base.experiment, tolerance=tolerance, artifacts=diffs)
