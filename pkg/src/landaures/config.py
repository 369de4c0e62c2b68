import os
import sys
from pathlib import Path
from typing import Any, Dict, Mapping, Optional, Union

import structlog
from pydantic import ValidationError
from threadpoolctl import threadpool_limits

from landaures.exceptions import ConfigError
from landaures.models import ExperimentConfig, QuadratureSpec

if sys.version_info >= (3, 11):
    import tomllib
else:  # pragma: no cover
    import tomli as tomllib

__all__ = [
    "get_threads",
    "get_out_dir",
    "get_green_nodes",
    "get_quadrature_spec",
    "apply_thread_limit",
    "load_config_file",
    "resolve_experiment_config",
]

logger = structlog.get_logger()

_THREAD_ENV_VARS = (
    "OMP_NUM_THREADS",
    "OPENBLAS_NUM_THREADS",
    "MKL_NUM_THREADS",
    "NUMEXPR_NUM_THREADS",
)


def get_threads() -> int:
    """Returns the configured worker thread count (default 1, deterministic)."""
    raw = os.environ.get("LANDAURES_THREADS", "1")
    try:
        value = int(raw)
    except ValueError as e:
        raise ConfigError(f"LANDAURES_THREADS must be an integer, got {raw!r}") from e
    return max(1, value)


def get_out_dir() -> str:
    """Returns the configured artifact directory."""
    return os.environ.get("LANDAURES_OUT_DIR", "runs")


def get_green_nodes() -> Optional[int]:
    """
    Optional override of the compact-leg node count of the Green quadrature.
    The tail leg uses two thirds of it.
    """
    raw = os.environ.get("LANDAURES_GREEN_NODES")
    if not raw:
        return None
    try:
        value = int(raw)
    except ValueError as e:
        raise ConfigError(
            f"LANDAURES_GREEN_NODES must be an integer, got {raw!r}"
        ) from e
    if value < 4:
        raise ConfigError("LANDAURES_GREEN_NODES must be at least 4")
    return value


def get_quadrature_spec() -> QuadratureSpec:
    nodes = get_green_nodes()
    if nodes is None:
        return QuadratureSpec()
    return QuadratureSpec(n_compact=nodes, n_tail=max(4, (2 * nodes) // 3))


def apply_thread_limit(threads: int) -> threadpool_limits:
    """
    Cap the BLAS/OpenMP pools already loaded into the process at ``threads``.

    The returned limiter restores the previous caps when used as a context
    manager. The environment variables are exported as well; they only reach
    pools loaded after this call.
    """
    for name in _THREAD_ENV_VARS:
        os.environ[name] = str(threads)
    limiter = threadpool_limits(limits=threads)
    logger.debug("thread_limit_applied", threads=threads)
    return limiter


def load_config_file(path: Union[str, Path]) -> Dict[str, Any]:
    """Read a TOML experiment file into a plain dictionary."""
    p = Path(path)
    if not p.exists():
        raise ConfigError(f"config file not found: {p}")
    try:
        with open(p, "rb") as fh:
            data = tomllib.load(fh)
    except tomllib.TOMLDecodeError as e:
        raise ConfigError(f"invalid TOML in {p}: {e}") from e
    # a single [experiment] table is accepted as well as top-level keys
    if "experiment" in data and isinstance(data["experiment"], dict):
        merged = dict(data["experiment"])
        merged.update({k: v for k, v in data.items() if k != "experiment"})
        data = merged
    return data


def _merge_tables(
    base: Mapping[str, Any], overrides: Mapping[str, Any]
) -> Dict[str, Any]:
    """Merge nested tables key by key. None values mean "not given"."""
    merged = dict(base)
    for key, value in overrides.items():
        if value is None:
            continue
        current = merged.get(key)
        if isinstance(value, Mapping) and isinstance(current, Mapping):
            merged[key] = _merge_tables(current, value)
        else:
            merged[key] = value
    return merged


def resolve_experiment_config(
    kind: str,
    config_path: Optional[Union[str, Path]] = None,
    overrides: Optional[Mapping[str, Any]] = None,
) -> ExperimentConfig:
    """
    Build an ExperimentConfig. Precedence: command-line overrides, then the
    config file, then environment defaults, then model defaults. Nested
    tables such as ``obstacle`` are merged per key.
    """
    values: Dict[str, Any] = {"threads": get_threads(), "out": get_out_dir()}
    if config_path is not None:
        values.update(load_config_file(config_path))
    values = _merge_tables(values, overrides or {})
    values["kind"] = kind
    try:
        return ExperimentConfig.model_validate(values)
    except ValidationError as e:
        raise ConfigError(f"invalid experiment configuration: {e}") from e
