import os
from pathlib import Path
from typing import Any, Dict

import pytest
from threadpoolctl import threadpool_info

from landaures.config import (
    apply_thread_limit,
    get_green_nodes,
    get_out_dir,
    get_quadrature_spec,
    get_threads,
    load_config_file,
    resolve_experiment_config,
)
from landaures.exceptions import ConfigError
from landaures.models import QuadratureSpec


def test_thread_defaults(monkeypatch: pytest.MonkeyPatch) -> None:
    assert get_threads() == 1
    monkeypatch.setenv("LANDAURES_THREADS", "4")
    assert get_threads() == 4
    monkeypatch.setenv("LANDAURES_THREADS", "0")
    assert get_threads() == 1


def test_invalid_threads(monkeypatch: pytest.MonkeyPatch) -> None:
    monkeypatch.setenv("LANDAURES_THREADS", "many")
    with pytest.raises(ConfigError, match="LANDAURES_THREADS"):
        get_threads()


def test_out_dir(tmp_path: Path, monkeypatch: pytest.MonkeyPatch) -> None:
    assert get_out_dir() == str(tmp_path / "runs")
    monkeypatch.delenv("LANDAURES_OUT_DIR")
    assert get_out_dir() == "runs"


def test_green_nodes(monkeypatch: pytest.MonkeyPatch) -> None:
    assert get_green_nodes() is None
    assert get_quadrature_spec() == QuadratureSpec()

    monkeypatch.setenv("LANDAURES_GREEN_NODES", "30")
    assert get_green_nodes() == 30
    spec = get_quadrature_spec()
    assert spec.n_compact == 30
    assert spec.n_tail == 20


@pytest.mark.parametrize("raw", ["abc", "3"])
def test_invalid_green_nodes(raw: str, monkeypatch: pytest.MonkeyPatch) -> None:
    monkeypatch.setenv("LANDAURES_GREEN_NODES", raw)
    with pytest.raises(ConfigError):
        get_green_nodes()


def test_apply_thread_limit(monkeypatch: pytest.MonkeyPatch) -> None:
    for name in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
        monkeypatch.delenv(name, raising=False)
    monkeypatch.delenv("NUMEXPR_NUM_THREADS", raising=False)

    with apply_thread_limit(1):
        assert os.environ["OMP_NUM_THREADS"] == "1"
        assert os.environ["NUMEXPR_NUM_THREADS"] == "1"
        # pools numpy loaded at import are capped at runtime
        assert all(pool["num_threads"] == 1 for pool in threadpool_info())


def test_load_config_file_experiment_table(tmp_path: Path) -> None:
    path = tmp_path / "scan.toml"
    path.write_text(
        "seed = 9\n\n[experiment]\nb = 2.0\nboundary_condition = \"neumann\"\n"
    )

    data = load_config_file(path)
    assert data == {"b": 2.0, "boundary_condition": "neumann", "seed": 9}


def test_load_config_file_errors(tmp_path: Path) -> None:
    with pytest.raises(ConfigError, match="not found"):
        load_config_file(tmp_path / "missing.toml")

    broken = tmp_path / "broken.toml"
    broken.write_text("b = = 2\n")
    with pytest.raises(ConfigError, match="invalid TOML"):
        load_config_file(broken)


def test_resolve_precedence(tmp_path: Path, monkeypatch: pytest.MonkeyPatch) -> None:
    monkeypatch.setenv("LANDAURES_THREADS", "2")
    path = tmp_path / "levels.toml"
    path.write_text("b = 2.0\nqmax = 5\n")

    config = resolve_experiment_config(
        "landau-levels", path, {"b": 3.0, "qmax": None}
    )
    assert config.kind == "landau-levels"
    assert config.b == 3.0
    assert config.qmax == 5
    assert config.threads == 2
    assert config.out == str(tmp_path / "runs")


def test_file_overrides_environment(
    tmp_path: Path, monkeypatch: pytest.MonkeyPatch
) -> None:
    monkeypatch.setenv("LANDAURES_THREADS", "2")
    path = tmp_path / "threads.toml"
    path.write_text("threads = 6\n")

    assert resolve_experiment_config("green-check", path).threads == 6


def test_overrides_merge_into_nested_tables(tmp_path: Path) -> None:
    path = tmp_path / "scan.toml"
    path.write_text(
        "[experiment]\n"
        'boundary_condition = "neumann"\n'
        "gamma = 0.5\n\n"
        "[experiment.obstacle]\n"
        'shape = "ellipsoid"\n'
        "semi_axes = [1.0, 0.8, 0.6]\n"
        "refinement = 1\n"
    )

    config = resolve_experiment_config(
        "resonance-scan",
        path,
        {"boundary_condition": "robin", "obstacle": {"radius": 2.0}},
    )
    assert config.boundary_condition == "robin"
    assert config.gamma == 0.5
    assert config.obstacle.shape == "ellipsoid"
    assert config.obstacle.semi_axes == (1.0, 0.8, 0.6)
    assert config.obstacle.refinement == 1
    assert config.obstacle.radius == 2.0


def test_resolve_defaults() -> None:
    config = resolve_experiment_config("charval-selftest")
    assert config.spectrum == [2.0 ** (-j) for j in range(1, 13)]
    assert config.perturbation_scale == 1e-3
    assert config.k_min < config.k_max


@pytest.mark.parametrize(
    "overrides",
    [
        {"k_min": 0.3, "k_max": 0.1},
        {"b": -1.0},
        {"boundary_condition": "periodic"},
        {"obstacle": {"shape": "mesh"}},
    ],
)
def test_resolve_rejects_invalid(overrides: Dict[str, Any]) -> None:
    with pytest.raises(ConfigError, match="invalid experiment configuration"):
        resolve_experiment_config("resonance-scan", overrides=overrides)
