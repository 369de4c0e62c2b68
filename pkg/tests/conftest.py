from __future__ import annotations

import os
from pathlib import Path
from typing import Generator

import pytest

from landaures.mesh import SurfaceMesh, icosphere
from landaures.models import FieldConfig


@pytest.fixture(autouse=True)
def _hermetic_env(
    tmp_path: Path, monkeypatch: pytest.MonkeyPatch
) -> Generator[None, None, None]:
    """
    Keep unit tests hermetic: no LANDAURES_* settings leak in from the
    developer's shell, and artifacts land in a temporary directory.
    """
    for name in list(os.environ):
        if name.startswith("LANDAURES_"):
            monkeypatch.delenv(name, raising=False)
    monkeypatch.setenv("LANDAURES_OUT_DIR", str(tmp_path / "runs"))
    yield


@pytest.fixture
def field() -> FieldConfig:
    return FieldConfig(b=1.0)


@pytest.fixture
def weak_field() -> FieldConfig:
    return FieldConfig(b=1e-8)


@pytest.fixture(scope="session")
def unit_sphere() -> SurfaceMesh:
    return icosphere(1)


@pytest.fixture(scope="session")
def fine_sphere() -> SurfaceMesh:
    return icosphere(2)
