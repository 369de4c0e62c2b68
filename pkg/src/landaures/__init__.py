"""
landaures: resonances of 3D magnetic Schrödinger operators near Landau levels.
"""

from __future__ import annotations

from importlib.metadata import PackageNotFoundError, version


def _resolve_version() -> str:
    for dist_name in ("landaures",):
        try:
            return version(dist_name)
        except PackageNotFoundError:
            continue
    return "0.0.0"


__version__ = _resolve_version()
