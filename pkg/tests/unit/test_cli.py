from pathlib import Path
from unittest.mock import patch

from typer.testing import CliRunner

from landaures import __version__
from landaures.cli import app
from landaures.config import apply_thread_limit
from landaures.models import RunRecord
from landaures.utils.artifacts import read_manifest

runner = CliRunner()


def test_version() -> None:
    result = runner.invoke(app, ["version"])
    assert result.exit_code == 0
    assert f"landaures v{__version__}" in result.stdout


def test_verbose_flag() -> None:
    result = runner.invoke(app, ["--verbose", "version"])
    assert result.exit_code == 0
    assert "Verbose output enabled" in result.stdout


def test_landau_levels_command(tmp_path: Path) -> None:
    out = tmp_path / "levels"
    result = runner.invoke(
        app, ["landau-levels", "--b", "1", "--qmax", "2", "--out", str(out)]
    )

    assert result.exit_code == 0, result.stdout
    assert "All checks passed" in result.stdout
    assert (out / "landau_levels.csv").exists()
    assert (out / "run.json").exists()
    assert read_manifest(out).config["qmax"] == 2


def test_toeplitz_spectrum_command(tmp_path: Path) -> None:
    out = tmp_path / "disk"
    args = ["toeplitz-spectrum", "--q", "0", "--b", "2", "--radius", "1"]
    result = runner.invoke(app, [*args, "--out", str(out)])

    assert result.exit_code == 0, result.stdout
    assert (out / "toeplitz_spectrum.csv").exists()
    assert (out / "counting_law.csv").exists()


def test_charval_selftest_command(tmp_path: Path) -> None:
    config = tmp_path / "selftest.toml"
    config.write_text(
        "[experiment]\nspectrum = [0.5, 0.25, 0.125]\ngrid_angular = 16\n"
    )
    out = tmp_path / "selftest"
    result = runner.invoke(
        app,
        ["charval-selftest", "--config", str(config), "--seed", "7", "--out", str(out)],
    )

    assert result.exit_code == 0, result.stdout
    manifest = read_manifest(out)
    assert manifest.config["seed"] == 7
    assert manifest.config["spectrum"] == [0.5, 0.25, 0.125]


def test_missing_config_file_exits(tmp_path: Path) -> None:
    result = runner.invoke(
        app, ["landau-levels", "--config", str(tmp_path / "missing.toml")]
    )
    assert result.exit_code == 1
    assert "Error:" in result.stdout
    assert "ConfigError" in result.stdout


def test_invalid_annulus_exits(tmp_path: Path) -> None:
    result = runner.invoke(
        app,
        ["resonance-scan", "--k-min", "0.3", "--k-max", "0.1", "--out", str(tmp_path)],
    )
    assert result.exit_code == 1
    assert "ConfigError" in result.stdout


def test_compare_identical_runs(tmp_path: Path) -> None:
    for name in ("a", "b"):
        result = runner.invoke(
            app, ["landau-levels", "--qmax", "1", "--out", str(tmp_path / name)]
        )
        assert result.exit_code == 0

    result = runner.invoke(app, ["compare", str(tmp_path / "a"), str(tmp_path / "b")])
    assert result.exit_code == 0
    assert "No differences" in result.stdout


def test_compare_changed_runs(tmp_path: Path) -> None:
    runner.invoke(app, ["landau-levels", "--b", "1", "--out", str(tmp_path / "a")])
    runner.invoke(app, ["landau-levels", "--b", "2", "--out", str(tmp_path / "b")])

    result = runner.invoke(app, ["compare", str(tmp_path / "a"), str(tmp_path / "b")])
    assert result.exit_code == 0
    assert "landau_levels" in result.stdout
    assert "changed" in result.stdout


def test_compare_different_kinds_exits(tmp_path: Path) -> None:
    runner.invoke(app, ["landau-levels", "--out", str(tmp_path / "levels")])
    runner.invoke(app, ["green-check", "--out", str(tmp_path / "green")])

    result = runner.invoke(
        app, ["compare", str(tmp_path / "levels"), str(tmp_path / "green")]
    )
    assert result.exit_code == 1
    assert "SchemaMismatchError" in result.stdout


def test_compare_missing_manifest_exits(tmp_path: Path) -> None:
    (tmp_path / "empty").mkdir()
    result = runner.invoke(
        app, ["compare", str(tmp_path / "empty"), str(tmp_path / "empty")]
    )
    assert result.exit_code == 1
    assert "Error:" in result.stdout


def test_flags_merge_into_config_file(tmp_path: Path) -> None:
    config = tmp_path / "scan.toml"
    config.write_text(
        "[experiment]\n"
        "gamma = 0.5\n\n"
        "[experiment.obstacle]\n"
        'shape = "ellipsoid"\n'
        "semi_axes = [1.0, 0.8, 0.6]\n"
        "refinement = 1\n"
    )
    record = RunRecord(
        experiment="resonance-scan",
        config={},
        input_hash="sha256:abc",
        landaures_version=__version__,
        wall_time_s=0.0,
        passed=True,
    )
    args = ["resonance-scan", "--config", str(config), "--bc", "robin"]
    with patch("landaures.experiments.run", return_value=record) as run, patch(
        "landaures.cli.apply_thread_limit", wraps=apply_thread_limit
    ) as limit:
        result = runner.invoke(app, [*args, "--radius", "2", "--threads", "2"])

    assert result.exit_code == 0, result.stdout
    resolved = run.call_args.args[0]
    assert resolved.boundary_condition == "robin"
    assert resolved.gamma == 0.5
    assert resolved.obstacle.shape == "ellipsoid"
    assert resolved.obstacle.refinement == 1
    assert resolved.obstacle.radius == 2.0
    limit.assert_called_once_with(2)
