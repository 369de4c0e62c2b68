import typer
from pathlib import Path
from typing import Any, Dict, Optional
from rich.console import Console
from rich.table import Table

from .config import apply_thread_limit, resolve_experiment_config
from .exceptions import LandauresError
from .models import RunRecord

app = typer.Typer(
    help=(
        "landaures: numerical experiments on resonances of magnetic "
        "Schrödinger operators near Landau levels.\n\n"
        "Typical workflow:\n"
        "  landaures landau-levels --b 1 --qmax 3\n"
        "  landaures toeplitz-spectrum --q 0 --b 2 --radius 1\n"
        "  landaures charval-selftest --seed 7\n"
        "  landaures compare runs/a runs/b\n"
    )
)

console = Console()

ConfigOption = typer.Option(
    None, "--config", "-c", help="TOML experiment file (command-line flags win)"
)
OutOption = typer.Option(None, "--out", "-o", help="Output directory for artifacts")
ThreadsOption = typer.Option(
    None, "--threads", help="Thread cap for BLAS and row-parallel assembly"
)
SeedOption = typer.Option(None, "--seed", help="Seed for randomized constructions")


@app.callback()
def callback(
    verbose: bool = typer.Option(
        False, "--verbose", "-v", help="Enable verbose logging"
    ),
) -> None:
    """Global CLI options."""
    import logging

    import structlog

    level = logging.DEBUG if verbose else logging.INFO
    structlog.configure(wrapper_class=structlog.make_filtering_bound_logger(level))
    if verbose:
        logging.basicConfig(level=logging.DEBUG, force=True)
        console.print("[dim]Verbose output enabled[/dim]")


def _print_record(record: RunRecord, out: str) -> None:
    table = Table(title=f"{record.experiment} ({record.input_hash[:19]})")
    table.add_column("Artifact", style="cyan", no_wrap=True)
    table.add_column("Rows", style="yellow")
    table.add_column("SHA-256", style="dim")
    for entry in record.outputs:
        rows = "" if entry.rows is None else str(entry.rows)
        table.add_row(entry.path, rows, entry.sha256[:23])
    console.print(table)
    elapsed = f"{record.wall_time_s:.2f}s"
    console.print(f"Artifacts written to [bold]{out}[/bold] ({elapsed})")
    if record.passed:
        console.print("[green]All checks passed[/green]")
        return
    for failure in record.failures:
        console.print(f"[bold red]FAIL[/bold red] {failure}")


def _run_experiment(
    kind: str,
    config_path: Optional[Path],
    overrides: Dict[str, Any],
) -> None:
    from .experiments import run

    try:
        config = resolve_experiment_config(kind, config_path, overrides)
        with apply_thread_limit(config.threads):
            record = run(config)
    except LandauresError as e:
        console.print(f"[bold red]Error:[/bold red] {type(e).__name__}: {e}")
        raise typer.Exit(1)
    _print_record(record, config.out)
    if not record.passed:
        raise typer.Exit(1)


def _obstacle(
    radius: Optional[float], mesh: Optional[Path], refinement: Optional[int]
) -> Optional[Dict[str, Any]]:
    if radius is None and mesh is None and refinement is None:
        return None
    spec: Dict[str, Any] = {}
    if mesh is not None:
        spec.update(shape="mesh", mesh_path=str(mesh))
    if radius is not None:
        spec["radius"] = radius
    if refinement is not None:
        spec["refinement"] = refinement
    return spec


@app.command(name="landau-levels")
def landau_levels_cmd(
    b: Optional[float] = typer.Option(None, "--b", help="Field strength"),
    qmax: Optional[int] = typer.Option(None, "--qmax", help="Highest level index"),
    config: Optional[Path] = ConfigOption,
    out: Optional[str] = OutOption,
    threads: Optional[int] = ThreadsOption,
    seed: Optional[int] = SeedOption,
) -> None:
    """
    Tabulate the Landau levels (2q+1)b and the projection kernel diagonal.

    Examples:
      landaures landau-levels --b 1 --qmax 3
    """
    _run_experiment(
        "landau-levels",
        config,
        {"b": b, "qmax": qmax, "out": out, "threads": threads, "seed": seed},
    )


@app.command(name="toeplitz-spectrum")
def toeplitz_spectrum_cmd(
    q: Optional[int] = typer.Option(None, "--q", help="Landau level index"),
    b: Optional[float] = typer.Option(None, "--b", help="Field strength"),
    radius: Optional[float] = typer.Option(
        None, "--radius", help="Disk radius, centered at the gauge center"
    ),
    n_modes: Optional[int] = typer.Option(None, "--n-modes", help="Angular modes"),
    config: Optional[Path] = ConfigOption,
    out: Optional[str] = OutOption,
    threads: Optional[int] = ThreadsOption,
    seed: Optional[int] = SeedOption,
) -> None:
    """
    Eigenvalues of the Landau-level Toeplitz compression of a region.

    Examples:
      landaures toeplitz-spectrum --q 0 --b 2 --radius 1
    """
    region = {"kind": "disk", "radius": radius} if radius is not None else None
    _run_experiment(
        "toeplitz-spectrum",
        config,
        {
            "q": q,
            "b": b,
            "region": region,
            "n_modes": n_modes,
            "out": out,
            "threads": threads,
            "seed": seed,
        },
    )


@app.command(name="green-check")
def green_check_cmd(
    b: Optional[float] = typer.Option(None, "--b", help="Field strength"),
    config: Optional[Path] = ConfigOption,
    out: Optional[str] = OutOption,
    threads: Optional[int] = ThreadsOption,
    seed: Optional[int] = SeedOption,
) -> None:
    """Green function near the diagonal, classical limit and quadrature doubling."""
    _run_experiment(
        "green-check",
        config,
        {"b": b, "out": out, "threads": threads, "seed": seed},
    )


@app.command(name="bem-validate")
def bem_validate_cmd(
    b: Optional[float] = typer.Option(None, "--b", help="Field strength"),
    radius: Optional[float] = typer.Option(None, "--radius", help="Sphere radius"),
    mesh: Optional[Path] = typer.Option(None, "--mesh", help="Triangle mesh file"),
    refinement: Optional[int] = typer.Option(
        None, "--refinement", help="Icosphere refinement level"
    ),
    config: Optional[Path] = ConfigOption,
    out: Optional[str] = OutOption,
    threads: Optional[int] = ThreadsOption,
    seed: Optional[int] = SeedOption,
) -> None:
    """
    Boundary operators on an obstacle with classical oracles for small b.

    Examples:
      landaures bem-validate --b 1e-8 --refinement 3
    """
    _run_experiment(
        "bem-validate",
        config,
        {
            "b": b,
            "obstacle": _obstacle(radius, mesh, refinement),
            "out": out,
            "threads": threads,
            "seed": seed,
        },
    )


@app.command(name="tq-spectrum")
def tq_spectrum_cmd(
    q: Optional[int] = typer.Option(None, "--q", help="Landau level index"),
    b: Optional[float] = typer.Option(None, "--b", help="Field strength"),
    boundary_condition: Optional[str] = typer.Option(
        None, "--bc", help="dirichlet, neumann or robin"
    ),
    gamma: Optional[float] = typer.Option(None, "--gamma", help="Robin parameter"),
    radius: Optional[float] = typer.Option(None, "--radius", help="Sphere radius"),
    mesh: Optional[Path] = typer.Option(None, "--mesh", help="Triangle mesh file"),
    refinement: Optional[int] = typer.Option(None, "--refinement"),
    n_modes: Optional[int] = typer.Option(None, "--n-modes", help="Angular modes"),
    j_max: Optional[int] = typer.Option(None, "--j-max", help="Level cutoff"),
    config: Optional[Path] = ConfigOption,
    out: Optional[str] = OutOption,
    threads: Optional[int] = ThreadsOption,
    seed: Optional[int] = SeedOption,
) -> None:
    """Spectrum of T_q for an obstacle, with disk oracles and A_q(0) consistency."""
    _run_experiment(
        "tq-spectrum",
        config,
        {
            "q": q,
            "b": b,
            "boundary_condition": boundary_condition,
            "gamma": gamma,
            "obstacle": _obstacle(radius, mesh, refinement),
            "n_modes": n_modes,
            "j_max": j_max,
            "out": out,
            "threads": threads,
            "seed": seed,
        },
    )


@app.command(name="resonance-scan")
def resonance_scan_cmd(
    q: Optional[int] = typer.Option(None, "--q", help="Landau level index"),
    b: Optional[float] = typer.Option(None, "--b", help="Field strength"),
    boundary_condition: Optional[str] = typer.Option(
        None, "--bc", help="dirichlet, neumann or robin"
    ),
    gamma: Optional[float] = typer.Option(None, "--gamma", help="Robin parameter"),
    radius: Optional[float] = typer.Option(None, "--radius", help="Sphere radius"),
    mesh: Optional[Path] = typer.Option(None, "--mesh", help="Triangle mesh file"),
    refinement: Optional[int] = typer.Option(None, "--refinement"),
    n_modes: Optional[int] = typer.Option(None, "--n-modes", help="Angular modes"),
    j_max: Optional[int] = typer.Option(None, "--j-max", help="Level cutoff"),
    k_min: Optional[float] = typer.Option(None, "--k-min", help="Inner |k|/sqrt(b)"),
    k_max: Optional[float] = typer.Option(None, "--k-max", help="Outer |k|/sqrt(b)"),
    config: Optional[Path] = ConfigOption,
    out: Optional[str] = OutOption,
    threads: Optional[int] = ThreadsOption,
    seed: Optional[int] = SeedOption,
) -> None:
    """
    Characteristic values of the Birman-Schwinger family near a Landau level.

    Examples:
      landaures resonance-scan --b 1 --q 0 --k-min 0.05 --k-max 0.2
      landaures resonance-scan --bc neumann --config scan.toml
    """
    _run_experiment(
        "resonance-scan",
        config,
        {
            "q": q,
            "b": b,
            "boundary_condition": boundary_condition,
            "gamma": gamma,
            "obstacle": _obstacle(radius, mesh, refinement),
            "n_modes": n_modes,
            "j_max": j_max,
            "k_min": k_min,
            "k_max": k_max,
            "out": out,
            "threads": threads,
            "seed": seed,
        },
    )


@app.command(name="charval-selftest")
def charval_selftest_cmd(
    scale: Optional[float] = typer.Option(
        None, "--scale", help="Norm of the synthetic perturbation"
    ),
    config: Optional[Path] = ConfigOption,
    out: Optional[str] = OutOption,
    threads: Optional[int] = ThreadsOption,
    seed: Optional[int] = SeedOption,
) -> None:
    """
    Planted synthetic families: recall, multiplicities and counting transfer.

    Examples:
      landaures charval-selftest --seed 7
    """
    _run_experiment(
        "charval-selftest",
        config,
        {
            "perturbation_scale": scale,
            "out": out,
            "threads": threads,
            "seed": seed,
        },
    )


@app.command(name="compare")
def compare_cmd(
    path_a: Path = typer.Argument(..., help="Baseline run directory"),
    path_b: Path = typer.Argument(..., help="Comparison run directory"),
    tolerance: float = typer.Option(
        1e-10, "--tolerance", help="Absolute tolerance used to flag artifacts"
    ),
) -> None:
    """
    Per-artifact numeric diff of two runs.

    Examples:
      landaures compare runs/baseline runs/refined
    """
    from .utils.compare import compare_runs

    try:
        diff = compare_runs(path_a, path_b, tolerance)
    except LandauresError as e:
        console.print(f"[bold red]Error:[/bold red] {type(e).__name__}: {e}")
        raise typer.Exit(1)

    if not diff.has_changes:
        console.print("[green]No differences[/green]")
        return
    table = Table(title=f"{diff.experiment}: {path_a} vs {path_b}")
    table.add_column("Artifact", style="cyan", no_wrap=True)
    table.add_column("Change", style="magenta")
    table.add_column("Max abs", style="yellow")
    table.add_column("Max rel", style="yellow")
    table.add_column("Within tol", style="dim")
    for a in diff.artifacts:
        table.add_row(
            a.name,
            a.change_type,
            "" if a.max_abs_diff is None else f"{a.max_abs_diff:.3e}",
            "" if a.max_rel_diff is None else f"{a.max_rel_diff:.3e}",
            "yes" if a.within_tolerance else "no",
        )
    console.print(table)


@app.command(name="version")
def version_cmd() -> None:
    """
    Prints the landaures version.
    """
    from landaures import __version__

    console.print(f"landaures v{__version__}")
