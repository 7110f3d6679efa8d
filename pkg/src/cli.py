"""Command line interface for Bayesian line narrowing."""
import logging
import sys
from pathlib import Path
from typing import Any, Dict, Optional

import click
import numpy as np
import structlog
from rich.console import Console
from rich.progress import Progress, SpinnerColumn, TextColumn
from rich.table import Table

from .artifacts import PeakTable, write_json
from .config import RunConfig, config
from .exceptions import ConfigError, IngestionError, LineNarrowingError, PipelineStageError
from .ingest import ingest, write_spectrum
from .models import Family, LineShapeParams, NoiseModel, PeakSet, WavenumberGrid
from .pipeline import run_pipeline, run_sbc_command
from .sbc import SbcConfig, draw_replicate
from .spectrum import add_noise, estimate_noise_sd, synthesize

console = Console()
logger = structlog.get_logger(__name__)

EXIT_CONFIG = 2
EXIT_INGESTION = 3
EXIT_NUMERIC = 4


def setup_logging():
    """Setup structured logging."""
    logging.basicConfig(
        level=getattr(logging, config.log_level),
        filename=config.log_file,
        format="%(message)s",
    )
    structlog.configure(
        processors=[
            structlog.stdlib.filter_by_level,
            structlog.stdlib.add_logger_name,
            structlog.stdlib.add_log_level,
            structlog.stdlib.PositionalArgumentsFormatter(),
            structlog.processors.TimeStamper(fmt="iso"),
            structlog.processors.StackInfoRenderer(),
            structlog.processors.format_exc_info,
            structlog.processors.UnicodeDecoder(),
            structlog.processors.JSONRenderer()
        ],
        context_class=dict,
        logger_factory=structlog.stdlib.LoggerFactory(),
        wrapper_class=structlog.stdlib.BoundLogger,
        cache_logger_on_first_use=True,
    )


def exit_code(error: Exception) -> int:
    """Map an exception to the documented process exit code."""
    if isinstance(error, PipelineStageError):
        return exit_code(error.cause)
    if isinstance(error, ConfigError):
        return EXIT_CONFIG
    if isinstance(error, IngestionError):
        return EXIT_INGESTION
    return EXIT_NUMERIC


def fail(action: str, error: Exception):
    console.print(f"❌ {action} failed: {error}", style="bold red")
    logger.error(f"{action} failed", error=str(error), error_type=type(error).__name__)
    sys.exit(exit_code(error))


def load_run_config(ctx: click.Context, overrides: Dict[str, Any]) -> RunConfig:
    return RunConfig.load(config_file=ctx.obj.get("config_file"), overrides=overrides)


def show_peak_table(table: PeakTable):
    peaks = Table(title="Peak Table")
    peaks.add_column("Mode", style="cyan")
    peaks.add_column("95% Interval", style="blue")
    peaks.add_column("Relative Mass", style="magenta")
    for row in table.peaks:
        peaks.add_row(f"{row.mode:.2f}", f"[{row.lower:.2f}, {row.upper:.2f}]", f"{row.relative_mass:.3f}")
    console.print(peaks)

    summary = Table(title="Global Posterior")
    summary.add_column("Quantity", style="cyan")
    summary.add_column("Value", style="magenta")
    summary.add_row("Modal N", str(table.modal_count))
    for name, stats in table.line_shape.items():
        summary.add_row(name, f"{stats['mean']:.3f} [{stats['q025']:.3f}, {stats['q975']:.3f}]")
    console.print(summary)


@click.group()
@click.option('--debug', is_flag=True, help='Enable debug logging')
@click.option('--config-file', help='Configuration file path')
@click.pass_context
def cli(ctx: click.Context, debug: bool, config_file: Optional[str]):
    """Line Narrowing - Bayesian peak location inference for spectra."""
    if debug:
        config.log_level = "DEBUG"

    setup_logging()
    ctx.ensure_object(dict)
    ctx.obj["config_file"] = config_file


@cli.command()
@click.argument('input_path', required=False)
@click.option('--format', 'input_format', type=click.Choice(['text', 'rruff']), help='Input file format')
@click.option('--family', type=click.Choice([f.value for f in Family]), help='Line shape family')
@click.option('--particles', 'j_particles', type=int, help='Number of SMC particles')
@click.option('--seed', type=int, help='Random seed')
@click.option('--noise-sd', help="Noise standard deviation or 'estimate'")
@click.option('--length-scale', type=float, help='GP length scale in wavenumbers')
@click.option('--peak-samples', 'n_peak_samples', type=int, help='Number of peak posterior draws')
@click.option('--output-dir', help='Artifact directory')
@click.option('--threads', type=int, help='Concurrent particle evaluations')
@click.option('--strict', is_flag=True, help='Fail with exit code 4 when the LGCP optimizer does not converge')
@click.pass_context
def narrow(ctx: click.Context, input_path: Optional[str], **options):
    """Run the full pipeline on a spectrum file."""
    # an absent flag must not override the config file
    options["strict"] = options["strict"] or None
    try:
        run_config = load_run_config(ctx, {"input_path": input_path, **options})
        with Progress(
            SpinnerColumn(),
            TextColumn("[progress.description]{task.description}"),
            console=console
        ) as progress:
            progress.add_task(f"Narrowing {run_config.input_path}...", total=None)
            result = run_pipeline(run_config)

        show_peak_table(result.table)
        console.print(f"✅ Artifacts written to {run_config.output_dir}", style="bold green")
        if not result.fit.converged:
            console.print("⚠️  LGCP optimizer did not converge; see lgcp_fit.json", style="bold yellow")

    except LineNarrowingError as e:
        fail("Narrowing", e)


@cli.command()
@click.argument('output', type=click.Path(dir_okay=False))
@click.option('--k', 'k', default=512, show_default=True, help='Number of grid points')
@click.option('--h', 'h', default=1.0, show_default=True, help='Grid spacing')
@click.option('--start', default=0.0, show_default=True, help='First wavenumber')
@click.option('--gamma', type=float, help='Lorentz half width; drawn from the prior when omitted')
@click.option('--sigma', type=float, help='Gaussian width (Voigt)')
@click.option('--peaks', 'peak_spec', help="Peaks as 'location:amplitude,...'; drawn from a GP when omitted")
@click.option('--noise-sd', default=0.025, show_default=True, help='Noise standard deviation')
@click.option('--seed', default=0, show_default=True, help='Random seed')
def synth(
    output: str,
    k: int,
    h: float,
    start: float,
    gamma: Optional[float],
    sigma: Optional[float],
    peak_spec: Optional[str],
    noise_sd: float,
    seed: int,
):
    """Write a synthetic spectrum and its ground truth."""
    try:
        rng = np.random.default_rng(seed)
        if peak_spec:
            grid = WavenumberGrid(start=start, h=h, k=k)
            try:
                pairs = [item.split(":") for item in peak_spec.split(",") if item.strip()]
                peaks = PeakSet.from_unsorted([float(p[0]) for p in pairs], [float(p[1]) for p in pairs])
            except (IndexError, ValueError) as e:
                raise ConfigError(f"Cannot parse peaks {peak_spec!r}") from e
            if gamma is None:
                raise ConfigError("--gamma is required with --peaks")
            params = LineShapeParams.voigt(gamma, sigma) if sigma else LineShapeParams.lorentz(gamma)
            data = add_noise(synthesize(grid, peaks, params), NoiseModel(noise_sd), rng_seed=seed)
        else:
            truth, data = draw_replicate(SbcConfig(k=k, h=h, noise_sd=noise_sd), rng)
            peaks, params = truth.peaks, truth.params

        path = write_spectrum(data, output)
        truth_path = path.with_suffix(".truth.json")
        write_json(
            truth_path,
            {
                "locations": peaks.locations,
                "amplitudes": peaks.amplitudes,
                "family": params.family.value,
                "gamma": params.gamma,
                "sigma": params.sigma,
                "noise_sd": noise_sd,
                "seed": seed,
            },
        )
        console.print(f"✅ Wrote {len(peaks)} peaks to {path} and {truth_path}", style="bold green")

    except LineNarrowingError as e:
        fail("Synthesis", e)


@cli.command()
@click.option('--replicates', 'sbc_replicates', type=int, help='Number of replicates S')
@click.option('--particles', 'j_particles', type=int, help='SMC particles per replicate')
@click.option('--peak-samples', 'n_peak_samples', type=int, help='Peak posterior draws per replicate')
@click.option('--k', 'sbc_k', type=int, help='Grid points per replicate')
@click.option('--bins', 'n_bins', type=int, help='Rank histogram bins')
@click.option('--seed', type=int, help='Random seed')
@click.option('--output-dir', help='Artifact directory')
@click.option('--threads', type=int, help='Concurrent replicates')
@click.pass_context
def sbc(ctx: click.Context, **options):
    """Run simulation-based calibration of the peak count."""
    try:
        run_config = load_run_config(ctx, options)
        with Progress(
            SpinnerColumn(),
            TextColumn("[progress.description]{task.description}"),
            console=console
        ) as progress:
            progress.add_task(f"Running {run_config.sbc_replicates} replicates...", total=None)
            report = run_sbc_command(run_config)

        table = Table(title="Calibration Summary")
        table.add_column("Metric", style="cyan")
        table.add_column("Value", style="magenta")
        table.add_row("Replicates", str(report.n_replicates))
        table.add_row("Failed", str(len(report.failures)))
        table.add_row("Uniformity p-value", f"{report.uniformity_pvalue:.4f}")
        table.add_row("Bias", f"{report.bias:.3f}")
        table.add_row("RMSE", f"{report.rmse:.3f}")
        table.add_row("Coverage (95%)", f"{report.coverage95:.3f}")
        console.print(table)

    except LineNarrowingError as e:
        fail("Calibration", e)


@cli.command(name="ingest-check")
@click.argument('path', type=click.Path(dir_okay=False))
@click.option('--format', 'input_format', type=click.Choice(['text', 'rruff']), default='text', help='Input file format')
def ingest_check(path: str, input_format: str):
    """Validate a spectrum file without running the pipeline."""
    try:
        spectrum = ingest(Path(path), input_format)
        grid = spectrum.grid

        table = Table(title=f"Spectrum {path}")
        table.add_column("Property", style="cyan")
        table.add_column("Value", style="magenta")
        table.add_row("Points", str(grid.k))
        table.add_row("Spacing h", f"{grid.h:.6g}")
        table.add_row("Range", f"{grid.start:.6g} .. {grid.stop:.6g}")
        table.add_row("Resampled", "yes" if spectrum.metadata.get("resampled") else "no")
        try:
            table.add_row("Estimated noise sd", f"{estimate_noise_sd(spectrum):.4g}")
        except LineNarrowingError:
            table.add_row("Estimated noise sd", "n/a (noiseless)")
        console.print(table)
        console.print("✅ Spectrum is valid", style="bold green")

    except LineNarrowingError as e:
        fail("Ingestion check", e)
