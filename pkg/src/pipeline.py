"""End-to-end orchestration of the narrowing and calibration runs."""
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Sequence

import numpy as np
import structlog

from . import __version__
from .artifacts import (
    PeakTable,
    build_peak_table,
    write_counts,
    write_csv,
    write_json,
    write_lgcp_fit,
    write_location_histogram,
    write_particles,
    write_peak_table,
    write_trace,
)
from .config import RunConfig
from .exceptions import ConvergenceError, LineNarrowingError, PipelineStageError
from .fourier_lp import usable_band
from .ingest import ingest
from .lgcp import (
    CountVector,
    GpHyperParams,
    LgcpFit,
    PeakPosterior,
    fit_map,
    marginalize_counts,
    sample_peak_posterior,
)
from .models import Spectrum
from .sbc import SbcReplicate, SbcReport, SbcRunner, sbc_report
from .smc import SmcPosterior, run_smc
from .spectrum import estimate_noise_sd

logger = structlog.get_logger(__name__)

DEFAULT_LENGTH_SCALE_STEPS = 5.0
PEAK_SAMPLE_STREAM = 11


def manifest(run_config: RunConfig, **extra: Any) -> Dict[str, Any]:
    """Config echo, seed and software version; no timestamps so reruns match."""
    return {
        "software": "linenarrow",
        "version": __version__,
        "seed": run_config.seed,
        "config": run_config.to_dict(),
        **extra,
    }


@dataclass
class PipelineResult:
    spectrum: Spectrum
    noise_sd: float
    posterior: SmcPosterior
    counts: CountVector
    fit: LgcpFit
    peaks: PeakPosterior
    table: PeakTable
    artifacts: List[Path] = field(default_factory=list)


class PipelineRunner:
    """Ingest, sample, pool, fit and summarize one spectrum."""

    def __init__(self, run_config: RunConfig):
        run_config.validate(require_input=True)
        self.config = run_config
        self.output_dir = Path(run_config.output_dir)
        self.artifacts: List[Path] = []
        self.logger = logger.bind(component="pipeline", input=run_config.input_path)

    def _stage(self, name: str, func: Callable[[], Any]) -> Any:
        self.logger.info("Stage started", stage=name)
        start_time = time.time()
        try:
            result = func()
        except LineNarrowingError as e:
            self.logger.error("Stage failed", stage=name, error=str(e))
            self._write_failure(name, e)
            raise PipelineStageError(name, e) from e
        self.logger.info("Stage completed", stage=name, elapsed_time=time.time() - start_time)
        return result

    def _write_failure(self, stage: str, error: Exception) -> None:
        document = manifest(
            self.config,
            status="failed",
            failed_stage=stage,
            error_type=type(error).__name__,
            error=str(error),
            artifacts=[p.name for p in self.artifacts],
        )
        write_json(self.output_dir / "manifest.json", document)

    def _keep(self, *paths: Path) -> None:
        self.artifacts.extend(paths)

    def run(self) -> PipelineResult:
        start_time = time.time()
        config = self.config
        out = self.output_dir

        spectrum = self._stage("ingest", lambda: ingest(config.input_path, config.input_format))
        noise_sd = self._stage("noise", lambda: self._noise_sd(spectrum))
        band = self._check_band(spectrum, noise_sd)

        posterior = self._stage(
            "smc", lambda: run_smc(spectrum, config.priors(), config.smc_config(noise_sd))
        )
        self._keep(write_particles(out / "particles.csv", posterior), write_trace(out / "smc_trace.csv", posterior))

        counts = self._stage("counts", lambda: marginalize_counts(posterior, spectrum, config.c_scale))
        self._keep(write_counts(out / "counts.csv", spectrum.grid, counts))

        length_scale = config.length_scale or DEFAULT_LENGTH_SCALE_STEPS * spectrum.grid.h
        hypers = GpHyperParams(log_sigma_lambda=0.0, length_scale=length_scale)
        fit = self._stage("lgcp", lambda: self._fit_lgcp(counts, spectrum, hypers))
        self._keep(write_lgcp_fit(out / "lgcp_fit.json", fit))

        rng = np.random.default_rng([config.seed, PEAK_SAMPLE_STREAM])
        peaks = self._stage(
            "peaks",
            lambda: sample_peak_posterior(
                fit, config.n_peak_samples, rng, min_intensity=config.min_peak_intensity
            ),
        )
        self._keep(write_location_histogram(out / "location_histogram.csv", peaks, spectrum.grid))

        table = self._stage("peak_table", lambda: build_peak_table(peaks, spectrum.grid, posterior))
        self._keep(*write_peak_table(out, table))

        write_json(
            out / "manifest.json",
            manifest(
                config,
                status="completed",
                noise_sd=noise_sd,
                usable_band=band,
                converged=fit.converged,
                artifacts=[p.name for p in self.artifacts],
            ),
        )
        self.logger.info(
            "Pipeline completed",
            modal_count=table.modal_count,
            peaks=len(table),
            elapsed_time=time.time() - start_time,
        )
        return PipelineResult(
            spectrum=spectrum,
            noise_sd=noise_sd,
            posterior=posterior,
            counts=counts,
            fit=fit,
            peaks=peaks,
            table=table,
            artifacts=list(self.artifacts),
        )

    def _noise_sd(self, spectrum: Spectrum) -> float:
        if self.config.noise_sd == "estimate":
            return estimate_noise_sd(spectrum)
        return float(self.config.noise_sd)

    def _check_band(self, spectrum: Spectrum, noise_sd: float) -> int:
        """Warn when the M prior reaches past the bins that still carry signal."""
        band = usable_band(spectrum, noise_sd)
        if self.config.m_hi > band:
            self.logger.warning(
                "M prior extends beyond the usable Fourier band; widths are poorly identified",
                m_hi=self.config.m_hi,
                usable_band=band,
            )
        return band

    def _fit_lgcp(self, counts: CountVector, spectrum: Spectrum, hypers: GpHyperParams) -> LgcpFit:
        config = self.config
        fit = fit_map(
            counts, spectrum.grid, hypers, config.log_sigma_prior(), max_iter=config.lgcp_max_iter
        )
        if config.strict and not fit.converged:
            raise ConvergenceError(f"LGCP optimizer did not converge: {fit.message}")
        return fit


def run_pipeline(run_config: RunConfig) -> PipelineResult:
    """Run the full narrowing pipeline and write its artifacts."""
    return PipelineRunner(run_config).run()


def run_sbc_command(
    run_config: RunConfig, replicates: Optional[Sequence[SbcReplicate]] = None
) -> SbcReport:
    """
    Run a calibration study and write the rank histogram and summary.

    Pre-built replicates bypass simulation.
    """
    out = Path(run_config.output_dir)
    failures: List[Dict[str, Any]] = []
    if replicates is None:
        result = SbcRunner(run_config.sbc_config()).run()
        replicates, failures = result.replicates, result.failures

    report = sbc_report(list(replicates), run_config.n_bins, failures=failures)
    write_csv(
        out / "sbc_ranks.csv",
        report.histogram_rows(),
        ["bin_lower", "bin_upper", "count", "expected", "band_lower", "band_upper"],
    )
    write_json(out / "sbc_summary.json", report.to_dict())
    write_json(
        out / "manifest.json",
        manifest(run_config, status="completed", command="sbc", artifacts=["sbc_ranks.csv", "sbc_summary.json"]),
    )
    return report
