"""Peak tables and artifact writers."""
import csv
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Union

import numpy as np
import structlog
from scipy.signal import find_peaks

from .ingest import format_number
from .lgcp import CountVector, LgcpFit, PeakPosterior
from .models import WavenumberGrid
from .smc import SmcPosterior

logger = structlog.get_logger(__name__)

SMOOTHING_KERNEL = np.array([1.0, 4.0, 6.0, 4.0, 1.0]) / 16.0
MIN_RELATIVE_MASS = 0.005

PathLike = Union[str, Path]


@dataclass(frozen=True)
class PeakRow:
    mode: float
    lower: float
    upper: float
    relative_mass: float

    def as_dict(self) -> Dict[str, float]:
        return {
            "mode": self.mode,
            "lower95": self.lower,
            "upper95": self.upper,
            "relative_mass": self.relative_mass,
        }


@dataclass
class PeakTable:
    """Per-peak location summaries plus global posteriors over N and theta."""

    peaks: List[PeakRow]
    count_distribution: Dict[int, float]
    modal_count: int
    line_shape: Dict[str, Dict[str, float]] = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.peaks)

    @property
    def modes(self) -> np.ndarray:
        return np.array([p.mode for p in self.peaks])

    def to_dict(self) -> Dict[str, Any]:
        return {
            "peaks": [p.as_dict() for p in self.peaks],
            "count_distribution": {str(n): p for n, p in sorted(self.count_distribution.items())},
            "modal_count": self.modal_count,
            "line_shape": self.line_shape,
        }


def _basin_bounds(smoothed: np.ndarray, modes: np.ndarray) -> List[int]:
    """Split points at the lowest smoothed mass between consecutive modes."""
    bounds = [0]
    for left, right in zip(modes[:-1], modes[1:]):
        bounds.append(int(left + np.argmin(smoothed[left:right + 1])))
    bounds.append(smoothed.size)
    return bounds


def build_peak_table(
    peaks: PeakPosterior,
    grid: WavenumberGrid,
    posterior: Optional[SmcPosterior] = None,
    min_relative_mass: float = MIN_RELATIVE_MASS,
) -> PeakTable:
    """
    Summarize the location histogram by basins around its smoothed local maxima.

    Each basin reports its histogram mode, the central 95% interval of the
    sampled locations inside it (widened to contain the mode) and its share of
    all sampled maxima.
    """
    centres, mass = peaks.location_histogram(grid)
    locations = np.sort(peaks.all_locations)
    rows: List[PeakRow] = []

    if locations.size:
        smoothed = np.convolve(mass, SMOOTHING_KERNEL, mode="same")
        padded = np.concatenate([[0.0], smoothed, [0.0]])
        modes, _ = find_peaks(padded)
        modes = modes - 1
        if modes.size == 0:
            modes = np.array([int(np.argmax(smoothed))])
        bounds = _basin_bounds(smoothed, modes)
        edges = grid.start - 0.5 * grid.h + grid.h * np.asarray(bounds, dtype=float)

        for i in range(modes.size):
            lo_edge, hi_edge = edges[i], edges[i + 1]
            inside = locations[(locations >= lo_edge) & (locations < hi_edge)]
            relative_mass = inside.size / locations.size
            if inside.size == 0 or relative_mass < min_relative_mass:
                continue
            segment = mass[bounds[i]:bounds[i + 1]]
            mode = float(centres[bounds[i] + int(np.argmax(segment))])
            lower, upper = np.quantile(inside, [0.025, 0.975])
            rows.append(
                PeakRow(
                    mode=mode,
                    lower=float(min(lower, mode)),
                    upper=float(max(upper, mode)),
                    relative_mass=float(relative_mass),
                )
            )

    line_shape = {}
    if posterior is not None:
        summary = posterior.summary()
        line_shape = {key: summary[key] for key in ("gamma", "sigma", "m") if key in summary}

    table = PeakTable(
        peaks=rows,
        count_distribution=peaks.count_distribution(),
        modal_count=peaks.modal_count,
        line_shape=line_shape,
    )
    logger.info("Peak table built", peaks=len(table), modal_count=table.modal_count)
    return table


def _cell(value: Any) -> str:
    if isinstance(value, (bool, np.bool_)):
        return str(bool(value)).lower()
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return format_number(float(value))
    return str(value)


def write_csv(path: PathLike, rows: Sequence[Dict[str, Any]], fieldnames: Sequence[str]) -> Path:
    """CSV with every float at 17 significant digits."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as f:
        writer = csv.DictWriter(f, fieldnames=list(fieldnames), lineterminator="\n")
        writer.writeheader()
        for row in rows:
            writer.writerow({key: _cell(row[key]) for key in fieldnames})
    return path


def _jsonable(value: Any) -> Any:
    if isinstance(value, dict):
        return {str(k): _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if isinstance(value, np.ndarray):
        return _jsonable(value.tolist())
    if isinstance(value, (np.bool_,)):
        return bool(value)
    if isinstance(value, np.integer):
        return int(value)
    if isinstance(value, np.floating):
        return float(value)
    return value


def write_json(path: PathLike, document: Dict[str, Any]) -> Path:
    """Write a JSON document with round-trip float formatting; parents are created."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as f:
        json.dump(_jsonable(document), f, indent=2, sort_keys=True, default=str)
        f.write("\n")
    return path


def particle_rows(posterior: SmcPosterior) -> List[Dict[str, Any]]:
    """One row per particle: gamma, sigma for Voigt runs, M, weight and log-likelihood."""
    rows = []
    for particle in posterior.particles:
        row = {"gamma": particle.params.gamma}
        if particle.params.sigma is not None:
            row["sigma"] = particle.params.sigma
        row.update(m=particle.m, weight=particle.weight, log_like=particle.log_like)
        rows.append(row)
    return rows


def write_particles(path: PathLike, posterior: SmcPosterior) -> Path:
    """Write the final particle ensemble as CSV."""
    rows = particle_rows(posterior)
    fieldnames = list(rows[0].keys()) if rows else ["gamma", "m", "weight", "log_like"]
    return write_csv(path, rows, fieldnames)


def write_counts(path: PathLike, grid: WavenumberGrid, counts: CountVector) -> Path:
    x_bar = counts.x_bar if counts.x_bar is not None else np.full(grid.k, np.nan)
    rows = [
        {"nu": nu, "x_bar": x, "z": int(z)} for nu, x, z in zip(grid.nu, x_bar, counts.z)
    ]
    return write_csv(path, rows, ["nu", "x_bar", "z"])


def write_location_histogram(path: PathLike, peaks: PeakPosterior, grid: WavenumberGrid) -> Path:
    centres, mass = peaks.location_histogram(grid)
    rows = [{"nu": nu, "mass": m} for nu, m in zip(centres, mass)]
    return write_csv(path, rows, ["nu", "mass"])


def write_trace(path: PathLike, posterior: SmcPosterior) -> Path:
    return write_csv(path, posterior.trace, ["t", "kappa", "ess", "resampled", "acceptance", "c"])


def write_lgcp_fit(path: PathLike, fit: LgcpFit) -> Path:
    return write_json(path, fit.summary())


def write_peak_table(directory: PathLike, table: PeakTable) -> List[Path]:
    directory = Path(directory)
    rows = [p.as_dict() for p in table.peaks]
    return [
        write_json(directory / "peak_table.json", table.to_dict()),
        write_csv(directory / "peak_table.csv", rows, ["mode", "lower95", "upper95", "relative_mass"]),
    ]
