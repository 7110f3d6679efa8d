"""Reading and writing two-column spectrum files."""
import re
from pathlib import Path
from typing import List, Tuple, Union

import numpy as np
import structlog

from .exceptions import IngestionError
from .models import MIN_GRID_POINTS, Spectrum, WavenumberGrid

logger = structlog.get_logger(__name__)

# relative spread of the native spacing above which the data are resampled
SPACING_TOLERANCE = 1e-3
SEPARATOR = re.compile(r"[,\s]+")

PathLike = Union[str, Path]


def _parse_lines(path: Path) -> Tuple[np.ndarray, np.ndarray, List[int]]:
    nu, intensity, line_numbers = [], [], []
    try:
        with open(path, "r") as f:
            lines = f.readlines()
    except OSError as e:
        raise IngestionError(f"Cannot read {path}: {e}") from e

    for line_number, line in enumerate(lines, start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("##"):
            continue
        tokens = [token for token in SEPARATOR.split(stripped) if token]
        if len(tokens) != 2:
            raise IngestionError(f"expected two columns, found {len(tokens)}", line_number)
        try:
            values = [float(token) for token in tokens]
        except ValueError:
            raise IngestionError(f"cannot parse {stripped!r} as numbers", line_number)
        if not np.all(np.isfinite(values)):
            raise IngestionError("non-finite value", line_number)
        nu.append(values[0])
        intensity.append(values[1])
        line_numbers.append(line_number)

    return np.array(nu), np.array(intensity), line_numbers


def ingest(path: PathLike, fmt: str = "text") -> Spectrum:
    """
    Parse whitespace- or comma-separated (wavenumber, intensity) pairs.

    RRUFF files differ only by their "##" header lines, which are skipped for
    either format. Decreasing wavenumbers are reversed; spacing that varies by
    more than 0.1% is linearly resampled onto the median spacing.
    """
    path = Path(path)
    nu, intensity, line_numbers = _parse_lines(path)
    if nu.size < MIN_GRID_POINTS:
        raise IngestionError(f"{path} holds {nu.size} data points; at least {MIN_GRID_POINTS} are required")

    steps = np.diff(nu)
    if np.all(steps < 0):
        nu, intensity, steps = nu[::-1], intensity[::-1], -steps[::-1]
        line_numbers = line_numbers[::-1]
        descending = True
    else:
        descending = False
    if np.any(steps <= 0):
        bad = int(np.argmax(steps <= 0))
        raise IngestionError("wavenumbers are not strictly monotone", line_numbers[bad + 1])

    h = float(np.median(steps))
    spread = float(np.max(np.abs(steps - h)) / h)
    metadata = {"source": str(path), "format": fmt, "native_points": int(nu.size), "reversed": descending}

    if spread > SPACING_TOLERANCE:
        k = int(np.floor((nu[-1] - nu[0]) / h * (1.0 + 1e-12))) + 1
        grid = WavenumberGrid(start=float(nu[0]), h=h, k=k)
        values = np.interp(grid.nu, nu, intensity)
        metadata.update(resampled=True, spacing_spread=spread)
        logger.warning("Non-uniform spacing resampled", source=str(path), spread=spread, h=h, points=k)
    else:
        grid = WavenumberGrid(start=float(nu[0]), h=float((nu[-1] - nu[0]) / (nu.size - 1)), k=nu.size)
        values = intensity
        metadata.update(resampled=False)

    spectrum = Spectrum(grid=grid, intensity=values, metadata=metadata)
    logger.info("Spectrum ingested", source=str(path), points=grid.k, h=grid.h, resampled=metadata["resampled"])
    return spectrum


def format_number(value: float) -> str:
    """17 significant digits, enough to round-trip a double."""
    return f"{value:.17g}"


def write_spectrum(spec: Spectrum, path: PathLike, header: bool = True) -> Path:
    """Write comma-separated (wavenumber, intensity) pairs."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as f:
        if header:
            f.write(f"##POINTS={spec.grid.k}\n")
        for nu, y in zip(spec.nu, spec.intensity):
            f.write(f"{format_number(nu)},{format_number(y)}\n")
    return path
