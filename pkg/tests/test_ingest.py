"""Tests for spectrum file ingestion."""
import numpy as np
import pytest

from src.exceptions import IngestionError
from src.ingest import ingest, write_spectrum
from src.models import Spectrum, WavenumberGrid


def write(tmp_path, text, name="spectrum.txt"):
    path = tmp_path / name
    path.write_text(text)
    return path


def test_comma_separated_file(tmp_path):
    spec = ingest(write(tmp_path, "100,1.0\n101,2.0\n102,1.0\n103,0.5"))
    assert spec.grid.k == 4
    assert spec.grid.h == pytest.approx(1.0)
    assert spec.grid.start == 100.0
    np.testing.assert_array_equal(spec.intensity, [1.0, 2.0, 1.0, 0.5])
    assert spec.metadata["resampled"] is False


def test_rruff_header_is_skipped(tmp_path):
    text = "##NAMES=Anorthite\n##RRUFFID=R040059\n\n100 1.0\n101\t2.0\n102  1.5\n103 0.5\n##END=\n"
    spec = ingest(write(tmp_path, text), fmt="rruff")
    assert spec.grid.k == 4
    assert spec.metadata["format"] == "rruff"


def test_uneven_spacing_is_resampled(tmp_path):
    spec = ingest(write(tmp_path, "0,0\n1,1\n2,2\n3.5,3.5"))
    assert spec.metadata["resampled"] is True
    assert spec.grid.h == pytest.approx(1.0)
    assert spec.grid.k == 4
    np.testing.assert_allclose(spec.intensity, [0.0, 1.0, 2.0, 3.0])


def test_decreasing_wavenumbers_are_reversed(tmp_path):
    spec = ingest(write(tmp_path, "103,4\n102,3\n101,2\n100,1"))
    assert spec.grid.start == 100.0
    np.testing.assert_array_equal(spec.intensity, [1.0, 2.0, 3.0, 4.0])
    assert spec.metadata["reversed"] is True


def test_too_few_points(tmp_path):
    with pytest.raises(IngestionError):
        ingest(write(tmp_path, "100,1\n101,2\n102,3"))


def test_non_monotone_wavenumbers_report_line(tmp_path):
    with pytest.raises(IngestionError, match="line 3") as excinfo:
        ingest(write(tmp_path, "100,1\n101,2\n100.5,1\n103,1"))
    assert excinfo.value.line_number == 3


def test_unparseable_line_reports_line(tmp_path):
    with pytest.raises(IngestionError) as excinfo:
        ingest(write(tmp_path, "##header\n100,1\n101,abc\n102,1\n103,1"))
    assert excinfo.value.line_number == 3


def test_wrong_column_count_reports_line(tmp_path):
    with pytest.raises(IngestionError) as excinfo:
        ingest(write(tmp_path, "100,1\n101,2,3\n102,1\n103,1"))
    assert excinfo.value.line_number == 2


def test_missing_file(tmp_path):
    with pytest.raises(IngestionError):
        ingest(tmp_path / "absent.txt")


def test_write_then_ingest_round_trip(tmp_path):
    grid = WavenumberGrid(start=123.456, h=0.7, k=50)
    intensity = np.random.default_rng(0).normal(size=grid.k)
    path = write_spectrum(Spectrum(grid=grid, intensity=intensity), tmp_path / "out" / "spec.txt")

    spec = ingest(path)
    np.testing.assert_allclose(spec.nu, grid.nu, rtol=0, atol=1e-12)
    np.testing.assert_array_equal(spec.intensity, intensity)
    assert spec.metadata["resampled"] is False
