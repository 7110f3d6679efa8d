"""
Fourier self-deconvolution with linear prediction.

The observed spectrum y_0..y_{K-1} is reflected into the half-sample symmetric
sequence [y_{K-1}, ..., y_0, y_0, ..., y_{K-1}] of length 2K, whose origin sits
half a sample below the first grid point. Its DFT is real up to a known phase
and has a vanishing Nyquist bin, so the first K bins carry everything. The
kernel is sampled at the same half-sample offsets and reflected identically, so
the ratio of the two DFTs is real.
"""
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import structlog
from numpy.lib.stride_tricks import sliding_window_view
from scipy import fft, linalg, signal

from .exceptions import (
    DegenerateSignalError,
    KernelUnderflowError,
    NumericError,
    OrderError,
    ParameterDomainError,
    ShapeError,
    TruncationError,
)
from .lineshapes import kernel_values
from .models import LineShapeParams, Spectrum, WavenumberGrid

logger = structlog.get_logger(__name__)

UNDERFLOW_THRESHOLD = 1e-300
# Burg stops once the lattice error energy drops below this fraction of the input energy
BURG_ENERGY_FLOOR = 1e-26
REFLECTION_TOLERANCE = 1e-12
ROOT_RADIUS_TOLERANCE = 1e-6


@dataclass(frozen=True)
class FsdSignal:
    """Fourier-domain self-deconvolution samples on the first K DFT bins."""

    xi: np.ndarray
    d_omega: float
    origin: float

    def __post_init__(self):
        xi = np.array(self.xi, dtype=float, copy=True)
        if xi.ndim != 1:
            raise ShapeError("FSD signal must be one-dimensional")
        if not np.all(np.isfinite(xi)):
            raise NumericError("FSD signal contains non-finite values")
        xi.setflags(write=False)
        object.__setattr__(self, "xi", xi)

    def __len__(self) -> int:
        return int(self.xi.size)

    @property
    def omega(self) -> np.ndarray:
        """Fourier-domain abscissa omega_q = q / (2 K h)."""
        return self.d_omega * np.arange(self.xi.size)

    def replace(self, xi: np.ndarray) -> "FsdSignal":
        return FsdSignal(xi=xi, d_omega=self.d_omega, origin=self.origin)


@dataclass(frozen=True)
class ImpulseResponse:
    """Forward prediction coefficients r_1..r_order."""

    r: np.ndarray
    order: int
    reflection: np.ndarray = field(default_factory=lambda: np.empty(0))
    refined: bool = False

    def __post_init__(self):
        r = np.array(self.r, dtype=float, copy=True)
        if r.size != self.order:
            raise OrderError(f"Impulse response has {r.size} coefficients for order {self.order}")
        if self.order < 2:
            raise OrderError(f"Impulse response order must be at least 2, got {self.order}")
        r.setflags(write=False)
        object.__setattr__(self, "r", r)


@dataclass(frozen=True)
class LineNarrowedSpectrum:
    """Inverse DFT of the predicted FSD signal on the original grid."""

    x_ln: np.ndarray

    def __post_init__(self):
        x_ln = np.array(self.x_ln, dtype=float, copy=True)
        if not np.all(np.isfinite(x_ln)):
            raise NumericError("Line-narrowed spectrum contains non-finite values")
        x_ln.setflags(write=False)
        object.__setattr__(self, "x_ln", x_ln)

    def __len__(self) -> int:
        return int(self.x_ln.size)


@dataclass(frozen=True)
class LomepResult:
    """One full deconvolution, prediction and reconstruction pass."""

    xi_lp: FsdSignal
    impulse: ImpulseResponse
    x_ln: LineNarrowedSpectrum
    g: Spectrum
    m: int

    @property
    def order(self) -> int:
        return self.impulse.order


def _reflect(values: np.ndarray) -> np.ndarray:
    return np.concatenate([values[::-1], values])


def _half_sample_phase(k: int) -> np.ndarray:
    """Phase of a length-2K sequence symmetric about index K - 1/2."""
    q = np.arange(k)
    return np.exp(-1j * np.pi * q * (2 * k - 1) / (2 * k))


def kernel_dft(params: LineShapeParams, grid: WavenumberGrid) -> np.ndarray:
    """First K DFT bins of the kernel sampled at (m + 1/2) h and reflected."""
    offsets = (np.arange(grid.k) + 0.5) * grid.h
    samples = kernel_values(offsets, params)
    return fft.rfft(_reflect(samples))[: grid.k]


def fsd(spec: Spectrum, params: LineShapeParams, n_retained: Optional[int] = None) -> FsdSignal:
    """
    Fourier self-deconvolution xi = F{y(nu) + y(-nu)} / F{K(nu; theta)}.

    Only the first n_retained bins are divided (all K by default); the rest are zero.
    """
    k = spec.grid.k
    n_retained = k if n_retained is None else int(n_retained)
    if not 1 <= n_retained <= k:
        raise TruncationError(f"Retained length must lie in [1, {k}], got {n_retained}")

    y_dft = fft.rfft(_reflect(spec.intensity))[:n_retained]
    k_dft = kernel_dft(params, spec.grid)[:n_retained]

    magnitude = np.abs(k_dft)
    if np.any(magnitude < UNDERFLOW_THRESHOLD):
        first = int(np.argmax(magnitude < UNDERFLOW_THRESHOLD))
        raise KernelUnderflowError(
            f"Kernel DFT underflows at bin {first}; truncate below it"
        )

    xi = np.zeros(k)
    xi[:n_retained] = (y_dft / k_dft).real
    return FsdSignal(
        xi=xi,
        d_omega=1.0 / (2 * k * spec.grid.h),
        origin=spec.grid.start - 0.5 * spec.grid.h,
    )


def _forward_backward_error(x: np.ndarray, r: np.ndarray) -> float:
    """Summed squared forward and backward prediction errors of r on x."""
    design, target = _forward_backward_system(x, r.size)
    residual = design @ r - target
    return float(residual @ residual)


def _forward_backward_system(x: np.ndarray, order: int):
    windows = sliding_window_view(x, order + 1)
    # forward: x_n from x_{n-1}..x_{n-order}; backward: x_{n-order} from x_{n-order+1}..x_n
    forward = windows[:, -2::-1]
    backward = windows[:, 1:]
    design = np.vstack([forward, backward])
    target = np.concatenate([windows[:, -1], windows[:, 0]])
    return design, target


def _burg_lattice(x: np.ndarray, order: int):
    """Burg reflection coefficients with Levinson-Durbin coefficient updates."""
    forward = x[1:].copy()
    backward = x[:-1].copy()
    energy_floor = BURG_ENERGY_FLOOR * 2.0 * float(x @ x)
    a = np.array([1.0])
    reflection = []

    for _ in range(order):
        denominator = float(forward @ forward + backward @ backward)
        if denominator <= energy_floor:
            # lattice errors vanished: the signal is already predicted exactly
            reflection.append(0.0)
            a = np.concatenate([a, [0.0]])
            continue
        k = -2.0 * float(forward @ backward) / denominator
        if abs(k) > 1.0 + REFLECTION_TOLERANCE:
            raise NumericError(f"Burg reflection coefficient {k} outside the unit interval")
        reflection.append(k)

        extended = np.concatenate([a, [0.0]])
        a = extended + k * extended[::-1]

        forward, backward = forward + k * backward, backward + k * forward
        forward, backward = forward[1:], backward[:-1]

    return -a[1:], np.asarray(reflection)


def burg_impulse_response(xi_head: np.ndarray, order: int, refine: bool = False) -> ImpulseResponse:
    """
    Estimate prediction coefficients from the first M samples of the FSD signal.

    Burg's lattice recursion gives a stable estimate and is what line narrowing
    uses. With refine=True and an overdetermined forward-backward system
    (order <= M / 2), the unconstrained least-squares minimizer of the same
    forward-backward error is tried as well and kept if it lowers the error
    without moving characteristic roots outside the unit circle. The refinement
    is exact on noiseless sums of undamped cosines, where the lattice estimate
    carries a small finite-length bias.
    """
    x = np.asarray(xi_head, dtype=float)
    m = x.size
    if order < 2 or order >= m:
        raise OrderError(f"Order must satisfy 2 <= order <= {m - 1}, got {order}")
    if not np.any(x):
        raise DegenerateSignalError("Cannot estimate an impulse response from an all-zero signal")
    if not np.all(np.isfinite(x)):
        raise NumericError("FSD head contains non-finite values")

    r, reflection = _burg_lattice(x, order)

    if refine and 2 * order <= m:
        design, target = _forward_backward_system(x, order)
        refined, *_ = linalg.lstsq(design, target)
        burg_error = _forward_backward_error(x, r)
        refined_error = _forward_backward_error(x, refined)
        radius = np.max(np.abs(np.roots(np.concatenate([[1.0], -refined]))))
        if refined_error <= burg_error and radius <= 1.0 + ROOT_RADIUS_TOLERANCE:
            return ImpulseResponse(r=refined, order=order, reflection=reflection, refined=True)

    return ImpulseResponse(r=r, order=order, reflection=reflection)


def linear_predict(xi: FsdSignal, r: ImpulseResponse, m: int, k_total: int) -> FsdSignal:
    """
    Keep the first m samples and extrapolate to k_total by the recursion
    xi[k] = sum_i r_i xi[k - i], feeding predicted values back in.
    """
    if m > k_total:
        raise TruncationError(f"Truncation length {m} exceeds signal length {k_total}")
    if len(xi) < m:
        raise ShapeError(f"FSD signal of length {len(xi)} is shorter than m = {m}")
    if m == k_total:
        return xi.replace(xi.xi[:k_total])
    if m < r.order:
        raise OrderError(f"Need at least {r.order} known samples, got {m}")

    head = xi.xi[:m]
    denominator = np.concatenate([[1.0], -r.r])
    # past outputs, most recent first
    initial = signal.lfiltic([1.0], denominator, head[::-1][: r.order])
    tail, _ = signal.lfilter([1.0], denominator, np.zeros(k_total - m), zi=initial)
    return xi.replace(np.concatenate([head, tail]))


def reconstruct_g(xi_lp: FsdSignal, params: LineShapeParams, grid: WavenumberGrid) -> Spectrum:
    """g = F^-1{xi_LP F{K}}, the smooth approximation of the forward model."""
    if len(xi_lp) != grid.k:
        raise ShapeError(f"FSD signal length {len(xi_lp)} does not match grid length {grid.k}")
    spectrum = np.append(xi_lp.xi * kernel_dft(params, grid), 0.0)
    g = fft.irfft(spectrum, n=2 * grid.k)[grid.k:]
    if not np.all(np.isfinite(g)):
        raise NumericError("Reconstructed forward signal is not finite")
    return Spectrum(grid=grid, intensity=g)


def line_narrowed(xi_lp: FsdSignal) -> LineNarrowedSpectrum:
    """x_LN = F^-1{xi_LP} on the original grid points."""
    k = len(xi_lp)
    spectrum = np.append(xi_lp.xi * _half_sample_phase(k), 0.0)
    return LineNarrowedSpectrum(x_ln=fft.irfft(spectrum, n=2 * k)[k:])


def prediction_order(m: int) -> int:
    """
    Order of the predictor fitted to m retained samples.

    Half the retained length keeps the forward-backward fit twice overdetermined,
    so the lattice models up to m / 4 undamped lines instead of absorbing the
    noise of the last retained samples.
    """
    return max(2, m // 2)


def usable_band(spec: Spectrum, noise_sd: float, threshold: float = 4.0) -> int:
    """
    Number of leading DFT bins before the data sink into the noise floor.

    White noise of standard deviation s puts s * sqrt(2K) into every bin of the
    reflected sequence; the band ends after the last bin above threshold times that.
    """
    if noise_sd <= 0:
        raise ParameterDomainError(f"Noise level must be positive, got {noise_sd}")
    k = spec.grid.k
    magnitude = np.abs(fft.rfft(_reflect(spec.intensity))[:k])
    above = np.flatnonzero(magnitude > threshold * noise_sd * np.sqrt(2.0 * k))
    return int(above[-1]) + 1 if above.size else 0


def lomep(spec: Spectrum, params: LineShapeParams, m: int) -> LomepResult:
    """Deconvolve, truncate to m samples, predict to full length and reconstruct."""
    k = spec.grid.k
    if not 3 <= m <= k:
        raise ParameterDomainError(f"Truncation length must lie in [3, {k}], got {m}")

    order = prediction_order(m)
    xi = fsd(spec, params, n_retained=m)
    impulse = burg_impulse_response(xi.xi[:m], order)
    xi_lp = linear_predict(xi, impulse, m, k)
    if not np.all(np.isfinite(xi_lp.xi)):
        raise NumericError("Linear prediction diverged")
    return LomepResult(
        xi_lp=xi_lp,
        impulse=impulse,
        x_ln=line_narrowed(xi_lp),
        g=reconstruct_g(xi_lp, params, spec.grid),
        m=m,
    )
