"""Time/frequency grids, frequency combs and the signal-shape library.

All envelopes share one `TimeGrid` spanning exactly one comb period. The grid
is centered: sample n sits at t = (n - samples/2) * dt, so t = 0 is a sample
and t = -window/2 doubles as the periodic image of +window/2.

Comb line k sits at carrier + (k - (count - 1)/2) * spacing; on a matched
grid that offset is an integer number of frequency bins, which keeps
synthesis and fitting exact discrete Fourier pairs.
"""

import hashlib
import logging
import math
from dataclasses import dataclass
from functools import cached_property
from typing import Optional

import numpy as np
from scipy import fft

from comb_reshaper.errors import AliasingError, ConfigurationError, TruncationError

logger = logging.getLogger(__name__)

# ---------------------------
# Configuration / constants
# ---------------------------
DEFAULT_SAMPLES = 1024
MIN_SAMPLES = 256
DEFAULT_COMB_LINES = 17
DEFAULT_LINE_SPACING_GHZ = 20.0

SIGNAL_CARRIER_NM = 1532.1
PUMP_CARRIER_NM = 1556.6

# Gaussian intensity FWHM = 2*sqrt(ln 2)*T0
DEFAULT_FWHM_PS = 10.0
DEFAULT_MODE_WIDTH_PS = DEFAULT_FWHM_PS / (2.0 * math.sqrt(math.log(2.0)))
DEFAULT_SE_RISE_PS = 5.0
DEFAULT_SE_TAU_PS = 5.0

# Edge intensity relative to peak intensity above which a shape is truncated
EDGE_INTENSITY_TOLERANCE = 1e-4
DEFAULT_SQUELCH_FRACTION = 0.05

SHAPE_TAGS = ("S1", "S2", "Se")

# Relative tolerance for window == comb period
_PERIOD_RTOL = 1e-9


def wrap_phase(phase):
    """Wrap phases into [-pi, pi)."""
    return np.mod(np.asarray(phase, dtype=float) + np.pi, 2.0 * np.pi) - np.pi


def sum_frequency_carrier(signal_nm: float, pump_nm: float) -> float:
    """Carrier of the sum-frequency band, 1/l_sum = 1/l_sig + 1/l_pump."""
    return 1.0 / (1.0 / signal_nm + 1.0 / pump_nm)


def comb_period_ps(spacing_ghz: float) -> float:
    return 1000.0 / spacing_ghz


def _frozen(values, dtype) -> np.ndarray:
    arr = np.array(values, dtype=dtype, copy=True)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class TimeGrid:
    """Uniform sampling of one comb period; window in ps, frequencies in THz."""

    window_ps: float = comb_period_ps(DEFAULT_LINE_SPACING_GHZ)
    samples: int = DEFAULT_SAMPLES

    def __post_init__(self):
        if not (isinstance(self.samples, (int, np.integer)) and self.samples >= MIN_SAMPLES):
            raise ConfigurationError(f"samples must be an integer >= {MIN_SAMPLES}, got {self.samples!r}")
        if self.samples & (self.samples - 1):
            raise ConfigurationError(f"samples must be a power of two, got {self.samples}")
        if not (math.isfinite(self.window_ps) and self.window_ps > 0):
            raise ConfigurationError(f"window must be positive, got {self.window_ps!r}")

    @classmethod
    def for_comb(cls, spacing_ghz: float = DEFAULT_LINE_SPACING_GHZ, samples: int = DEFAULT_SAMPLES) -> "TimeGrid":
        return cls(window_ps=comb_period_ps(spacing_ghz), samples=samples)

    @property
    def dt(self) -> float:
        return self.window_ps / self.samples

    @property
    def nyquist_thz(self) -> float:
        return self.samples / (2.0 * self.window_ps)

    @cached_property
    def indices(self) -> np.ndarray:
        """Signed sample index n - samples/2."""
        return _frozen(np.arange(-(self.samples // 2), self.samples // 2), int)

    @cached_property
    def t(self) -> np.ndarray:
        return _frozen(self.indices * self.dt, float)

    @cached_property
    def omega(self) -> np.ndarray:
        """Angular frequencies (rad/ps) in FFT order."""
        return _frozen(2.0 * np.pi * fft.fftfreq(self.samples, d=self.dt), float)


@dataclass(frozen=True, eq=False)
class FrequencyComb:
    """Comb lines as (amplitude, phase) pairs about a carrier.

    Amplitudes are non-negative with at least one positive; phases are
    stored wrapped to [-pi, pi).
    """

    amplitudes: np.ndarray
    phases: np.ndarray
    carrier_nm: float = PUMP_CARRIER_NM
    spacing_ghz: float = DEFAULT_LINE_SPACING_GHZ

    def __post_init__(self):
        amps = np.asarray(self.amplitudes, dtype=float).ravel()
        phases = np.asarray(self.phases, dtype=float).ravel()
        if amps.size == 0 or amps.shape != phases.shape:
            raise ConfigurationError(
                f"comb needs matching, non-empty amplitude and phase lists ({amps.size} vs {phases.size})"
            )
        if not (np.all(np.isfinite(amps)) and np.all(np.isfinite(phases))):
            raise ConfigurationError("comb amplitudes and phases must be finite")
        if np.any(amps < 0):
            raise ConfigurationError("comb amplitudes must be >= 0")
        if not np.any(amps > 0):
            raise ConfigurationError("comb needs at least one line with amplitude > 0")
        if not (self.spacing_ghz > 0 and self.carrier_nm > 0):
            raise ConfigurationError("comb spacing and carrier must be positive")
        object.__setattr__(self, "amplitudes", _frozen(amps, float))
        object.__setattr__(self, "phases", _frozen(wrap_phase(phases), float))

    @classmethod
    def flat(
        cls,
        count: int = DEFAULT_COMB_LINES,
        carrier_nm: float = PUMP_CARRIER_NM,
        spacing_ghz: float = DEFAULT_LINE_SPACING_GHZ,
        amplitude: float = 1.0,
    ) -> "FrequencyComb":
        return cls(np.full(count, amplitude), np.zeros(count), carrier_nm, spacing_ghz)

    @classmethod
    def from_weights(cls, weights, carrier_nm: float, spacing_ghz: float) -> "FrequencyComb":
        weights = np.asarray(weights, dtype=complex)
        return cls(np.abs(weights), np.angle(weights), carrier_nm, spacing_ghz)

    def with_lines(self, amplitudes, phases) -> "FrequencyComb":
        return FrequencyComb(amplitudes, phases, self.carrier_nm, self.spacing_ghz)

    def with_weights(self, weights) -> "FrequencyComb":
        return FrequencyComb.from_weights(weights, self.carrier_nm, self.spacing_ghz)

    @property
    def count(self) -> int:
        return int(self.amplitudes.size)

    @property
    def weights(self) -> np.ndarray:
        return self.amplitudes * np.exp(1j * self.phases)

    @property
    def line_indices(self) -> np.ndarray:
        """Line offsets from the carrier in units of the spacing (half-integers for even counts)."""
        return np.arange(self.count) - (self.count - 1) / 2.0

    @property
    def line_offsets_thz(self) -> np.ndarray:
        return self.line_indices * self.spacing_ghz / 1000.0

    @property
    def span_thz(self) -> float:
        return (self.count - 1) * self.spacing_ghz / 1000.0

    @property
    def parameters(self) -> np.ndarray:
        """Optimizer coordinates: amplitudes followed by phases."""
        return np.concatenate([self.amplitudes, self.phases])

    def checksum(self) -> str:
        digest = hashlib.sha256()
        digest.update(self.amplitudes.tobytes())
        digest.update(self.phases.tobytes())
        return digest.hexdigest()[:16]


@dataclass(frozen=True, eq=False)
class ComplexEnvelope:
    """Baseband complex field sampled on a TimeGrid."""

    grid: TimeGrid
    values: np.ndarray
    carrier_nm: float = SIGNAL_CARRIER_NM

    def __post_init__(self):
        values = np.asarray(self.values, dtype=complex).ravel()
        if values.size != self.grid.samples:
            raise ConfigurationError(f"envelope has {values.size} samples, grid expects {self.grid.samples}")
        object.__setattr__(self, "values", _frozen(values, complex))

    @property
    def energy(self) -> float:
        return energy(self)

    def with_values(self, values) -> "ComplexEnvelope":
        return ComplexEnvelope(self.grid, values, self.carrier_nm)

    def scaled(self, factor: complex) -> "ComplexEnvelope":
        return self.with_values(self.values * factor)

    def centroid_ps(self) -> float:
        """Energy centroid on the centered grid; zero for an empty envelope."""
        intensity = np.abs(self.values) ** 2
        total = intensity.sum()
        if total == 0:
            return 0.0
        return float(np.dot(self.grid.t, intensity) / total)

    def rms_width_ps(self) -> float:
        intensity = np.abs(self.values) ** 2
        total = intensity.sum()
        if total == 0:
            return 0.0
        center = self.centroid_ps()
        return float(math.sqrt(np.dot((self.grid.t - center) ** 2, intensity) / total))


@dataclass(frozen=True)
class SignalShape:
    """Named signal shape: Hermite-Gauss S1/S2 or the ramped exponential Se.

    `mode_width_ps` is T0 of exp(-t^2/(2 T0^2)). `onset_ps` is the Se ramp
    start; None places the Se energy centroid at t = 0.
    """

    tag: str
    mode_width_ps: float = DEFAULT_MODE_WIDTH_PS
    rise_ps: float = DEFAULT_SE_RISE_PS
    tau_ps: float = DEFAULT_SE_TAU_PS
    onset_ps: Optional[float] = None

    def __post_init__(self):
        if self.tag not in SHAPE_TAGS:
            raise ConfigurationError(f"unknown shape tag {self.tag!r}, expected one of {SHAPE_TAGS}")
        for name in ("mode_width_ps", "rise_ps", "tau_ps"):
            value = getattr(self, name)
            if not (math.isfinite(value) and value > 0):
                raise ConfigurationError(f"{name} must be > 0, got {value!r}", field=name)

    def resolved_onset_ps(self) -> float:
        if self.onset_ps is not None:
            return float(self.onset_ps)
        r, tau = self.rise_ps, self.tau_ps
        # intensity centroid of ramp (s/r)^2 on [0, r] followed by exp(-2(s - r)/tau)
        first_moment = r * r / 4.0 + r * tau / 2.0 + tau * tau / 4.0
        area = r / 3.0 + tau / 2.0
        return -first_moment / area

    def profile(self, t) -> np.ndarray:
        """Unnormalized analytic field at times t (ps)."""
        t = np.asarray(t, dtype=float)
        if self.tag == "S1":
            return np.exp(-(t ** 2) / (2.0 * self.mode_width_ps ** 2))
        if self.tag == "S2":
            x = t / self.mode_width_ps
            return x * np.exp(-(x ** 2) / 2.0)
        start = self.resolved_onset_ps()
        s = t - start
        ramp = np.clip(s / self.rise_ps, 0.0, 1.0)
        decay = np.exp(-np.maximum(s - self.rise_ps, 0.0) / self.tau_ps)
        return np.where(s < 0, 0.0, ramp * decay)


def energy(env: ComplexEnvelope) -> float:
    return float(np.vdot(env.values, env.values).real * env.grid.dt)


def check_comb_grid(comb: FrequencyComb, grid: TimeGrid) -> None:
    """Raise unless the grid spans one comb period and resolves the comb span."""
    period = comb_period_ps(comb.spacing_ghz)
    if not math.isclose(grid.window_ps, period, rel_tol=_PERIOD_RTOL):
        raise ConfigurationError(
            f"grid window {grid.window_ps:g} ps does not match comb period {period:g} ps"
        )
    if comb.span_thz / 2.0 >= grid.nyquist_thz:
        raise AliasingError(
            f"half comb span {comb.span_thz / 2.0:g} THz reaches grid Nyquist {grid.nyquist_thz:g} THz"
        )


def _line_phase_matrix(comb: FrequencyComb, grid: TimeGrid) -> np.ndarray:
    # f_k * t_n = m_k * (n - N/2) / N exactly on a matched grid
    return np.exp(2j * np.pi * np.outer(grid.indices, comb.line_indices) / grid.samples)


def synthesize(comb: FrequencyComb, grid: TimeGrid) -> ComplexEnvelope:
    """E(t) = sum_k a_k exp(i phi_k) exp(2 pi i f_k t), periodic over the window."""
    check_comb_grid(comb, grid)
    values = _line_phase_matrix(comb, grid) @ comb.weights
    return ComplexEnvelope(grid, values, comb.carrier_nm)


def fit_comb(target: ComplexEnvelope, comb_template: FrequencyComb) -> FrequencyComb:
    """Project `target` onto the comb lines of `comb_template`.

    Line weights are the discrete Fourier coefficients of the target at each
    line frequency, so synthesize(fit_comb(x)) is the band-limited projection
    of x. Carrier and spacing come from the template.
    """
    grid = target.grid
    check_comb_grid(comb_template, grid)
    weights = _line_phase_matrix(comb_template, grid).conj().T @ target.values / grid.samples
    return comb_template.with_weights(weights)


def make_signal(shape: SignalShape, grid: TimeGrid, carrier_nm: float = SIGNAL_CARRIER_NM) -> ComplexEnvelope:
    """Sample `shape` on the grid, centered in the window, with unit energy."""
    half = grid.window_ps / 2.0
    edges = np.abs(shape.profile(np.array([-half, half]))) ** 2
    values = shape.profile(grid.t).astype(complex)
    peak = np.max(np.abs(values)) ** 2
    if peak == 0 or np.max(edges) >= EDGE_INTENSITY_TOLERANCE * peak:
        raise TruncationError(
            f"{shape.tag} does not fit a {grid.window_ps:g} ps window "
            f"(edge/peak intensity {np.max(edges) / peak if peak else float('inf'):.3g})"
        )
    # first sample is both -window/2 and +window/2 of the periodic frame
    values[0] = 0.5 * (shape.profile(-half) + shape.profile(half))
    env = ComplexEnvelope(grid, values, carrier_nm)
    return env.scaled(1.0 / math.sqrt(env.energy))


def gaussian_pulse(grid: TimeGrid, mode_width_ps: float, center_ps: float = 0.0,
                   carrier_nm: float = PUMP_CARRIER_NM) -> ComplexEnvelope:
    """Unit-peak Gaussian exp(-t^2/(2 T0^2)) centered at `center_ps`, wrapped periodically."""
    offset = np.mod(grid.t - center_ps + grid.window_ps / 2.0, grid.window_ps) - grid.window_ps / 2.0
    return ComplexEnvelope(grid, np.exp(-(offset ** 2) / (2.0 * mode_width_ps ** 2)), carrier_nm)


def delay(env: ComplexEnvelope, tau_ps: float) -> ComplexEnvelope:
    """Circular delay by tau (ps) as a linear spectral phase; sub-sample delays allowed."""
    if tau_ps == 0:
        return env
    spectrum = fft.fft(env.values)
    shifted = fft.ifft(spectrum * np.exp(-1j * env.grid.omega * tau_ps))
    return env.with_values(shifted)


def squelch_phase(env: ComplexEnvelope, threshold_fraction: float = DEFAULT_SQUELCH_FRACTION) -> np.ndarray:
    """Per-sample phase, forced to 0 where |E| < threshold_fraction * max|E|.

    Reporting only; metrics and propagation always use the full field.
    """
    if not 0 < threshold_fraction < 1:
        raise ConfigurationError(f"threshold_fraction must lie in (0, 1), got {threshold_fraction!r}")
    magnitude = np.abs(env.values)
    peak = magnitude.max()
    if peak == 0:
        return np.zeros(env.grid.samples)
    phase = np.angle(env.values)
    phase[magnitude < threshold_fraction * peak] = 0.0
    return phase


def default_comb_template(count: int = DEFAULT_COMB_LINES, spacing_ghz: float = DEFAULT_LINE_SPACING_GHZ,
                          carrier_nm: float = PUMP_CARRIER_NM) -> FrequencyComb:
    return FrequencyComb.flat(count=count, carrier_nm=carrier_nm, spacing_ghz=spacing_ghz)
