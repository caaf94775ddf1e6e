"""Sum-frequency coupled-mode propagation with an undepleted, shaped pump.

Fields are photon-flux normalized and expressed in the pump's co-moving frame:

    dA_s/dz = i kappa conj(A_p) A_f exp(-i dk z) + L_s A_s
    dA_f/dz = i kappa A_p A_s exp(+i dk z)       + L_f A_f

The SF field is carried as F = A_f exp(-i dk z), which moves the phase
mismatch into the SF linear operator. The linear parts (walk-off, group
velocity dispersion, mismatch) act in the frequency domain; the coupling is
an exact SU(2) rotation per sample since the pump is fixed within a step.
Steps are symmetric (Strang) with adjacent half linear steps merged.
"""

import logging
import math
from dataclasses import dataclass
from typing import List, NamedTuple, Optional, Sequence

import numpy as np
from scipy import fft

from comb_reshaper.errors import ConfigurationError, NumericalBlowupError, SweepError, UndefinedMetricError
from comb_reshaper.waveform import ComplexEnvelope, sum_frequency_carrier

logger = logging.getLogger(__name__)

# ---------------------------
# Configuration / constants
# ---------------------------
DEFAULT_LENGTH = 1.0
DEFAULT_KAPPA = 1.0
DEFAULT_WALKOFF_SIGNAL_PS = 0.0  # signal and pump are both telecom band
DEFAULT_WALKOFF_SF_PS = 10.0
DEFAULT_Z_STEPS = 2048
MIN_CONVERGED_Z_STEPS = 64


@dataclass(frozen=True)
class WaveguideModel:
    """Normalized waveguide: z in [0, length], delays in ps and GVD in ps^2 per unit z."""

    length: float = DEFAULT_LENGTH
    kappa: float = DEFAULT_KAPPA
    walkoff_signal_ps: float = DEFAULT_WALKOFF_SIGNAL_PS
    walkoff_sf_ps: float = DEFAULT_WALKOFF_SF_PS
    gvd_signal_ps2: float = 0.0
    gvd_sf_ps2: float = 0.0
    gvd_pump_ps2: float = 0.0
    z_steps: int = DEFAULT_Z_STEPS
    phase_mismatch: float = 0.0

    def __post_init__(self):
        for name in ("length", "kappa", "walkoff_signal_ps", "walkoff_sf_ps", "gvd_signal_ps2",
                     "gvd_sf_ps2", "gvd_pump_ps2", "phase_mismatch"):
            if not math.isfinite(getattr(self, name)):
                raise ConfigurationError(f"{name} must be finite", field=name)
        if not 0.0 <= self.length <= 1.0:
            raise ConfigurationError(f"length must lie in [0, 1], got {self.length!r}", field="length")
        if self.kappa <= 0:
            raise ConfigurationError(f"kappa must be > 0, got {self.kappa!r}", field="kappa")
        if not (isinstance(self.z_steps, (int, np.integer)) and self.z_steps >= 1):
            raise ConfigurationError(f"z_steps must be a positive integer, got {self.z_steps!r}", field="z_steps")

    def theta(self, pump_scale: float, pump_amplitude: float = 1.0) -> float:
        """Coupling angle kappa * |A_p| * L for a pump sample of the given amplitude."""
        return self.kappa * pump_scale * pump_amplitude * self.length

    def scale_for_theta(self, theta: float, pump_amplitude: float = 1.0) -> float:
        return theta / (self.kappa * pump_amplitude * self.length)


@dataclass(frozen=True, eq=False)
class PropagationResult:
    """Output fields plus the photon-normalized energies after every z step."""

    signal_out: ComplexEnvelope
    sf_out: ComplexEnvelope
    z: np.ndarray
    signal_energy: np.ndarray
    sf_energy: np.ndarray

    @property
    def total_energy(self) -> np.ndarray:
        return self.signal_energy + self.sf_energy


class SweepPoint(NamedTuple):
    scale: float
    sf_fraction: float
    signal_fraction: float


def _linear_operator(omega: np.ndarray, walkoff_ps: float, gvd_ps2: float, mismatch: float,
                     dz: float) -> Optional[np.ndarray]:
    if walkoff_ps == 0 and gvd_ps2 == 0 and mismatch == 0:
        return None
    return np.exp(1j * (0.5 * gvd_ps2 * omega ** 2 - walkoff_ps * omega - mismatch) * dz)


def _apply_linear(field: np.ndarray, operator: Optional[np.ndarray]) -> np.ndarray:
    if operator is None:
        return field
    return fft.ifft(fft.fft(field) * operator)


def _rotation(pump: np.ndarray, kappa: float, dz: float):
    """Per-sample SU(2) coupling matrix entries for one step with a fixed pump."""
    magnitude = np.abs(pump)
    unit = np.divide(pump, magnitude, out=np.zeros_like(pump), where=magnitude > 0)
    angle = kappa * magnitude * dz
    cos, sin = np.cos(angle), 1j * np.sin(angle)
    return cos, sin * np.conj(unit), sin * unit


def _rotate(s: np.ndarray, f: np.ndarray, rotation):
    cos, to_signal, to_sf = rotation
    return cos * s + to_signal * f, to_sf * s + cos * f


def _check_same_grid(signal_in: ComplexEnvelope, pump: ComplexEnvelope) -> None:
    if signal_in.grid != pump.grid:
        raise ConfigurationError(f"signal grid {signal_in.grid} does not match pump grid {pump.grid}")


def propagate(signal_in: ComplexEnvelope, pump: ComplexEnvelope, wg: WaveguideModel,
              pump_scale: float = 1.0) -> PropagationResult:
    """Integrate signal and SF through the waveguide; the SF field starts at zero."""
    _check_same_grid(signal_in, pump)
    if not (math.isfinite(pump_scale) and pump_scale >= 0):
        raise ConfigurationError(f"pump_scale must be >= 0, got {pump_scale!r}")
    grid = signal_in.grid
    omega = grid.omega
    n_steps = wg.z_steps
    dz = wg.length / n_steps

    half_s = _linear_operator(omega, wg.walkoff_signal_ps, wg.gvd_signal_ps2, 0.0, dz / 2)
    full_s = _linear_operator(omega, wg.walkoff_signal_ps, wg.gvd_signal_ps2, 0.0, dz)
    half_f = _linear_operator(omega, wg.walkoff_sf_ps, wg.gvd_sf_ps2, wg.phase_mismatch, dz / 2)
    full_f = _linear_operator(omega, wg.walkoff_sf_ps, wg.gvd_sf_ps2, wg.phase_mismatch, dz)

    pump_field = pump_scale * pump.values
    pump_spectrum = fft.fft(pump_field) if wg.gvd_pump_ps2 != 0 else None
    rotation = _rotation(pump_field, wg.kappa, dz) if pump_spectrum is None else None

    s = _apply_linear(signal_in.values.copy(), half_s)
    f = np.zeros(grid.samples, dtype=complex)

    z = np.arange(n_steps + 1) * dz
    signal_energy = np.empty(n_steps + 1)
    sf_energy = np.empty(n_steps + 1)
    signal_energy[0] = signal_in.energy
    sf_energy[0] = 0.0

    for step in range(n_steps):
        if pump_spectrum is not None:
            z_mid = (step + 0.5) * dz
            pump_step = fft.ifft(pump_spectrum * np.exp(0.5j * wg.gvd_pump_ps2 * omega ** 2 * z_mid))
            rotation = _rotation(pump_step, wg.kappa, dz)
        s, f = _rotate(s, f, rotation)
        last = step == n_steps - 1
        s = _apply_linear(s, half_s if last else full_s)
        f = _apply_linear(f, half_f if last else full_f)
        # linear sub-steps are unitary per field, so these are the energies at z[step + 1]
        signal_energy[step + 1] = np.vdot(s, s).real * grid.dt
        sf_energy[step + 1] = np.vdot(f, f).real * grid.dt
        if not math.isfinite(signal_energy[step + 1] + sf_energy[step + 1]):
            raise NumericalBlowupError(z=float(z[step + 1]))

    logger.debug("propagated %d steps, pump_scale=%.6g", n_steps, pump_scale)
    sf_carrier = sum_frequency_carrier(signal_in.carrier_nm, pump.carrier_nm)
    f_lab = f * np.exp(1j * wg.phase_mismatch * wg.length)
    return PropagationResult(
        signal_out=signal_in.with_values(s),
        sf_out=ComplexEnvelope(grid, f_lab, sf_carrier),
        z=z,
        signal_energy=signal_energy,
        sf_energy=sf_energy,
    )


def cw_efficiency(theta: float, mismatch: float = 0.0) -> float:
    """CW sum-frequency efficiency; sin^2(theta) when phase matched.

    `mismatch` is the total phase mismatch dk * L. With it the efficiency is
    theta^2 / g^2 * sin^2(g), g = sqrt(theta^2 + (mismatch / 2)^2).
    """
    if not (math.isfinite(theta) and theta >= 0):
        raise ConfigurationError(f"theta must be >= 0, got {theta!r}")
    if mismatch == 0:
        return math.sin(theta) ** 2
    if theta == 0:
        return 0.0
    g = math.hypot(theta, mismatch / 2.0)
    return (theta / g) ** 2 * math.sin(g) ** 2


def power_sweep(signal: ComplexEnvelope, pump: ComplexEnvelope, wg: WaveguideModel,
                scales: Sequence[float]) -> List[SweepPoint]:
    """Propagate once per pump scale; fractions are relative to the input signal energy."""
    scales = [float(scale) for scale in scales]
    if any(scale < 0 for scale in scales):
        raise ConfigurationError("pump scales must be non-negative")
    if any(b < a for a, b in zip(scales, scales[1:])):
        raise ConfigurationError("pump scales must be ascending")
    input_energy = signal.energy
    if input_energy == 0:
        raise UndefinedMetricError("power sweep needs a signal with non-zero energy")
    points = []
    for scale in scales:
        try:
            result = propagate(signal, pump, wg, scale)
        except (ConfigurationError, NumericalBlowupError) as exc:
            raise SweepError(str(exc), scale) from exc
        points.append(SweepPoint(scale, result.sf_out.energy / input_energy,
                                 result.signal_out.energy / input_energy))
    return points
