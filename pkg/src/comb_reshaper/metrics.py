"""Figures of merit: interference visibility, mode matching, reshaping efficiency.

Delay convention: V(tau) interferes `b` with `a` delayed by tau, so a
`b = delay(a, s)` pair peaks at tau = s.

    V(tau)    = 2 |<delay(a, tau), b>| / (E_a + E_b)
    eta_MM    = |<delay(a, tau), b>|^2 / (E_a E_b)

Energy-balanced visibility rescales `b` to the energy of `a` first, which
makes it equal to sqrt(eta_MM).
"""

import logging
import math
from dataclasses import dataclass
from typing import Sequence, Tuple

import numpy as np
from scipy import fft
from scipy.optimize import minimize_scalar

from comb_reshaper.errors import ConfigurationError, UndefinedMetricError
from comb_reshaper.waveform import ComplexEnvelope

logger = logging.getLogger(__name__)

# ---------------------------
# Configuration / constants
# ---------------------------
DEFAULT_DELAY_RANGE_PS = (-25.0, 25.0)  # half a comb period either way
DEFAULT_SCAN_STEPS = 201
DEFAULT_RESOLUTION_PS = 1e-3


@dataclass(frozen=True, eq=False)
class VisibilityCurve:
    """V(tau) samples, sorted by delay; includes the refined peak sample."""

    delays: np.ndarray
    values: np.ndarray

    @property
    def v_max(self) -> float:
        return float(np.max(self.values))

    @property
    def argmax_delay(self) -> float:
        return float(self.delays[int(np.argmax(self.values))])


def _check_pair(a: ComplexEnvelope, b: ComplexEnvelope) -> Tuple[float, float]:
    if a.grid != b.grid:
        raise ConfigurationError(f"metric inputs live on different grids ({a.grid} vs {b.grid})")
    energy_a, energy_b = a.energy, b.energy
    if energy_a == 0 or energy_b == 0:
        raise UndefinedMetricError("metric undefined for a zero-energy envelope")
    return energy_a, energy_b


def inner_product(a: ComplexEnvelope, b: ComplexEnvelope) -> complex:
    """<a, b> = sum conj(a) b dt."""
    return complex(np.vdot(a.values, b.values) * a.grid.dt)


def delayed_overlaps(a: ComplexEnvelope, b: ComplexEnvelope, delays) -> np.ndarray:
    """<delay(a, tau), b> for every tau, evaluated spectrally."""
    grid = a.grid
    cross = np.conj(fft.fft(a.values)) * fft.fft(b.values)
    phases = np.exp(1j * np.outer(np.atleast_1d(np.asarray(delays, dtype=float)), grid.omega))
    return phases @ cross * (grid.dt / grid.samples)


def _visibility_from_overlap(overlap, energy_a: float, energy_b: float, balanced: bool):
    if balanced:
        value = np.abs(overlap) / math.sqrt(energy_a * energy_b)
    else:
        value = 2.0 * np.abs(overlap) / (energy_a + energy_b)
    return np.minimum(value, 1.0)


def visibility(a: ComplexEnvelope, b: ComplexEnvelope, tau: float = 0.0, balanced: bool = False) -> float:
    """Fringe contrast of time-integrated two-pulse interference at relative delay tau."""
    energy_a, energy_b = _check_pair(a, b)
    overlap = delayed_overlaps(a, b, [tau])[0]
    return float(_visibility_from_overlap(overlap, energy_a, energy_b, balanced))


def visibility_scan(
    a: ComplexEnvelope,
    b: ComplexEnvelope,
    delay_range: Sequence[float] = DEFAULT_DELAY_RANGE_PS,
    steps: int = DEFAULT_SCAN_STEPS,
    balanced: bool = False,
    resolution_ps: float = DEFAULT_RESOLUTION_PS,
) -> VisibilityCurve:
    """Coarse V(tau) scan, then a bounded golden-section refinement around the peak."""
    if steps < 3:
        raise ConfigurationError(f"visibility scan needs at least 3 steps, got {steps}")
    lo, hi = float(delay_range[0]), float(delay_range[1])
    if not lo < hi:
        raise ConfigurationError(f"delay range must be ascending, got ({lo}, {hi})")
    energy_a, energy_b = _check_pair(a, b)

    delays = np.linspace(lo, hi, steps)
    values = _visibility_from_overlap(delayed_overlaps(a, b, delays), energy_a, energy_b, balanced)
    peak = int(np.argmax(values))
    left, right = delays[max(peak - 1, 0)], delays[min(peak + 1, steps - 1)]

    def negative_visibility(tau):
        overlap = delayed_overlaps(a, b, [tau])[0]
        return -float(_visibility_from_overlap(overlap, energy_a, energy_b, balanced))

    refined = minimize_scalar(negative_visibility, bounds=(left, right), method="bounded",
                              options={"xatol": resolution_ps})
    if -refined.fun > values[peak]:
        at = int(np.searchsorted(delays, refined.x))
        delays = np.insert(delays, at, refined.x)
        values = np.insert(values, at, -refined.fun)
    return VisibilityCurve(delays=delays, values=values)


def mode_matching(a: ComplexEnvelope, b: ComplexEnvelope, tau: float = 0.0) -> float:
    """Normalized squared overlap |<delay(a, tau), b>|^2 / (E_a E_b)."""
    energy_a, energy_b = _check_pair(a, b)
    overlap = delayed_overlaps(a, b, [tau])[0]
    return float(min(abs(overlap) ** 2 / (energy_a * energy_b), 1.0))


def mode_matching_max(a: ComplexEnvelope, b: ComplexEnvelope,
                      delay_range: Sequence[float] = DEFAULT_DELAY_RANGE_PS,
                      steps: int = DEFAULT_SCAN_STEPS) -> Tuple[float, float]:
    """Mode matching at the visibility-scan optimum; returns (eta_mm, delay_ps)."""
    curve = visibility_scan(a, b, delay_range, steps, balanced=True)
    return mode_matching(a, b, curve.argmax_delay), curve.argmax_delay


def balance_energy(b: ComplexEnvelope, reference: ComplexEnvelope) -> ComplexEnvelope:
    """Rescale `b` to the energy of `reference`."""
    energy_b = b.energy
    if energy_b == 0:
        raise UndefinedMetricError("cannot balance a zero-energy envelope")
    return b.scaled(math.sqrt(reference.energy / energy_b))


def reshape_efficiency(reshaped: ComplexEnvelope, original: ComplexEnvelope, baseline: float = 0.0) -> float:
    """eta_r = E_r / E_o, each the area under |E|^2 after subtracting `baseline` intensity."""
    if reshaped.grid != original.grid:
        raise ConfigurationError("reshaped and original envelopes live on different grids")
    dt = original.grid.dt
    original_energy = float(np.sum(np.abs(original.values) ** 2 - baseline) * dt)
    if original_energy <= 0:
        raise UndefinedMetricError("original signal has no energy above the baseline")
    reshaped_energy = float(np.sum(np.abs(reshaped.values) ** 2 - baseline) * dt)
    return reshaped_energy / original_energy
