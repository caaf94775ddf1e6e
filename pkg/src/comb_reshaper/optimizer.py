"""SPSA search over the pump comb (amplitudes and phases of every line).

Two modes share the same perturbation geometry:

- ``greedy_accept``: perturb all lines at once, keep the candidate only if the
  objective improves.
- ``spsa_gradient``: two-sided simultaneous-perturbation gradient estimate,
  gain-scheduled ascent, projection back into the valid comb space.

Amplitudes are perturbed multiplicatively a * (1 + c * d) and phases
additively phi + c * pi * d, so c is dimensionless for both families.
"""

import functools
import logging
import math
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Tuple, Union

import numpy as np

from comb_reshaper.errors import ConfigurationError, ObjectiveError, ReshaperError
from comb_reshaper.metrics import (
    DEFAULT_DELAY_RANGE_PS,
    DEFAULT_SCAN_STEPS,
    visibility_scan,
)
from comb_reshaper.propagation import WaveguideModel, propagate
from comb_reshaper.waveform import (
    ComplexEnvelope,
    FrequencyComb,
    fit_comb,
    gaussian_pulse,
    synthesize,
    wrap_phase,
)

logger = logging.getLogger(__name__)

# ---------------------------
# Configuration / constants
# ---------------------------
MODE_GREEDY = "greedy_accept"
MODE_GRADIENT = "spsa_gradient"
MODES = (MODE_GREEDY, MODE_GRADIENT)

MASK_BOTH = "both"
MASK_PHASES = "phases"
MASK_AMPLITUDES = "amplitudes"
MASKS = (MASK_BOTH, MASK_PHASES, MASK_AMPLITUDES)

STOP_TARGET = "target_reached"
STOP_STALLED = "stalled"
STOP_MAX_ITERS = "max_iters"
STOP_ABORTED = "aborted"

DEFAULT_MAX_ITERS = 4000
# Spall's recommended exponents
DEFAULT_ALPHA = 0.602
DEFAULT_GAMMA = 0.101
DEFAULT_A0 = 0.2
DEFAULT_A = 50.0
DEFAULT_C0 = 0.1
DEFAULT_TARGET_VMAX = 0.99
DEFAULT_TARGET_ETA_MM = 0.99
SE_TARGET_VMAX = 0.97
DEFAULT_STALL_WINDOW = 300
MAX_CONSECUTIVE_FAILURES = 3

LOG_EVERY = 100  # iterations between DEBUG progress lines


@dataclass(frozen=True)
class OptimizerConfig:
    """SPSA settings; a_k = a0 / (A + k + 1)^alpha, c_k = c0 / (k + 1)^gamma."""

    mode: str = MODE_GREEDY
    max_iters: int = DEFAULT_MAX_ITERS
    a0: float = DEFAULT_A0
    A: float = DEFAULT_A
    alpha: float = DEFAULT_ALPHA
    c0: float = DEFAULT_C0
    gamma: float = DEFAULT_GAMMA
    seed: int = 0
    target_vmax: float = DEFAULT_TARGET_VMAX
    target_eta_mm: Optional[float] = DEFAULT_TARGET_ETA_MM
    stall_window: int = DEFAULT_STALL_WINDOW
    mask: str = MASK_BOTH
    balanced: bool = True

    def __post_init__(self):
        if self.mode not in MODES:
            raise ConfigurationError(f"mode must be one of {MODES}, got {self.mode!r}", field="mode")
        if self.mask not in MASKS:
            raise ConfigurationError(f"mask must be one of {MASKS}, got {self.mask!r}", field="mask")
        if not (isinstance(self.max_iters, (int, np.integer)) and self.max_iters >= 1):
            raise ConfigurationError("max_iters must be an integer >= 1", field="max_iters")
        if not 0 < self.alpha <= 1:
            raise ConfigurationError("alpha must lie in (0, 1]", field="alpha")
        if not 0 < self.gamma < self.alpha:
            raise ConfigurationError("gamma must lie in (0, alpha)", field="gamma")
        if not (self.a0 >= 0 and self.c0 > 0 and self.A >= 0):
            raise ConfigurationError("a0 and A must be >= 0 and c0 > 0", field="a0")
        if not 0 < self.target_vmax <= 1:
            raise ConfigurationError("target_vmax must lie in (0, 1]", field="target_vmax")
        if self.target_eta_mm is not None and not (
            isinstance(self.target_eta_mm, (int, float)) and 0 < self.target_eta_mm <= 1
        ):
            raise ConfigurationError("target_eta_mm must lie in (0, 1] or be null", field="target_eta_mm")
        if not (isinstance(self.stall_window, (int, np.integer)) and self.stall_window >= 1):
            raise ConfigurationError("stall_window must be an integer >= 1", field="stall_window")

    @property
    def stop_threshold(self) -> float:
        """Objective value that ends the search.

        At the visibility argmax eta_mm >= V^2 (equality for balanced V), so
        V >= sqrt(target_eta_mm) guarantees the mode-matching target as well.
        """
        if self.target_eta_mm is None:
            return self.target_vmax
        return max(self.target_vmax, math.sqrt(self.target_eta_mm))

    def gain(self, k: int) -> float:
        return self.a0 / (self.A + k + 1) ** self.alpha

    def perturbation(self, k: int) -> float:
        return self.c0 / (k + 1) ** self.gamma


@dataclass(frozen=True)
class IterationRecord:
    iteration: int
    objective: float
    vmax_so_far: float
    checksum: str
    accepted: bool = False
    failed: bool = False


@dataclass(frozen=True, eq=False)
class OptimizationTrace:
    """Per-iteration records plus the final iterate and the best comb seen."""

    records: Tuple[IterationRecord, ...]
    final_comb: FrequencyComb
    best_comb: FrequencyComb
    best_objective: float
    initial_objective: float
    stop_reason: str
    evaluations: int
    seed: int
    rng_algorithm: str
    failures: Tuple[str, ...] = field(default_factory=tuple)


@dataclass(frozen=True, eq=False)
class Scenario:
    """Everything the objective needs besides the pump comb."""

    signal_in: ComplexEnvelope
    target: ComplexEnvelope
    wg: WaveguideModel
    pump_scale: float
    delay_range: Tuple[float, float] = DEFAULT_DELAY_RANGE_PS
    scan_steps: int = DEFAULT_SCAN_STEPS
    balanced: bool = True

    def __post_init__(self):
        if self.signal_in.grid != self.target.grid:
            raise ConfigurationError("scenario signal and target live on different grids")
        if not (math.isfinite(self.pump_scale) and self.pump_scale >= 0):
            raise ConfigurationError(f"pump_scale must be >= 0, got {self.pump_scale!r}")

    @property
    def grid(self):
        return self.signal_in.grid


Objective = Callable[[FrequencyComb], float]


def objective(pump_comb: FrequencyComb, scenario: Scenario) -> float:
    """Synthesize the pump, propagate, and return v_max against the target."""
    try:
        pump = synthesize(pump_comb, scenario.grid)
        result = propagate(scenario.signal_in, pump, scenario.wg, scenario.pump_scale)
        curve = visibility_scan(result.signal_out, scenario.target, scenario.delay_range,
                                scenario.scan_steps, balanced=scenario.balanced)
    except ReshaperError as exc:
        raise ObjectiveError(f"objective failed: {exc}", comb=pump_comb) from exc
    return curve.v_max


def _active_mask(count: int, mask: str) -> np.ndarray:
    active = np.ones(2 * count)
    if mask == MASK_PHASES:
        active[:count] = 0.0
    elif mask == MASK_AMPLITUDES:
        active[count:] = 0.0
    return active


def _displace(comb: FrequencyComb, step: np.ndarray) -> FrequencyComb:
    """Apply a step in perturbation coordinates and project into the valid comb space."""
    count = comb.count
    amplitudes = np.maximum(comb.amplitudes * (1.0 + step[:count]), 0.0)
    if not np.any(amplitudes > 0):
        # a comb needs one lit line; keep the current amplitudes
        amplitudes = comb.amplitudes
    phases = wrap_phase(comb.phases + np.pi * step[count:])
    return comb.with_lines(amplitudes, phases)


def perturb(comb: FrequencyComb, c_k: float, rng: np.random.Generator,
            mask: str = MASK_BOTH) -> Tuple[FrequencyComb, FrequencyComb, np.ndarray]:
    """Draw a Bernoulli +/-1 direction and return (comb_plus, comb_minus, delta)."""
    if c_k < 0:
        raise ConfigurationError(f"perturbation size must be >= 0, got {c_k!r}")
    delta = 2.0 * rng.integers(0, 2, size=2 * comb.count) - 1.0
    step = c_k * delta * _active_mask(comb.count, mask)
    return _displace(comb, step), _displace(comb, -step), delta


def spsa_gradient(fun: Objective, comb: FrequencyComb, c_k: float, rng: np.random.Generator,
                  mask: str = MASK_BOTH, draws: int = 1) -> np.ndarray:
    """Two-sided SPSA gradient in perturbation coordinates, averaged over `draws`."""
    active = _active_mask(comb.count, mask)
    total = np.zeros(2 * comb.count)
    for _ in range(draws):
        plus, minus, delta = perturb(comb, c_k, rng, mask)
        total += (fun(plus) - fun(minus)) / (2.0 * c_k * delta)
    return total / draws * active


class _Budget:
    """Objective wrapper that counts evaluations and consecutive failures."""

    def __init__(self, fun: Objective):
        self.fun = fun
        self.evaluations = 0
        self.consecutive_failures = 0
        self.failures: List[str] = []

    def __call__(self, comb: FrequencyComb) -> Optional[float]:
        self.evaluations += 1
        try:
            value = float(self.fun(comb))
        except ObjectiveError as exc:
            self.consecutive_failures += 1
            self.failures.append(str(exc))
            logger.warning("objective evaluation %d failed: %s", self.evaluations, exc)
            return None
        self.consecutive_failures = 0
        return value

    @property
    def exhausted(self) -> bool:
        return self.consecutive_failures >= MAX_CONSECUTIVE_FAILURES


def maximize(fun: Objective, initial: FrequencyComb, config: OptimizerConfig) -> OptimizationTrace:
    """Run SPSA on an arbitrary comb objective."""
    rng = np.random.default_rng(config.seed)
    budget = _Budget(fun)
    initial_value = budget(initial)
    if initial_value is None:
        raise ObjectiveError("objective failed on the initial comb", comb=initial)

    current, best, best_value = initial, initial, initial_value
    records: List[IterationRecord] = []
    last_improvement = 0
    stop_reason = STOP_MAX_ITERS
    active = _active_mask(initial.count, config.mask)

    if best_value >= config.stop_threshold:
        stop_reason = STOP_TARGET
    else:
        for k in range(config.max_iters):
            c_k = config.perturbation(k)
            plus, minus, delta = perturb(current, c_k, rng, config.mask)
            accepted = False
            if config.mode == MODE_GREEDY:
                value = budget(plus)
                if value is not None and value > best_value:
                    current, best, best_value = plus, plus, value
                    accepted = True
            else:
                value_plus = budget(plus)
                value_minus = budget(minus) if value_plus is not None else None
                value = None
                if value_plus is not None and value_minus is not None:
                    gradient = (value_plus - value_minus) / (2.0 * c_k * delta) * active
                    current = _displace(current, config.gain(k) * gradient)
                    value = max(value_plus, value_minus)
                    if value > best_value:
                        best, best_value = (plus, value_plus) if value_plus >= value_minus else (minus, value_minus)
                        accepted = True
            if accepted:
                last_improvement = k + 1
            records.append(IterationRecord(
                iteration=k + 1,
                objective=float("nan") if value is None else value,
                vmax_so_far=best_value,
                checksum=current.checksum(),
                accepted=accepted,
                failed=value is None,
            ))
            if (k + 1) % LOG_EVERY == 0:
                logger.debug("iteration %d: objective=%.6f vmax=%.6f", k + 1, records[-1].objective, best_value)
            if budget.exhausted:
                stop_reason = STOP_ABORTED
                logger.error("aborting after %d consecutive objective failures", MAX_CONSECUTIVE_FAILURES)
                break
            if best_value >= config.stop_threshold:
                stop_reason = STOP_TARGET
                break
            if k + 1 - last_improvement >= config.stall_window:
                stop_reason = STOP_STALLED
                break

    logger.info("SPSA (%s) stopped: %s after %d iterations, %d evaluations, vmax=%.6f",
                config.mode, stop_reason, len(records), budget.evaluations, best_value)
    return OptimizationTrace(
        records=tuple(records),
        final_comb=current,
        best_comb=best,
        best_objective=best_value,
        initial_objective=initial_value,
        stop_reason=stop_reason,
        evaluations=budget.evaluations,
        seed=config.seed,
        rng_algorithm=type(rng.bit_generator).__name__,
        failures=tuple(budget.failures),
    )


def run_spsa(initial: FrequencyComb, scenario: Union[Scenario, Objective], config: OptimizerConfig) -> OptimizationTrace:
    """Optimize the pump comb for a scenario (or any comb objective)."""
    if isinstance(scenario, Scenario):
        fun = functools.partial(objective, scenario=scenario)
    else:
        fun = scenario
    return maximize(fun, initial, config)


def seed_pump(scenario: Scenario, template: Optional[FrequencyComb] = None) -> FrequencyComb:
    """Transform-limited Gaussian pump matched to the signal duration, flat phase.

    The Gaussian shares the signal's RMS intensity width (T0 = sqrt(2) * rms).
    A flat-phase comb peaks at t = 0, so the Gaussian is fitted there and the
    synthesized peak modulus of the flat-phase comb is normalized to 1.
    """
    if template is None:
        template = FrequencyComb.flat()
    signal = scenario.signal_in
    width = math.sqrt(2.0) * signal.rms_width_ps()
    if width <= 0:
        raise ConfigurationError("seed pump needs a signal with non-zero duration")
    gaussian = gaussian_pulse(scenario.grid, width, 0.0, template.carrier_nm)
    fitted = fit_comb(gaussian, template)
    flat = fitted.with_lines(fitted.amplitudes, np.zeros(fitted.count))
    peak = np.max(np.abs(synthesize(flat, scenario.grid).values))
    return flat.with_lines(flat.amplitudes / peak, flat.phases)


def effective_target(target_tag: str, configured: Optional[float], default: float = DEFAULT_TARGET_VMAX) -> float:
    """Per-scenario stopping threshold; exponential-pulse targets are capped at 0.97."""
    if configured is not None:
        return configured
    return min(SE_TARGET_VMAX, default) if target_tag == "Se" else default


def effective_eta_target(target_tag: str, configured: Optional[float]) -> Optional[float]:
    """Exponential-pulse targets are held to the visibility threshold only."""
    return None if target_tag == "Se" else configured


def distance(a: FrequencyComb, b: FrequencyComb) -> np.ndarray:
    """Per-coordinate distance; phase differences are wrapped."""
    amplitude = np.abs(a.amplitudes - b.amplitudes)
    phase = np.abs(wrap_phase(a.phases - b.phases))
    return np.concatenate([amplitude, phase])

