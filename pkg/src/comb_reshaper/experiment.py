"""End-to-end scenario runs and the CW oracle self-test.

For every scenario: optimize the pump comb from the Gaussian seed, scan pump
scale x signal delay around the optimizer's operating point, pick the point
maximizing v_max * eta_r, sweep the pump power there, and write all artifacts
into ``<output_dir>/<scenario name>/``. Summaries headline v_max and eta_mm of
the optimized configuration (nominal scale, zero delay) and eta_r of the
selected operating point. The top-level ``summary.json`` is written last.
"""

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Dict, List, NamedTuple, Optional, Tuple

import numpy as np

from comb_reshaper import artifacts
from comb_reshaper.config import ExperimentConfig, ScenarioSpec, to_dict
from comb_reshaper.metrics import mode_matching, reshape_efficiency, visibility, visibility_scan
from comb_reshaper.optimizer import OptimizationTrace, Scenario, run_spsa, seed_pump
from comb_reshaper.propagation import WaveguideModel, cw_efficiency, power_sweep, propagate
from comb_reshaper.waveform import ComplexEnvelope, TimeGrid, delay, make_signal, squelch_phase, synthesize

logger = logging.getLogger(__name__)

# ---------------------------
# Configuration / constants
# ---------------------------
SUMMARY_FILE = "summary.json"
ORACLE_POINTS = 50
ORACLE_THETA_MAX = 1.5 * math.pi
ORACLE_THRESHOLD = 1e-6
ORACLE_FLOOR = 1e-12

# Laboratory values measured with real hardware; reported next to the
# simulated numbers, never compared against them.
LAB_REFERENCE = {
    ("S1", "S2"): {"eta_r": 0.896, "v_min_vs_input": 0.07},
    ("S2", "S1"): {"eta_r": 0.616, "v_min_vs_input": 0.10},
    ("S1", "Se"): {"eta_r": 0.71, "v_max": 0.91},
    ("Se", "S1"): {"eta_r": 0.845, "v_max": 0.96},
}
LAB_REFERENCE_NOTE = "context only: hardware-limited laboratory values, not simulation targets"


class ScanPoint(NamedTuple):
    pump_scale: float
    delay_ps: float
    v_max: float
    eta_mm: float
    eta_r: float

    @property
    def figure_of_merit(self) -> float:
        return self.v_max * self.eta_r


@dataclass(frozen=True)
class ExperimentResult:
    output_dir: Path
    summary: Dict[str, Any]


@dataclass(frozen=True, eq=False)
class OracleReport:
    thetas: np.ndarray
    numerical: np.ndarray
    analytic: np.ndarray
    deviations: np.ndarray
    threshold: float
    z_steps: int
    phase_mismatch: float

    @property
    def max_deviation(self) -> float:
        return float(np.max(self.deviations))

    @property
    def passed(self) -> bool:
        return self.max_deviation < self.threshold


# ---------------------------
# Scenario pieces
# ---------------------------
def build_scenario(config: ExperimentConfig, spec: ScenarioSpec) -> Scenario:
    grid = config.grid.time_grid()
    signal_in = make_signal(config.shapes.shape(spec.input), grid, config.carriers_nm.signal)
    target = make_signal(config.shapes.shape(spec.target), grid, config.carriers_nm.signal)
    return Scenario(
        signal_in=signal_in,
        target=target,
        wg=config.waveguide,
        pump_scale=spec.pump_scale,
        delay_range=config.report.visibility_range_ps,
        scan_steps=config.report.visibility_steps,
        balanced=config.optimizer.balanced,
    )


def evaluate_point(scenario: Scenario, pump: ComplexEnvelope, pump_scale: float, delay_ps: float) -> ScanPoint:
    """Delay the signal against the pump, propagate, and score the reshaped output."""
    shifted = delay(scenario.signal_in, delay_ps)
    out = propagate(shifted, pump, scenario.wg, pump_scale).signal_out
    curve = visibility_scan(out, scenario.target, scenario.delay_range, scenario.scan_steps,
                            balanced=scenario.balanced)
    return ScanPoint(
        pump_scale=float(pump_scale),
        delay_ps=float(delay_ps),
        v_max=curve.v_max,
        eta_mm=mode_matching(out, scenario.target, curve.argmax_delay),
        eta_r=reshape_efficiency(out, scenario.signal_in),
    )


def scan_operating_points(scenario: Scenario, pump: ComplexEnvelope, spec: ScenarioSpec,
                          threads: int = 1) -> List[ScanPoint]:
    """pump_scale x delay grid; rows ordered scale-major regardless of thread count."""
    scales = spec.pump_scale * np.linspace(spec.scale_factors[0], spec.scale_factors[1], spec.scale_points)
    delays = np.linspace(spec.delay_range_ps[0], spec.delay_range_ps[1], spec.delay_points)
    grid_points = [(float(s), float(d)) for s in scales for d in delays]
    with ThreadPoolExecutor(max_workers=max(1, threads)) as executor:
        return list(executor.map(lambda p: evaluate_point(scenario, pump, *p), grid_points))


def on_scan_boundary(point: ScanPoint, spec: ScenarioSpec) -> bool:
    """True when `point` sits on an edge of a scan axis that has more than one point."""
    scale_lo, scale_hi = (spec.pump_scale * f for f in spec.scale_factors)
    delay_lo, delay_hi = spec.delay_range_ps
    on_scale = spec.scale_points > 1 and (math.isclose(point.pump_scale, scale_lo)
                                          or math.isclose(point.pump_scale, scale_hi))
    on_delay = spec.delay_points > 1 and (math.isclose(point.delay_ps, delay_lo, abs_tol=1e-12)
                                          or math.isclose(point.delay_ps, delay_hi, abs_tol=1e-12))
    return on_scale or on_delay


def _pair_metrics(a: ComplexEnvelope, b: ComplexEnvelope, scenario: Scenario) -> Dict[str, float]:
    balanced = visibility_scan(a, b, scenario.delay_range, scenario.scan_steps, balanced=True)
    raw = visibility_scan(a, b, scenario.delay_range, scenario.scan_steps, balanced=False)
    return {
        "v_max": balanced.v_max if scenario.balanced else raw.v_max,
        "v_max_balanced": balanced.v_max,
        "v_max_raw": raw.v_max,
        "v_at_zero_delay": visibility(a, b, 0.0, balanced=scenario.balanced),
        "argmax_delay_ps": balanced.argmax_delay,
        "eta_mm": mode_matching(a, b, balanced.argmax_delay),
    }


def run_scenario(config: ExperimentConfig, spec: ScenarioSpec, out_dir: Path, threads: int = 1) -> Dict[str, Any]:
    logger.info("scenario %s: %s -> %s", spec.name, spec.input, spec.target)
    scenario = build_scenario(config, spec)
    optimizer_config = spec.optimizer_config(config.optimizer)
    template = config.grid.comb_template(config.carriers_nm.pump)
    seed = seed_pump(scenario, template)
    trace: OptimizationTrace = run_spsa(seed, scenario, optimizer_config)
    if trace.stop_reason == "stalled":
        logger.warning("scenario %s stalled at v_max=%.6f (target %.3f)", spec.name,
                       trace.best_objective, optimizer_config.stop_threshold)

    pump = synthesize(trace.best_comb, scenario.grid)
    optimized = evaluate_point(scenario, pump, spec.pump_scale, 0.0)
    scan = scan_operating_points(scenario, pump, spec, threads)
    best = max(scan, key=lambda p: p.figure_of_merit)
    logger.info("scenario %s: operating point scale=%.4f delay=%.3f ps v_max=%.5f eta_r=%.4f",
                spec.name, best.pump_scale, best.delay_ps, best.v_max, best.eta_r)
    boundary = on_scan_boundary(best, spec)
    if boundary:
        logger.warning("scenario %s: operating point lies on the scan boundary, widen scale_factors or "
                       "delay_range_ps to bracket it", spec.name)

    shifted = delay(scenario.signal_in, best.delay_ps)
    result = propagate(shifted, pump, scenario.wg, best.pump_scale)
    reshaped = result.signal_out
    curve = visibility_scan(reshaped, scenario.target, scenario.delay_range, scenario.scan_steps,
                            balanced=scenario.balanced)
    sweep_scales = np.linspace(0.0, config.report.sweep_max_factor * spec.pump_scale, config.report.sweep_points)
    sweep = power_sweep(shifted, pump, scenario.wg, sweep_scales)

    out_dir.mkdir(parents=True, exist_ok=True)
    squelch = config.report.phase_squelch
    artifacts.write_comb(out_dir / "seed_comb.json", seed)
    artifacts.write_comb(out_dir / "pump_comb.json", trace.best_comb)
    for name, env in (("input", scenario.signal_in), ("target", scenario.target), ("reshaped", reshaped),
                      ("pump", pump), ("sum_frequency", result.sf_out)):
        artifacts.write_envelope(out_dir / f"{name}.csv", env, squelch_phase(env, squelch))
    artifacts.write_visibility(out_dir / "visibility.csv", curve)
    artifacts.write_scan(out_dir / "scan.csv", scan)
    artifacts.write_trace(out_dir / "trace.csv", trace)
    artifacts.write_sweep(out_dir / "power_sweep.csv", sweep)

    summary = {
        "name": spec.name,
        "input": spec.input,
        "target": spec.target,
        "stop_reason": trace.stop_reason,
        "stalled": trace.stop_reason == "stalled",
        "target_vmax": optimizer_config.target_vmax,
        "target_eta_mm": optimizer_config.target_eta_mm,
        "stop_threshold": optimizer_config.stop_threshold,
        "target_reached": trace.best_objective >= optimizer_config.stop_threshold,
        "iterations": len(trace.records),
        "evaluations": trace.evaluations,
        "failed_evaluations": len(trace.failures),
        "seed": trace.seed,
        "rng_algorithm": trace.rng_algorithm,
        "mode": optimizer_config.mode,
        "mask": optimizer_config.mask,
        "balanced_visibility": scenario.balanced,
        "objective_seed": trace.initial_objective,
        "objective_best": trace.best_objective,
        "comb_checksum": trace.best_comb.checksum(),
        "baseline": _pair_metrics(scenario.signal_in, scenario.target, scenario),
        "optimized": {
            "pump_scale": optimized.pump_scale,
            "delay_ps": optimized.delay_ps,
            "v_max": optimized.v_max,
            "eta_mm": optimized.eta_mm,
            "eta_r": optimized.eta_r,
        },
        "operating_point": {
            "pump_scale": best.pump_scale,
            "delay_ps": best.delay_ps,
            "eta_r": best.eta_r,
            "selection": "argmax of v_max * eta_r over the pump_scale x delay scan",
            "on_scan_boundary": boundary,
            **_pair_metrics(reshaped, scenario.target, scenario),
        },
        "v_vs_input": _pair_metrics(reshaped, scenario.signal_in, scenario),
        "lab_reference": {"note": LAB_REFERENCE_NOTE,
                          **LAB_REFERENCE.get((spec.input, spec.target), {})},
    }
    artifacts.write_summary(out_dir / SUMMARY_FILE, summary)
    logger.info("scenario %s finished: %s, v_max=%.5f eta_mm=%.5f", spec.name, trace.stop_reason,
                optimized.v_max, optimized.eta_mm)
    return summary


def run_experiment(config: ExperimentConfig, threads: int = 1) -> ExperimentResult:
    """Run every configured scenario and write the top-level summary last."""
    if threads < 1:
        raise ValueError(f"threads must be >= 1, got {threads}")
    output_dir = Path(config.output_dir)
    output_dir.mkdir(parents=True, exist_ok=True)
    scenario_summaries = {}
    for spec in config.scenarios:
        scenario_summaries[spec.name] = run_scenario(config, spec, output_dir / spec.name, threads)

    summary: Dict[str, Any] = {
        "schema_version": config.schema_version,
        "scenario_count": len(config.scenarios),
        "scenarios": {
            name: {
                "stop_reason": s["stop_reason"],
                "target_reached": s["target_reached"],
                "v_max": s["optimized"]["v_max"],
                "eta_mm": s["optimized"]["eta_mm"],
                "eta_r": s["operating_point"]["eta_r"],
                "operating_point_v_max": s["operating_point"]["v_max"],
            }
            for name, s in scenario_summaries.items()
        },
        "config": to_dict(config),
    }
    if not config.scenarios:
        summary["note"] = "zero scenarios configured; nothing was run"
        logger.info("no scenarios configured")
    artifacts.write_summary(output_dir / SUMMARY_FILE, summary)
    return ExperimentResult(output_dir=output_dir, summary=summary)


# ---------------------------
# CW oracle
# ---------------------------
def oracle_check(points: int = ORACLE_POINTS, theta_max: float = ORACLE_THETA_MAX,
                 z_steps: Optional[int] = None, phase_mismatch: float = 0.0,
                 threshold: float = ORACLE_THRESHOLD, grid: Optional[TimeGrid] = None) -> OracleReport:
    """Compare the split-step engine on flat (CW) fields with the analytic efficiency.

    Walk-off and dispersion are off. Phase-matched CW coupling is split exactly,
    so a coarse `z_steps` only shows up as a deviation with `phase_mismatch` set.
    """
    grid = grid or TimeGrid()
    wg = WaveguideModel(walkoff_signal_ps=0.0, walkoff_sf_ps=0.0, phase_mismatch=phase_mismatch,
                        **({"z_steps": z_steps} if z_steps is not None else {}))
    ones = np.ones(grid.samples)
    signal = ComplexEnvelope(grid, ones)
    pump = ComplexEnvelope(grid, ones)
    thetas = np.linspace(0.0, theta_max, points)
    sweep = power_sweep(signal, pump, wg, [wg.scale_for_theta(theta) for theta in thetas])
    numerical = np.array([p.sf_fraction for p in sweep])
    analytic = np.array([cw_efficiency(theta, phase_mismatch * wg.length) for theta in thetas])
    deviations = np.abs(numerical - analytic) / np.maximum(analytic, ORACLE_FLOOR)
    report = OracleReport(thetas, numerical, analytic, deviations, threshold, wg.z_steps, phase_mismatch)
    logger.info("oracle check: %d points, z_steps=%d, mismatch=%g, max deviation %.3g (%s)",
                points, wg.z_steps, phase_mismatch, report.max_deviation, "pass" if report.passed else "FAIL")
    return report


def oracle_rows(report: OracleReport) -> Tuple[Tuple[str, ...], np.ndarray]:
    return (("theta_rad", "sf_numerical", "sf_analytic", "relative_deviation"),
            np.column_stack([report.thetas, report.numerical, report.analytic, report.deviations]))
