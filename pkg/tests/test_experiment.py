import math

import numpy as np
import pytest

from comb_reshaper import artifacts
from comb_reshaper.config import ExperimentConfig, GridSpec, ReportSpec, ScenarioSpec
from comb_reshaper.experiment import (
    LAB_REFERENCE,
    SUMMARY_FILE,
    ScanPoint,
    build_scenario,
    evaluate_point,
    oracle_check,
    on_scan_boundary,
    oracle_rows,
    run_experiment,
    run_scenario,
)
from comb_reshaper.optimizer import OptimizerConfig, seed_pump
from comb_reshaper.propagation import WaveguideModel
from comb_reshaper.waveform import synthesize

SCENARIO_FILES = (
    "seed_comb.json", "pump_comb.json", "input.csv", "target.csv", "reshaped.csv", "pump.csv",
    "sum_frequency.csv", "visibility.csv", "scan.csv", "trace.csv", "power_sweep.csv", SUMMARY_FILE,
)


def tiny_config(output_dir, scenarios=None):
    if scenarios is None:
        scenarios = (ScenarioSpec("S1_to_S2", "S1", "S2", scale_points=2, delay_points=3),)
    return ExperimentConfig(
        grid=GridSpec(samples=256),
        waveguide=WaveguideModel(z_steps=64),
        optimizer=OptimizerConfig(max_iters=3, seed=5),
        scenarios=scenarios,
        report=ReportSpec(visibility_steps=21, sweep_points=3),
        output_dir=str(output_dir),
    )


@pytest.fixture(scope="module")
def tiny_run(tmp_path_factory):
    return run_experiment(tiny_config(tmp_path_factory.mktemp("run") / "results"))


def test_oracle_passes_with_defaults():
    report = oracle_check()
    assert report.passed
    assert report.thetas.size == 50
    assert report.deviations[0] == 0.0
    assert report.thetas[-1] == pytest.approx(1.5 * math.pi)
    assert report.z_steps == 2048


def test_oracle_flags_coarse_steps_under_mismatch():
    coarse = oracle_check(points=20, z_steps=4, phase_mismatch=2.0)
    fine = oracle_check(points=20, z_steps=512, phase_mismatch=2.0)
    assert not coarse.passed
    assert coarse.max_deviation > 1e-6
    assert coarse.max_deviation > fine.max_deviation


def test_oracle_rows():
    report = oracle_check(points=5)
    columns, data = oracle_rows(report)
    assert columns[0] == "theta_rad"
    assert data.shape == (5, 4)


def test_zero_scenarios_still_write_summary(tmp_path):
    result = run_experiment(tiny_config(tmp_path / "empty", scenarios=()))
    summary = artifacts.read_summary(tmp_path / "empty" / SUMMARY_FILE)
    assert summary["scenario_count"] == 0
    assert summary["scenarios"] == {}
    assert "note" in summary
    assert result.summary["scenario_count"] == 0


def test_run_rejects_zero_threads(tmp_path):
    with pytest.raises(ValueError):
        run_experiment(tiny_config(tmp_path), threads=0)


def test_evaluate_point_with_pump_off(tmp_path):
    config = tiny_config(tmp_path)
    scenario = build_scenario(config, config.scenarios[0])
    pump = synthesize(seed_pump(scenario), scenario.grid)
    point = evaluate_point(scenario, pump, pump_scale=0.0, delay_ps=1.5)
    assert point.eta_r == pytest.approx(1.0, abs=1e-12)
    assert point.v_max == pytest.approx(math.exp(-0.5), abs=1e-3)
    assert point.figure_of_merit == pytest.approx(point.v_max)


def test_run_writes_every_artifact(tiny_run):
    scenario_dir = tiny_run.output_dir / "S1_to_S2"
    for name in SCENARIO_FILES:
        assert (scenario_dir / name).is_file(), name
    assert (tiny_run.output_dir / SUMMARY_FILE).is_file()


def test_artifacts_parse_back(tiny_run):
    scenario_dir = tiny_run.output_dir / "S1_to_S2"
    pump_comb = artifacts.read_comb(scenario_dir / "pump_comb.json")
    assert pump_comb.count == 17
    reshaped = artifacts.read_envelope(scenario_dir / "reshaped.csv")
    assert reshaped.grid.samples == 256
    assert artifacts.read_scan(scenario_dir / "scan.csv").shape == (6, 5)
    assert artifacts.read_trace(scenario_dir / "trace.csv")["iteration"].tolist() == [1, 2, 3]
    sweep = artifacts.read_sweep(scenario_dir / "power_sweep.csv")
    assert len(sweep) == 3
    assert sweep[0] == (0.0, 0.0, 1.0)
    curve = artifacts.read_visibility(scenario_dir / "visibility.csv")
    assert np.all(np.diff(curve.delays) > 0)


def test_scenario_summary(tiny_run):
    summary = artifacts.read_summary(tiny_run.output_dir / "S1_to_S2" / SUMMARY_FILE)
    assert summary["stop_reason"] == "max_iters"
    assert summary["iterations"] == 3
    assert summary["evaluations"] == 4
    assert summary["rng_algorithm"] == "PCG64"
    assert summary["objective_best"] >= summary["objective_seed"]
    assert summary["baseline"]["v_max"] == pytest.approx(math.exp(-0.5), abs=1e-3)
    assert summary["baseline"]["v_at_zero_delay"] < 1e-10
    assert 0.0 <= summary["operating_point"]["v_max"] <= 1.0
    assert summary["lab_reference"]["eta_r"] == LAB_REFERENCE[("S1", "S2")]["eta_r"]
    assert summary["target_eta_mm"] == 0.99
    assert summary["stop_threshold"] == pytest.approx(math.sqrt(0.99))
    assert summary["target_reached"] == (summary["objective_best"] >= summary["stop_threshold"])


def test_summary_headlines_the_optimized_configuration(tiny_run):
    summary = artifacts.read_summary(tiny_run.output_dir / "S1_to_S2" / SUMMARY_FILE)
    optimized = summary["optimized"]
    assert optimized["delay_ps"] == 0.0
    assert optimized["pump_scale"] == pytest.approx(math.pi)
    assert optimized["v_max"] == summary["objective_best"]
    assert optimized["eta_mm"] == pytest.approx(optimized["v_max"] ** 2, rel=1e-9)
    top = tiny_run.summary["scenarios"]["S1_to_S2"]
    assert top["v_max"] == optimized["v_max"]
    assert top["eta_mm"] == optimized["eta_mm"]
    assert top["eta_r"] == summary["operating_point"]["eta_r"]
    assert top["operating_point_v_max"] == summary["operating_point"]["v_max"]


def test_top_level_summary(tiny_run):
    summary = artifacts.read_summary(tiny_run.output_dir / SUMMARY_FILE)
    assert summary["scenario_count"] == 1
    assert set(summary["scenarios"]) == {"S1_to_S2"}
    assert summary["config"]["grid"]["samples"] == 256


def test_runs_are_byte_identical(tmp_path, tiny_run):
    again = run_experiment(tiny_config(tmp_path / "again"), threads=2)
    for name in SCENARIO_FILES:
        first = (tiny_run.output_dir / "S1_to_S2" / name).read_bytes()
        second = (again.output_dir / "S1_to_S2" / name).read_bytes()
        assert first == second, name


def test_on_scan_boundary():
    spec = ScenarioSpec("s", "S1", "S2", pump_scale=2.0, scale_factors=(0.5, 1.5), scale_points=3,
                        delay_range_ps=(-4.0, 4.0), delay_points=5)
    inside = ScanPoint(2.0, 0.0, 0.9, 0.81, 0.7)
    assert not on_scan_boundary(inside, spec)
    assert on_scan_boundary(inside._replace(pump_scale=3.0), spec)
    assert on_scan_boundary(inside._replace(pump_scale=1.0), spec)
    assert on_scan_boundary(inside._replace(delay_ps=-4.0), spec)
    assert on_scan_boundary(inside._replace(delay_ps=4.0), spec)


def test_single_point_axes_are_never_a_boundary():
    spec = ScenarioSpec("s", "S1", "S2", pump_scale=2.0, scale_points=1, delay_points=1)
    assert not on_scan_boundary(ScanPoint(2.0 * spec.scale_factors[0], spec.delay_range_ps[0], 0.9, 0.81, 0.7), spec)


def test_boundary_operating_point_is_flagged(tmp_path, caplog):
    # two scale points: every scan point sits on an edge
    config = tiny_config(tmp_path)
    with caplog.at_level("WARNING", logger="comb_reshaper.experiment"):
        summary = run_scenario(config, config.scenarios[0], tmp_path / "S1_to_S2")
    assert summary["operating_point"]["on_scan_boundary"] is True
    assert "scan boundary" in caplog.text
