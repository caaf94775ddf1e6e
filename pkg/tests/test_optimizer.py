import math

import numpy as np
import pytest

from comb_reshaper.errors import ConfigurationError, ObjectiveError
from comb_reshaper.metrics import visibility_scan
from comb_reshaper.optimizer import (
    MODE_GRADIENT,
    MASK_AMPLITUDES,
    MASK_PHASES,
    STOP_ABORTED,
    STOP_MAX_ITERS,
    STOP_STALLED,
    STOP_TARGET,
    OptimizerConfig,
    Scenario,
    distance,
    effective_eta_target,
    effective_target,
    maximize,
    objective,
    perturb,
    run_spsa,
    seed_pump,
    spsa_gradient,
)
from comb_reshaper.propagation import WaveguideModel
from comb_reshaper.waveform import FrequencyComb, SignalShape, TimeGrid, make_signal, synthesize, wrap_phase

LINES = 5
FULL_LINES = 17


@pytest.fixture
def start():
    return FrequencyComb.flat(count=LINES)


@pytest.fixture
def goal():
    rng = np.random.default_rng(42)
    return FrequencyComb(rng.uniform(0.5, 1.5, LINES), rng.uniform(-1.0, 1.0, LINES))


def log_quadratic(goal):
    """Peak 0 at `goal`; unit curvature in perturbation coordinates for both families."""
    def fun(comb):
        amplitude = np.log(comb.amplitudes / goal.amplitudes)
        phase = (comb.phases - goal.phases) / np.pi
        return -float(np.sum(amplitude ** 2) + np.sum(phase ** 2))
    return fun


def plain_quadratic(goal):
    def fun(comb):
        return -float(np.sum((comb.amplitudes - goal.amplitudes) ** 2) + np.sum((comb.phases - goal.phases) ** 2))
    return fun


@pytest.fixture(scope="module")
def small_scenario():
    grid = TimeGrid(samples=256)
    return Scenario(
        signal_in=make_signal(SignalShape("S1"), grid),
        target=make_signal(SignalShape("S2"), grid),
        wg=WaveguideModel(z_steps=64),
        pump_scale=math.pi,
    )


@pytest.mark.parametrize("kwargs, field", [
    ({"mode": "newton"}, "mode"),
    ({"mask": "lines"}, "mask"),
    ({"max_iters": 0}, "max_iters"),
    ({"max_iters": 2.5}, "max_iters"),
    ({"alpha": 0.0}, "alpha"),
    ({"gamma": 0.7}, "gamma"),
    ({"c0": 0.0}, "a0"),
    ({"target_vmax": 1.5}, "target_vmax"),
    ({"target_eta_mm": 0.0}, "target_eta_mm"),
    ({"target_eta_mm": 1.5}, "target_eta_mm"),
    ({"stall_window": 0}, "stall_window"),
])
def test_config_rejects_invalid_settings(kwargs, field):
    with pytest.raises(ConfigurationError) as excinfo:
        OptimizerConfig(**kwargs)
    assert excinfo.value.field == field


def test_gain_schedules():
    config = OptimizerConfig()
    assert config.gain(0) == pytest.approx(0.2 / 51 ** 0.602)
    assert config.perturbation(0) == pytest.approx(0.1)
    assert config.perturbation(9) == pytest.approx(0.1 / 10 ** 0.101)
    assert config.gain(100) < config.gain(10)


def test_perturb_with_zero_size_is_identity(start):
    plus, minus, delta = perturb(start, 0.0, np.random.default_rng(0))
    for comb in (plus, minus):
        np.testing.assert_array_equal(comb.amplitudes, start.amplitudes)
        np.testing.assert_array_equal(comb.phases, start.phases)
    assert set(np.unique(delta)) <= {-1.0, 1.0}


def test_perturb_geometry(start):
    plus, minus, delta = perturb(start, 0.1, np.random.default_rng(1))
    np.testing.assert_allclose(plus.amplitudes, 1.0 + 0.1 * delta[:LINES])
    np.testing.assert_allclose(minus.amplitudes, 1.0 - 0.1 * delta[:LINES])
    np.testing.assert_allclose(plus.phases, 0.1 * np.pi * delta[LINES:])
    np.testing.assert_allclose(minus.phases, -0.1 * np.pi * delta[LINES:])


def test_perturb_is_deterministic_per_seed(start):
    first = perturb(start, 0.1, np.random.default_rng(3))
    second = perturb(start, 0.1, np.random.default_rng(3))
    np.testing.assert_array_equal(first[2], second[2])
    np.testing.assert_array_equal(first[0].phases, second[0].phases)


def test_perturb_keeps_amplitudes_valid(start):
    rng = np.random.default_rng(4)
    for _ in range(50):
        plus, minus, _ = perturb(start, 2.0, rng)
        for comb in (plus, minus):
            assert np.all(comb.amplitudes >= 0.0)
            assert np.any(comb.amplitudes > 0.0)
            assert np.all(comb.phases >= -np.pi) and np.all(comb.phases < np.pi)


def test_perturb_masks(start):
    plus, _, _ = perturb(start, 0.1, np.random.default_rng(5), mask=MASK_PHASES)
    np.testing.assert_array_equal(plus.amplitudes, start.amplitudes)
    assert np.any(plus.phases != 0.0)
    plus, _, _ = perturb(start, 0.1, np.random.default_rng(5), mask=MASK_AMPLITUDES)
    np.testing.assert_array_equal(plus.phases, start.phases)
    assert np.any(plus.amplitudes != 1.0)


def test_perturb_rejects_negative_size(start):
    with pytest.raises(ConfigurationError):
        perturb(start, -0.1, np.random.default_rng(0))


def test_gradient_estimate_matches_analytic(start, goal):
    comb = start
    estimate = spsa_gradient(plain_quadratic(goal), comb, 0.01, np.random.default_rng(9), draws=10000)
    analytic = np.concatenate([
        -2.0 * (comb.amplitudes - goal.amplitudes) * comb.amplitudes,
        -2.0 * np.pi * (comb.phases - goal.phases),
    ])
    assert np.linalg.norm(estimate - analytic) / np.linalg.norm(analytic) < 0.1


def test_gradient_mode_converges_on_quadratic(start, goal):
    config = OptimizerConfig(mode=MODE_GRADIENT, max_iters=2000, stall_window=2000, target_vmax=1.0, seed=3)
    trace = maximize(log_quadratic(goal), start, config)
    assert trace.stop_reason == STOP_MAX_ITERS
    assert len(trace.records) == 2000
    assert np.max(distance(trace.final_comb, goal)) < config.c0
    assert trace.best_objective > trace.initial_objective


def test_gradient_mode_converges_on_full_size_comb():
    # J = -|theta - theta*|^2 over all 34 coordinates, standard gains
    rng = np.random.default_rng(17)
    goal = FrequencyComb(rng.uniform(0.5, 1.5, FULL_LINES), rng.uniform(-1.0, 1.0, FULL_LINES))
    config = OptimizerConfig(mode=MODE_GRADIENT, max_iters=2000, stall_window=2000, target_vmax=1.0, seed=3)
    trace = maximize(log_quadratic(goal), FrequencyComb.flat(count=FULL_LINES), config)
    assert len(trace.records) == 2000
    assert np.max(distance(trace.final_comb, goal)) < config.c0


def step_coordinates(comb, step):
    count = comb.count
    return comb.with_lines(comb.amplitudes * (1.0 + step[:count]), wrap_phase(comb.phases + np.pi * step[count:]))


def central_differences(fun, comb, h=1e-6):
    gradient = np.zeros(2 * comb.count)
    for i in range(gradient.size):
        unit = np.zeros(gradient.size)
        unit[i] = h
        gradient[i] = (fun(step_coordinates(comb, unit)) - fun(step_coordinates(comb, -unit))) / (2.0 * h)
    return gradient


def test_gradient_estimate_matches_finite_differences_per_coordinate():
    signs = np.where(np.random.default_rng(21).integers(0, 2, 2 * FULL_LINES) == 1, 1.0, -1.0)
    # every coordinate sits 0.1 from the optimum, so all gradient components are 0.2 in size
    goal = FrequencyComb(np.exp(0.1 * signs[:FULL_LINES]), 0.1 * np.pi * signs[FULL_LINES:])
    comb = FrequencyComb.flat(count=FULL_LINES)
    fun = log_quadratic(goal)
    reference = central_differences(fun, comb)
    np.testing.assert_allclose(np.abs(reference), 0.2, rtol=1e-6)

    draws = 200
    estimate = spsa_gradient(fun, comb, 0.01, np.random.default_rng(8), draws=draws)
    # each coordinate picks up the other 33 components through +/-1 cross terms
    spread = np.sqrt((np.sum(reference ** 2) - reference ** 2) / draws)
    assert np.all(np.abs(estimate - reference) < 4.0 * spread)


def test_greedy_mode_is_monotonic(start, goal):
    config = OptimizerConfig(max_iters=200, stall_window=200, target_vmax=1.0, seed=2)
    trace = maximize(log_quadratic(goal), start, config)
    best = [record.vmax_so_far for record in trace.records]
    assert all(b >= a for a, b in zip(best, best[1:]))
    assert trace.best_objective == best[-1]
    assert trace.best_objective > trace.initial_objective
    assert trace.evaluations == 1 + len(trace.records)
    for record in trace.records:
        if record.accepted:
            assert record.objective == record.vmax_so_far


def test_zero_gain_leaves_comb_unchanged(start, goal):
    config = OptimizerConfig(mode=MODE_GRADIENT, a0=0.0, max_iters=1, target_vmax=1.0)
    trace = maximize(log_quadratic(goal), start, config)
    np.testing.assert_allclose(trace.final_comb.amplitudes, start.amplitudes)
    np.testing.assert_allclose(trace.final_comb.phases, start.phases)


def test_stops_immediately_when_initial_comb_meets_target(start):
    trace = maximize(lambda comb: 0.995, start, OptimizerConfig(target_vmax=0.99))
    assert trace.stop_reason == STOP_TARGET
    assert trace.records == ()
    assert trace.evaluations == 1
    assert trace.best_comb is start


def test_stop_threshold_covers_mode_matching():
    assert OptimizerConfig().stop_threshold == pytest.approx(math.sqrt(0.99))
    assert OptimizerConfig(target_eta_mm=None).stop_threshold == 0.99
    assert OptimizerConfig(target_vmax=0.999).stop_threshold == 0.999
    assert OptimizerConfig(target_vmax=0.97, target_eta_mm=None).stop_threshold == 0.97


def test_visibility_target_alone_does_not_stop(start):
    # 0.992 clears target_vmax but eta_mm = 0.992^2 < 0.99
    trace = maximize(lambda comb: 0.992, start, OptimizerConfig(max_iters=10, stall_window=5))
    assert trace.stop_reason == STOP_STALLED
    trace = maximize(lambda comb: 0.992, start, OptimizerConfig(max_iters=10, target_eta_mm=None))
    assert trace.stop_reason == STOP_TARGET


def test_stalls_without_improvement(start):
    trace = maximize(lambda comb: 0.5, start, OptimizerConfig(max_iters=100, stall_window=5))
    assert trace.stop_reason == STOP_STALLED
    assert len(trace.records) == 5
    assert not any(record.accepted for record in trace.records)


def test_aborts_after_consecutive_failures(start):
    calls = []

    def flaky(comb):
        calls.append(comb)
        if len(calls) > 1:
            raise ObjectiveError("propagation blew up", comb=comb)
        return 0.2

    trace = maximize(flaky, start, OptimizerConfig(max_iters=50))
    assert trace.stop_reason == STOP_ABORTED
    assert len(trace.records) == 3
    assert all(record.failed for record in trace.records)
    assert all(math.isnan(record.objective) for record in trace.records)
    assert len(trace.failures) == 3
    assert trace.best_objective == 0.2


def test_failure_on_initial_comb_raises(start):
    def broken(comb):
        raise ObjectiveError("no", comb=comb)

    with pytest.raises(ObjectiveError):
        maximize(broken, start, OptimizerConfig())


def test_trace_records_rng(start):
    trace = maximize(lambda comb: 0.5, start, OptimizerConfig(max_iters=2, seed=11))
    assert trace.seed == 11
    assert trace.rng_algorithm == "PCG64"


def test_objective_with_pump_off_is_baseline(small_scenario):
    scenario = Scenario(small_scenario.signal_in, small_scenario.target, small_scenario.wg, pump_scale=0.0)
    baseline = visibility_scan(scenario.signal_in, scenario.target, balanced=True).v_max
    assert objective(seed_pump(scenario), scenario) == pytest.approx(baseline, abs=1e-12)
    assert baseline == pytest.approx(math.exp(-0.5), abs=1e-3)


def test_objective_is_invariant_to_scale_trade(small_scenario):
    comb = seed_pump(small_scenario)
    doubled = comb.with_lines(2.0 * comb.amplitudes, comb.phases)
    halved = Scenario(small_scenario.signal_in, small_scenario.target, small_scenario.wg,
                      pump_scale=small_scenario.pump_scale / 2.0)
    assert objective(doubled, halved) == pytest.approx(objective(comb, small_scenario), abs=1e-9)


def test_objective_wraps_failures(small_scenario):
    mismatched = FrequencyComb.flat(spacing_ghz=25.0)
    with pytest.raises(ObjectiveError) as excinfo:
        objective(mismatched, small_scenario)
    assert excinfo.value.comb is mismatched


def test_run_spsa_is_deterministic(small_scenario):
    config = OptimizerConfig(max_iters=20, seed=7, target_vmax=1.0)
    initial = seed_pump(small_scenario)
    first = run_spsa(initial, small_scenario, config)
    second = run_spsa(initial, small_scenario, config)
    assert first.records == second.records
    np.testing.assert_array_equal(first.best_comb.amplitudes, second.best_comb.amplitudes)
    np.testing.assert_array_equal(first.best_comb.phases, second.best_comb.phases)
    assert first.best_objective >= first.initial_objective


def test_run_spsa_accepts_plain_callable(start, goal):
    trace = run_spsa(start, log_quadratic(goal), OptimizerConfig(max_iters=10, target_vmax=1.0))
    assert len(trace.records) == 10


def test_seed_pump_is_single_unit_peak(small_scenario):
    comb = seed_pump(small_scenario)
    assert np.all(comb.phases == 0.0)
    magnitude = np.abs(synthesize(comb, small_scenario.grid).values)
    assert magnitude.max() == pytest.approx(1.0)
    above = magnitude > 0.01
    rising = magnitude > np.roll(magnitude, 1)
    falling = magnitude >= np.roll(magnitude, -1)
    assert np.count_nonzero(above & rising & falling) == 1
    peak_time = small_scenario.grid.t[int(np.argmax(magnitude))]
    assert abs(peak_time) <= small_scenario.grid.dt


def test_seed_pump_for_asymmetric_signal(small_scenario):
    grid = small_scenario.grid
    scenario = Scenario(make_signal(SignalShape("Se"), grid), small_scenario.target, small_scenario.wg, math.pi)
    comb = seed_pump(scenario)
    assert np.all(comb.phases == 0.0)
    magnitude = np.abs(synthesize(comb, grid).values)
    assert magnitude.max() == pytest.approx(1.0, abs=1e-12)
    assert abs(grid.t[int(np.argmax(magnitude))]) <= grid.dt


def test_scenario_validation(small_scenario):
    other = make_signal(SignalShape("S2"), TimeGrid(samples=512))
    with pytest.raises(ConfigurationError):
        Scenario(small_scenario.signal_in, other, small_scenario.wg, math.pi)
    with pytest.raises(ConfigurationError):
        Scenario(small_scenario.signal_in, small_scenario.target, small_scenario.wg, -1.0)


@pytest.mark.parametrize("tag, configured, default, expected", [
    ("Se", None, 0.99, 0.97),
    ("S1", None, 0.99, 0.99),
    ("S2", None, 0.95, 0.95),
    ("Se", None, 0.9, 0.9),
    ("Se", 0.95, 0.99, 0.95),
])
def test_effective_target(tag, configured, default, expected):
    assert effective_target(tag, configured, default) == expected


def test_effective_eta_target():
    assert effective_eta_target("S1", 0.99) == 0.99
    assert effective_eta_target("S2", None) is None
    assert effective_eta_target("Se", 0.99) is None


def test_distance_wraps_phases():
    a = FrequencyComb([1.0, 2.0], [np.pi - 0.1, 0.0])
    b = FrequencyComb([1.5, 2.0], [-np.pi + 0.1, 0.0])
    np.testing.assert_allclose(distance(a, b), [0.5, 0.0, 0.2, 0.0], atol=1e-12)
