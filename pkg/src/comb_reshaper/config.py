"""Experiment configuration: JSON document <-> frozen dataclasses.

Layout (``schema_version`` 1)::

    {
      "schema_version": 1,
      "grid": {...}, "carriers_nm": {...}, "shapes": {...},
      "waveguide": {...}, "optimizer": {...},
      "scenarios": [{...}, ...], "report": {...},
      "output_dir": "results"
    }

Every section is optional except ``schema_version``; missing keys take the
module defaults. `collect_diagnostics` reports every problem it can find with
a dotted field path; `from_dict` refuses a document with any diagnostic.
"""

import json
import logging
import math
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Any, Dict, List, NamedTuple, Optional, Tuple, Union

from comb_reshaper.errors import ConfigurationError, ReshaperError
from comb_reshaper.optimizer import OptimizerConfig, effective_eta_target, effective_target
from comb_reshaper.propagation import MIN_CONVERGED_Z_STEPS, WaveguideModel
from comb_reshaper.waveform import (
    DEFAULT_COMB_LINES,
    DEFAULT_LINE_SPACING_GHZ,
    DEFAULT_MODE_WIDTH_PS,
    DEFAULT_SAMPLES,
    DEFAULT_SE_RISE_PS,
    DEFAULT_SE_TAU_PS,
    DEFAULT_SQUELCH_FRACTION,
    PUMP_CARRIER_NM,
    SHAPE_TAGS,
    SIGNAL_CARRIER_NM,
    FrequencyComb,
    SignalShape,
    TimeGrid,
    check_comb_grid,
    make_signal,
)

logger = logging.getLogger(__name__)

# ---------------------------
# Configuration / constants
# ---------------------------
SCHEMA_VERSION = 1
DEFAULT_OUTPUT_DIR = "results"

# theta = pi at the unit pump peak: full over-conversion
DEFAULT_PUMP_SCALE = math.pi
DEFAULT_SCALE_FACTORS = (0.8, 1.2)
DEFAULT_SCALE_POINTS = 21
DEFAULT_SCAN_DELAY_PS = (-5.0, 5.0)
DEFAULT_SCAN_DELAY_POINTS = 51

DEFAULT_VISIBILITY_RANGE_PS = (-25.0, 25.0)
DEFAULT_VISIBILITY_STEPS = 201
DEFAULT_SWEEP_POINTS = 41
DEFAULT_SWEEP_MAX_FACTOR = 2.0

TOP_LEVEL_KEYS = ("schema_version", "grid", "carriers_nm", "shapes", "waveguide", "optimizer",
                  "scenarios", "report", "output_dir")


class Diagnostic(NamedTuple):
    field: str
    message: str

    def __str__(self) -> str:
        return f"{self.field}: {self.message}"


def _range_pair(value, name: str) -> Tuple[float, float]:
    try:
        lo, hi = (float(v) for v in value)
    except (TypeError, ValueError):
        raise ConfigurationError(f"{name} must be a [low, high] pair", field=name) from None
    if not (math.isfinite(lo) and math.isfinite(hi) and lo < hi):
        raise ConfigurationError(f"{name} must be finite and ascending, got [{lo}, {hi}]", field=name)
    return lo, hi


def _count(value, name: str, minimum: int = 1) -> None:
    if isinstance(value, bool) or not isinstance(value, int) or value < minimum:
        raise ConfigurationError(f"{name} must be an integer >= {minimum}, got {value!r}", field=name)


def _positive(value, name: str) -> None:
    if isinstance(value, bool) or not isinstance(value, (int, float)) or not (math.isfinite(value) and value > 0):
        raise ConfigurationError(f"{name} must be a positive number, got {value!r}", field=name)


@dataclass(frozen=True)
class GridSpec:
    samples: int = DEFAULT_SAMPLES
    comb_lines: int = DEFAULT_COMB_LINES
    line_spacing_ghz: float = DEFAULT_LINE_SPACING_GHZ

    def __post_init__(self):
        _count(self.samples, "samples")
        _count(self.comb_lines, "comb_lines")
        _positive(self.line_spacing_ghz, "line_spacing_ghz")

    def time_grid(self) -> TimeGrid:
        return TimeGrid.for_comb(self.line_spacing_ghz, self.samples)

    def comb_template(self, carrier_nm: float) -> FrequencyComb:
        return FrequencyComb.flat(self.comb_lines, carrier_nm, self.line_spacing_ghz)


@dataclass(frozen=True)
class CarrierSpec:
    signal: float = SIGNAL_CARRIER_NM
    pump: float = PUMP_CARRIER_NM

    def __post_init__(self):
        _positive(self.signal, "signal")
        _positive(self.pump, "pump")


@dataclass(frozen=True)
class ShapeSpec:
    """Shared shape parameters; S1 and S2 use one mode width so they stay orthogonal."""

    mode_width_ps: float = DEFAULT_MODE_WIDTH_PS
    se_rise_ps: float = DEFAULT_SE_RISE_PS
    se_tau_ps: float = DEFAULT_SE_TAU_PS
    se_onset_ps: Optional[float] = None

    def __post_init__(self):
        _positive(self.mode_width_ps, "mode_width_ps")
        _positive(self.se_rise_ps, "se_rise_ps")
        _positive(self.se_tau_ps, "se_tau_ps")
        if self.se_onset_ps is not None and not (
            isinstance(self.se_onset_ps, (int, float)) and math.isfinite(self.se_onset_ps)
        ):
            raise ConfigurationError("se_onset_ps must be a finite number or null", field="se_onset_ps")

    def shape(self, tag: str) -> SignalShape:
        return SignalShape(tag, self.mode_width_ps, self.se_rise_ps, self.se_tau_ps, self.se_onset_ps)


@dataclass(frozen=True)
class ScenarioSpec:
    """One reshaping run: input shape -> target shape, plus its scan ranges.

    `scale_factors` bound the pump-scale scan relative to `pump_scale`.
    """

    name: str
    input: str
    target: str
    pump_scale: float = DEFAULT_PUMP_SCALE
    scale_factors: Tuple[float, float] = DEFAULT_SCALE_FACTORS
    scale_points: int = DEFAULT_SCALE_POINTS
    delay_range_ps: Tuple[float, float] = DEFAULT_SCAN_DELAY_PS
    delay_points: int = DEFAULT_SCAN_DELAY_POINTS
    target_vmax: Optional[float] = None

    def __post_init__(self):
        if not isinstance(self.name, str) or not self.name or any(ch in self.name for ch in "/\\"):
            raise ConfigurationError(f"scenario name must be a non-empty plain string, got {self.name!r}",
                                     field="name")
        for key in ("input", "target"):
            if getattr(self, key) not in SHAPE_TAGS:
                raise ConfigurationError(f"{key} must be one of {SHAPE_TAGS}, got {getattr(self, key)!r}",
                                         field=key)
        if isinstance(self.pump_scale, bool) or not isinstance(self.pump_scale, (int, float)) or not (
            math.isfinite(self.pump_scale) and self.pump_scale >= 0
        ):
            raise ConfigurationError(f"pump_scale must be >= 0, got {self.pump_scale!r}", field="pump_scale")
        factors = _range_pair(self.scale_factors, "scale_factors")
        if factors[0] < 0:
            raise ConfigurationError("scale_factors must be non-negative", field="scale_factors")
        object.__setattr__(self, "scale_factors", factors)
        object.__setattr__(self, "delay_range_ps", _range_pair(self.delay_range_ps, "delay_range_ps"))
        _count(self.scale_points, "scale_points")
        _count(self.delay_points, "delay_points")
        if self.target_vmax is not None and not (
            isinstance(self.target_vmax, (int, float)) and 0 < self.target_vmax <= 1
        ):
            raise ConfigurationError("target_vmax must lie in (0, 1] or be null", field="target_vmax")

    def resolved_target_vmax(self, default: float) -> float:
        return effective_target(self.target, self.target_vmax, default)

    def optimizer_config(self, base: OptimizerConfig) -> OptimizerConfig:
        """`base` with this scenario's stopping targets."""
        return replace(base, target_vmax=self.resolved_target_vmax(base.target_vmax),
                       target_eta_mm=effective_eta_target(self.target, base.target_eta_mm))


@dataclass(frozen=True)
class ReportSpec:
    """Reporting knobs: squelch threshold, visibility scan, power sweep."""

    phase_squelch: float = DEFAULT_SQUELCH_FRACTION
    visibility_range_ps: Tuple[float, float] = DEFAULT_VISIBILITY_RANGE_PS
    visibility_steps: int = DEFAULT_VISIBILITY_STEPS
    sweep_points: int = DEFAULT_SWEEP_POINTS
    sweep_max_factor: float = DEFAULT_SWEEP_MAX_FACTOR

    def __post_init__(self):
        if not (isinstance(self.phase_squelch, (int, float)) and 0 < self.phase_squelch < 1):
            raise ConfigurationError("phase_squelch must lie in (0, 1)", field="phase_squelch")
        object.__setattr__(self, "visibility_range_ps",
                           _range_pair(self.visibility_range_ps, "visibility_range_ps"))
        _count(self.visibility_steps, "visibility_steps", minimum=3)
        _count(self.sweep_points, "sweep_points", minimum=2)
        _positive(self.sweep_max_factor, "sweep_max_factor")


@dataclass(frozen=True)
class ExperimentConfig:
    grid: GridSpec = field(default_factory=GridSpec)
    carriers_nm: CarrierSpec = field(default_factory=CarrierSpec)
    shapes: ShapeSpec = field(default_factory=ShapeSpec)
    waveguide: WaveguideModel = field(default_factory=WaveguideModel)
    optimizer: OptimizerConfig = field(default_factory=OptimizerConfig)
    scenarios: Tuple[ScenarioSpec, ...] = ()
    report: ReportSpec = field(default_factory=ReportSpec)
    output_dir: str = DEFAULT_OUTPUT_DIR
    schema_version: int = SCHEMA_VERSION

    def with_overrides(self, seed: Optional[int] = None, output_dir: Optional[str] = None) -> "ExperimentConfig":
        config = self
        if seed is not None:
            config = replace(config, optimizer=replace(config.optimizer, seed=seed))
        if output_dir is not None:
            config = replace(config, output_dir=str(output_dir))
        return config


DEFAULT_SCENARIOS = (
    ScenarioSpec("S1_to_S2", "S1", "S2"),
    ScenarioSpec("S2_to_S1", "S2", "S1"),
    ScenarioSpec("Se_to_S1", "Se", "S1"),
    ScenarioSpec("S1_to_Se", "S1", "Se"),
)


def default_config() -> ExperimentConfig:
    """The four reshaping scenarios with every other setting at its default."""
    return ExperimentConfig(scenarios=DEFAULT_SCENARIOS)


# ---------------------------
# Serialization
# ---------------------------
def _plain(value):
    if isinstance(value, tuple):
        return [_plain(v) for v in value]
    if isinstance(value, dict):
        return {k: _plain(v) for k, v in value.items()}
    return value


def to_dict(config: ExperimentConfig) -> Dict[str, Any]:
    """JSON-ready document; `from_dict(to_dict(c)) == c`."""
    return {
        "schema_version": config.schema_version,
        "grid": _plain(asdict(config.grid)),
        "carriers_nm": _plain(asdict(config.carriers_nm)),
        "shapes": _plain(asdict(config.shapes)),
        "waveguide": _plain(asdict(config.waveguide)),
        "optimizer": _plain(asdict(config.optimizer)),
        "scenarios": [_plain(asdict(s)) for s in config.scenarios],
        "report": _plain(asdict(config.report)),
        "output_dir": config.output_dir,
    }


def dumps(config: ExperimentConfig) -> str:
    return json.dumps(to_dict(config), indent=2) + "\n"


def _build(cls, data, path: str):
    """Instantiate a config dataclass from a JSON object, prefixing error fields with `path`."""
    if not isinstance(data, dict):
        raise ConfigurationError(f"{path} must be an object", field=path)
    names = [f.name for f in fields(cls)]
    unknown = sorted(set(data) - set(names))
    if unknown:
        raise ConfigurationError(f"unknown key {unknown[0]!r}", field=f"{path}.{unknown[0]}")
    kwargs = {name: tuple(data[name]) if isinstance(data[name], list) else data[name]
              for name in names if name in data}
    try:
        return cls(**kwargs)
    except ConfigurationError as exc:
        where = f"{path}.{exc.field}" if exc.field else path
        raise ConfigurationError(str(exc), field=where) from exc
    except TypeError as exc:
        # a required key is missing or a value has the wrong JSON type
        raise ConfigurationError(str(exc), field=path) from exc


def _diagnose(diagnostics: List[Diagnostic], fn, *args):
    try:
        return fn(*args)
    except ConfigurationError as exc:
        diagnostics.append(Diagnostic(exc.field or "config", str(exc)))
        return None


def collect_diagnostics(data: Any) -> List[Diagnostic]:
    """Every schema and invariant problem in a parsed config document."""
    if not isinstance(data, dict):
        return [Diagnostic("config", "top level must be a JSON object")]
    diagnostics: List[Diagnostic] = []
    version = data.get("schema_version")
    if version != SCHEMA_VERSION:
        diagnostics.append(Diagnostic("schema_version", f"expected {SCHEMA_VERSION}, got {version!r}"))
    for key in sorted(set(data) - set(TOP_LEVEL_KEYS)):
        diagnostics.append(Diagnostic(key, "unknown top-level key"))
    output_dir = data.get("output_dir", DEFAULT_OUTPUT_DIR)
    if not isinstance(output_dir, str) or not output_dir:
        diagnostics.append(Diagnostic("output_dir", "must be a non-empty string"))

    grid = _diagnose(diagnostics, _build, GridSpec, data.get("grid", {}), "grid")
    carriers = _diagnose(diagnostics, _build, CarrierSpec, data.get("carriers_nm", {}), "carriers_nm")
    shapes = _diagnose(diagnostics, _build, ShapeSpec, data.get("shapes", {}), "shapes")
    waveguide = _diagnose(diagnostics, _build, WaveguideModel, data.get("waveguide", {}), "waveguide")
    _diagnose(diagnostics, _build, OptimizerConfig, data.get("optimizer", {}), "optimizer")
    _diagnose(diagnostics, _build, ReportSpec, data.get("report", {}), "report")

    scenarios = data.get("scenarios", [])
    parsed: List[ScenarioSpec] = []
    if not isinstance(scenarios, list):
        diagnostics.append(Diagnostic("scenarios", "must be a list"))
    else:
        for index, raw in enumerate(scenarios):
            scenario = _diagnose(diagnostics, _build, ScenarioSpec, raw, f"scenarios[{index}]")
            if scenario is not None:
                parsed.append(scenario)
        names = [s.name for s in parsed]
        for name in sorted({n for n in names if names.count(n) > 1}):
            diagnostics.append(Diagnostic("scenarios", f"duplicate scenario name {name!r}"))

    if waveguide is not None and waveguide.z_steps < MIN_CONVERGED_Z_STEPS:
        diagnostics.append(Diagnostic("waveguide.z_steps",
                                      f"{waveguide.z_steps} steps is below {MIN_CONVERGED_Z_STEPS}; "
                                      "propagation will not be converged"))

    time_grid = None
    if grid is not None:
        try:
            time_grid = grid.time_grid()
            if carriers is not None:
                check_comb_grid(grid.comb_template(carriers.pump), time_grid)
        except ConfigurationError as exc:
            diagnostics.append(Diagnostic("grid", str(exc)))
            time_grid = None

    if time_grid is not None and shapes is not None:
        for tag in sorted({tag for s in parsed for tag in (s.input, s.target)}):
            try:
                make_signal(shapes.shape(tag), time_grid)
            except ReshaperError as exc:
                diagnostics.append(Diagnostic("shapes", str(exc)))
    return diagnostics


def from_dict(data: Any) -> ExperimentConfig:
    diagnostics = collect_diagnostics(data)
    if diagnostics:
        first = diagnostics[0]
        more = f" (+{len(diagnostics) - 1} more)" if len(diagnostics) > 1 else ""
        raise ConfigurationError(f"{first}{more}", field=first.field)
    return ExperimentConfig(
        grid=_build(GridSpec, data.get("grid", {}), "grid"),
        carriers_nm=_build(CarrierSpec, data.get("carriers_nm", {}), "carriers_nm"),
        shapes=_build(ShapeSpec, data.get("shapes", {}), "shapes"),
        waveguide=_build(WaveguideModel, data.get("waveguide", {}), "waveguide"),
        optimizer=_build(OptimizerConfig, data.get("optimizer", {}), "optimizer"),
        scenarios=tuple(_build(ScenarioSpec, raw, f"scenarios[{i}]")
                        for i, raw in enumerate(data.get("scenarios", []))),
        report=_build(ReportSpec, data.get("report", {}), "report"),
        output_dir=data.get("output_dir", DEFAULT_OUTPUT_DIR),
        schema_version=data["schema_version"],
    )


def _parse_text(text: str, source: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigurationError(f"{source}: line {exc.lineno} column {exc.colno}: {exc.msg}") from exc


def load_config(path: Union[str, Path]) -> ExperimentConfig:
    """Read and validate a config file; OSError propagates for unreadable files."""
    path = Path(path)
    config = from_dict(_parse_text(path.read_text(encoding="utf-8"), str(path)))
    logger.info("loaded config %s with %d scenario(s)", path, len(config.scenarios))
    return config


def save_config(config: ExperimentConfig, path: Union[str, Path]) -> Path:
    path = Path(path)
    path.write_text(dumps(config), encoding="utf-8")
    return path


def validate_config(path: Union[str, Path]) -> List[Diagnostic]:
    """Diagnostics for a config file without running anything; empty means valid."""
    path = Path(path)
    try:
        data = _parse_text(path.read_text(encoding="utf-8"), str(path))
    except ConfigurationError as exc:
        return [Diagnostic("json", str(exc))]
    diagnostics = collect_diagnostics(data)
    for diagnostic in diagnostics:
        logger.warning("%s: %s", path, diagnostic)
    return diagnostics
