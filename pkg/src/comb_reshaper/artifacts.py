"""Readers and writers for everything a run leaves on disk.

CSV files carry a single header line naming the columns with their units and
are written with 17 significant digits, so floats read back bit-exact.
Combs and summaries are JSON.
"""

import json
import logging
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from comb_reshaper.errors import ConfigurationError
from comb_reshaper.metrics import VisibilityCurve
from comb_reshaper.optimizer import OptimizationTrace
from comb_reshaper.propagation import SweepPoint
from comb_reshaper.waveform import SIGNAL_CARRIER_NM, ComplexEnvelope, FrequencyComb, TimeGrid

logger = logging.getLogger(__name__)

# ---------------------------
# Configuration / constants
# ---------------------------
COMB_FORMAT = "comb_reshaper.comb"
COMB_FORMAT_VERSION = 1
FLOAT_FORMAT = "%.17g"

ENVELOPE_COLUMNS = ("t_ps", "re", "im")
PHASE_COLUMN = "phase_rad"
VISIBILITY_COLUMNS = ("delay_ps", "V")
SCAN_COLUMNS = ("pump_scale", "delay_ps", "v_max", "eta_mm", "eta_r")
TRACE_COLUMNS = ("iteration", "objective", "vmax_so_far", "accepted", "failed")
SWEEP_COLUMNS = ("pump_scale", "sf_fraction", "signal_fraction")

PathLike = Union[str, Path]


def write_table(path: PathLike, columns: Sequence[str], rows) -> Path:
    path = Path(path)
    data = np.asarray(rows, dtype=float).reshape(-1, len(columns))
    np.savetxt(path, data, fmt=FLOAT_FORMAT, delimiter=",", header=",".join(columns), comments="")
    return path


def read_table(path: PathLike) -> Tuple[Tuple[str, ...], np.ndarray]:
    path = Path(path)
    with path.open(encoding="utf-8") as handle:
        columns = tuple(handle.readline().strip().split(","))
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    if data.size and data.shape[1] != len(columns):
        raise ConfigurationError(f"{path}: {data.shape[1]} columns but header names {len(columns)}")
    return columns, data.reshape(-1, len(columns))


def _expect_columns(path: PathLike, columns: Tuple[str, ...], expected: Sequence[str]) -> None:
    if columns[:len(expected)] != tuple(expected):
        raise ConfigurationError(f"{path}: expected columns {list(expected)}, found {list(columns)}")


# ---------------------------
# Combs
# ---------------------------
def comb_to_dict(comb: FrequencyComb) -> Dict[str, Any]:
    return {
        "format": COMB_FORMAT,
        "version": COMB_FORMAT_VERSION,
        "carrier_nm": comb.carrier_nm,
        "spacing_ghz": comb.spacing_ghz,
        "lines": [{"amplitude": float(a), "phase_rad": float(p)} for a, p in zip(comb.amplitudes, comb.phases)],
    }


def comb_from_dict(data: Dict[str, Any]) -> FrequencyComb:
    if not isinstance(data, dict) or data.get("format") != COMB_FORMAT:
        raise ConfigurationError(f"not a comb document (format {COMB_FORMAT!r} expected)")
    try:
        lines = data["lines"]
        amplitudes = [line["amplitude"] for line in lines]
        phases = [line["phase_rad"] for line in lines]
        return FrequencyComb(amplitudes, phases, data["carrier_nm"], data["spacing_ghz"])
    except (KeyError, TypeError) as exc:
        raise ConfigurationError(f"malformed comb document: {exc}") from exc


def write_comb(path: PathLike, comb: FrequencyComb) -> Path:
    path = Path(path)
    path.write_text(json.dumps(comb_to_dict(comb), indent=2) + "\n", encoding="utf-8")
    return path


def read_comb(path: PathLike) -> FrequencyComb:
    path = Path(path)
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ConfigurationError(f"{path}: line {exc.lineno} column {exc.colno}: {exc.msg}") from exc
    return comb_from_dict(data)


# ---------------------------
# Envelopes and curves
# ---------------------------
def write_envelope(path: PathLike, env: ComplexEnvelope, phase: Optional[np.ndarray] = None) -> Path:
    """t_ps, re, im columns; `phase` (e.g. a squelched phase trace) adds phase_rad."""
    columns = list(ENVELOPE_COLUMNS)
    data = [env.grid.t, env.values.real, env.values.imag]
    if phase is not None:
        columns.append(PHASE_COLUMN)
        data.append(np.asarray(phase, dtype=float))
    return write_table(path, columns, np.column_stack(data))


def read_envelope(path: PathLike, grid: Optional[TimeGrid] = None,
                  carrier_nm: float = SIGNAL_CARRIER_NM) -> ComplexEnvelope:
    """Envelope from CSV; without `grid` the window is inferred from the time column."""
    columns, data = read_table(path)
    _expect_columns(path, columns, ENVELOPE_COLUMNS)
    if grid is None:
        t = data[:, 0]
        grid = TimeGrid(window_ps=float((t[1] - t[0]) * t.size), samples=int(t.size))
    return ComplexEnvelope(grid, data[:, 1] + 1j * data[:, 2], carrier_nm)


def read_phase(path: PathLike) -> np.ndarray:
    columns, data = read_table(path)
    if PHASE_COLUMN not in columns:
        raise ConfigurationError(f"{path} has no {PHASE_COLUMN} column")
    return data[:, columns.index(PHASE_COLUMN)]


def write_visibility(path: PathLike, curve: VisibilityCurve) -> Path:
    return write_table(path, VISIBILITY_COLUMNS, np.column_stack([curve.delays, curve.values]))


def read_visibility(path: PathLike) -> VisibilityCurve:
    columns, data = read_table(path)
    _expect_columns(path, columns, VISIBILITY_COLUMNS)
    return VisibilityCurve(delays=data[:, 0], values=data[:, 1])


def write_scan(path: PathLike, rows) -> Path:
    return write_table(path, SCAN_COLUMNS, rows)


def read_scan(path: PathLike) -> np.ndarray:
    columns, data = read_table(path)
    _expect_columns(path, columns, SCAN_COLUMNS)
    return data


def write_trace(path: PathLike, trace: OptimizationTrace) -> Path:
    rows = [(r.iteration, r.objective, r.vmax_so_far, r.accepted, r.failed) for r in trace.records]
    return write_table(path, TRACE_COLUMNS, rows)


def read_trace(path: PathLike) -> Dict[str, np.ndarray]:
    columns, data = read_table(path)
    _expect_columns(path, columns, TRACE_COLUMNS)
    return {name: data[:, i] for i, name in enumerate(columns)}


def write_sweep(path: PathLike, points: Sequence[SweepPoint]) -> Path:
    return write_table(path, SWEEP_COLUMNS, [tuple(p) for p in points])


def read_sweep(path: PathLike) -> List[SweepPoint]:
    columns, data = read_table(path)
    _expect_columns(path, columns, SWEEP_COLUMNS)
    return [SweepPoint(*map(float, row)) for row in data]


# ---------------------------
# Summaries
# ---------------------------
def write_summary(path: PathLike, summary: Dict[str, Any]) -> Path:
    path = Path(path)
    path.write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    logger.debug("wrote %s", path)
    return path


def read_summary(path: PathLike) -> Dict[str, Any]:
    return json.loads(Path(path).read_text(encoding="utf-8"))
