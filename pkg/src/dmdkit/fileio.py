"""CSV snapshot files and JSON model archives.

CSV layout: header row ``t,<t_1>,...,<t_m>`` with the sample times, then one
row per spatial location ``x<i>,<v_1>,...,<v_m>``. Complex cells are encoded
``a+bi`` with no spaces; plain reals stay plain. Numbers are written in
shortest round-trip form, so load(save(M)) reproduces every value exactly.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .bop import EnsembleStatistics
from .core import DmdModel, SnapshotMatrix
from .errors import (
    NonIncreasingTimes,
    ParseError,
    RaggedRows,
    ShapeMismatch,
)

ARCHIVE_SCHEMA_VERSION = 1
ARCHIVE_KINDS = ("exact", "optimized", "bop_ensemble")


def format_float(v: float) -> str:
    return repr(float(v))


def format_value(z) -> str:
    """Encode a number as ``a``, ``a+bi``, or ``a-bi`` (no spaces)."""
    z = complex(z)
    if z.imag == 0.0:
        return format_float(z.real)
    sign = "+" if z.imag > 0 else "-"
    return f"{format_float(z.real)}{sign}{format_float(abs(z.imag))}i"


def parse_value(cell: str, line: int, column: int) -> complex:
    """Decode one CSV cell; accepts ``a``, ``bi``, ``a+bi``, ``a-bi``."""
    text = cell.strip()
    if not text:
        raise ParseError("empty cell", line, column)
    try:
        value = complex(text.replace("i", "j"))
    except ValueError:
        raise ParseError(f"cannot parse {cell!r} as a number", line, column) from None
    if not (np.isfinite(value.real) and np.isfinite(value.imag)):
        raise ParseError(f"non-finite value {cell!r}", line, column)
    return value


def save_csv(values, times, path) -> None:
    """Write a matrix with its sample times; inverse of :func:`load_csv`."""
    values = np.atleast_2d(np.asarray(values))
    times = np.asarray(times, dtype=float)
    if times.shape != (values.shape[1],):
        raise ShapeMismatch(
            f"{values.shape[1]} columns but {times.shape} times")
    with open(path, "w", newline="") as fh:
        fh.write("t," + ",".join(format_float(t) for t in times) + "\n")
        for i, row in enumerate(values):
            fh.write(f"x{i}," + ",".join(format_value(v) for v in row) + "\n")


def load_csv(path) -> SnapshotMatrix:
    """Parse a snapshot CSV. Errors carry 1-based line/column positions."""
    with open(path, newline="") as fh:
        lines = [ln for ln in fh.read().splitlines() if ln.strip()]
    if not lines:
        raise ParseError("empty file", 1, 1)
    header = lines[0].split(",")
    if header[0].strip() != "t":
        raise ParseError("header row must start with 't'", 1, 1)
    m = len(header) - 1
    times = []
    for k, cell in enumerate(header[1:], start=2):
        value = parse_value(cell, 1, k)
        if value.imag != 0.0:
            raise ParseError("times must be real", 1, k)
        times.append(value.real)
    times = np.asarray(times)
    if np.any(np.diff(times) <= 0):
        raise NonIncreasingTimes("header times must be strictly increasing")

    rows = []
    for lineno, line in enumerate(lines[1:], start=2):
        cells = line.split(",")
        if len(cells) != m + 1:
            raise RaggedRows(
                f"row {lineno} has {len(cells) - 1} values, expected {m}")
        rows.append([parse_value(c, lineno, k)
                     for k, c in enumerate(cells[1:], start=2)])
    if not rows:
        raise ParseError("no data rows", 2, 1)
    return SnapshotMatrix(np.asarray(rows, dtype=complex), times)


@dataclass(frozen=True)
class ModelArchive:
    """Fitted-model container persisted as schema-versioned JSON.

    ``kind`` is one of 'exact' / 'optimized' (single model payload) or
    'bop_ensemble' (ensemble statistics payload). ``metadata`` echoes rank,
    training time span, solver/bag configuration, and seed.
    """

    kind: str
    metadata: dict
    model: DmdModel | None = None
    statistics: EnsembleStatistics | None = None
    schema_version: int = field(default=ARCHIVE_SCHEMA_VERSION)

    def __post_init__(self):
        if self.kind not in ARCHIVE_KINDS:
            raise ValueError(f"kind must be one of {ARCHIVE_KINDS}")
        if self.kind == "bop_ensemble":
            if self.statistics is None or self.model is not None:
                raise ValueError("bop_ensemble archives carry statistics only")
        else:
            if self.model is None or self.statistics is not None:
                raise ValueError(f"{self.kind} archives carry a single model")


def _complex_out(arr: np.ndarray):
    arr = np.asarray(arr, dtype=complex)
    return {"real": arr.real.tolist(), "imag": arr.imag.tolist()}


def _complex_in(obj) -> np.ndarray:
    return np.asarray(obj["real"], dtype=float) + 1j * np.asarray(obj["imag"],
                                                                  dtype=float)


def _model_out(model: DmdModel):
    return {
        "modes": _complex_out(model.modes),
        "eigenvalues": _complex_out(model.eigenvalues),
        "amplitudes": _complex_out(model.amplitudes),
    }


def _model_in(obj) -> DmdModel:
    return DmdModel(_complex_in(obj["modes"]), _complex_in(obj["eigenvalues"]),
                    _complex_in(obj["amplitudes"]))


def _stats_out(stats: EnsembleStatistics):
    return {
        "mode_mean": _complex_out(stats.mode_mean),
        "mode_variance_real": stats.mode_variance_real.tolist(),
        "mode_variance_imag": stats.mode_variance_imag.tolist(),
        "eigenvalue_mean": _complex_out(stats.eigenvalue_mean),
        "eigenvalue_variance_real": stats.eigenvalue_variance_real.tolist(),
        "eigenvalue_variance_imag": stats.eigenvalue_variance_imag.tolist(),
        "amplitude_mean": _complex_out(stats.amplitude_mean),
        "amplitude_variance_real": stats.amplitude_variance_real.tolist(),
        "amplitude_variance_imag": stats.amplitude_variance_imag.tolist(),
        "accepted_trials": stats.accepted_trials,
        "rejected_trials": stats.rejected_trials,
    }


def _stats_in(obj) -> EnsembleStatistics:
    return EnsembleStatistics(
        mode_mean=_complex_in(obj["mode_mean"]),
        mode_variance_real=np.asarray(obj["mode_variance_real"], dtype=float),
        mode_variance_imag=np.asarray(obj["mode_variance_imag"], dtype=float),
        eigenvalue_mean=_complex_in(obj["eigenvalue_mean"]),
        eigenvalue_variance_real=np.asarray(obj["eigenvalue_variance_real"],
                                            dtype=float),
        eigenvalue_variance_imag=np.asarray(obj["eigenvalue_variance_imag"],
                                            dtype=float),
        amplitude_mean=_complex_in(obj["amplitude_mean"]),
        amplitude_variance_real=np.asarray(obj["amplitude_variance_real"],
                                           dtype=float),
        amplitude_variance_imag=np.asarray(obj["amplitude_variance_imag"],
                                           dtype=float),
        accepted_trials=int(obj["accepted_trials"]),
        rejected_trials=int(obj["rejected_trials"]),
    )


def save_archive(archive: ModelArchive, path) -> None:
    payload = {
        "schema_version": archive.schema_version,
        "kind": archive.kind,
        "metadata": archive.metadata,
        "model": None if archive.model is None else _model_out(archive.model),
        "statistics": (None if archive.statistics is None
                       else _stats_out(archive.statistics)),
    }
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_archive(path) -> ModelArchive:
    with open(path) as fh:
        payload = json.load(fh)
    version = payload.get("schema_version")
    if version != ARCHIVE_SCHEMA_VERSION:
        raise ValueError(
            f"unsupported archive schema_version {version!r}, "
            f"expected {ARCHIVE_SCHEMA_VERSION}")
    model = payload.get("model")
    stats = payload.get("statistics")
    return ModelArchive(
        kind=payload["kind"],
        metadata=payload.get("metadata", {}),
        model=None if model is None else _model_in(model),
        statistics=None if stats is None else _stats_in(stats),
        schema_version=version,
    )
