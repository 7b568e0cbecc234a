"""Readers for the laboratory's file artifacts.

Every reader validates the documented header or key set before touching
a value and raises SchemaError with the offending file named, so a stale
or hand-edited artifact fails loudly instead of producing a silently
wrong figure.
"""

import csv
import json
import pathlib

import numpy as np


class SchemaError(Exception):
    """An artifact does not match its documented schema."""


PATH_COLUMNS = ("param", "q0", "q1", "S_drift", "beta0", "beta1",
                "zeta0", "zeta1", "zT0", "zT1")
SWEEP_COLUMNS = ("c", "V0", "zeta1_end", "abs_zeta1_minus_1",
                 "cross_coupling_contrib")
STABILITY_COLUMNS = ("V", "sigma", "det_g", "stable", "critical")
CONTOUR_COLUMNS = ("V", "sigma")


def _read_csv(file_path, columns):
    file_path = pathlib.Path(file_path)
    try:
        with open(file_path, newline="") as fh:
            reader = csv.reader(fh)
            try:
                header = next(reader)
            except StopIteration:
                raise SchemaError(f"{file_path}: empty file") from None
            if tuple(header) != columns:
                raise SchemaError(
                    f"{file_path}: header {header} does not match "
                    f"expected columns {list(columns)}"
                )
            rows = list(reader)
    except OSError as exc:
        raise SchemaError(f"{file_path}: {exc}") from exc
    for lineno, row in enumerate(rows, start=2):
        if len(row) != len(columns):
            raise SchemaError(
                f"{file_path}: line {lineno} has {len(row)} fields, "
                f"expected {len(columns)}"
            )
    return rows


def _floats(file_path, rows, index):
    out = np.empty(len(rows))
    for k, row in enumerate(rows):
        try:
            out[k] = float(row[index])
        except ValueError as exc:
            raise SchemaError(
                f"{file_path}: line {k + 2} field {index + 1} is not a "
                f"number: {row[index]!r}"
            ) from exc
    return out


def _flags(file_path, rows, index):
    out = np.empty(len(rows), dtype=bool)
    for k, row in enumerate(rows):
        if row[index] not in ("true", "false"):
            raise SchemaError(
                f"{file_path}: line {k + 2} field {index + 1} must be "
                f"true or false, got {row[index]!r}"
            )
        out[k] = row[index] == "true"
    return out


def read_path_csv(file_path):
    """Level-set trace -> dict of column arrays, keyed by PATH_COLUMNS."""
    rows = _read_csv(file_path, PATH_COLUMNS)
    if not rows:
        raise SchemaError(f"{file_path}: no samples")
    return {name: _floats(file_path, rows, i)
            for i, name in enumerate(PATH_COLUMNS)}


def read_sweep_csv(file_path):
    rows = _read_csv(file_path, SWEEP_COLUMNS)
    if not rows:
        raise SchemaError(f"{file_path}: no sweep cells")
    return {name: _floats(file_path, rows, i)
            for i, name in enumerate(SWEEP_COLUMNS)}


def read_stability_csv(file_path):
    rows = _read_csv(file_path, STABILITY_COLUMNS)
    if not rows:
        raise SchemaError(f"{file_path}: no grid cells")
    return {
        "V": _floats(file_path, rows, 0),
        "sigma": _floats(file_path, rows, 1),
        "det_g": _floats(file_path, rows, 2),
        "stable": _flags(file_path, rows, 3),
        "critical": _flags(file_path, rows, 4),
    }


def read_contour_csv(file_path):
    """Critical-contour points as an (n, 2) array; n may be zero."""
    rows = _read_csv(file_path, CONTOUR_COLUMNS)
    pts = np.empty((len(rows), 2))
    pts[:, 0] = _floats(file_path, rows, 0)
    pts[:, 1] = _floats(file_path, rows, 1)
    return pts


def read_holonomy_json(file_path):
    file_path = pathlib.Path(file_path)
    try:
        with open(file_path) as fh:
            doc = json.load(fh)
    except OSError as exc:
        raise SchemaError(f"{file_path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise SchemaError(f"{file_path}: not valid JSON ({exc})") from exc
    for key in ("channel", "holonomy", "loop"):
        if key not in doc:
            raise SchemaError(f"{file_path}: missing key {key!r}")
    loop = doc["loop"]
    if not isinstance(loop, dict) or "vertices" not in loop:
        raise SchemaError(f"{file_path}: loop must carry 'vertices'")
    verts = np.asarray(loop["vertices"], dtype=float)
    if verts.ndim != 2 or verts.shape[0] < 3 or verts.shape[1] != 2:
        raise SchemaError(
            f"{file_path}: loop vertices must be at least 3 points in 2-D"
        )
    doc["loop"]["vertices"] = verts
    return doc
