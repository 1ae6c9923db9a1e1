"""Deterministic JSON/CSV writers: fixed key order, floats at 12 significant digits."""

from __future__ import annotations

import csv
import json
import math
from pathlib import Path

import numpy as np

SIG_DIGITS = 12


def fmt(x: float) -> str:
    return f"{float(x) + 0.0:.{SIG_DIGITS}g}"  # + 0.0 folds -0 into 0


def _clean(obj):
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        if not math.isfinite(x):
            return None
        x = float(fmt(x))
        return 0.0 if x == 0.0 else x  # no negative zero
    return obj


def dump_json(obj, path) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as fh:
        json.dump(_clean(obj), fh, indent=1, allow_nan=False)
        fh.write("\n")


def load_json(path):
    with open(path) as fh:
        return json.load(fh)


def write_csv(path, header, rows) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(header)
        for r in rows:
            wr.writerow(["" if v is None else (fmt(v) if isinstance(v, (float, np.floating))
                                               else v) for v in r])


def read_csv(path) -> tuple[list, list]:
    """Header and rows; numeric cells become floats, empty cells ``None``."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))

    def conv(v):
        if v == "":
            return None
        try:
            return float(v)
        except ValueError:
            return v

    return rows[0], [[conv(v) for v in r] for r in rows[1:]]
