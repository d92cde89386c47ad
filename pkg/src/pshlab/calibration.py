"""Calibrated constants, cached in a JSON file.

The file path comes from the ``PSHLAB_CALIBRATION`` environment variable
(default ``pshlab_calibration.json`` in the working directory).  Missing
entries fall back to built-in values.
"""

from __future__ import annotations

import json
import math
import os
from pathlib import Path

ENV_VAR = "PSHLAB_CALIBRATION"
DEFAULT_FILE = "pshlab_calibration.json"

# Bojarski constant measured by ``calibrate_bojarski`` on the reference case
BOJARSKI_DEFAULT = 0.5


def calibration_path() -> Path:
    return Path(os.environ.get(ENV_VAR, DEFAULT_FILE))


def read_calibration(path: Path | None = None) -> dict:
    path = calibration_path() if path is None else Path(path)
    if not path.is_file():
        return {}
    with open(path) as fh:
        return json.load(fh)


def write_calibration(data: dict, path: Path | None = None) -> Path:
    path = calibration_path() if path is None else Path(path)
    merged = read_calibration(path)
    merged.update(data)
    with open(path, "w") as fh:
        json.dump(merged, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return path


def load_kappa(n: int) -> float:
    val = read_calibration().get("kappa", {}).get(str(n))
    return float(val) if val else 2.0**n * math.factorial(n) / math.pi**n


def load_bojarski(N: int = 2) -> float:
    val = read_calibration().get("bojarski", {}).get(str(N))
    return float(val) if val else BOJARSKI_DEFAULT
