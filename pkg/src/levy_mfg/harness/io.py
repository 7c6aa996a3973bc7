"""Results directories: CSV fields plus a ``manifest.json`` describing the run.

CSV schemas (version 1, one header row, floats written with ``repr``):

* ``u.csv``        ``k, i, x_i, u``
* ``m.csv``        ``k, i, x_i, density``  (cell mass divided by ``rho``)
* ``control.csv``  ``k, i, x_i, alpha``
* ``weights.csv``  ``j, z_j, omega_j``
* ``trace.csv``    ``iteration, l1_change, flat_change, hjb_seconds, fpk_seconds``
* ``mc.csv``       same columns as ``m.csv`` (path fractions per cell over ``rho``)
* ``study.csv``    ``h, err_u, err_m``
"""

from __future__ import annotations

import csv
import hashlib
import json
import math
import platform
import time
from pathlib import Path

import numpy as np

from .. import __version__
from .config import config_hash, resolved_parameters

CSV_SCHEMA_VERSION = 1


def sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


def write_rows(path, rows, header=None) -> None:
    rows = list(rows)
    if header is None:
        header = list(rows[0]) if rows else []
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=header)
        w.writeheader()
        for row in rows:
            w.writerow({k: repr(v) if isinstance(v, float) else v for k, v in row.items()})


def read_csv(path) -> list[dict]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.generic):
        obj = obj.item()
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, float) and not math.isfinite(obj):
        return str(obj)
    return obj


def versions() -> dict:
    import scipy
    import sympy
    import yaml

    return {
        "levy_mfg": __version__,
        "python": platform.python_version(),
        "numpy": np.__version__,
        "scipy": scipy.__version__,
        "sympy": sympy.__version__,
        "pyyaml": yaml.__version__,
    }


class RunDirectory:
    """Collects files written into ``root`` and writes the manifest last."""

    def __init__(self, root, cfg: dict, command: str):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)
        self.cfg = cfg
        self.command = command
        self.files: list[str] = []
        self.extra: dict = {}
        self.started = time.time()

    def path(self, name: str) -> Path:
        self.files.append(name)
        return self.root / name

    def save(self, name: str, writer) -> Path:
        """``writer(path)`` produces the file; the name is recorded for the manifest."""
        p = self.path(name)
        writer(p)
        return p

    def rows(self, name: str, rows, header=None) -> Path:
        return self.save(name, lambda p: write_rows(p, rows, header))

    def manifest(self, problem=None, **extra) -> Path:
        self.extra.update(extra)
        data = {
            "command": self.command,
            "csv_schema_version": CSV_SCHEMA_VERSION,
            "config": self.cfg,
            "config_hash": config_hash(self.cfg),
            "versions": versions(),
            "wall_seconds": time.time() - self.started,
            "files": {name: sha256(self.root / name) for name in sorted(set(self.files))},
        }
        if "stated" in self.cfg:
            data["stated_parameters"] = self.cfg["stated"]
        try:
            data["resolved_parameters"] = resolved_parameters(self.cfg)
        except (KeyError, TypeError, ValueError):
            pass
        if problem is not None:
            data["cfl"] = problem.cfl.as_dict()
            data["measure"] = problem.measure.describe()
            data["discretization"] = {
                "r": problem.disc.r,
                "sigma_r": problem.disc.sigma_r,
                "b_r": problem.disc.b_r,
                "lambda_r": problem.disc.lambda_r,
                "tail_mass": problem.disc.tail_mass,
                "r_max": problem.disc.r_max,
                "walk_variance": problem.disc.walk_variance,
            }
            data["ghost"] = problem.ghost
            data["control_box"] = problem.control_box
        data.update(self.extra)
        out = self.root / "manifest.json"
        out.write_text(json.dumps(_jsonable(data), indent=2, sort_keys=True))
        return out


def verify_manifest(root) -> list[str]:
    """Problems found: CSVs missing from the manifest or checksums that disagree."""
    root = Path(root)
    data = json.loads((root / "manifest.json").read_text())
    listed = data.get("files", {})
    issues = [f"{p.name} not listed" for p in sorted(root.glob("*.csv")) if p.name not in listed]
    for name, digest in listed.items():
        if not (root / name).exists():
            issues.append(f"{name} missing")
        elif sha256(root / name) != digest:
            issues.append(f"{name} checksum mismatch")
    return issues
