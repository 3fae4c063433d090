"""Field CSV, legacy VTK and metadata writers (plus readers for round trips)."""

from __future__ import annotations

import json
import os
import platform

import numpy as np

AXES = ("x", "y", "z")


def write_field_csv(path, points: np.ndarray, values: np.ndarray, name: str = "T") -> None:
    d = points.shape[1]
    with open(path, "w") as fh:
        fh.write(",".join(AXES[:d] + (name,)) + "\n")
        for p, v in zip(points, values):
            fh.write(",".join(f"{c:.17g}" for c in (*p, v)) + "\n")


def read_field_csv(path) -> tuple[np.ndarray, np.ndarray]:
    with open(path) as fh:
        header = fh.readline().strip().split(",")
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    if header[:-1] not in (list(AXES[:2]), list(AXES[:3])):
        raise ValueError(f"unexpected CSV header {header}")
    return data[:, :-1], data[:, -1]


def write_vtk(path, points: np.ndarray, values: np.ndarray, name: str = "T", title: str = "meshfree-heat") -> None:
    """Legacy ASCII POLYDATA with one vertex per node and a scalar point field."""
    n, d = points.shape
    pts3 = np.zeros((n, 3))
    pts3[:, :d] = points
    with open(path, "w") as fh:
        fh.write("# vtk DataFile Version 3.0\n")
        fh.write(title.replace("\n", " ")[:255] + "\n")
        fh.write("ASCII\nDATASET POLYDATA\n")
        fh.write(f"POINTS {n} double\n")
        for p in pts3:
            fh.write(f"{p[0]:.17g} {p[1]:.17g} {p[2]:.17g}\n")
        fh.write(f"VERTICES {n} {2 * n}\n")
        for i in range(n):
            fh.write(f"1 {i}\n")
        fh.write(f"POINT_DATA {n}\n")
        fh.write(f"SCALARS {name} double 1\nLOOKUP_TABLE default\n")
        for v in values:
            fh.write(f"{v:.17g}\n")


def read_vtk(path) -> tuple[np.ndarray, np.ndarray]:
    """Minimal reader for files produced by :func:`write_vtk`."""
    with open(path) as fh:
        lines = [ln.strip() for ln in fh]
    i = next(k for k, ln in enumerate(lines) if ln.startswith("POINTS"))
    n = int(lines[i].split()[1])
    pts = np.array([[float(t) for t in ln.split()] for ln in lines[i + 1 : i + 1 + n]])
    j = next(k for k, ln in enumerate(lines) if ln.startswith("LOOKUP_TABLE"))
    vals = np.array([float(ln) for ln in lines[j + 1 : j + 1 + n]])
    return pts, vals


def versions() -> dict:
    import numba
    import scipy

    from . import __version__

    return {
        "meshfree_heat": __version__,
        "python": platform.python_version(),
        "numpy": np.__version__,
        "scipy": scipy.__version__,
        "numba": numba.__version__,
    }


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, np.generic):
        return obj.item()
    return obj


def write_metadata(out_dir, payload: dict) -> str:
    path = os.path.join(out_dir, "metadata.json")
    with open(path, "w") as fh:
        json.dump(_jsonable(payload), fh, indent=2, sort_keys=True)
        fh.write("\n")
    return path
