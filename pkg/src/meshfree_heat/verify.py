"""Analytical solutions, error norms, off-node interpolation and order estimates."""

from __future__ import annotations

import csv
import logging
import math
import time
import warnings
from dataclasses import dataclass, field
from importlib import resources
from typing import Callable, Sequence

import numpy as np

from .neighbors import SpatialIndex
from .pointcloud import PointCloud, average_spacing, generate
from .rbf_operator import PhsKernel, interpolation_weights
from .solver import SolutionField, Timing, steady_problem

log = logging.getLogger(__name__)

EXTRAPOLATION_FACTOR = 3.0


class ExtrapolationWarning(UserWarning):
    pass


def exact_annulus(r, r_inner=0.5, r_outer=1.0, inner_value=1.0, outer_value=0.0):
    """Steady radial conduction in an annulus; ln r / ln 0.5 for the defaults."""
    r = np.asarray(r, dtype=float)
    frac = np.log(r / r_outer) / math.log(r_inner / r_outer)
    return outer_value + (inner_value - outer_value) * frac


def exact_shell(r, r_inner=0.5, r_outer=1.0, inner_value=1.0, outer_value=0.0):
    """Steady radial conduction in a spherical shell; (1 - r) / r for the defaults."""
    r = np.asarray(r, dtype=float)
    frac = (1.0 / r - 1.0 / r_outer) / (1.0 / r_inner - 1.0 / r_outer)
    return outer_value + (inner_value - outer_value) * frac


# --------------------------------------------------------------------------
# interpolation


@dataclass
class Interpolated:
    values: np.ndarray
    extrapolated: np.ndarray  # bool mask: query far from every node

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.values, dtype=dtype)

    def __len__(self):
        return len(self.values)

    def __getitem__(self, i):
        return self.values[i]


def interpolate_at(
    cloud: PointCloud | np.ndarray,
    field_: SolutionField | np.ndarray,
    queries,
    degree: int,
    kernel: PhsKernel = PhsKernel(),
    index: SpatialIndex | None = None,
) -> Interpolated:
    """PHS+polynomial interpolation of a nodal field at arbitrary points.

    Each query gets its own stencil of the q nearest nodes. Queries further than
    3 average spacings from any node are flagged (and warned about).
    """
    pts = cloud.points if isinstance(cloud, PointCloud) else np.asarray(cloud, dtype=float)
    vals = np.asarray(getattr(field_, "values", field_), dtype=float)
    queries = np.atleast_2d(np.asarray(queries, dtype=float))
    if queries.shape[1] != pts.shape[1]:
        raise ValueError(f"queries are {queries.shape[1]}-D but the cloud is {pts.shape[1]}-D")
    index = index or SpatialIndex(pts)
    members, w = interpolation_weights(pts, queries, degree, kernel, index)
    out = (w * vals[members]).sum(axis=1)
    dist = np.linalg.norm(pts[members[:, 0]] - queries, axis=1)
    # a query sitting on a node takes that node's value verbatim
    on_node = dist <= 1e-12 * max(float(np.ptp(pts, axis=0).max()), 1.0)
    out[on_node] = vals[members[on_node, 0]]
    far = dist > EXTRAPOLATION_FACTOR * average_spacing(pts)
    if np.any(far):
        warnings.warn(
            f"{int(far.sum())} query point(s) lie more than {EXTRAPOLATION_FACTOR:g} average "
            "spacings from the nearest node; values are extrapolated",
            ExtrapolationWarning,
            stacklevel=2,
        )
    return Interpolated(out, far)


# --------------------------------------------------------------------------
# norms and orders


def l1_error(computed, reference) -> float:
    """Mean absolute difference."""
    c = np.asarray(computed, dtype=float).ravel()
    r = np.asarray(reference, dtype=float).ravel()
    if c.shape != r.shape or c.size == 0:
        raise ValueError("need two equally long, non-empty sequences")
    return float(np.mean(np.abs(c - r)))


@dataclass
class ConvergenceRecord:
    degree: int
    samples: list[tuple[float, float]] = field(default_factory=list)  # (avg spacing, L1 error)
    fitted_order: float = math.nan
    fit_residual: float = math.nan

    def fit(self) -> "ConvergenceRecord":
        hs = [h for h, _ in self.samples]
        if any(b >= a for a, b in zip(hs, hs[1:])):
            raise ValueError("spacings in a convergence record must be strictly decreasing")
        self.fitted_order, self.fit_residual = fit_order(self.samples)
        return self


def fit_order(samples: Sequence[tuple[float, float]]) -> tuple[float, float]:
    """Least-squares slope of log10(error) against log10(spacing), and the RMS residual."""
    if len(samples) < 2:
        raise ValueError("need at least two (spacing, error) samples to fit an order")
    h = np.array([s[0] for s in samples], dtype=float)
    e = np.array([s[1] for s in samples], dtype=float)
    if np.any(e <= 0) or np.any(h <= 0):
        raise ValueError("spacings and errors must be positive to take logarithms")
    x, y = np.log10(h), np.log10(e)
    if np.ptp(x) == 0:
        raise ValueError("all samples share the same spacing")
    slope, intercept = np.polyfit(x, y, 1)
    resid = y - (slope * x + intercept)
    return float(slope), float(np.sqrt(np.mean(resid**2)))


def richardson_order(f1: float, f2: float, f3: float, ratio: float = 1.7) -> float:
    """Observed order from values on spacings h1 < h2 < h3 = ratio^2 h1.

    With f_h = alpha + beta h^C the constant alpha cancels and
    C = log((f3 - f2) / (f2 - f1)) / log(ratio).
    """
    num, den = f3 - f2, f2 - f1
    if den == 0:
        raise ValueError("f1 == f2: order is undefined")
    q = num / den
    if not (q > 0 and math.isfinite(q)):
        raise ValueError("differences change sign (oscillatory convergence); order is undefined")
    if not ratio > 0 or ratio == 1:
        raise ValueError("refinement ratio must be positive and != 1")
    return math.log(q) / math.log(ratio)


def richardson_order_probes(f1, f2, f3, ratio: float = 1.7) -> float:
    """Richardson order for a set of probes.

    Uses the mean absolute change between successive refinements in place of
    the single-point differences, which is much less sensitive to one probe
    whose error happens to cross zero.
    """
    f1, f2, f3 = (np.asarray(f, dtype=float) for f in (f1, f2, f3))
    fine = float(np.mean(np.abs(f2 - f1)))
    coarse = float(np.mean(np.abs(f3 - f2)))
    if fine == 0:
        raise ValueError("finest two refinements agree exactly; order is undefined")
    if not ratio > 0 or ratio == 1:
        raise ValueError("refinement ratio must be positive and != 1")
    return math.log(coarse / fine) / math.log(ratio)


# --------------------------------------------------------------------------
# reference tables


@dataclass
class ReferenceTable:
    points: np.ndarray  # (n, d)
    values: np.ndarray  # (n,)
    name: str = ""

    def __len__(self):
        return len(self.values)

    def boundary_mask(self) -> np.ndarray:
        """Rows that sit on a boundary (T exactly 0 or 1 in the shipped tables)."""
        return (self.values == 0.0) | (self.values == 1.0)


def load_reference_table(path_or_name: str) -> ReferenceTable:
    """Read a CSV with columns x,y[,z],T; bare names resolve to the shipped tables."""
    if path_or_name in ("ellipse_in_circle", "sphere_in_cuboid"):
        ref = resources.files("meshfree_heat") / "data" / f"{path_or_name}.csv"
        text = ref.read_text()
        name = path_or_name
    else:
        with open(path_or_name) as fh:
            text = fh.read()
        name = path_or_name
    rows = list(csv.DictReader(text.splitlines()))
    if not rows:
        raise ValueError(f"reference table {name} is empty")
    cols = [c for c in ("x", "y", "z") if c in rows[0]]
    if cols not in (["x", "y"], ["x", "y", "z"]) or "T" not in rows[0]:
        raise ValueError(f"reference table {name} needs columns x,y[,z],T")
    pts = np.array([[float(r[c]) for c in cols] for r in rows])
    vals = np.array([float(r["T"]) for r in rows])
    return ReferenceTable(pts, vals, name)


# --------------------------------------------------------------------------
# convergence harness


def _radius_error(exact: Callable, params: dict):
    keys = ("r_inner", "r_outer", "inner_value", "outer_value")
    kw = {k: params[k] for k in keys if k in params}

    def err(cloud: PointCloud, sol: SolutionField, degree, kernel) -> float:
        idx = cloud.interior
        r = np.linalg.norm(cloud.points[idx], axis=1)
        return l1_error(sol.values[idx], exact(r, **kw))

    return err


def _table_error(table: ReferenceTable):
    keep = ~table.boundary_mask()

    def err(cloud: PointCloud, sol: SolutionField, degree, kernel) -> float:
        got = interpolate_at(cloud, sol, table.points[keep], degree, kernel)
        return l1_error(got.values, table.values[keep])

    return err


def error_function(geometry: str, params: dict | None = None, reference: str | None = None):
    """How the discretization error of ``geometry`` is measured.

    Annulus and shell: L1 error against the closed form at interior nodes.
    Otherwise: L1 error against a reference table at its non-boundary rows.
    """
    params = params or {}
    if reference is None:
        if geometry == "annulus":
            return _radius_error(exact_annulus, params)
        if geometry == "spherical_shell":
            return _radius_error(exact_shell, params)
        if geometry in ("ellipse_in_circle", "sphere_in_cuboid"):
            reference = geometry
        else:
            raise ValueError(f"no analytic solution or reference table for {geometry!r}")
    return _table_error(load_reference_table(reference))


@dataclass
class ConvergenceStudy:
    records: list[ConvergenceRecord]
    timings: list[Timing]


def run_convergence(
    geometry: str,
    spacings: Sequence[float],
    degrees: Sequence[int],
    params: dict | None = None,
    kernel: PhsKernel = PhsKernel(),
    tol: float = 1e-10,
    reference: str | None = None,
    clouds: Sequence[PointCloud] | None = None,
) -> ConvergenceStudy:
    """Steady solves over a refinement sweep for each degree, with fitted orders."""
    params = dict(params or {})
    if len(spacings) < 2 and not (clouds and len(clouds) >= 2):
        raise ValueError("a convergence study needs at least two refinements")
    if clouds is None:
        spacings = sorted(spacings, reverse=True)
        clouds = [generate(geometry, h, **params) for h in spacings]
    err_fn = error_function(geometry, params, reference)
    hs = [average_spacing(c) for c in clouds]
    order = np.argsort(hs)[::-1]
    clouds = [clouds[i] for i in order]
    hs = [hs[i] for i in order]
    records, timings = [], []
    for k in degrees:
        rec = ConvergenceRecord(k)
        for cloud, h in zip(clouds, hs):
            t0 = time.perf_counter()
            sol, timing = steady_problem(cloud, k, kernel, tol=tol)
            e = err_fn(cloud, sol, k, kernel)
            rec.samples.append((h, e))
            timings.append(timing)
            log.info("k=%d N=%d dx=%.4g L1=%.3e (%.1fs)", k, len(cloud), h, e, time.perf_counter() - t0)
        records.append(rec.fit())
    return ConvergenceStudy(records, timings)
