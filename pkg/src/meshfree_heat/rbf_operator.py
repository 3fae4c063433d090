"""Polyharmonic-spline + polynomial (PHS-RBF) local collocation weights.

For a stencil x_1..x_q (centre first) the local interpolant is

    s(x) = sum_i lam_i phi(|x - x_i|) + sum_j gam_j P_j(x),   phi(r) = r^(2a+1)

with the side condition sum_i lam_i P_j(x_i) = 0. Writing the saddle-point
matrix A = [[Phi, P], [P^T, 0]], the weights w of a linear operator L at the
centre satisfy  L s(x_c) = w . s  where [w; w_poly] solves

    A [w; w_poly] = [L phi(|x_c - x_i|); L P_j(x_c)]

(A is symmetric, so no transpose is needed). Only the first q entries are kept.
All of this is done in scale-shifted coordinates and mapped back afterwards.
"""

from __future__ import annotations

import itertools
import time
from dataclasses import dataclass, field
from math import comb

import numpy as np

from . import linalg
from .neighbors import (
    ScaleShift,
    SpatialIndex,
    cloud_size,
    scale_shift,
    scale_shift_batch,
    select_clouds,
)
from .pointcloud import DIRICHLET, PointCloud

MIN_DEGREE, MAX_DEGREE = 2, 6


@dataclass(frozen=True)
class PhsKernel:
    """phi(r) = r^(2a+1)."""

    a: int = 1

    def __post_init__(self):
        if int(self.a) != self.a or self.a < 1:
            raise ValueError("PHS exponent parameter a must be a positive integer")

    @property
    def power(self) -> int:
        return 2 * self.a + 1

    def __call__(self, r):
        return np.asarray(r, dtype=float) ** self.power

    def laplacian_radial(self, r, dim: int):
        """Laplacian of phi(|x - c|) written as a function of r = |x - c|."""
        a = self.a
        return (2 * a + 1) * (2 * a + dim - 1) * np.asarray(r, dtype=float) ** (2 * a - 1)

    def gradient_factor(self, r):
        """grad phi(|x - c|) = gradient_factor(r) * (x - c)."""
        return (2 * self.a + 1) * np.asarray(r, dtype=float) ** (2 * self.a - 1)


def phs_value(r, kernel: PhsKernel = PhsKernel()):
    if np.any(np.asarray(r) < 0):
        raise ValueError("radius must be non-negative")
    return kernel(r)


def phs_laplacian(x, center, kernel: PhsKernel = PhsKernel(), dim: int | None = None):
    x, center = np.asarray(x, dtype=float), np.asarray(center, dtype=float)
    dim = x.shape[-1] if dim is None else dim
    r = np.linalg.norm(x - center, axis=-1)
    return kernel.laplacian_radial(r, dim)


def phs_gradient(x, center, kernel: PhsKernel = PhsKernel()):
    x, center = np.asarray(x, dtype=float), np.asarray(center, dtype=float)
    diff = x - center
    r = np.linalg.norm(diff, axis=-1)
    return kernel.gradient_factor(r)[..., None] * diff


class MonomialBasis:
    """All monomials of total degree <= ``degree`` in ``dim`` variables.

    Ordered graded-lexicographically: 1, x, y, x^2, xy, y^2, ... Every method
    accepts points of shape (..., dim).
    """

    def __init__(self, degree: int, dim: int):
        if degree < 0 or dim < 1:
            raise ValueError("need degree >= 0 and dim >= 1")
        self.degree = degree
        self.dim = dim
        exps = []
        for total in range(degree + 1):
            # descending lexicographic within one total degree
            block = [e for e in itertools.product(range(total, -1, -1), repeat=dim) if sum(e) == total]
            exps.extend(block)
        self.exponents = np.array(exps, dtype=np.int64)
        assert len(self.exponents) == comb(degree + dim, degree)

    def __len__(self) -> int:
        return len(self.exponents)

    @property
    def m(self) -> int:
        return len(self.exponents)

    def _powers(self, x):
        # (..., dim, degree+1) table of x_i^p
        x = np.asarray(x, dtype=float)
        return x[..., :, None] ** np.arange(self.degree + 1)

    def _eval(self, pw, exps, coef=None):
        dims = np.arange(self.dim)
        out = np.ones(pw.shape[:-2] + (len(exps),))
        for d in dims:
            out = out * pw[..., d, :][..., np.clip(exps[:, d], 0, None)]
        if coef is not None:
            out = out * coef
        return out

    def row(self, x) -> np.ndarray:
        return self._eval(self._powers(x), self.exponents)

    def derivative_row(self, x, order) -> np.ndarray:
        """Row of d^|order| P_j / dx^order evaluated at x."""
        order = np.asarray(order, dtype=np.int64)
        e = self.exponents
        coef = np.ones(len(e))
        for d in range(self.dim):
            for s in range(order[d]):
                coef = coef * (e[:, d] - s)
        exps = e - order
        coef = np.where(np.all(exps >= 0, axis=1), coef, 0.0)
        return self._eval(self._powers(x), exps, coef)

    def laplacian_row(self, x) -> np.ndarray:
        out = 0.0
        for d in range(self.dim):
            order = np.zeros(self.dim, dtype=np.int64)
            order[d] = 2
            out = out + self.derivative_row(x, order)
        return out

    def gradient_rows(self, x) -> np.ndarray:
        """(..., dim, m) first derivatives."""
        rows = []
        for d in range(self.dim):
            order = np.zeros(self.dim, dtype=np.int64)
            order[d] = 1
            rows.append(self.derivative_row(x, order))
        return np.stack(rows, axis=-2)


def monomial_row(x, basis: MonomialBasis):
    return basis.row(x)


def monomial_laplacian_row(x, basis: MonomialBasis, dim: int | None = None):
    return basis.laplacian_row(x)


def monomial_gradient_rows(x, basis: MonomialBasis):
    return basis.gradient_rows(x)


# --------------------------------------------------------------------------
# single stencil


@dataclass(frozen=True)
class Laplacian:
    pass


@dataclass(frozen=True)
class GradientComponent:
    axis: int


@dataclass(frozen=True)
class Identity:
    """Point evaluation at ``at`` (defaults to the stencil centre)."""

    at: tuple | None = None


@dataclass
class LocalSystem:
    A: np.ndarray
    coords: np.ndarray  # scale-shifted member coordinates, centre first
    transform: ScaleShift
    kernel: PhsKernel
    basis: MonomialBasis
    members: np.ndarray | None = None
    center: int | None = None

    @property
    def q(self) -> int:
        return self.coords.shape[0]


def _saddle_matrix(xs: np.ndarray, kernel: PhsKernel, basis: MonomialBasis) -> np.ndarray:
    """Stack of A matrices for scaled clouds xs of shape (n, q, d)."""
    n, q, d = xs.shape
    m = basis.m
    r2 = np.zeros((n, q, q))
    for k in range(d):
        diff = xs[:, :, None, k] - xs[:, None, :, k]
        r2 += diff * diff
    a = np.zeros((n, q + m, q + m))
    a[:, :q, :q] = np.sqrt(r2) ** kernel.power
    p = basis.row(xs)
    a[:, :q, q:] = p
    a[:, q:, :q] = np.swapaxes(p, 1, 2)
    return a


def assemble_local_system(
    coords, kernel: PhsKernel = PhsKernel(), basis: MonomialBasis | None = None, members=None, center=None
) -> LocalSystem:
    coords = np.asarray(coords, dtype=float)
    if basis is None:
        raise ValueError("a MonomialBasis is required")
    if coords.shape[0] < basis.m:
        raise ValueError(f"cloud of {coords.shape[0]} points cannot support {basis.m} monomials")
    xs, t = scale_shift(coords)
    a = _saddle_matrix(xs[None], kernel, basis)[0]
    return LocalSystem(a, xs, t, kernel, basis, None if members is None else np.asarray(members), center)


@dataclass
class OperatorWeights:
    center: int | None
    members: np.ndarray | None
    laplacian: np.ndarray | None = None  # (q,)
    gradient: np.ndarray | None = None  # (d, q)


@dataclass
class InterpolationWeights:
    at: np.ndarray
    members: np.ndarray | None
    weights: np.ndarray  # (q,)


def _operator_rhs(system: LocalSystem, op) -> tuple[np.ndarray, float]:
    """RHS column in scaled coordinates and the factor mapping weights back."""
    xs, kern, basis = system.coords, system.kernel, system.basis
    d = xs.shape[1]
    s = system.transform.scale
    if isinstance(op, Identity):
        at = xs[0] if op.at is None else system.transform.apply(np.asarray(op.at, dtype=float))
        r = np.linalg.norm(xs - at, axis=1)
        return np.concatenate([kern(r), basis.row(at)]), 1.0
    xc = xs[0]
    r = np.linalg.norm(xs - xc, axis=1)
    if isinstance(op, Laplacian):
        return np.concatenate([kern.laplacian_radial(r, d), basis.laplacian_row(xc)]), 1.0 / s**2
    if isinstance(op, GradientComponent):
        g = kern.gradient_factor(r) * (xc[op.axis] - xs[:, op.axis])
        return np.concatenate([g, basis.gradient_rows(xc)[op.axis]]), 1.0 / s
    raise TypeError(f"unsupported operator {op!r}")


def compute_weights(system: LocalSystem, op):
    """B1 row of ``op`` for this stencil, in physical (unscaled) units."""
    rhs, factor = _operator_rhs(system, op)
    try:
        sol = linalg.lu_solve(system.A, rhs)
    except linalg.SingularMatrixError as exc:
        raise linalg.SingularMatrixError(
            f"local matrix of node {system.center} is singular: {exc}", index=system.center
        ) from None
    w = sol[: system.q] * factor
    if isinstance(op, Identity):
        at = system.transform.offset + system.transform.scale * system.coords[0] if op.at is None else op.at
        return InterpolationWeights(np.asarray(at, dtype=float), system.members, w)
    if isinstance(op, Laplacian):
        return OperatorWeights(system.center, system.members, laplacian=w)
    grad = np.zeros((system.coords.shape[1], system.q))
    grad[op.axis] = w
    return OperatorWeights(system.center, system.members, gradient=grad)


def condition_number(system_or_matrix) -> float:
    a = system_or_matrix.A if isinstance(system_or_matrix, LocalSystem) else system_or_matrix
    return float(linalg.condition_numbers(np.asarray(a, dtype=float)))


# --------------------------------------------------------------------------
# whole-cloud (batched) path


@dataclass
class StencilWeights:
    """Laplacian and gradient weights for a set of nodes.

    Row i of every array belongs to node ``nodes[i]``; ``members[i, 0]`` is
    that node itself.
    """

    nodes: np.ndarray  # (n,)
    members: np.ndarray  # (n, q)
    laplacian: np.ndarray  # (n, q)
    gradient: np.ndarray  # (n, d, q)
    degree: int
    kernel: PhsKernel
    condition: np.ndarray | None = None  # (n,) 2-norm condition of A, if requested
    seconds: float = 0.0
    _row: dict = field(default=None, repr=False)

    def row_of(self, node: int) -> int:
        if self._row is None:
            self._row = {int(v): i for i, v in enumerate(self.nodes)}
        try:
            return self._row[int(node)]
        except KeyError:
            raise KeyError(f"no weights computed for node {node}") from None

    def for_node(self, node: int) -> OperatorWeights:
        i = self.row_of(node)
        return OperatorWeights(int(node), self.members[i], self.laplacian[i], self.gradient[i])

    @property
    def q(self) -> int:
        return self.members.shape[1]


def _chunk_size(q: int, m: int, budget: float = 6e6) -> int:
    return max(1, int(budget // ((q + m) ** 2)))


def stencil_weights(
    cloud: PointCloud,
    degree: int,
    kernel: PhsKernel = PhsKernel(),
    nodes=None,
    index: SpatialIndex | None = None,
    with_condition: bool = False,
) -> StencilWeights:
    """Laplacian and gradient weights for ``nodes`` (default: every non-Dirichlet node)."""
    d = cloud.dim
    basis = MonomialBasis(degree, d)
    q = cloud_size(degree, d)
    if q > len(cloud):
        raise ValueError(f"degree {degree} needs clouds of {q} nodes but the cloud has {len(cloud)}")
    if nodes is None:
        nodes = np.flatnonzero(cloud.kind != DIRICHLET)
    nodes = np.asarray(nodes, dtype=np.intp)
    index = index or SpatialIndex(cloud.points)
    t0 = time.perf_counter()
    members = select_clouds(index, nodes, q)
    m = basis.m
    n = len(nodes)
    lap = np.empty((n, q))
    grad = np.empty((n, d, q))
    cond = np.empty(n) if with_condition else None
    step = _chunk_size(q, m)
    for s in range(0, n, step):
        sl = slice(s, min(n, s + step))
        xs, _, scale = scale_shift_batch(cloud.points[members[sl]])
        a = _saddle_matrix(xs, kernel, basis)
        xc = xs[:, 0, :]
        rel = xc[:, None, :] - xs  # (b, q, d)
        r = np.linalg.norm(rel, axis=2)
        rhs = np.empty((a.shape[0], q + m, 1 + d))
        rhs[:, :q, 0] = kernel.laplacian_radial(r, d)
        rhs[:, q:, 0] = basis.laplacian_row(xc)
        gf = kernel.gradient_factor(r)
        rhs[:, :q, 1:] = gf[:, :, None] * rel
        rhs[:, q:, 1:] = np.swapaxes(basis.gradient_rows(xc), 1, 2)
        sol = linalg.batched_solve(a, rhs, labels=nodes[sl])
        lap[sl] = sol[:, :q, 0] / scale[:, None] ** 2
        grad[sl] = np.swapaxes(sol[:, :q, 1:], 1, 2) / scale[:, None, None]
        if with_condition:
            cond[sl] = linalg.condition_numbers(a)
    return StencilWeights(
        nodes, members, lap, grad, degree, kernel, cond, seconds=time.perf_counter() - t0
    )


def local_condition_numbers(
    cloud: PointCloud, degree: int, kernel: PhsKernel = PhsKernel(), nodes=None
) -> np.ndarray:
    """2-norm condition number of the scale-shifted local matrix at each node.

    Defaults to the nodes that carry stencils (every non-Dirichlet node).
    """
    d = cloud.dim
    basis = MonomialBasis(degree, d)
    q = cloud_size(degree, d)
    if nodes is None:
        nodes = np.flatnonzero(cloud.kind != DIRICHLET)
    nodes = np.asarray(nodes, dtype=np.intp)
    members = select_clouds(SpatialIndex(cloud.points), nodes, q)
    out = np.empty(len(nodes))
    step = _chunk_size(q, basis.m)
    for s in range(0, len(nodes), step):
        sl = slice(s, s + step)
        xs, _, _ = scale_shift_batch(cloud.points[members[sl]])
        out[sl] = linalg.condition_numbers(_saddle_matrix(xs, kernel, basis))
    return out


def interpolation_weights(
    points: np.ndarray,
    queries: np.ndarray,
    degree: int,
    kernel: PhsKernel = PhsKernel(),
    index: SpatialIndex | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """(members, weights) so that value(query_i) ~= weights[i] . field[members[i]]."""
    points = np.asarray(points, dtype=float)
    queries = np.atleast_2d(np.asarray(queries, dtype=float))
    d = points.shape[1]
    basis = MonomialBasis(degree, d)
    q = min(cloud_size(degree, d), len(points))
    index = index or SpatialIndex(points)
    members = index.k_nearest(queries, q)
    weights = np.empty((len(queries), q))
    step = _chunk_size(q, basis.m)
    for s in range(0, len(queries), step):
        sl = slice(s, s + step)
        # include the query in the box so it also maps into [0, 1]^d
        stack = np.concatenate([points[members[sl]], queries[sl, None, :]], axis=1)
        lo = stack.min(axis=1)
        scale = (stack.max(axis=1) - lo).max(axis=1)
        xs = (points[members[sl]] - lo[:, None, :]) / scale[:, None, None]
        xq = (queries[sl] - lo) / scale[:, None]
        a = _saddle_matrix(xs, kernel, basis)
        r = np.linalg.norm(xs - xq[:, None, :], axis=2)
        rhs = np.concatenate([kernel(r), basis.row(xq)], axis=1)[..., None]
        sol = linalg.batched_solve(a, rhs)
        weights[sl] = sol[:, :q, 0]
    return members, weights
