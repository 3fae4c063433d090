"""Scattered point clouds for 2D/3D conduction problems.

A :class:`PointCloud` stores node coordinates together with a per-node boundary
role. Roles are kept as parallel arrays (``kind``, ``value``, ``normals``)
rather than one object per node so that clouds with 10^5-10^6 nodes stay cheap.

Built-in generators fill a domain with a hexagonal (2D) or cubic (3D) lattice
clipped to the domain, keeping only lattice points at least ``0.7 * spacing``
away from the boundary, and sample the boundary curves/surfaces at roughly the
same spacing.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass, field
from typing import Callable, Iterable

import numpy as np
from scipy.spatial import cKDTree

INTERIOR = 0
DIRICHLET = 1
NEUMANN = 2

_KIND_NAMES = {INTERIOR: "interior", DIRICHLET: "dirichlet", NEUMANN: "neumann"}

BOUNDARY_EXCLUSION = 0.7
# Perfect lattices put stencil points on a few planes/lines, which can make
# the local polynomial fit singular (seen for degree 4 on a cubic lattice).
# A small fixed-seed perturbation removes that degeneracy.
DEFAULT_JITTER = 0.1
JITTER_SEED = 20211
DUPLICATE_TOL = 1e-14


class PointFileError(ValueError):
    """Raised for malformed point files; message names the offending line."""


class GeometryError(ValueError):
    pass


@dataclass(frozen=True)
class NodeRole:
    """Role of a single node, as returned by :meth:`PointCloud.role`."""

    kind: int
    value: float = 0.0
    normal: tuple[float, ...] | None = None

    @property
    def name(self) -> str:
        return _KIND_NAMES[self.kind]


@dataclass(frozen=True, eq=False)
class PointCloud:
    """Immutable discretization of a domain.

    Attributes:
        points: (N, d) coordinates.
        kind: (N,) node kinds, one of INTERIOR / DIRICHLET / NEUMANN.
        value: (N,) Dirichlet temperature or Neumann flux (0 for interior).
        normals: (N, d) outward unit normals; zero rows except for Neumann nodes.
        id: free-form label.
    """

    points: np.ndarray
    kind: np.ndarray
    value: np.ndarray
    normals: np.ndarray = None
    id: str = ""
    _check_duplicates: bool = field(default=True, repr=False)

    def __post_init__(self):
        pts = np.ascontiguousarray(self.points, dtype=float)
        if pts.ndim != 2 or pts.shape[1] not in (2, 3):
            raise ValueError(f"points must have shape (N, 2|3), got {pts.shape}")
        n, d = pts.shape
        kind = np.asarray(self.kind, dtype=np.int8).reshape(-1)
        value = np.asarray(self.value, dtype=float).reshape(-1)
        normals = (
            np.zeros((n, d)) if self.normals is None else np.asarray(self.normals, dtype=float)
        )
        if kind.shape != (n,) or value.shape != (n,) or normals.shape != (n, d):
            raise ValueError("kind, value and normals must align with points")
        if not np.all(np.isfinite(pts)):
            raise ValueError("point coordinates must be finite")
        if np.any((kind < 0) | (kind > 2)):
            raise ValueError("unknown node kind")
        neu = kind == NEUMANN
        if np.any(neu):
            lengths = np.linalg.norm(normals[neu], axis=1)
            bad = np.flatnonzero(np.abs(lengths - 1.0) > 1e-12)
            if bad.size:
                idx = np.flatnonzero(neu)[bad[0]]
                raise ValueError(f"Neumann node {idx} has non-unit normal (|n|={lengths[bad[0]]})")
        for arr in (pts, kind, value, normals):
            arr.setflags(write=False)
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "kind", kind)
        object.__setattr__(self, "value", value)
        object.__setattr__(self, "normals", normals)
        if self._check_duplicates and n > 1:
            i, j = find_duplicates(pts)
            if i >= 0:
                raise ValueError(f"nodes {i} and {j} coincide")

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    def __len__(self) -> int:
        return self.points.shape[0]

    @property
    def interior(self) -> np.ndarray:
        return np.flatnonzero(self.kind == INTERIOR)

    @property
    def boundary(self) -> np.ndarray:
        return np.flatnonzero(self.kind != INTERIOR)

    @property
    def dirichlet(self) -> np.ndarray:
        return np.flatnonzero(self.kind == DIRICHLET)

    @property
    def neumann(self) -> np.ndarray:
        return np.flatnonzero(self.kind == NEUMANN)

    def role(self, i: int) -> NodeRole:
        k = int(self.kind[i])
        normal = tuple(self.normals[i]) if k == NEUMANN else None
        return NodeRole(k, float(self.value[i]), normal)

    def diameter(self) -> float:
        return float(np.linalg.norm(self.points.max(axis=0) - self.points.min(axis=0)))


def find_duplicates(points: np.ndarray, rel_tol: float = DUPLICATE_TOL) -> tuple[int, int]:
    """Return the first pair of nodes closer than ``rel_tol`` times the diameter, or (-1, -1)."""
    points = np.asarray(points, dtype=float)
    diam = float(np.linalg.norm(points.max(axis=0) - points.min(axis=0)))
    dist, idx = cKDTree(points).query(points, k=2)
    close = np.flatnonzero(dist[:, 1] <= rel_tol * max(diam, 1.0))
    if close.size == 0:
        return -1, -1
    i = int(close[0])
    return i, int(idx[i, 1])


def average_spacing(cloud: PointCloud | np.ndarray) -> float:
    """Mean distance from each node to its nearest neighbour."""
    pts = cloud.points if isinstance(cloud, PointCloud) else np.asarray(cloud, dtype=float)
    if pts.shape[0] < 2:
        raise ValueError("average spacing needs at least 2 points")
    dist, _ = cKDTree(pts).query(pts, k=2)
    return float(dist[:, 1].mean())


# --------------------------------------------------------------------------
# point file I/O


def load_point_file(path: str | os.PathLike) -> PointCloud:
    """Parse a point file (``dim`` header, then one node per line)."""
    dim = None
    pts, kinds, values, normals = [], [], [], []
    line_of_node = []
    with open(path) as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            tok = line.split()
            if dim is None:
                if len(tok) != 2 or tok[0] != "dim" or tok[1] not in ("2", "3"):
                    raise PointFileError(f"{path}:{lineno}: expected header 'dim 2' or 'dim 3'")
                dim = int(tok[1])
                continue
            try:
                coords = [float(t) for t in tok[:dim]]
            except ValueError:
                raise PointFileError(f"{path}:{lineno}: bad coordinate in {line!r}") from None
            if len(tok) < dim + 1:
                raise PointFileError(f"{path}:{lineno}: expected {dim} coordinates and a role")
            tag = tok[dim].lower()
            rest = tok[dim + 1 :]
            if tag not in _KIND_NAMES.values():
                # a numeric token in the role slot means too many coordinates
                raise PointFileError(
                    f"{path}:{lineno}: expected role after {dim} coordinates, got {tok[dim]!r}"
                )
            nrm = [0.0] * dim
            try:
                if tag == "interior":
                    if rest:
                        raise PointFileError(f"{path}:{lineno}: unexpected columns after 'interior'")
                    kind, val = INTERIOR, 0.0
                elif tag == "dirichlet":
                    if len(rest) != 1:
                        raise PointFileError(f"{path}:{lineno}: 'dirichlet' takes exactly one value")
                    kind, val = DIRICHLET, float(rest[0])
                else:
                    if len(rest) != 1 + dim:
                        raise PointFileError(
                            f"{path}:{lineno}: 'neumann' needs a flux and {dim} normal components"
                        )
                    kind, val = NEUMANN, float(rest[0])
                    nrm = [float(t) for t in rest[1:]]
                    length = math.sqrt(sum(c * c for c in nrm))
                    if abs(length - 1.0) > 1e-12:
                        raise PointFileError(f"{path}:{lineno}: Neumann normal is not unit length")
            except ValueError as exc:
                if isinstance(exc, PointFileError):
                    raise
                raise PointFileError(f"{path}:{lineno}: bad number in {line!r}") from None
            if not all(math.isfinite(c) for c in coords):
                raise PointFileError(f"{path}:{lineno}: non-finite coordinate")
            pts.append(coords)
            kinds.append(kind)
            values.append(val)
            normals.append(nrm)
            line_of_node.append(lineno)
    if dim is None:
        raise PointFileError(f"{path}: missing 'dim' header")
    if not pts:
        raise PointFileError(f"{path}: no points")
    arr = np.array(pts, dtype=float)
    i, j = find_duplicates(arr)
    if i >= 0:
        a, b = sorted((line_of_node[i], line_of_node[j]))
        raise PointFileError(f"{path}:{b}: duplicate of the point on line {a}")
    name = os.path.splitext(os.path.basename(os.fspath(path)))[0]
    return PointCloud(arr, kinds, values, np.array(normals), id=name, _check_duplicates=False)


def write_point_file(cloud: PointCloud, path: str | os.PathLike) -> None:
    d = cloud.dim
    with open(path, "w") as fh:
        fh.write(f"# {cloud.id or 'point cloud'}: {len(cloud)} nodes\n")
        fh.write(f"dim {d}\n")
        for p, k, v, nrm in zip(cloud.points, cloud.kind, cloud.value, cloud.normals):
            coords = " ".join(f"{c:.17g}" for c in p)
            if k == INTERIOR:
                fh.write(f"{coords} interior\n")
            elif k == DIRICHLET:
                fh.write(f"{coords} dirichlet {v:.17g}\n")
            else:
                ns = " ".join(f"{c:.17g}" for c in nrm)
                fh.write(f"{coords} neumann {v:.17g} {ns}\n")


# --------------------------------------------------------------------------
# generators


def _hex_lattice(lo: np.ndarray, hi: np.ndarray, h: float) -> np.ndarray:
    dy = h * math.sqrt(3.0) / 2.0
    j0, j1 = math.floor(lo[1] / dy) - 1, math.ceil(hi[1] / dy) + 1
    i0, i1 = math.floor(lo[0] / h) - 1, math.ceil(hi[0] / h) + 1
    jj, ii = np.mgrid[j0 : j1 + 1, i0 : i1 + 1]
    x = ii * h + (jj % 2) * (h / 2.0)
    y = jj * dy
    return np.column_stack([x.ravel(), y.ravel()])


def _cubic_lattice(lo: np.ndarray, hi: np.ndarray, h: float) -> np.ndarray:
    axes = [np.arange(math.floor(a / h) - 1, math.ceil(b / h) + 2) * h for a, b in zip(lo, hi)]
    grid = np.meshgrid(*axes, indexing="ij")
    return np.column_stack([g.ravel() for g in grid])


def _jitter(lattice: np.ndarray, h: float, amount: float) -> np.ndarray:
    if not 0.0 <= amount <= 0.25:
        raise GeometryError("jitter must lie in [0, 0.25] (fraction of the spacing)")
    if amount == 0:
        return lattice
    # fixed seed: identical inputs give identical clouds
    rng = np.random.default_rng(JITTER_SEED)
    return lattice + rng.uniform(-amount * h, amount * h, size=lattice.shape)


def _fill(
    lattice: np.ndarray,
    boundary_distance: Callable[[np.ndarray], np.ndarray],
    h: float,
    jitter: float = 0.0,
):
    """Keep (jittered) lattice points inside the domain and clear of the boundary."""
    lattice = _jitter(lattice, h, jitter)
    dist = boundary_distance(lattice)
    return lattice[dist >= BOUNDARY_EXCLUSION * h]


def _circle(r: float, h: float) -> np.ndarray:
    n = max(8, 4 * round(2.0 * math.pi * r / (4.0 * h)))
    t = 2.0 * math.pi * np.arange(n) / n
    pts = np.column_stack([r * np.cos(t), r * np.sin(t)])
    # snap the axis points so (r, 0), (0, r), ... are exact
    q = n // 4
    pts[0] = (r, 0.0)
    pts[q] = (0.0, r)
    pts[2 * q] = (-r, 0.0)
    pts[3 * q] = (0.0, -r)
    return pts


def _fibonacci_sphere(r: float, h: float) -> np.ndarray:
    """Fibonacci spiral with its poles on the x-axis, so (+-r, 0, 0) are nodes."""
    n = max(12, round(4.0 * math.pi * r * r / (h * h)))
    i = np.arange(n)
    axial = 1.0 - 2.0 * i / (n - 1)
    rho = np.sqrt(np.clip(1.0 - axial * axial, 0.0, None))
    golden = math.pi * (3.0 - math.sqrt(5.0))
    phi = golden * i
    pts = r * np.column_stack([axial, rho * np.cos(phi), rho * np.sin(phi)])
    pts[0] = (r, 0.0, 0.0)
    pts[-1] = (-r, 0.0, 0.0)
    return pts


def _ellipse(a: float, b: float, h: float) -> np.ndarray:
    # arc-length sampling of one quadrant, mirrored so the axis points are exact
    t = np.linspace(0.0, math.pi / 2.0, 4001)
    xy = np.column_stack([a * np.cos(t), b * np.sin(t)])
    s = np.concatenate([[0.0], np.cumsum(np.linalg.norm(np.diff(xy, axis=0), axis=1))])
    nq = max(2, round(s[-1] / h))
    tq = np.interp(np.linspace(0.0, s[-1], nq + 1), s, t)
    tq[0], tq[-1] = 0.0, math.pi / 2.0
    quad = np.column_stack([a * np.cos(tq), b * np.sin(tq)])
    quad[0] = (a, 0.0)
    quad[-1] = (0.0, b)
    q1 = quad[:-1]  # [0, pi/2)
    q2 = np.column_stack([-quad[::-1, 0], quad[::-1, 1]])[:-1]  # [pi/2, pi)
    half = np.vstack([q1, q2])
    other = -half
    return np.vstack([half, other])


def _ellipse_distance(a: float, b: float, pts: np.ndarray, h: float) -> np.ndarray:
    """Distance to the ellipse boundary, negative inside the ellipse."""
    t = np.linspace(0.0, 2.0 * math.pi, max(2000, int(40 * math.pi * a / h)), endpoint=False)
    dense = np.column_stack([a * np.cos(t), b * np.sin(t)])
    dist, _ = cKDTree(dense).query(pts)
    inside = (pts[:, 0] / a) ** 2 + (pts[:, 1] / b) ** 2 < 1.0
    return np.where(inside, -dist, dist)


def _assemble(boundary_sets: Iterable[tuple[np.ndarray, float]], interior: np.ndarray, label: str):
    pts, kinds, values = [], [], []
    for bpts, val in boundary_sets:
        pts.append(bpts)
        kinds.append(np.full(len(bpts), DIRICHLET))
        values.append(np.full(len(bpts), float(val)))
    pts.append(interior)
    kinds.append(np.full(len(interior), INTERIOR))
    values.append(np.zeros(len(interior)))
    return PointCloud(np.vstack(pts), np.concatenate(kinds), np.concatenate(values), id=label)


def _check_spacing(spacing: float, gap: float):
    if not spacing > 0:
        raise GeometryError("spacing must be positive")
    if gap <= 2.0 * BOUNDARY_EXCLUSION * spacing:
        raise GeometryError(
            f"spacing {spacing} is too coarse: no interior ring fits in a gap of {gap}"
        )


def generate_annulus(
    r_inner: float = 0.5,
    r_outer: float = 1.0,
    spacing: float = 0.03,
    inner_value: float = 1.0,
    outer_value: float = 0.0,
    jitter: float = DEFAULT_JITTER,
) -> PointCloud:
    """Annulus r_inner <= |x| <= r_outer with Dirichlet data on both circles."""
    if not 0 < r_inner < r_outer:
        raise GeometryError("need 0 < r_inner < r_outer")
    _check_spacing(spacing, r_outer - r_inner)
    lattice = _hex_lattice(np.array([-r_outer] * 2), np.array([r_outer] * 2), spacing)

    def dist(p):
        r = np.linalg.norm(p, axis=1)
        return np.minimum(r - r_inner, r_outer - r)

    interior = _fill(lattice, dist, spacing, jitter)
    return _assemble(
        [(_circle(r_inner, spacing), inner_value), (_circle(r_outer, spacing), outer_value)],
        interior,
        f"annulus_h{spacing:g}",
    )


def generate_spherical_shell(
    r_inner: float = 0.5,
    r_outer: float = 1.0,
    spacing: float = 0.08,
    inner_value: float = 1.0,
    outer_value: float = 0.0,
    jitter: float = DEFAULT_JITTER,
) -> PointCloud:
    """Spherical shell with Fibonacci-sampled boundary spheres."""
    if not 0 < r_inner < r_outer:
        raise GeometryError("need 0 < r_inner < r_outer")
    _check_spacing(spacing, r_outer - r_inner)
    lattice = _cubic_lattice(np.array([-r_outer] * 3), np.array([r_outer] * 3), spacing)

    def dist(p):
        r = np.linalg.norm(p, axis=1)
        return np.minimum(r - r_inner, r_outer - r)

    interior = _fill(lattice, dist, spacing, jitter)
    return _assemble(
        [
            (_fibonacci_sphere(r_inner, spacing), inner_value),
            (_fibonacci_sphere(r_outer, spacing), outer_value),
        ],
        interior,
        f"shell_h{spacing:g}",
    )


def generate_ellipse_in_circle(
    a: float = 0.5,
    b: float = 0.25,
    r_outer: float = 1.0,
    spacing: float = 0.03,
    inner_value: float = 1.0,
    outer_value: float = 0.0,
    jitter: float = DEFAULT_JITTER,
) -> PointCloud:
    """Elliptical hole (semi-axes a along x, b along y) inside a circle."""
    if not (0 < b and 0 < a < r_outer and b < r_outer):
        raise GeometryError("ellipse must lie strictly inside the circle")
    _check_spacing(spacing, r_outer - max(a, b))
    lattice = _hex_lattice(np.array([-r_outer] * 2), np.array([r_outer] * 2), spacing)

    def dist(p):
        return np.minimum(_ellipse_distance(a, b, p, spacing), r_outer - np.linalg.norm(p, axis=1))

    interior = _fill(lattice, dist, spacing, jitter)
    return _assemble(
        [(_ellipse(a, b, spacing), inner_value), (_circle(r_outer, spacing), outer_value)],
        interior,
        f"ellipse_in_circle_h{spacing:g}",
    )


def generate_sphere_in_cuboid(
    half_edge: float = 1.0,
    r_sphere: float = 0.5,
    spacing: float = 0.08,
    inner_value: float = 1.0,
    outer_value: float = 0.0,
    jitter: float = DEFAULT_JITTER,
) -> PointCloud:
    """Cube [-half_edge, half_edge]^3 with a centred spherical hole."""
    if not 0 < r_sphere < half_edge:
        raise GeometryError("sphere must lie strictly inside the cuboid")
    _check_spacing(spacing, half_edge - r_sphere)
    # an even cell count puts the face centres, e.g. (half_edge, 0, 0), on the grid
    n = 2 * max(1, round(half_edge / spacing))
    idx = np.arange(n + 1)
    grid = np.stack(np.meshgrid(idx, idx, idx, indexing="ij"), axis=-1).reshape(-1, 3)
    on_face = np.any((grid == 0) | (grid == n), axis=1)
    coords = half_edge * (2.0 * grid / n - 1.0)
    faces = coords[on_face]
    # the interior lattice shares the face grid, so it clears the faces by one step
    # (less the jitter, which stays below the 0.3-step margin)
    inner = _jitter(coords[~on_face], spacing, jitter)
    interior = inner[np.linalg.norm(inner, axis=1) - r_sphere >= BOUNDARY_EXCLUSION * spacing]
    return _assemble(
        [(_fibonacci_sphere(r_sphere, spacing), inner_value), (faces, outer_value)],
        interior,
        f"sphere_in_cuboid_h{spacing:g}",
    )


GENERATORS: dict[str, Callable[..., PointCloud]] = {
    "annulus": generate_annulus,
    "spherical_shell": generate_spherical_shell,
    "ellipse_in_circle": generate_ellipse_in_circle,
    "sphere_in_cuboid": generate_sphere_in_cuboid,
}

_DIMS = {"annulus": 2, "spherical_shell": 3, "ellipse_in_circle": 2, "sphere_in_cuboid": 3}


def generate(name: str, spacing: float, **params) -> PointCloud:
    try:
        gen = GENERATORS[name]
    except KeyError:
        raise GeometryError(
            f"unknown geometry {name!r}; choose one of {', '.join(GENERATORS)}"
        ) from None
    return gen(spacing=spacing, **params)


def spacing_for_nodes(name: str, target: int, **params) -> float:
    """Lattice spacing whose generated cloud has roughly ``target`` nodes.

    Node count is a step function of the spacing, so this only gets within a
    percent or so. A few bisection steps on log(spacing) are enough.
    """
    d = _DIMS[name]

    def count(h):
        return len(generate(name, h, **params))

    h = 0.05
    n = count(h)
    h *= (n / target) ** (1.0 / d)
    lo = hi = None
    for _ in range(12):
        n = count(h)
        if abs(n - target) <= 0.005 * target:
            return h
        if n > target:
            lo = h
        else:
            hi = h
        if lo is not None and hi is not None:
            h = math.sqrt(lo * hi)
        else:
            h *= (n / target) ** (1.0 / d)
    return h
