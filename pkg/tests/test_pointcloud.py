import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from meshfree_heat.pointcloud import (
    DIRICHLET,
    INTERIOR,
    NEUMANN,
    GeometryError,
    PointCloud,
    PointFileError,
    average_spacing,
    generate,
    generate_annulus,
    generate_ellipse_in_circle,
    generate_sphere_in_cuboid,
    generate_spherical_shell,
    load_point_file,
    spacing_for_nodes,
    write_point_file,
)


def _write(tmp_path, text, name="pts.txt"):
    p = tmp_path / name
    p.write_text(text)
    return p


# ---------------------------------------------------------------- point files


def test_load_three_interior_points(tmp_path):
    p = _write(tmp_path, "dim 2\n0 0 interior\n1 0 interior\n0 1 interior\n")
    c = load_point_file(p)
    assert len(c) == 3 and c.dim == 2
    assert np.all(c.kind == INTERIOR)


def test_neumann_without_normal_names_line(tmp_path):
    p = _write(tmp_path, "dim 2\n0 0 interior\n# comment\n1 0 neumann 0.5\n")
    with pytest.raises(PointFileError, match=":4:"):
        load_point_file(p)


def test_dimension_mismatch(tmp_path):
    p = _write(tmp_path, "dim 3\n0 0 0 interior\n1 0 interior\n")
    with pytest.raises(PointFileError, match=":3:"):
        load_point_file(p)


def test_duplicate_rows_rejected(tmp_path):
    p = _write(tmp_path, "dim 2\n0 0 interior\n1 1 dirichlet 2\n1 1 interior\n")
    with pytest.raises(PointFileError, match="duplicate"):
        load_point_file(p)


@pytest.mark.parametrize(
    "body",
    ["0 0 interior extra\n", "0 0 dirichlet\n", "0 0 neumann 1 0.6 0.6\n", "0 x interior\n", "0 0 lava\n"],
)
def test_malformed_rows(tmp_path, body):
    p = _write(tmp_path, "dim 2\n" + body)
    with pytest.raises(PointFileError):
        load_point_file(p)


def test_missing_header(tmp_path):
    with pytest.raises(PointFileError):
        load_point_file(_write(tmp_path, "0 0 interior\n"))


def test_round_trip_all_roles(tmp_path):
    pts = np.array([[0.1, 0.2, 0.3], [1 / 3, 0.5, 0.7], [0.9, 0.1, 0.2]])
    normals = np.zeros((3, 3))
    normals[2] = [0.6, 0.0, 0.8]
    c = PointCloud(pts, [INTERIOR, DIRICHLET, NEUMANN], [0.0, 2.5, -1.0 / 7], normals)
    p = tmp_path / "c.txt"
    write_point_file(c, p)
    back = load_point_file(p)
    assert np.array_equal(back.points, c.points)
    assert np.array_equal(back.kind, c.kind)
    assert np.array_equal(back.value, c.value)
    assert np.array_equal(back.normals, c.normals)
    assert back.role(2).normal == (0.6, 0.0, 0.8)


def test_cloud_is_immutable():
    c = PointCloud([[0, 0], [1, 0]], [0, 1], [0, 1])
    with pytest.raises(ValueError):
        c.points[0, 0] = 3.0


def test_non_unit_normal_rejected():
    with pytest.raises(ValueError, match="non-unit"):
        PointCloud([[0, 0], [1, 0]], [NEUMANN, INTERIOR], [0, 0], [[1, 1], [0, 0]])


# ---------------------------------------------------------------- spacing


def test_spacing_two_points():
    assert average_spacing(np.array([[0.0, 0.0], [1.0, 0.0]])) == 1.0


def test_spacing_unit_lattice():
    h = 0.37
    g = np.stack(np.meshgrid(np.arange(7), np.arange(5)), -1).reshape(-1, 2) * h
    assert math.isclose(average_spacing(g), h, rel_tol=1e-12)


def test_spacing_needs_two_points():
    with pytest.raises(ValueError):
        average_spacing(np.zeros((1, 2)))


@given(
    theta=st.floats(0, 2 * math.pi),
    shift=st.tuples(st.floats(-100, 100), st.floats(-100, 100)),
    seed=st.integers(0, 2**31),
)
def test_spacing_rigid_invariance(theta, shift, seed):
    pts = np.random.default_rng(seed).random((40, 2))
    rot = np.array([[math.cos(theta), -math.sin(theta)], [math.sin(theta), math.cos(theta)]])
    moved = pts @ rot.T + np.array(shift)
    assert abs(average_spacing(moved) - average_spacing(pts)) <= 1e-12 * max(1.0, abs(shift[0]) + abs(shift[1]))


# ---------------------------------------------------------------- generators


def test_annulus_geometry_and_roles():
    c = generate_annulus(0.5, 1.0, 0.04)
    r = np.linalg.norm(c.points, axis=1)
    assert np.all(r >= 0.5 - 1e-12) and np.all(r <= 1.0 + 1e-12)
    inner = c.dirichlet[np.isclose(r[c.dirichlet], 0.5)]
    outer = c.dirichlet[np.isclose(r[c.dirichlet], 1.0)]
    assert len(inner) + len(outer) == len(c.dirichlet)
    assert np.all(c.value[inner] == 1.0) and np.all(c.value[outer] == 0.0)
    assert 500 < len(c) < 5000


def test_annulus_paper_scale_count():
    # a spacing near 0.03 gives a cloud of order 10^3 nodes
    c = generate_annulus(spacing=0.03)
    assert 1000 <= len(c) < 10000


def test_annulus_node_count_scales_quadratically():
    n1 = len(generate_annulus(spacing=0.04))
    n2 = len(generate_annulus(spacing=0.02))
    assert 3.4 < n2 / n1 < 4.4


def test_annulus_9111_nodes_spacing():
    h = spacing_for_nodes("annulus", 9111)
    c = generate_annulus(spacing=h)
    assert abs(len(c) - 9111) / 9111 < 0.01
    assert abs(average_spacing(c) - 0.0171) / 0.0171 < 0.15


def test_annulus_too_coarse():
    with pytest.raises(GeometryError):
        generate_annulus(0.5, 1.0, 0.6)


def test_shell_geometry_and_scaling():
    c = generate_spherical_shell(spacing=0.12)
    r = np.linalg.norm(c.points, axis=1)
    assert np.all(r >= 0.5 - 1e-12) and np.all(r <= 1.0 + 1e-12)
    d = c.dirichlet
    assert np.all(c.value[d][np.isclose(r[d], 0.5)] == 1.0)
    assert np.all(c.value[d][np.isclose(r[d], 1.0)] == 0.0)
    ratio = len(generate_spherical_shell(spacing=0.06)) / len(c)
    assert 6.5 < ratio < 9.5


def test_ellipse_in_circle_reference_points():
    c = generate_ellipse_in_circle(spacing=0.05)
    for p, val in (((0.5, 0.0), 1.0), ((0.0, 0.25), 1.0), ((0.0, 1.0), 0.0), ((1.0, 0.0), 0.0)):
        hit = np.flatnonzero(np.all(c.points == p, axis=1))
        assert hit.size == 1, p
        assert c.kind[hit[0]] == DIRICHLET and c.value[hit[0]] == val
    x, y = c.points[c.interior].T
    assert np.all(x**2 / 0.25 + y**2 / 0.0625 >= 1.0)


def test_sphere_in_cuboid():
    c = generate_sphere_in_cuboid(spacing=0.15)
    it = c.points[c.interior]
    assert np.all(np.linalg.norm(it, axis=1) >= 0.5)
    assert np.all(np.abs(it).max(axis=1) <= 1.0)
    corner = np.flatnonzero(np.all(c.points == 1.0, axis=1))
    assert corner.size == 1 and c.kind[corner[0]] == DIRICHLET and c.value[corner[0]] == 0.0
    r = np.linalg.norm(c.points[c.dirichlet], axis=1)
    on_sphere = np.isclose(r, 0.5)
    assert np.all(c.value[c.dirichlet][on_sphere] == 1.0)
    assert np.all(c.value[c.dirichlet][~on_sphere] == 0.0)


@pytest.mark.parametrize("name,h", [("annulus", 0.05), ("spherical_shell", 0.15),
                                    ("ellipse_in_circle", 0.06), ("sphere_in_cuboid", 0.2)])
def test_generators_deterministic(name, h):
    a, b = generate(name, h), generate(name, h)
    assert np.array_equal(a.points, b.points) and np.array_equal(a.value, b.value)


@given(inner=st.floats(-5, 5), outer=st.floats(-5, 5))
def test_boundary_values_carried(inner, outer):
    c = generate_annulus(spacing=0.1, inner_value=inner, outer_value=outer)
    r = np.linalg.norm(c.points[c.dirichlet], axis=1)
    vals = c.value[c.dirichlet]
    assert np.all(vals[np.isclose(r, 0.5)] == inner)
    assert np.all(vals[np.isclose(r, 1.0)] == outer)


def test_unknown_generator():
    with pytest.raises(GeometryError):
        generate("torus", 0.1)
