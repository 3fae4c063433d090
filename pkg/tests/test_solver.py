import logging
import math

import numpy as np
import pytest
import scipy.sparse as sp

from meshfree_heat.assembly import assemble_steady, laplacian_matrix
from meshfree_heat.pointcloud import DIRICHLET, INTERIOR, NEUMANN, PointCloud, generate_annulus, generate_spherical_shell
from meshfree_heat.rbf_operator import PhsKernel, stencil_weights
from meshfree_heat.solver import (
    History,
    InstabilityError,
    SolutionField,
    SolverError,
    TransientConfig,
    solve_steady,
    solve_transient,
    stable_dt_estimate,
    steady_problem,
    step,
)
from meshfree_heat.verify import exact_annulus, exact_shell, interpolate_at


@pytest.fixture(scope="module")
def annulus5k():
    from meshfree_heat.pointcloud import spacing_for_nodes

    return generate_annulus(spacing=spacing_for_nodes("annulus", 5000))


def test_annulus_value_at_three_quarters(annulus5k):
    sol, timing = steady_problem(annulus5k, 4)
    got = interpolate_at(annulus5k, sol, [[0.75, 0.0], [0.0, -0.75], [0.53033, 0.53033]], 4).values
    assert np.all(np.abs(got - math.log(0.75) / math.log(0.5)) <= 1e-4)
    d = annulus5k.dirichlet
    assert np.array_equal(sol.values[d], annulus5k.value[d])
    assert sol.metadata["solver"]["converged"] and timing.nnz > 0
    assert min(timing.coefficients, timing.preconditioning, timing.solve) >= 0


def test_shell_value_at_three_quarters():
    c = generate_spherical_shell(spacing=0.06)
    sol, _ = steady_problem(c, 3)
    got = interpolate_at(c, sol, [[0.75, 0, 0], [0, 0, 0.75]], 3).values
    assert np.all(np.abs(got - 1 / 3) <= 1e-3)


def test_constant_boundary_gives_constant_field():
    c = generate_annulus(spacing=0.06, inner_value=2.5, outer_value=2.5)
    sol, _ = steady_problem(c, 3)
    assert np.allclose(sol.values, 2.5, atol=1e-8)


def test_non_convergence_raises():
    c = generate_annulus(spacing=0.06)
    w = stencil_weights(c, 3)
    with pytest.raises(SolverError) as ei:
        solve_steady(assemble_steady(c, w), tol=1e-14, max_iters=1)
    assert ei.value.stats is not None and not ei.value.stats.converged


def test_solution_field_rejects_nan():
    with pytest.raises(ValueError):
        SolutionField(np.array([1.0, np.nan]))


def test_neumann_problem_linear_solution():
    # unit square with T = x + 2y: Dirichlet on left/right, Neumann on top/bottom
    g = np.linspace(0, 1, 21)
    xx, yy = np.meshgrid(g, g)
    pts = np.column_stack([xx.ravel(), yy.ravel()])
    kind = np.full(len(pts), INTERIOR)
    value = np.zeros(len(pts))
    normals = np.zeros_like(pts)
    exact = pts[:, 0] + 2 * pts[:, 1]
    left_right = np.isclose(pts[:, 0], 0) | np.isclose(pts[:, 0], 1)
    top = np.isclose(pts[:, 1], 1) & ~left_right
    bottom = np.isclose(pts[:, 1], 0) & ~left_right
    kind[left_right] = DIRICHLET
    value[left_right] = exact[left_right]
    kind[top | bottom] = NEUMANN
    normals[top] = [0, 1]
    normals[bottom] = [0, -1]
    value[top] = 2.0
    value[bottom] = -2.0
    rng = np.random.default_rng(3)
    inner = kind == INTERIOR
    pts[inner] += rng.uniform(-0.01, 0.01, size=(inner.sum(), 2))
    exact = pts[:, 0] + 2 * pts[:, 1]
    c = PointCloud(pts, kind, value, normals)
    sol, _ = steady_problem(c, 3)
    assert np.allclose(sol.values, exact, atol=1e-7)


# ---------------------------------------------------------------- transient


def chain():
    pts = np.array([[0.0, 0.0], [1.0, 0.0], [2.0, 0.0]])
    cloud = PointCloud(pts, [DIRICHLET, INTERIOR, DIRICHLET], [1.0, 0.0, 3.0])
    lap = sp.csr_matrix(np.array([[0, 0, 0], [1.0, -2.0, 1.0], [0, 0, 0]]))
    return cloud, lap


def test_single_euler_step_by_hand():
    from meshfree_heat.solver import _BoundaryPins

    cloud, lap = chain()
    cfg = TransientConfig(alpha=0.5, dt=0.1, t_end=1.0)
    t = np.array([1.0, 0.0, 3.0])
    new = step(t, lap, cfg, History(), _BoundaryPins(cloud, None))
    # 0 + 0.1 * 0.5 * (1 - 0 + 3)
    assert np.allclose(new, [1.0, 0.2, 3.0])


def test_steady_state_is_fixed_point():
    cloud, lap = chain()
    t = np.array([1.0, 2.0, 3.0])
    for scheme in ("euler", "ab2"):
        cfg = TransientConfig(1.0, 0.01, 1.0, scheme)
        h = History()
        out = step(step(t, lap, cfg, h), lap, cfg, h)
        assert np.max(np.abs(out - t)) <= 1e-12


def test_ab2_needs_history():
    _, lap = chain()
    cfg = TransientConfig(1.0, 0.01, 1.0, "ab2")
    with pytest.raises(ValueError):
        step(np.zeros(3), lap, cfg, History(steps=2, last_rate=None))


def test_ab2_bootstrap_is_euler():
    _, lap = chain()
    t = np.array([1.0, 0.0, 3.0])
    e = step(t, lap, TransientConfig(1.0, 0.01, 1.0, "euler"), History())
    a = step(t, lap, TransientConfig(1.0, 0.01, 1.0, "ab2"), History())
    assert np.array_equal(e, a)


def test_ab2_and_euler_agree_to_first_order():
    cloud = generate_annulus(spacing=0.08)
    w = stencil_weights(cloud, 3)
    lap = laplacian_matrix(cloud, w)
    t0 = np.zeros(len(cloud))
    t0[cloud.dirichlet] = cloud.value[cloud.dirichlet]
    diffs = []
    for dt in (1e-5, 5e-6, 2.5e-6):
        out = {}
        for scheme in ("euler", "ab2"):
            cfg = TransientConfig(1.0, dt, 1e-4, scheme)
            out[scheme] = solve_transient(cloud, w, cfg, t0)[-1][1].values
        diffs.append(np.abs(out["euler"] - out["ab2"]).max())
    orders = [math.log2(a / b) for a, b in zip(diffs, diffs[1:])]
    assert all(o >= 0.9 for o in orders), orders


def test_config_validation():
    with pytest.raises(ValueError):
        TransientConfig(1.0, 0.0, 1.0)
    with pytest.raises(ValueError):
        TransientConfig(1.0, 0.1, 1.0, "rk4")
    with pytest.raises(ValueError):
        TransientConfig(1.0, 0.1, 1.0, snapshot_times=[2.0])
    assert TransientConfig(1.0, 0.1, 1.0, "AdamsBashforth2").scheme == "ab2"


def test_t_end_zero_returns_initial():
    cloud = generate_annulus(spacing=0.08)
    w = stencil_weights(cloud, 3)
    init = np.full(len(cloud), 0.25)
    out = solve_transient(cloud, w, TransientConfig(1.0, 1e-5, 0.0), init)
    assert len(out) == 1 and out[0][0] == 0.0
    expect = init.copy()
    expect[cloud.dirichlet] = cloud.value[cloud.dirichlet]
    assert np.array_equal(out[0][1].values, expect)


def test_snapshots_monotone_and_at_or_after_request():
    cloud = generate_annulus(spacing=0.08)
    w = stencil_weights(cloud, 3)
    cfg = TransientConfig(1.0, 3e-6, 1e-4, snapshot_times=[1e-4, 1e-5, 0.0, 5e-5])
    out = solve_transient(cloud, w, cfg, np.zeros(len(cloud)))
    times = [t for t, _ in out]
    assert len(out) == 4 and times == sorted(times)
    for req, got in zip(sorted(cfg.snapshot_times), times):
        assert req - 1e-15 <= got < req + 3e-6


def test_heating_monitors_maximum_principle(caplog):
    # step initial data (273 inside, 500 on the walls) makes high-order stencils
    # undershoot next to the wall; the solver must notice, log and record it,
    # and the excursion has to stay small
    cloud = generate_annulus(spacing=0.06, inner_value=500.0, outer_value=500.0)
    w = stencil_weights(cloud, 3)
    cfg = TransientConfig(1e-4, 1e-2, 20.0, snapshot_times=list(np.linspace(0, 20, 11)))
    with caplog.at_level(logging.WARNING):
        out = solve_transient(cloud, w, cfg, np.full(len(cloud), 273.0))
    assert out[-1][1].metadata["max_principle_violations"] > 0
    assert "maximum principle" in caplog.text
    span = 500.0 - 273.0
    for _, f in out:
        assert f.values.max() <= 500 + 1e-6 * span
        assert f.values.min() >= 273 - 0.05 * span
    # the mean interior temperature rises monotonically
    means = [f.values[cloud.interior].mean() for _, f in out]
    assert all(b > a for a, b in zip(means, means[1:]))


def test_smooth_heating_obeys_maximum_principle(caplog):
    # same walls with initial data that is already smooth: no violations
    cloud = generate_annulus(spacing=0.06, inner_value=1.0, outer_value=0.0)
    w = stencil_weights(cloud, 3)
    r = np.linalg.norm(cloud.points, axis=1)
    init = 0.5 + 0.5 * np.cos(np.pi * (r - 0.5) / 0.5)
    cfg = TransientConfig(1.0, 2e-6, 2e-3, snapshot_times=list(np.linspace(0, 2e-3, 5)))
    out = solve_transient(cloud, w, cfg, init)
    assert out[-1][1].metadata["max_principle_violations"] == 0
    for _, f in out:
        assert f.values.min() >= -1e-6 and f.values.max() <= 1 + 1e-6


def test_instability_detected():
    cloud = generate_annulus(spacing=0.06)
    w = stencil_weights(cloud, 3)
    lap = laplacian_matrix(cloud, w)
    dt = 50 * stable_dt_estimate(lap, 1.0)
    with pytest.raises(InstabilityError, match="reduce the time step") as ei:
        solve_transient(cloud, w, TransientConfig(1.0, dt, 2000 * dt), np.zeros(len(cloud)))
    assert ei.value.step > 0


def test_long_time_matches_steady():
    cloud = generate_annulus(spacing=0.06)
    w = stencil_weights(cloud, 3)
    steady = solve_steady(assemble_steady(cloud, w)).values
    lap = laplacian_matrix(cloud, w)
    for scheme in ("euler", "ab2"):
        dt = 0.4 * stable_dt_estimate(lap, 1.0, scheme)
        out = solve_transient(cloud, w, TransientConfig(1.0, dt, 1.5, scheme), np.zeros(len(cloud)))
        assert np.max(np.abs(out[-1][1].values - steady)) <= 1e-4
