"""Steady solves and explicit time marching of dT/dt = alpha * lap T."""

from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from . import linalg
from .assembly import AssembledSystem, assemble_steady, laplacian_matrix
from .pointcloud import DIRICHLET, NEUMANN, PointCloud
from .rbf_operator import PhsKernel, StencilWeights, stencil_weights

log = logging.getLogger(__name__)


class SolverError(RuntimeError):
    def __init__(self, msg, stats: linalg.SolveStats | None = None):
        super().__init__(msg)
        self.stats = stats


class InstabilityError(ArithmeticError):
    def __init__(self, step: int, time: float, dt: float):
        super().__init__(
            f"solution became non-finite or unbounded at step {step} (t={time:.6g}); "
            f"reduce the time step below dt={dt:g}"
        )
        self.step = step
        self.time = time


@dataclass
class SolutionField:
    values: np.ndarray
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if not np.all(np.isfinite(self.values)):
            raise ValueError("solution contains non-finite values")

    def __len__(self) -> int:
        return len(self.values)


@dataclass
class Timing:
    """Wall-clock seconds per phase of a steady solve."""

    coefficients: float = 0.0
    preconditioning: float = 0.0
    solve: float = 0.0
    n: int = 0
    degree: int = 0
    nnz: int = 0

    def as_dict(self) -> dict:
        return dict(self.__dict__)


def solve_steady(
    system: AssembledSystem,
    tol: float = linalg.DEFAULT_TOL,
    max_iters: int | None = None,
    timing: Timing | None = None,
) -> SolutionField:
    """ILU(0)-preconditioned BiCGSTAB on the (permuted) system, returned in cloud order."""
    t0 = time.perf_counter()
    m = linalg.ilu0(system.matrix)
    t1 = time.perf_counter()
    x, stats = linalg.bicgstab(system.matrix, system.rhs, m, tol=tol, max_iters=max_iters)
    t2 = time.perf_counter()
    if timing is not None:
        timing.preconditioning = t1 - t0
        timing.solve = t2 - t1
        timing.n = system.n
        timing.nnz = int(system.matrix.nnz)
    if not stats.converged:
        raise SolverError(
            f"BiCGSTAB did not converge: relative residual {stats.residual:.3e} after "
            f"{stats.iterations} iterations (tol {tol:g})",
            stats,
        )
    values = system.perm.to_original(x)
    cloud = system.cloud
    dn = cloud.kind == DIRICHLET
    values[dn] = cloud.value[dn]
    return SolutionField(values, {"solver": stats.as_dict()})


def steady_problem(
    cloud: PointCloud,
    degree: int,
    kernel: PhsKernel = PhsKernel(),
    source=None,
    tol: float = linalg.DEFAULT_TOL,
    max_iters: int | None = None,
) -> tuple[SolutionField, Timing]:
    """Weights, assembly and solve in one go, with per-phase timings."""
    timing = Timing(degree=degree)
    w = stencil_weights(cloud, degree, kernel)
    timing.coefficients = w.seconds
    system = assemble_steady(cloud, w, source)
    field_ = solve_steady(system, tol=tol, max_iters=max_iters, timing=timing)
    field_.metadata.update({"degree": degree, "kernel_a": kernel.a, "n": len(cloud), "timing": timing.as_dict()})
    return field_, timing


# --------------------------------------------------------------------------
# transient

SCHEMES = ("euler", "ab2")


@dataclass
class TransientConfig:
    alpha: float
    dt: float
    t_end: float
    scheme: str = "euler"
    snapshot_times: list[float] | None = None

    def __post_init__(self):
        self.scheme = self.scheme.lower()
        if self.scheme in ("forward_euler", "forwardeuler"):
            self.scheme = "euler"
        if self.scheme in ("adams_bashforth2", "adamsbashforth2"):
            self.scheme = "ab2"
        if self.scheme not in SCHEMES:
            raise ValueError(f"unknown scheme {self.scheme!r}; use one of {SCHEMES}")
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if not self.t_end >= 0:
            raise ValueError("t_end must be non-negative")
        if not self.alpha > 0:
            raise ValueError("alpha must be positive")
        if self.snapshot_times is None:
            self.snapshot_times = [self.t_end]
        self.snapshot_times = sorted(float(t) for t in self.snapshot_times)
        if any(t < 0 or t > self.t_end * (1 + 1e-12) for t in self.snapshot_times):
            raise ValueError("snapshot times must lie in [0, t_end]")

    @property
    def n_steps(self) -> int:
        return _steps_to(self.t_end, self.dt)


def _steps_to(t: float, dt: float) -> int:
    return max(0, math.ceil(t / dt - 1e-9))


@dataclass
class History:
    """State carried between steps (AB2 needs the previous rate)."""

    steps: int = 0
    last_rate: np.ndarray | None = None


class _BoundaryPins:
    def __init__(self, cloud: PointCloud, weights: StencilWeights | None):
        self.dn = cloud.dirichlet
        self.dval = cloud.value[self.dn]
        self.nn = cloud.neumann
        self.rows = None
        if self.nn.size:
            if weights is None:
                raise ValueError("Neumann nodes need gradient weights")
            idx = np.array([weights.row_of(i) for i in self.nn])
            w = np.einsum("nd,ndq->nq", cloud.normals[self.nn], weights.gradient[idx])
            self.rows = (weights.members[idx], w, cloud.value[self.nn])

    def apply(self, t: np.ndarray) -> None:
        t[self.dn] = self.dval
        if self.rows is not None:
            members, w, flux = self.rows
            # solve each normal-derivative row for its own (centre) value
            off = (w[:, 1:] * t[members[:, 1:]]).sum(axis=1)
            t[self.nn] = (flux - off) / w[:, 0]


def step(
    values: np.ndarray,
    lap: sp.spmatrix,
    cfg: TransientConfig,
    history: History,
    pins: _BoundaryPins | None = None,
) -> np.ndarray:
    """One explicit step; boundary entries are re-imposed afterwards."""
    rate = cfg.alpha * (lap @ values)
    if cfg.scheme == "euler" or history.steps == 0:
        new = values + cfg.dt * rate
    else:
        if history.last_rate is None:
            raise ValueError("AB2 step needs the previous rate in its history")
        new = values + cfg.dt * (1.5 * rate - 0.5 * history.last_rate)
    history.last_rate = rate
    history.steps += 1
    if pins is not None:
        pins.apply(new)
    return new


def stable_dt_estimate(lap: sp.spmatrix, alpha: float, scheme: str = "euler") -> float:
    """Gershgorin bound on the explicit step size. Advisory only."""
    rho = float(abs(lap).sum(axis=1).max())
    if rho == 0:
        return math.inf
    limit = 2.0 if scheme == "euler" else 1.0
    return limit / (alpha * rho)


def solve_transient(
    cloud: PointCloud,
    weights: StencilWeights,
    cfg: TransientConfig,
    initial: SolutionField | np.ndarray,
    check_every: int = 50,
) -> list[tuple[float, SolutionField]]:
    """March from ``initial`` to ``cfg.t_end``; returns (time, field) at each snapshot."""
    t = np.array(getattr(initial, "values", initial), dtype=float)
    if t.shape != (len(cloud),):
        raise ValueError(f"initial field has {t.shape[0]} values for {len(cloud)} nodes")
    lap = laplacian_matrix(cloud, weights)
    pins = _BoundaryPins(cloud, weights)
    pins.apply(t)
    meta = {"scheme": cfg.scheme, "dt": cfg.dt, "alpha": cfg.alpha, "degree": weights.degree}
    dt_hint = stable_dt_estimate(lap, cfg.alpha, cfg.scheme)
    if cfg.dt > dt_hint:
        log.info("dt=%g exceeds the Gershgorin estimate %g; watch for instability", cfg.dt, dt_hint)

    data = np.concatenate([t, cloud.value[cloud.kind == DIRICHLET]])
    lo, hi = float(data.min()), float(data.max())
    span = max(hi - lo, 1e-300)
    bound = 1e3 * max(abs(lo), abs(hi), span)
    violations = 0

    targets = [(_steps_to(s, cfg.dt), s) for s in cfg.snapshot_times]
    out: list[tuple[float, SolutionField]] = []
    ti = 0
    history = History()
    n_steps = cfg.n_steps
    for n in range(n_steps + 1):
        while ti < len(targets) and targets[ti][0] <= n:
            out.append((n * cfg.dt, SolutionField(t.copy(), dict(meta, step=n))))
            ti += 1
        if n == n_steps:
            break
        t = step(t, lap, cfg, history, pins)
        if (n + 1) % check_every == 0 or n + 1 == n_steps:
            amax = np.max(np.abs(t))
            if not np.isfinite(amax) or amax > bound:
                raise InstabilityError(n + 1, (n + 1) * cfg.dt, cfg.dt)
            if t.min() < lo - 1e-6 * span or t.max() > hi + 1e-6 * span:
                violations += 1
    if violations:
        log.warning("discrete maximum principle violated at %d checks", violations)
    for _, f in out:
        f.metadata["max_principle_violations"] = violations
    return out
