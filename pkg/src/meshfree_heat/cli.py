"""``meshfree-heat`` command-line driver.

    meshfree-heat <generate|solve-steady|solve-transient|convergence|info>
                  [--config FILE] [--k N] [--spacing X] [--out DIR]

Exit codes: 0 success, 2 configuration error, 3 solver failure, 4 numerical
instability.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import math
import os
import sys
import time
from dataclasses import dataclass, field

import numpy as np

from . import __version__, io, linalg, verify
from .assembly import assemble_steady, write_matrix_market
from .neighbors import cloud_size
from .pointcloud import (
    GENERATORS,
    GeometryError,
    PointCloud,
    PointFileError,
    average_spacing,
    generate,
    load_point_file,
    spacing_for_nodes,
    write_point_file,
)
from .rbf_operator import MAX_DEGREE, MIN_DEGREE, PhsKernel, stencil_weights
from .solver import (
    InstabilityError,
    SolverError,
    Timing,
    TransientConfig,
    solve_steady,
    solve_transient,
)

log = logging.getLogger("meshfree_heat")

EXIT_OK, EXIT_CONFIG, EXIT_SOLVER, EXIT_UNSTABLE = 0, 2, 3, 4


class ConfigError(ValueError):
    pass


@dataclass
class SolverBlock:
    tol: float = linalg.DEFAULT_TOL
    max_iters: int | None = None


@dataclass
class TransientBlock:
    alpha: float = 1.0
    dt: float = 1e-6
    t_end: float = 0.0
    scheme: str = "euler"
    snapshots: list[float] | None = None
    initial: float = 0.0


@dataclass
class ConvergenceBlock:
    degrees: list[int] = field(default_factory=lambda: [3, 4, 5, 6])
    spacings: list[float] | None = None
    nodes: list[int] | None = None  # target node counts, converted to spacings
    point_files: list[str] | None = None
    reference: str | None = None


@dataclass
class RunConfig:
    geometry: str | None = "annulus"
    geometry_params: dict = field(default_factory=dict)
    point_file: str | None = None
    spacing: float = 0.03
    k: int = 4
    kernel_a: int = 1
    source: float = 0.0
    solver: SolverBlock = field(default_factory=SolverBlock)
    transient: TransientBlock | None = None
    convergence: ConvergenceBlock | None = None
    out: str = "out"
    dump_matrix: bool = False

    @classmethod
    def from_dict(cls, raw: dict) -> "RunConfig":
        raw = dict(raw)
        blocks = {"solver": SolverBlock, "transient": TransientBlock, "convergence": ConvergenceBlock}
        kwargs = {}
        names = {f.name for f in dataclasses.fields(cls)}
        for key, val in raw.items():
            if key not in names:
                raise ConfigError(f"unknown config key {key!r}")
            if key in blocks and val is not None:
                sub = blocks[key]
                sub_names = {f.name for f in dataclasses.fields(sub)}
                extra = set(val) - sub_names
                if extra:
                    raise ConfigError(f"unknown key(s) in {key!r}: {', '.join(sorted(extra))}")
                val = sub(**val)
            kwargs[key] = val
        cfg = cls(**kwargs)
        cfg.validate()
        return cfg

    def validate(self) -> None:
        if not (isinstance(self.k, int) and MIN_DEGREE <= self.k <= MAX_DEGREE):
            raise ConfigError(f"k must be an integer in [{MIN_DEGREE}, {MAX_DEGREE}], got {self.k!r}")
        if not (isinstance(self.kernel_a, int) and self.kernel_a >= 1):
            raise ConfigError("kernel_a must be a positive integer")
        if self.point_file:
            if not os.path.isfile(self.point_file):
                raise ConfigError(f"point file {self.point_file!r} does not exist")
        elif self.geometry not in GENERATORS:
            raise ConfigError(f"unknown geometry {self.geometry!r}; choose one of {', '.join(GENERATORS)}")
        if not self.spacing > 0:
            raise ConfigError("spacing must be positive")
        if not self.solver.tol > 0:
            raise ConfigError("solver tol must be positive")
        if self.transient is not None:
            tr = self.transient
            if not tr.dt > 0:
                raise ConfigError("transient dt must be positive")
            if not tr.alpha > 0:
                raise ConfigError("transient alpha must be positive")
            if tr.t_end < 0:
                raise ConfigError("transient t_end must be non-negative")
        if self.convergence is not None:
            cv = self.convergence
            for k in cv.degrees:
                if not MIN_DEGREE <= k <= MAX_DEGREE:
                    raise ConfigError(f"convergence degree {k} outside [{MIN_DEGREE}, {MAX_DEGREE}]")
            for f in cv.point_files or []:
                if not os.path.isfile(f):
                    raise ConfigError(f"point file {f!r} does not exist")

    def as_dict(self) -> dict:
        return dataclasses.asdict(self)


def load_config(path: str | None, overrides: dict) -> RunConfig:
    raw = {}
    if path:
        try:
            with open(path) as fh:
                raw = json.load(fh)
        except FileNotFoundError:
            raise ConfigError(f"config file {path!r} does not exist") from None
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config file {path!r} is not valid JSON: {exc}") from None
        if not isinstance(raw, dict):
            raise ConfigError("config file must contain a JSON object")
    for key, val in overrides.items():
        if val is not None:
            raw[key] = val
    if "point_file" in overrides and overrides["point_file"]:
        raw["geometry"] = None
    return RunConfig.from_dict(raw)


# --------------------------------------------------------------------------
# helpers


def _cloud(cfg: RunConfig, spacing: float | None = None) -> PointCloud:
    if cfg.point_file:
        return load_point_file(cfg.point_file)
    try:
        return generate(cfg.geometry, spacing or cfg.spacing, **cfg.geometry_params)
    except TypeError as exc:
        raise ConfigError(f"bad geometry_params for {cfg.geometry}: {exc}") from None


def _base_metadata(cfg: RunConfig, command: str) -> dict:
    return {
        "command": command,
        "config": cfg.as_dict(),
        "versions": io.versions(),
        "conventions": {
            "pde": "lap T = -source (steady), dT/dt = alpha lap T (transient)",
            "l1_error": "mean absolute error",
            "condition_number": "2-norm, scale-shifted local matrix",
            "solver": "ILU(0)-preconditioned BiCGSTAB",
            "solver_tol": cfg.solver.tol,
        },
    }


def _prepare_out(path: str) -> str:
    os.makedirs(path, exist_ok=True)
    return path


# --------------------------------------------------------------------------
# commands


def cmd_generate(cfg: RunConfig) -> int:
    out = _prepare_out(cfg.out)
    cloud = _cloud(cfg)
    path = os.path.join(out, "points.txt")
    write_point_file(cloud, path)
    meta = _base_metadata(cfg, "generate")
    meta.update({"n": len(cloud), "dim": cloud.dim, "average_spacing": average_spacing(cloud), "file": "points.txt"})
    io.write_metadata(out, meta)
    print(f"wrote {len(cloud)} nodes to {path}")
    return EXIT_OK


def cmd_solve_steady(cfg: RunConfig) -> int:
    out = _prepare_out(cfg.out)
    cloud = _cloud(cfg)
    kernel = PhsKernel(cfg.kernel_a)
    meta = _base_metadata(cfg, "solve-steady")
    meta.update({"n": len(cloud), "dim": cloud.dim, "degree": cfg.k, "kernel_a": cfg.kernel_a,
                 "average_spacing": average_spacing(cloud)})
    timing = Timing(degree=cfg.k)
    w = stencil_weights(cloud, cfg.k, kernel)
    timing.coefficients = w.seconds
    system = assemble_steady(cloud, w, cfg.source if cfg.source else None)
    if cfg.dump_matrix:
        write_matrix_market(os.path.join(out, "matrix.mtx"), system)
    try:
        sol = solve_steady(system, tol=cfg.solver.tol, max_iters=cfg.solver.max_iters, timing=timing)
    except SolverError as exc:
        meta.update({"status": "solver_failure", "error": str(exc), "timing": timing.as_dict()})
        if exc.stats is not None:
            meta["solver"] = exc.stats.as_dict()
        io.write_metadata(out, meta)
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    meta.update({"status": "ok", "solver": sol.metadata["solver"], "timing": timing.as_dict()})
    if not cfg.point_file and not cfg.source:
        try:
            err = verify.error_function(cfg.geometry, cfg.geometry_params)(cloud, sol, cfg.k, kernel)
            meta["l1_error"] = err
        except ValueError:
            pass
    io.write_field_csv(os.path.join(out, "field.csv"), cloud.points, sol.values)
    io.write_vtk(os.path.join(out, "field.vtk"), cloud.points, sol.values, title=f"steady T, k={cfg.k}")
    io.write_metadata(out, meta)
    print(f"solved N={len(cloud)} k={cfg.k} in {sol.metadata['solver']['iterations']} iterations; "
          f"results in {out}")
    return EXIT_OK


def _snapshot_name(t: float) -> str:
    return f"snapshot_t{t:.9g}"


def cmd_solve_transient(cfg: RunConfig) -> int:
    if cfg.transient is None:
        raise ConfigError("solve-transient needs a 'transient' block")
    tr = cfg.transient
    try:
        tcfg = TransientConfig(tr.alpha, tr.dt, tr.t_end, tr.scheme, tr.snapshots)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    out = _prepare_out(cfg.out)
    cloud = _cloud(cfg)
    kernel = PhsKernel(cfg.kernel_a)
    t0 = time.perf_counter()
    w = stencil_weights(cloud, cfg.k, kernel)
    t1 = time.perf_counter()
    initial = np.full(len(cloud), float(tr.initial))
    meta = _base_metadata(cfg, "solve-transient")
    meta.update({"n": len(cloud), "dim": cloud.dim, "degree": cfg.k, "kernel_a": cfg.kernel_a,
                 "steps": tcfg.n_steps})
    try:
        snaps = solve_transient(cloud, w, tcfg, initial)
    except InstabilityError as exc:
        meta.update({"status": "unstable", "error": str(exc), "step": exc.step})
        io.write_metadata(out, meta)
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_UNSTABLE
    t2 = time.perf_counter()
    files = []
    for t, f in snaps:
        name = _snapshot_name(t)
        io.write_field_csv(os.path.join(out, name + ".csv"), cloud.points, f.values)
        io.write_vtk(os.path.join(out, name + ".vtk"), cloud.points, f.values, title=f"T at t={t:.9g}")
        files.append({"time": t, "step": f.metadata["step"], "csv": name + ".csv", "vtk": name + ".vtk"})
    meta.update({
        "status": "ok",
        "snapshots": files,
        "timing": {"coefficients": t1 - t0, "time_stepping": t2 - t1},
        "max_principle_violations": snaps[0][1].metadata.get("max_principle_violations", 0),
    })
    io.write_metadata(out, meta)
    print(f"wrote {len(files)} snapshot(s) to {out}")
    return EXIT_OK


def _refinements(cfg: RunConfig) -> tuple[list[PointCloud] | None, list[float] | None]:
    cv = cfg.convergence
    if cv.point_files:
        return [load_point_file(p) for p in cv.point_files], None
    if cv.spacings:
        return None, list(cv.spacings)
    if cv.nodes:
        return None, [spacing_for_nodes(cfg.geometry, n, **cfg.geometry_params) for n in cv.nodes]
    raise ConfigError("convergence block needs 'spacings', 'nodes' or 'point_files'")


def cmd_convergence(cfg: RunConfig) -> int:
    if cfg.convergence is None:
        raise ConfigError("convergence needs a 'convergence' block")
    clouds, spacings = _refinements(cfg)
    count = len(clouds) if clouds is not None else len(spacings)
    if count < 2:
        raise ConfigError("a convergence study needs at least two refinements")
    out = _prepare_out(cfg.out)
    geometry = cfg.geometry if not cfg.convergence.point_files else (cfg.geometry or "file")
    try:
        study = verify.run_convergence(
            geometry,
            spacings or [],
            cfg.convergence.degrees,
            params=cfg.geometry_params,
            kernel=PhsKernel(cfg.kernel_a),
            tol=cfg.solver.tol,
            reference=cfg.convergence.reference,
            clouds=clouds,
        )
    except SolverError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    with open(os.path.join(out, "convergence.csv"), "w") as fh:
        fh.write("degree,fitted_order,fit_residual,n_samples\n")
        for rec in study.records:
            fh.write(f"{rec.degree},{rec.fitted_order:.6g},{rec.fit_residual:.6g},{len(rec.samples)}\n")
    with open(os.path.join(out, "convergence_samples.csv"), "w") as fh:
        fh.write("degree,average_spacing,l1_error\n")
        for rec in study.records:
            for h, e in rec.samples:
                fh.write(f"{rec.degree},{h:.17g},{e:.17g}\n")
    with open(os.path.join(out, "timing.csv"), "w") as fh:
        fh.write("n,degree,nnz,coefficients_s,preconditioning_s,solve_s\n")
        for t in study.timings:
            fh.write(f"{t.n},{t.degree},{t.nnz},{t.coefficients:.6g},{t.preconditioning:.6g},{t.solve:.6g}\n")
    meta = _base_metadata(cfg, "convergence")
    meta.update({
        "records": [dataclasses.asdict(r) for r in study.records],
        "coefficient_time_exponents": complexity_exponents(study.timings),
    })
    io.write_metadata(out, meta)
    for rec in study.records:
        print(f"k={rec.degree}: order {rec.fitted_order:.2f} (fit residual {rec.fit_residual:.2g})")
    return EXIT_OK


def complexity_exponents(timings: list[Timing]) -> dict:
    """Log-log slopes of coefficient time against N (per k) and against k (per N)."""
    res: dict = {"vs_n": {}, "vs_k": {}}
    by_k: dict[int, list[Timing]] = {}
    by_n: dict[int, list[Timing]] = {}
    for t in timings:
        by_k.setdefault(t.degree, []).append(t)
        by_n.setdefault(t.n, []).append(t)
    for k, ts in by_k.items():
        if len({t.n for t in ts}) >= 2:
            res["vs_n"][k] = float(np.polyfit(np.log([t.n for t in ts]), np.log([t.coefficients for t in ts]), 1)[0])
    for n, ts in by_n.items():
        if len({t.degree for t in ts}) >= 2:
            res["vs_k"][n] = float(np.polyfit(np.log([t.degree for t in ts]), np.log([t.coefficients for t in ts]), 1)[0])
    return res


def cmd_info(cfg: RunConfig | None = None) -> int:
    print(f"meshfree-heat {__version__}")
    print("geometries: " + ", ".join(GENERATORS))
    print(f"polynomial degrees: {MIN_DEGREE}..{MAX_DEGREE}; kernel phi(r) = r^(2a+1), default a=1")
    print("cloud size q = 2*C(k+d, k):")
    print("  k   d=2   d=3")
    for k in range(MIN_DEGREE, MAX_DEGREE + 1):
        print(f"  {k}  {cloud_size(k, 2):4d}  {cloud_size(k, 3):4d}")
    print(f"default solver tolerance {linalg.DEFAULT_TOL:g} (relative residual)")
    return EXIT_OK


COMMANDS = {
    "generate": cmd_generate,
    "solve-steady": cmd_solve_steady,
    "solve-transient": cmd_solve_transient,
    "convergence": cmd_convergence,
    "info": cmd_info,
}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="meshfree-heat", description=__doc__.split("\n")[0])
    p.add_argument("command", choices=list(COMMANDS))
    p.add_argument("--config", help="JSON run configuration")
    p.add_argument("--k", type=int, help="polynomial degree (2..6)")
    p.add_argument("--spacing", type=float, help="nominal node spacing for built-in geometries")
    p.add_argument("--out", help="output directory")
    p.add_argument("--geometry", help="built-in geometry name")
    p.add_argument("--point-file", help="read nodes from a point file instead of a generator")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.command == "info" and not args.config:
        return cmd_info()
    overrides = {"k": args.k, "spacing": args.spacing, "out": args.out,
                 "geometry": args.geometry, "point_file": args.point_file}
    try:
        cfg = load_config(args.config, overrides)
        return COMMANDS[args.command](cfg)
    except (ConfigError, GeometryError, PointFileError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
