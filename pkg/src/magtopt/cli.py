"""Batch front-end: material validation, correction-table builds, single
solves, optimization runs, exports, and a quick self-test.

Configuration is a flat `key = value` text file (# comments). Verbosity via
the MAGTOPT_LOG environment variable (DEBUG/INFO/WARNING/ERROR). Exit codes:
0 success, 1 configuration error, 2 solver failure, 3 I/O error.
"""
from __future__ import annotations

import argparse
import hashlib
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import cell_problems, fem, material, optimizer, problem_setup, vtkio
from .cell_problems import DiscSpec, PerturbationCase
from .problem_setup import ConfigurationError

log = logging.getLogger("magtopt.cli")

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_SOLVER = 2
EXIT_IO = 3

DEFAULTS = {
    "problem": "square",
    "resolution": "32",
    "curve": "marrocco",           # marrocco | linear | spline
    "alpha": "4", "c": "0.0039", "tau": "1.52e6",
    "nu_linear": "1000",
    "spline_csv": "",
    "target_csv": "",
    "t_max": "3.0", "n_samples": "61",
    "disc_radius": "1000", "h0": "0.05", "growth": "1.15", "n_theta": "128",
    "table_case1": "", "table_case2": "",
    "kappa_start": "0.1", "theta_tol_deg": "1.0", "max_iter": "400",
    "snapshot_every": "10",
    "seed": "0",
    "workers": "1",
}


class ConfigError(Exception):
    pass


def load_config(path) -> dict:
    cfg = dict(DEFAULTS)
    if path:
        try:
            text = Path(path).read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read config: {exc}") from exc
        for ln, line in enumerate(text.splitlines(), start=1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{ln}: expected 'key = value'")
            k, v = (s.strip() for s in line.split("=", 1))
            if k not in DEFAULTS:
                raise ConfigError(f"{path}:{ln}: unknown key {k!r}")
            cfg[k] = v
    return cfg


def config_hash(cfg: dict) -> str:
    canon = "\n".join(f"{k}={cfg[k]}" for k in sorted(cfg))
    return hashlib.sha256(canon.encode()).hexdigest()[:12]


def build_curve(cfg: dict, force_linear: bool = False):
    kind = "linear" if force_linear else cfg["curve"]
    if kind == "marrocco":
        return material.MarroccoCurve(alpha=float(cfg["alpha"]),
                                      c=float(cfg["c"]), tau=float(cfg["tau"]))
    if kind == "linear":
        return material.LinearCurve(nu_const=float(cfg["nu_linear"]))
    if kind == "spline":
        if not cfg["spline_csv"]:
            raise ConfigError("curve = spline requires spline_csv")
        return material.SplineCurve.from_csv(cfg["spline_csv"])
    raise ConfigError(f"unknown curve kind {cfg['curve']!r}")


def disc_spec(cfg: dict) -> DiscSpec:
    return DiscSpec(radius=float(cfg["disc_radius"]), h0=float(cfg["h0"]),
                    growth=float(cfg["growth"]), n_theta=int(cfg["n_theta"]))


def _prepare_out(out: str, force: bool) -> Path:
    path = Path(out)
    if path.exists() and any(path.iterdir()) and not force:
        raise FileExistsError(f"output dir {out} is not empty (use --force)")
    path.mkdir(parents=True, exist_ok=True)
    return path


# ---------------------------------------------------------------------------
# subcommands

def cmd_validate_material(cfg, args) -> int:
    curve = build_curve(cfg, args.linear)
    report = material.validate_assumptions(curve)
    out = _prepare_out(args.out, args.force)
    text = (f"# config={config_hash(cfg)}\n"
            + report.summary() + "\n")
    (out / "material_report.txt").write_text(text)
    print(report.summary())
    hard_fail = not (report.bounds_ok and report.c3_smoothness_ok)
    if hard_fail:
        log.error("material law violates hard assumptions")
        return EXIT_CONFIG
    if not report.admissibility_ok or not report.slope_bounds_ok:
        log.warning("soft assumption violations reported; run proceeds")
    return EXIT_OK


def _table_paths(cfg, out: Path):
    p1 = cfg["table_case1"] or str(out / "j2_case1.csv")
    p2 = cfg["table_case2"] or str(out / "j2_case2.csv")
    return Path(p1), Path(p2)


def cmd_build_tables(cfg, args) -> int:
    curve = build_curve(cfg, args.linear)
    out = _prepare_out(args.out, args.force)
    spec = disc_spec(cfg)
    t_max, n = float(cfg["t_max"]), int(cfg["n_samples"])
    grid = np.linspace(0.0, t_max, n) if t_max > 0 else np.array([0.0])
    h = config_hash(cfg)
    p1, p2 = _table_paths(cfg, out)
    for case, path in ((PerturbationCase.AIR_IN_FERRO, p1),
                       (PerturbationCase.FERRO_IN_AIR, p2)):
        log.info("building correction table %s -> %s", case.value, path)
        table = cell_problems.build_correction_table(curve, case, grid, spec,
                                             workers=int(cfg["workers"]))
        cell_problems.save_table(path, table, config_hash=h)
        if isinstance(curve, material.LinearCurve):
            log.info("linear stub: table %s is identically zero", case.value)
    return EXIT_OK


def _load_or_build_tables(cfg, args, curve, out: Path):
    p1, p2 = _table_paths(cfg, out)
    if p1.exists() and p2.exists():
        log.info("loading correction tables from %s, %s", p1, p2)
        return cell_problems.load_table(p1), cell_problems.load_table(p2)
    log.info("correction tables missing; building them first")
    spec = disc_spec(cfg)
    t_max, n = float(cfg["t_max"]), int(cfg["n_samples"])
    grid = np.linspace(0.0, t_max, n) if t_max > 0 else np.array([0.0])
    h = config_hash(cfg)
    t1 = cell_problems.build_correction_table(curve, PerturbationCase.AIR_IN_FERRO,
                                      grid, spec, workers=int(cfg["workers"]))
    cell_problems.save_table(p1, t1, config_hash=h)
    t2 = cell_problems.build_correction_table(curve, PerturbationCase.FERRO_IN_AIR,
                                      grid, spec, workers=int(cfg["workers"]))
    cell_problems.save_table(p2, t2, config_hash=h)
    return t1, t2


def _build_problem(cfg):
    target = None
    if cfg["target_csv"]:
        target = problem_setup.load_target_csv(cfg["target_csv"])
    return problem_setup.build_benchmark_problem(cfg["problem"],
                                                 int(cfg["resolution"]),
                                                 b_target=target)


def cmd_solve(cfg, args) -> int:
    curve = build_curve(cfg, args.linear)
    out = _prepare_out(args.out, args.force)
    prob = _build_problem(cfg)
    res = fem.solve_state(prob.mesh, curve, levelset=None, sources=prob.sources)
    j = problem_setup.eval_objective(prob.mesh, res.field, prob.objective)
    log.info("state solved in %d Newton iterations, objective %.6e",
             res.iterations, j)
    gu = res.field.element_gradients()
    vtkio.write_vtk(out / "state.vtk", prob.mesh,
                    point_data={"u": res.field.values},
                    cell_data={"B_magnitude": np.hypot(gu[:, 0], gu[:, 1]),
                               "region": prob.mesh.region.astype(float)},
                    title=f"magtopt state config={config_hash(cfg)}")
    print(f"objective = {j:.17g}")
    return EXIT_OK


def cmd_optimize(cfg, args) -> int:
    curve = build_curve(cfg, args.linear)
    out = _prepare_out(args.out, args.force)
    t1, t2 = _load_or_build_tables(cfg, args, curve, out)
    prob = _build_problem(cfg)
    opts = optimizer.OptimizerOptions(
        kappa_start=float(cfg["kappa_start"]),
        theta_tol_deg=float(cfg["theta_tol_deg"]),
        max_iter=int(cfg["max_iter"]))
    h = config_hash(cfg)
    every = int(cfg["snapshot_every"])

    def snapshot(state):
        if every > 0 and state.k % every == 0:
            psi = state.psi.expand()
            vtkio.write_vtk(out / f"design_{state.k:04d}.vtk", prob.mesh,
                            point_data={"psi": psi},
                            title=f"magtopt design k={state.k} config={h}")

    state = optimizer.run(prob, curve, t1, t2, opts, callback=snapshot)

    with open(out / "iterations.csv", "w") as f:
        f.write(f"# config={h}\n")
        f.write("k,J,theta_deg,kappa,ferro_fraction\n")
        for r in state.records:
            f.write(f"{r.k},{r.objective:.17g},{r.theta_deg:.17g},"
                    f"{r.kappa:.17g},{r.ferro_fraction:.17g}\n")
    psi = state.psi.expand()
    indicator = fem.ferro_element_mask(prob.mesh, psi).astype(float)
    vtkio.write_vtk(out / "design_final.vtk", prob.mesh,
                    point_data={"psi": psi},
                    cell_data={"ferro": indicator},
                    title=f"magtopt final design config={h}")
    if isinstance(curve, material.LinearCurve):
        log.info("linear stub: correction term contributed exactly zero")
    print(f"status = {state.status}, iterations = {state.k}, "
          f"final objective = {state.objective:.17g}")
    return EXIT_OK


def cmd_export(cfg, args) -> int:
    out = _prepare_out(args.out, args.force)
    prob = _build_problem(cfg)
    vtkio.write_vtk(out / "mesh.vtk", prob.mesh,
                    cell_data={"region": prob.mesh.region.astype(float)},
                    title=f"magtopt mesh config={config_hash(cfg)}")
    from .mesh import save_mesh
    save_mesh(out / "mesh.txt", prob.mesh)
    log.info("wrote mesh.vtk and mesh.txt")
    return EXIT_OK


def cmd_selftest(cfg, args) -> int:
    """Quick property sweep (seeded); exercises the core identities."""
    rng = np.random.default_rng(int(cfg["seed"]))
    curve = build_curve(cfg, args.linear)
    failures = []

    def check(name, ok):
        print(f"{'PASS' if ok else 'FAIL'}  {name}")
        if not ok:
            failures.append(name)

    W = rng.normal(size=(256, 2))
    V = rng.normal(size=(256, 2)) * 0.3
    D = material.flux_jacobian(curve, W)
    check("flux-jacobian symmetry", np.allclose(D, np.swapaxes(D, -1, -2)))
    tw = material.flux_map(curve, W + V) - material.flux_map(curve, W)
    mono = np.einsum("ei,ei->e", tw, V)
    check("monotonicity >= nu_min |V|^2",
          bool(np.all(mono >= curve.nu_min * (V * V).sum(1) - 1e-9)))
    check("Lipschitz <= nu_air |V|",
          bool(np.all(np.hypot(tw[:, 0], tw[:, 1])
                      <= curve.nu_air * np.hypot(V[:, 0], V[:, 1]) + 1e-9)))

    from . import polarization
    errs = []
    for _ in range(32):
        q = rng.uniform(0, np.pi)
        R = np.array([[np.cos(q), -np.sin(q)], [np.sin(q), np.cos(q)]])
        ev = rng.uniform(1.5, 8.0, 2)
        At = R @ np.diag(ev) @ R.T
        P1 = polarization.polarization_general(np.eye(2), At)
        P2 = polarization.polarization_disk(At, np.pi)
        errs.append(np.abs(P1 - P2).max() / np.abs(P2).max())
    check("general polarization reduces to disk", max(errs) < 1e-12)

    from .mesh import generate_square_benchmark
    mesh = generate_square_benchmark(16)
    check("benchmark areas sum to 1",
          abs(mesh.areas.sum() - 1.0) < 1e-12)
    counts = np.array(list(mesh.edge_use_counts().values()))
    check("edge conformity (<= 2 uses)", bool(np.all(counts <= 2)))
    check("no unset regions", bool(np.all(mesh.region >= 0)))

    if failures:
        log.error("selftest failures: %s", ", ".join(failures))
        return EXIT_SOLVER
    return EXIT_OK


COMMANDS = {
    "validate-material": cmd_validate_material,
    "build-tables": cmd_build_tables,
    "solve": cmd_solve,
    "optimize": cmd_optimize,
    "export": cmd_export,
    "selftest": cmd_selftest,
}


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="magtopt",
        description="Topological-derivative topology optimization for "
                    "2D nonlinear magnetostatics")
    parser.add_argument("command", choices=sorted(COMMANDS))
    parser.add_argument("--config", default=None, help="key = value file")
    parser.add_argument("--out", default="out", help="output directory")
    parser.add_argument("--force", action="store_true",
                        help="allow writing into a non-empty output directory")
    parser.add_argument("--workers", type=int, default=None,
                        help="parallel workers for table builds")
    parser.add_argument("--linear", action="store_true",
                        help="override the curve with the linear stub")
    args = parser.parse_args(argv)

    logging.basicConfig(
        level=getattr(logging, os.environ.get("MAGTOPT_LOG", "INFO").upper(),
                      logging.INFO),
        format="%(levelname)s %(name)s: %(message)s")

    try:
        cfg = load_config(args.config)
        if args.workers is not None:
            cfg["workers"] = str(args.workers)
        return COMMANDS[args.command](cfg, args)
    except (ConfigError, ConfigurationError, material.MaterialError,
            ValueError) as exc:
        log.error("%s", exc)
        return EXIT_CONFIG
    except fem.SolverError as exc:
        log.error("solver failure: %s", exc)
        return EXIT_SOLVER
    except (OSError, FileExistsError) as exc:
        log.error("I/O failure: %s", exc)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
