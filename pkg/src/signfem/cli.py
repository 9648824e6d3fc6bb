"""Command-line experiment runner.

Verbs mirror the pipeline: ``mesh build|refine|check`` for the conforming
mesh ladder, ``solve source|scalar`` for the direct problems, ``eigen
spectrum|converge`` for the spectral studies, ``diagnose reflection|infsup``
for stability diagnostics, and ``export field`` for per-triangle field dumps.

Every command reads an optional config file (--config, flat key/value
sections); flags override single keys, and the verb fixes the experiment
kind regardless of what the file declares.  Exit codes: 0 success, 2 config
error, 3 solver failure, 4 conformity failure.
"""
from __future__ import annotations

import argparse
import sys
from pathlib import Path

from . import experiments as exp
from . import fem
from . import solvers as sol
from .config import ConfigError, ExperimentConfig, load_config, _coerce_number
from .fem import FemError
from .geometry import GeometryError
from .materials import MaterialError
from .mesh import MeshError, check_r_conformity, mesh_write
from .reflection import ReflectionError
from .solvers import SolverError

__all__ = ["main"]

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_SOLVER = 3
EXIT_CONFORMITY = 4


def _parse_window(text: str):
    parts = text.split(",")
    if len(parts) != 2:
        raise ConfigError(f"--window wants A,B, got {text!r}")
    return (_coerce_number(parts[0]), _coerce_number(parts[1]))


def _load(args, kind=None) -> ExperimentConfig:
    overrides = {}
    if kind is not None:
        overrides["kind"] = kind
    if args.levels is not None:
        overrides["levels"] = args.levels
    if args.out is not None:
        overrides["out_dir"] = args.out
    if args.window is not None:
        overrides["window"] = _parse_window(args.window)
    if args.shift is not None:
        overrides["shift"] = args.shift
    if args.allow_critical:
        overrides["allow_critical"] = True
    if args.config is not None:
        return load_config(args.config, **overrides)
    try:
        return ExperimentConfig(**overrides)
    except (TypeError, ValueError) as err:
        raise ConfigError(str(err)) from err


def _print_table(table: exp.ResultTable) -> None:
    for key, val in table.metadata:
        print(f"# {key} = {val}")
    widths = [max(len(c), 12) for c in table.columns]
    print("  ".join(c.rjust(w) for c, w in zip(table.columns, widths)))
    for row in table.rows:
        cells = [x if isinstance(x, str) else f"{float(x):.6g}" for x in row]
        print("  ".join(c.rjust(w) for c, w in zip(cells, widths)))


def _mesh_summary(level: int, mesh) -> str:
    return (f"level {level}: h_max {mesh.h_max:.5f}  vertices {mesh.num_vertices}"
            f"  triangles {mesh.num_triangles}  edges {mesh.num_edges}")


def _cmd_mesh(args) -> int:
    cfg = _load(args)
    meshes = exp.mesh_ladder(cfg)
    out = Path(cfg.out_dir)
    if args.noun == "build":
        out.mkdir(parents=True, exist_ok=True)
        mesh_write(meshes[0], out / "mesh_level0.txt")
        print(_mesh_summary(0, meshes[0]))
        print(f"wrote {out / 'mesh_level0.txt'}")
        return EXIT_OK
    if args.noun == "refine":
        out.mkdir(parents=True, exist_ok=True)
        for i, m in enumerate(meshes):
            mesh_write(m, out / f"mesh_level{i}.txt")
            print(_mesh_summary(i, m))
        print(f"wrote {len(meshes)} meshes under {out}")
        return EXIT_OK
    # check: patch conformity level by level (reference domain only).
    dom = cfg.domain_spec()
    if dom is None:
        print("square domain has no patch structure; nothing to check")
        return EXIT_OK
    worst = 0.0
    for i, m in enumerate(meshes):
        report = check_r_conformity(m, dom)
        worst = max(worst, report.max_vertex_mismatch)
        status = "ok" if report else f"FAILED ({len(report.violations)} violations)"
        print(f"{_mesh_summary(i, m)}  conformity {status}"
              f"  mismatch {report.max_vertex_mismatch:.3e}")
        if not report:
            for tri, map_id, desc in report.violations[:10]:
                print(f"  triangle {tri} via {map_id}: {desc}", file=sys.stderr)
            return EXIT_CONFORMITY
    print(f"all {len(meshes)} levels conforming (worst mismatch {worst:.3e})")
    return EXIT_OK


def _cmd_solve(args) -> int:
    if args.noun == "source":
        cfg = _load(args, kind="source")
        table = exp.run_source_convergence(cfg)
        _print_table(table)
        path = table.write_csv(Path(cfg.out_dir) / "source.csv")
        print(f"wrote {path}")
        return EXIT_OK
    # scalar: potential solve on the finest ladder level, flux dumped per triangle.
    cfg = _load(args, kind="source")
    if cfg.lam is None:
        raise ConfigError("scalar solve needs lam")
    meshes = exp.mesh_ladder(cfg)
    m = meshes[-1]
    blocks = fem.assemble_blocks(m)
    lam = float(cfg.lam)
    f0 = exp._constant_f0(cfg.source)
    v, flux = sol.solve_scalar_potential(m, blocks, cfg.material(), lam, f0=f0)
    bary = m.barycenters()
    rows = [(t, float(bary[t, 0]), float(bary[t, 1]),
             float(flux[t, 0]), float(flux[t, 1]))
            for t in range(m.num_triangles)]
    out = Path(cfg.out_dir)
    path = exp._write_csv(out / "scalar.csv",
                          ("triangle", "x1", "x2", "f1", "f2"), rows,
                          [("description", "scalar-potential flux at barycenters"),
                           ("lam", repr(lam)),
                           ("level", str(cfg.levels - 1)),
                           ("h_max", repr(float(m.h_max))),
                           ("dofs", str(m.num_vertices))])
    norms = fem.scalar_norms(m, v.coeffs)
    print(f"level {cfg.levels - 1}: dofs {m.num_vertices}"
          f"  |v|_H1 {norms.hcurl:.6g}  |v|_L2 {norms.l2:.6g}")
    print(f"wrote {path}")
    return EXIT_OK


def _cmd_eigen(args) -> int:
    if args.noun == "spectrum":
        cfg = _load(args, kind="spectrum")
        rows, path = exp.run_spectrum(cfg)
        nvec = sum(1 for r in rows if r[1] == "vector")
        nsca = len(rows) - nvec
        print(f"{nvec} vector / {nsca} scalar eigenvalues in window"
              f" {exp._win_str(cfg.window)}")
        print(f"wrote {path}")
        return EXIT_OK
    cfg = _load(args, kind="eigen-convergence")
    table = exp.run_eigen_convergence(cfg)
    _print_table(table)
    path = table.write_csv(Path(cfg.out_dir) / "eigen.csv")
    print(f"wrote {path}")
    return EXIT_OK


def _cmd_diagnose(args) -> int:
    if args.noun == "reflection":
        cfg = _load(args, kind="diagnostics")
        rows, path = exp.run_reflection_diagnostic(cfg)
        for pat, idx, direction, sup, _, formula, drift in rows:
            print(f"{pat} {idx} ({direction}): sup {sup:.6f}  formula {formula:.6f}"
                  f"  drift {drift:.2e}")
        print(f"wrote {path}")
        return EXIT_OK
    cfg = _load(args, kind="diagnostics")
    table = exp.run_infsup_diagnostic(cfg)
    _print_table(table)
    path = table.write_csv(Path(cfg.out_dir) / "infsup.csv")
    print(f"wrote {path}")
    return EXIT_OK


def _cmd_export(args) -> int:
    cfg = _load(args, kind="source")
    if cfg.lam is None:
        raise ConfigError("field export needs lam")
    meshes = exp.mesh_ladder(cfg)
    m = meshes[-1]
    blocks = fem.assemble_blocks(m)
    s = sol.solve_source(m, blocks, cfg.material(), float(cfg.lam), cfg.source)
    path = exp.export_field(s.field, Path(cfg.out_dir) / f"field.{args.format}",
                            format=args.format)
    print(f"level {cfg.levels - 1}: dofs {fem.EdgeSpace(m).nfree}"
          f"  residual {s.residual:.2e}")
    print(f"wrote {path}")
    return EXIT_OK


_HANDLERS = {
    "mesh": _cmd_mesh,
    "solve": _cmd_solve,
    "eigen": _cmd_eigen,
    "diagnose": _cmd_diagnose,
    "export": _cmd_export,
}


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", metavar="PATH", help="experiment config file")
    p.add_argument("--levels", metavar="N", type=int, help="refinement levels")
    p.add_argument("--out", metavar="DIR", help="output directory")
    p.add_argument("--window", metavar="A,B", help="lambda window (fractions ok)")
    p.add_argument("--shift", metavar="S", type=float, help="spectral shift")
    p.add_argument("--allow-critical", action="store_true",
                   help="permit lam inside a critical window (negative controls)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="signfem",
        description="experiments for the sign-changing transmission problem")
    verbs = parser.add_subparsers(dest="verb", required=True)
    for verb, nouns in (("mesh", ("build", "refine", "check")),
                        ("solve", ("source", "scalar")),
                        ("eigen", ("spectrum", "converge")),
                        ("diagnose", ("reflection", "infsup")),
                        ("export", ("field",))):
        vp = verbs.add_parser(verb)
        nsub = vp.add_subparsers(dest="noun", required=True)
        for noun in nouns:
            np_ = nsub.add_parser(noun)
            _add_common(np_)
            if verb == "export":
                np_.add_argument("--format", choices=("csv", "vtk"), default="csv")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return _HANDLERS[args.verb](args)
    except (ConfigError, MaterialError, GeometryError) as err:
        print(f"signfem: config error: {err}", file=sys.stderr)
        return EXIT_CONFIG
    except (SolverError, FemError, ReflectionError) as err:
        print(f"signfem: solver error: {err}", file=sys.stderr)
        return EXIT_SOLVER
    except MeshError as err:
        print(f"signfem: conformity error: {err}", file=sys.stderr)
        return EXIT_CONFORMITY


if __name__ == "__main__":
    sys.exit(main())
