"""Config-driven numerical studies: source convergence, spectrum scans,
eigenvalue convergence, and the stability/reflection diagnostics.

Every runner takes an ExperimentConfig, fans the per-level (or per-
formulation) solves out to a thread pool, and assembles the output table
serially afterwards, so CSV bytes depend only on config + seed.  Tables all
carry (level, h_max, dofs, ...) rows; h_max halves exactly per level because
refinement is red.

Error protocol for the source study: the finest level is the reference, and
coarser solutions are carried up to it by exact nested-mesh injection before
norms are taken.  Absolute numbers therefore depend on the mesh family; the
shapes (monotone decay, per-level ratios) are the reproducible content.  The
manufactured fixture is the exception: there the exact field is known, the
errors are true errors, and the first-order slope is checkable.
"""

from __future__ import annotations

import csv
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
import scipy.sparse.linalg as spla

from . import fem, materials as mats, meshgen, reflection as refl, solvers as sol
from .config import ConfigError, ExperimentConfig
from .fem import EdgeSpace, FeField
from .mesh import Mesh, refine_red

__all__ = [
    "ResultTable", "mesh_ladder", "run_source_convergence", "run_spectrum",
    "run_eigen_convergence", "run_infsup_diagnostic",
    "run_reflection_diagnostic", "export_field", "manufactured_solution",
    "RESIDUAL_FILTER",
]

# eigenpairs above this rational residual are dropped from emitted tables;
# recorded in every eigen CSV's metadata so the selection rule is documented
RESIDUAL_FILTER = 1e-8


def _fmt(x) -> str:
    if isinstance(x, float):
        return repr(x)
    return str(x)


def _write_csv(path, columns: Sequence[str], rows: Sequence[Sequence],
               metadata: Sequence[Tuple[str, str]] = ()) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as f:
        for key, val in metadata:
            f.write(f"# {key} = {val}\n")
        w = csv.writer(f, lineterminator="\n")
        w.writerow(columns)
        for row in rows:
            w.writerow([_fmt(x) for x in row])
    return path


@dataclass(frozen=True)
class ResultTable:
    """Ordered per-level rows; schema varies by experiment but always leads
    with (level, h_max, dofs)."""

    columns: Tuple[str, ...]
    rows: Tuple[Tuple, ...]
    metadata: Tuple[Tuple[str, str], ...] = ()

    def __post_init__(self):
        for name in ("level", "h_max", "dofs"):
            if name not in self.columns:
                raise ValueError(f"result table is missing a {name!r} column")
        lev = [row[self.columns.index("level")] for row in self.rows]
        dof = [row[self.columns.index("dofs")] for row in self.rows]
        if any(b <= a for a, b in zip(lev, lev[1:])):
            raise ValueError(f"levels not strictly increasing: {lev}")
        if any(b <= a for a, b in zip(dof, dof[1:])):
            raise ValueError(f"dof counts not strictly increasing: {dof}")

    def column(self, name: str) -> list:
        return [row[self.columns.index(name)] for row in self.rows]

    def write_csv(self, path) -> Path:
        return _write_csv(path, self.columns, self.rows, self.metadata)


def mesh_ladder(cfg: ExperimentConfig) -> List[Mesh]:
    """Coarse mesh plus cfg.levels - 1 red refinements."""
    if cfg.domain == "square":
        coarse = meshgen.square_mesh(max(1, round(1 / cfg.h_coarse)))
    else:
        coarse = meshgen.build_r_conform_coarse(cfg.domain_spec(), cfg.h_coarse)
    meshes = [coarse]
    for _ in range(cfg.levels - 1):
        meshes.append(refine_red(meshes[-1]))
    return meshes


def _pool_map(task: Callable, items: Sequence) -> list:
    """Dispatch per-level/per-shift work; results return in submission order."""
    if len(items) <= 1:
        return [task(it) for it in items]
    with ThreadPoolExecutor(max_workers=min(len(items), os.cpu_count() or 1)) as ex:
        return list(ex.map(task, items))


def _base_metadata(cfg: ExperimentConfig) -> List[Tuple[str, str]]:
    return [("kind", cfg.kind), ("domain", cfg.domain),
            ("levels", str(cfg.levels)), ("seed", str(cfg.seed))]


def manufactured_solution(lam: float):
    """Smooth natural-boundary fixture on the unit square.

    u = Curl(sin pi x1 sin pi x2) has curl 2 pi^2 sin pi x1 sin pi x2, which
    vanishes on the square's boundary, so the unclamped edge space sees the
    exact field with no boundary mismatch; the matching load for A(lam) is
    (2 pi^2 - lam) u.  Returns (exact, exact_curl, load).
    """
    def exact(x):
        x = np.asarray(x, dtype=float)
        sx, cx = np.sin(np.pi * x[..., 0]), np.cos(np.pi * x[..., 0])
        sy, cy = np.sin(np.pi * x[..., 1]), np.cos(np.pi * x[..., 1])
        return np.pi * np.stack([sx * cy, -cx * sy], axis=-1)

    def exact_curl(x):
        x = np.asarray(x, dtype=float)
        return 2 * np.pi ** 2 * np.sin(np.pi * x[..., 0]) * np.sin(np.pi * x[..., 1])

    scale = 2 * np.pi ** 2 - lam
    return exact, exact_curl, lambda x: scale * exact(x)


def _constant_f0(f: Tuple[float, float]) -> Callable:
    # Curl f0 = (d2 f0, -d1 f0) must reproduce the constant vector source
    f1, f2 = float(f[0]), float(f[1])
    return lambda x: f1 * x[..., 1] - f2 * x[..., 0]


def run_source_convergence(cfg: ExperimentConfig) -> ResultTable:
    """Per level: relative H(curl)/L2 errors against the finest level (by
    nested injection), plus the cross-check against the scalar-potential
    field; the manufactured fixture reports true errors instead."""
    if cfg.kind != "source":
        raise ConfigError(f"source study asked to run a {cfg.kind!r} config")
    if cfg.levels < 3:
        raise ConfigError("source convergence needs >= 3 levels")
    if cfg.lam is None:
        raise ConfigError("source convergence needs lam")
    lam = float(cfg.lam)
    mat = cfg.material()
    meshes = mesh_ladder(cfg)
    blocks = [fem.assemble_blocks(m) for m in meshes]
    meta = _base_metadata(cfg) + [("lam", repr(lam)),
                                  ("reference", "finest level" if cfg.fixture == "none"
                                   else "manufactured solution")]

    if cfg.fixture == "manufactured":
        exact, exact_curl, load = manufactured_solution(lam)

        def task(i):
            space = EdgeSpace(meshes[i], clamp=False)
            s = sol.solve_source(meshes[i], blocks[i], mat, lam, load, space=space)
            l2, x = fem.error_vs_exact(meshes[i], s.field.coeffs, exact, exact_curl)
            return (x, l2)

        errs = _pool_map(task, range(cfg.levels))
        rows = tuple((i, meshes[i].h_max, meshes[i].num_edges, x, l2)
                     for i, (x, l2) in enumerate(errs))
        return ResultTable(("level", "h_max", "dofs", "x_err", "l2_err"),
                           rows, tuple(meta))

    def task(i):
        s = sol.solve_source(meshes[i], blocks[i], mat, lam, cfg.source)
        v, _ = sol.solve_scalar_potential(meshes[i], blocks[i], mat, lam,
                                          f0=_constant_f0(cfg.source))
        cross = fem.cross_error(meshes[i], mat, lam, s.field.coeffs, v.coeffs)
        return (s.field.coeffs, cross)

    solved = _pool_map(task, range(cfg.levels))

    fine = meshes[-1]
    space_f = EdgeSpace(fine)
    gram = sol.xnorm_gram(blocks[-1], space_f)
    uref = solved[-1][0]
    rfree = space_f.restrict_vec(uref)
    ref_x = math.sqrt(float(rfree @ (gram @ rfree)))
    ref_l2 = fem.field_norms(fine, uref).l2

    rows = []
    for i, (u, cross) in enumerate(solved):
        w = u.copy()
        for j in range(i, cfg.levels - 1):
            w = fem.prolong_edge(meshes[j], meshes[j + 1], w)
        d = space_f.restrict_vec(w - uref)
        x_err = math.sqrt(max(float(d @ (gram @ d)), 0.0)) / ref_x
        l2_err = fem.field_norms(fine, w - uref).l2 / ref_l2
        rows.append((i, meshes[i].h_max, meshes[i].num_edges, x_err, l2_err, cross))
    return ResultTable(("level", "h_max", "dofs", "x_err", "l2_err", "cross_err"),
                       tuple(rows), tuple(meta))


def _scalar_residuals(mesh: Mesh, blocks, mat, vals, vecs, n_primary) -> np.ndarray:
    """Rational residual of scalar-formulation pairs: ||B(lam) v|| in the
    inverse-H1-Gram sense over ||v||_H1, mirroring the edge-space measure."""
    G = (blocks["Ks_plus"] + blocks["Ks_minus"]
         + blocks["Ms_plus"] + blocks["Ms_minus"])
    lu = spla.splu(G.tocsc())
    out = np.empty(len(vals))
    for k, lamk in enumerate(vals):
        v = vecs[:n_primary, k]
        B, _ = fem.assemble_scalar_problem(blocks, mat, float(lamk), mesh)
        r = B @ v
        out[k] = math.sqrt(max(float(r @ lu.solve(r)), 0.0)
                           / float(v @ (G @ v)))
    return out


def _regime(windows: mats.CriticalWindows, lam: float) -> str:
    tags = []
    if windows.window_mu is not None:
        a, b = windows.window_mu
        if a <= lam <= b:
            tags.append("uncovered-regime")
    if windows.window_eps is not None:
        a, b = windows.window_eps
        if a <= lam <= b:
            tags.append("eps-critical")
    return "|".join(tags)


def run_spectrum(cfg: ExperimentConfig, count: int = 24):
    """Eigenvalues of both formulations on the finest level, annotated.

    Returns (rows, csv_path).  Vector rows carry residual, classification and
    curl-energy fraction; each one outside the permittivity accumulation
    window is matched to its nearest scalar-formulation partner (inside it,
    eigenvalues accumulate and pairing is meaningless, so the match columns
    stay empty).  Pairs above RESIDUAL_FILTER are dropped and counted in the
    metadata.
    """
    if cfg.kind != "spectrum":
        raise ConfigError(f"spectrum scan asked to run a {cfg.kind!r} config")
    if cfg.window is None:
        raise ConfigError("spectrum scan needs a window")
    window = (float(cfg.window[0]), float(cfg.window[1]))
    shift = float(cfg.shift) if cfg.shift is not None else 0.5 * sum(window)
    mat = cfg.material()
    windows = cfg.windows()
    meshes = mesh_ladder(cfg)
    mesh = meshes[-1]
    level = cfg.levels - 1
    bl = fem.assemble_blocks(mesh)

    coercive = window[1] <= 0  # A(lam) is definite for lam < 0: no spectrum
    if coercive:
        pairs, svals, svecs = [], np.empty(0), np.empty((0, 0))
    else:
        def vector_task(_):
            p = sol.build_pencil(mesh, bl, mat)
            return sol.solve_eigen(mesh, bl, mat, p, window=window,
                                   shift=shift, count=count)

        def scalar_task(_):
            ps = sol.build_scalar_pencil(mesh, bl, mat)
            return sol.pencil_eigenvalues(ps, window=window, shift=shift,
                                          count=count, vectors=True)

        (pairs, (svals, svecs)) = _pool_map(
            lambda which: vector_task(0) if which == "vector" else scalar_task(0),
            ["vector", "scalar"])

    dropped = sum(1 for q in pairs if q.residual > RESIDUAL_FILTER)
    pairs = [q for q in pairs if q.residual <= RESIDUAL_FILTER]
    if len(svals):
        sres = _scalar_residuals(mesh, bl, mat, svals, svecs,
                                 mesh.num_vertices)
        keep = sres <= RESIDUAL_FILTER
        dropped += int((~keep).sum())
        svals, sres = svals[keep], sres[keep]
    else:
        sres = np.empty(0)

    rows = []
    for q in sorted(pairs, key=lambda q: q.lam):
        reg = _regime(windows, q.lam)
        match = match_rel = ""
        if "eps-critical" not in reg and len(svals):
            j = int(np.argmin(np.abs(svals - q.lam)))
            match = float(svals[j])
            match_rel = float(abs(svals[j] - q.lam) / abs(q.lam))
        rows.append((level, "vector", q.lam, q.residual, q.classification,
                     q.curl_fraction, reg, match, match_rel))
    for lamk, resk in zip(svals, sres):
        rows.append((level, "scalar", float(lamk), float(resk), "", "",
                     _regime(windows, float(lamk)), "", ""))

    meta = _base_metadata(cfg) + [
        ("window", f"{window[0]},{window[1]}"), ("shift", repr(shift)),
        ("residual_filter", repr(RESIDUAL_FILTER)),
        ("dropped_by_filter", str(dropped)),
        ("eps_window", _win_str(windows.window_eps)),
        ("mu_window", _win_str(windows.window_mu)),
    ]
    columns = ("level", "formulation", "lam", "residual", "classification",
               "curl_fraction", "regime", "scalar_match", "scalar_match_rel")
    path = _write_csv(Path(cfg.out_dir) / "spectrum.csv", columns, rows, meta)
    return rows, path


def _win_str(window) -> str:
    if window is None:
        return "none"
    return f"{float(window[0])!r},{float(window[1])!r}"


def _largest_below(vals: Sequence[float], threshold: float, what: str) -> float:
    below = [v for v in vals if v < threshold]
    if not below:
        raise sol.SolverError(
            f"target not found: no {what} eigenvalue below {threshold}")
    return max(below)


def run_eigen_convergence(cfg: ExperimentConfig) -> ResultTable:
    """Track the largest eigenvalue below the threshold across the ladder;
    errors are relative to the finest level and to the scalar-formulation
    value on the finest level."""
    if cfg.kind != "eigen-convergence":
        raise ConfigError(
            f"eigenvalue convergence asked to run a {cfg.kind!r} config")
    if cfg.window is None:
        raise ConfigError("eigenvalue convergence needs a window")
    window = (float(cfg.window[0]), float(cfg.window[1]))
    shift = float(cfg.shift) if cfg.shift is not None else 0.5 * sum(window)
    threshold = float(cfg.threshold)
    mat = cfg.material()
    meshes = mesh_ladder(cfg)
    blocks = [fem.assemble_blocks(m) for m in meshes]

    def task(i):
        p = sol.build_pencil(meshes[i], blocks[i], mat)
        pairs = sol.solve_eigen(meshes[i], blocks[i], mat, p, window=window,
                                shift=shift, count=8)
        good = [q for q in pairs if q.residual <= RESIDUAL_FILTER]
        tgt = _largest_below([q.lam for q in good], threshold,
                             f"level-{i} vector")
        res = next(q.residual for q in good if q.lam == tgt)
        return tgt, res

    got = _pool_map(task, range(cfg.levels))

    ps = sol.build_scalar_pencil(meshes[-1], blocks[-1], mat)
    svals = sol.pencil_eigenvalues(ps, window=window, shift=shift, count=8)
    scalar_ref = _largest_below(list(svals), threshold, "scalar")
    ref = got[-1][0]

    rows = tuple(
        (i, meshes[i].h_max, meshes[i].num_edges, lam_i, res_i,
         abs(lam_i - ref) / abs(ref), abs(lam_i - scalar_ref) / abs(scalar_ref))
        for i, (lam_i, res_i) in enumerate(got))
    meta = _base_metadata(cfg) + [
        ("window", f"{window[0]},{window[1]}"), ("shift", repr(shift)),
        ("target", f"largest eigenvalue below {threshold!r}, lambda-sorted"),
        ("residual_filter", repr(RESIDUAL_FILTER)),
        ("scalar_reference", repr(float(scalar_ref))),
    ]
    return ResultTable(
        ("level", "h_max", "dofs", "lam", "residual",
         "err_vs_finest", "err_vs_scalar_finest"), rows, tuple(meta))


def run_infsup_diagnostic(cfg: ExperimentConfig) -> ResultTable:
    """beta_n(lam) across the ladder (smallest generalized singular value)."""
    if cfg.kind != "diagnostics":
        raise ConfigError(f"inf-sup diagnostic asked to run a {cfg.kind!r} config")
    if cfg.lam is None:
        raise ConfigError("inf-sup diagnostic needs lam")
    lam = float(cfg.lam)
    mat = cfg.material()
    meshes = mesh_ladder(cfg)
    blocks = [fem.assemble_blocks(m) for m in meshes]

    def task(i):
        return sol.discrete_infsup(meshes[i], blocks[i], mat, lam, level=i)

    ests = _pool_map(task, range(cfg.levels))
    rows = tuple((i, meshes[i].h_max, meshes[i].num_edges, lam, e.beta_n)
                 for i, e in enumerate(ests))
    meta = _base_metadata(cfg) + [("lam", repr(lam)),
                                  ("negative_control", str(cfg.allow_critical).lower())]
    return ResultTable(("level", "h_max", "dofs", "lam", "beta_n"),
                       rows, tuple(meta))


def run_reflection_diagnostic(cfg: ExperimentConfig):
    """Measured reflection-operator norms per interface pattern.

    Returns (rows, csv_path): one row per (pattern, direction) with the
    finest-level sup, the closed-form angle-ratio value, and the relative
    drift over the last two levels (the stabilization check).
    """
    if cfg.kind != "diagnostics":
        raise ConfigError(
            f"reflection diagnostic asked to run a {cfg.kind!r} config")
    if cfg.domain != "reference":
        raise ConfigError("reflection diagnostic runs on the reference domain")
    dom = cfg.domain_spec()
    meshes = mesh_ladder(cfg)
    patterns = ([("corner", n) for n in range(len(dom.patterns))]
                + [("edge", n) for n in range(len(dom.edges))])
    jobs = [(pat, d) for pat in patterns for d in ("+", "-")]

    def task(job):
        pat, direction = job
        est = refl.estimate_norm(meshes, dom, pat, "vector", direction)
        sups = est.level_sups
        drift = (abs(sups[-1] - sups[-2]) / sups[-1]) if len(sups) > 1 else 0.0
        return (pat[0], pat[1], direction, est.measured_sup,
                est.measured_sup_squared, est.formula_value, drift)

    rows = _pool_map(task, jobs)
    meta = _base_metadata(cfg) + [("norm_kind", "vector")]
    columns = ("pattern", "index", "direction", "measured_sup",
               "measured_sup_squared", "formula_value", "drift_last_two")
    path = _write_csv(Path(cfg.out_dir) / "reflection.csv", columns, rows, meta)
    return rows, path


def export_field(field: FeField, path, format: str = "csv") -> Path:
    """Write per-triangle barycenter samples of an edge field.

    csv: one row per triangle with barycenter, both components, and the
    elementwise curl.  vtk: legacy ASCII unstructured grid carrying the same
    data as cell data (vectors padded to 3D).
    """
    if format not in ("csv", "vtk"):
        raise ValueError(f"unknown export format {format!r}")
    space = field.space
    if not isinstance(space, EdgeSpace):
        raise fem.FemError("export_field needs a field bound to an EdgeSpace")
    mesh = space.mesh
    vals, curls = fem.eval_cellwise(mesh, np.real(field.coeffs))
    bary = mesh.vertices[mesh.triangles].mean(axis=1)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)

    if format == "csv":
        rows = [(t, bary[t, 0], bary[t, 1], vals[t, 0], vals[t, 1], curls[t])
                for t in range(mesh.num_triangles)]
        return _write_csv(path, ("triangle", "x1", "x2", "u1", "u2", "curl"),
                          rows, [("description", field.description or "field"),
                                 ("lam", "none" if field.lam is None
                                  else repr(float(field.lam)))])

    with open(path, "w") as f:
        f.write("# vtk DataFile Version 3.0\n")
        f.write(f"{field.description or 'signfem field'}\n")
        f.write("ASCII\nDATASET UNSTRUCTURED_GRID\n")
        f.write(f"POINTS {mesh.num_vertices} double\n")
        for x, y in mesh.vertices:
            f.write(f"{x!r} {y!r} 0.0\n")
        T = mesh.num_triangles
        f.write(f"CELLS {T} {4 * T}\n")
        for a, b, c in mesh.triangles:
            f.write(f"3 {a} {b} {c}\n")
        f.write(f"CELL_TYPES {T}\n")
        f.writelines("5\n" * T)
        f.write(f"CELL_DATA {T}\n")
        f.write("VECTORS field double\n")
        for t in range(T):
            f.write(f"{vals[t, 0]!r} {vals[t, 1]!r} 0.0\n")
        f.write("SCALARS curl double 1\nLOOKUP_TABLE default\n")
        for t in range(T):
            f.write(f"{curls[t]!r}\n")
    return path
