"""Triangle mesh structure, red refinement, reflection-conformity checking,
and the plain-text mesh format.

Triangles carry a region label (+1/-1) and a patch membership (none, corner n,
edge n); every triangle must lie entirely inside one region.  Edges are
deduplicated with global low->high orientation, which the edge-element
assembly relies on.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import numpy as np
from scipy.spatial import cKDTree

from . import geometry as geo

PATCH_NONE, PATCH_CORNER, PATCH_EDGE = 0, 1, 2


class MeshError(ValueError):
    """Structurally invalid mesh or malformed mesh file."""


@dataclass(frozen=True, eq=False)
class Mesh:
    """Immutable triangle mesh with region/patch labels and derived edge data.

    vertices: (V,2) float; triangles: (T,3) vertex ids, positively oriented;
    region: (T,) +1/-1; patch_kind/patch_index: (T,) patch membership.
    Derived in __post_init__: edges (E,2) with low<high, tri_edges (T,3)
    (local edge j joins vertices j and j+1 mod 3), tri_edge_signs (T,3),
    boundary_edge (E,), areas (T,), h_max.
    """

    vertices: np.ndarray
    triangles: np.ndarray
    region: np.ndarray
    patch_kind: np.ndarray
    patch_index: np.ndarray
    parent_tri: Optional[np.ndarray] = None

    edges: np.ndarray = field(init=False)
    tri_edges: np.ndarray = field(init=False)
    tri_edge_signs: np.ndarray = field(init=False)
    boundary_edge: np.ndarray = field(init=False)
    areas: np.ndarray = field(init=False)
    h_max: float = field(init=False)

    def __post_init__(self):
        put = lambda k, v: object.__setattr__(self, k, v)
        put("vertices", np.ascontiguousarray(self.vertices, dtype=float))
        put("triangles", np.ascontiguousarray(self.triangles, dtype=np.int32))
        put("region", np.ascontiguousarray(self.region, dtype=np.int8))
        put("patch_kind", np.ascontiguousarray(self.patch_kind, dtype=np.int8))
        put("patch_index", np.ascontiguousarray(self.patch_index, dtype=np.int32))
        tri, ver = self.triangles, self.vertices
        if tri.size and (tri.min() < 0 or tri.max() >= len(ver)):
            raise MeshError("triangle references a missing vertex")
        if len({a.shape[0] for a in (tri, self.region, self.patch_kind, self.patch_index)}) != 1:
            raise MeshError("per-triangle arrays disagree in length")
        d1 = ver[tri[:, 1]] - ver[tri[:, 0]]
        d2 = ver[tri[:, 2]] - ver[tri[:, 0]]
        areas = 0.5 * (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])
        # local edge j = (v_j, v_{j+1}); sign +1 when stored low->high
        pairs = np.stack([tri, np.roll(tri, -1, axis=1)], axis=2).reshape(-1, 2)
        signs = np.where(pairs[:, 0] < pairs[:, 1], 1, -1).astype(np.int8)
        edges, inverse = np.unique(np.sort(pairs, axis=1), axis=0, return_inverse=True)
        put("edges", edges.astype(np.int32))
        put("tri_edges", inverse.reshape(-1, 3).astype(np.int32))
        put("tri_edge_signs", signs.reshape(-1, 3))
        counts = np.bincount(self.tri_edges.ravel(), minlength=len(edges))
        if counts.max(initial=0) > 2:
            raise MeshError("non-manifold edge (more than two adjacent triangles)")
        put("boundary_edge", counts == 1)
        put("areas", areas)
        lengths = np.linalg.norm(ver[edges[:, 1]] - ver[edges[:, 0]], axis=1)
        put("h_max", float(lengths.max(initial=0.0)))
        if np.any(areas <= 1e-14 * self.h_max**2):
            bad = int(np.argmin(areas))
            raise MeshError(f"degenerate or negatively oriented triangle {bad}")

    @property
    def num_vertices(self) -> int:
        return len(self.vertices)

    @property
    def num_triangles(self) -> int:
        return len(self.triangles)

    @property
    def num_edges(self) -> int:
        return len(self.edges)

    @property
    def edge_lengths(self) -> np.ndarray:
        d = self.vertices[self.edges[:, 1]] - self.vertices[self.edges[:, 0]]
        return np.linalg.norm(d, axis=1)

    def patch_label(self, t: int):
        kind = self.patch_kind[t]
        if kind == PATCH_NONE:
            return None
        return ("corner" if kind == PATCH_CORNER else "edge", int(self.patch_index[t]))

    def barycenters(self) -> np.ndarray:
        return self.vertices[self.triangles].mean(axis=1)


def refine_red(mesh: Mesh) -> Mesh:
    """Split every triangle into 4 congruent children through edge midpoints.

    Children inherit region and patch labels; parent_tri records provenance
    for intergrid transfer.  h_max halves exactly and the minimum angle is
    preserved (children are similar to their parents).
    """
    V = mesh.num_vertices
    mids = 0.5 * (mesh.vertices[mesh.edges[:, 0]] + mesh.vertices[mesh.edges[:, 1]])
    vertices = np.vstack([mesh.vertices, mids])
    a, b, c = mesh.triangles.T
    mab, mbc, mca = (V + mesh.tri_edges[:, j] for j in range(3))
    children = np.empty((4 * mesh.num_triangles, 3), dtype=np.int32)
    children[0::4] = np.column_stack([a, mab, mca])
    children[1::4] = np.column_stack([b, mbc, mab])
    children[2::4] = np.column_stack([c, mca, mbc])
    children[3::4] = np.column_stack([mab, mbc, mca])
    rep = lambda arr: np.repeat(arr, 4)
    return Mesh(vertices, children, rep(mesh.region), rep(mesh.patch_kind),
                rep(mesh.patch_index),
                parent_tri=rep(np.arange(mesh.num_triangles, dtype=np.int32)))


# ---------------------------------------------------------------------------
# reflection conformity (Definition-3 style checking)


@dataclass
class ConformityReport:
    passed: bool
    violations: List[Tuple[int, str, str]]  # (triangle id, map id, description)
    max_vertex_mismatch: float

    def __bool__(self):
        return self.passed


def _match_set(image: np.ndarray, cand: np.ndarray, tol: float) -> float:
    """Greatest vertex distance when matching the image triangle onto cand."""
    worst = 0.0
    for pt in image:
        d = np.min(np.linalg.norm(cand - pt, axis=1))
        if d > tol:
            return np.inf
        worst = max(worst, d)
    return worst


def _check_map_set(mesh, src_ids, maps_by_sector, tgt_ids, pattern, label, tol,
                   violations):
    """Map every source-patch triangle through its sector's maps and demand an
    exact triangle match among the target-patch triangles."""
    worst = 0.0
    if not len(tgt_ids):
        for t in src_ids:
            violations.append((int(t), label, "no target-side triangles in patch"))
        return worst
    centers = mesh.barycenters()[tgt_ids]
    tree = cKDTree(centers)
    for t in src_ids:
        pts = mesh.vertices[mesh.triangles[t]]
        sector = pattern.sector_of(pts.mean(axis=0)) if pattern is not None else -1
        for k, m in maps_by_sector.get(sector, ()):
            image = m(pts)
            _, j = tree.query(image.mean(axis=0))
            cand = mesh.vertices[mesh.triangles[tgt_ids[j]]]
            miss = _match_set(image, cand, tol)
            if not np.isfinite(miss):
                violations.append(
                    (int(t), f"{label}[{k}]",
                     f"image near {np.round(image.mean(axis=0), 6).tolist()} unmatched"))
            else:
                worst = max(worst, miss)
    return worst


def check_r_conformity(mesh: Mesh, domain: geo.DomainSpec) -> ConformityReport:
    """Check that every patch triangle maps exactly onto a patch triangle of
    the other region under the corner fold maps / edge mirrors.

    Corners whose pattern admits no fold maps (p_+ and p_- both even) are
    checked through the edge mirrors only.  Vertex tolerance is 1e-10 * h_max.
    """
    tol = 1e-10 * mesh.h_max
    violations: List[Tuple[int, str, str]] = []
    worst = 0.0
    ids = np.arange(mesh.num_triangles)
    for i, pattern in enumerate(domain.patterns):
        in_patch = (mesh.patch_kind == PATCH_CORNER) & (mesh.patch_index == i)
        minus_ids = ids[in_patch & (mesh.region == -1)]
        plus_ids = ids[in_patch & (mesh.region == 1)]
        if not (len(minus_ids) or len(plus_ids)):
            continue
        try:
            p2m = geo.fold_maps(pattern, "plus-to-minus")
            m2p = geo.fold_maps(pattern, "minus-to-plus")
        except geo.GeometryError:
            continue  # no fold maps exist for this pattern
        group = lambda maps: _group_by_sector(maps)
        worst = max(worst, _check_map_set(mesh, minus_ids, group(p2m), plus_ids,
                                          pattern, f"corner{i}:p2m", tol, violations))
        worst = max(worst, _check_map_set(mesh, plus_ids, group(m2p), minus_ids,
                                          pattern, f"corner{i}:m2p", tol, violations))
    for n, (a, b) in enumerate(domain.edges):
        in_patch = (mesh.patch_kind == PATCH_EDGE) & (mesh.patch_index == n)
        minus_ids = ids[in_patch & (mesh.region == -1)]
        plus_ids = ids[in_patch & (mesh.region == 1)]
        if not (len(minus_ids) or len(plus_ids)):
            continue
        mirror = {-1: [(0, geo.edge_reflection(a, b))]}
        worst = max(worst, _check_map_set(mesh, minus_ids, mirror, plus_ids,
                                          None, f"edge{n}:mirror", tol, violations))
        worst = max(worst, _check_map_set(mesh, plus_ids, mirror, minus_ids,
                                          None, f"edge{n}:mirror", tol, violations))
    return ConformityReport(not violations, violations,
                            worst if np.isfinite(worst) else np.inf)


def _group_by_sector(maps):
    by = {}
    for k, m in enumerate(maps):
        by.setdefault(m.source_sector, []).append((k, m))
    return by


# ---------------------------------------------------------------------------
# text format


def mesh_write(mesh: Mesh, path) -> None:
    with open(path, "w") as fh:
        fh.write("signfem-mesh v1\n")
        fh.write(f"vertices {mesh.num_vertices}\n")
        for i, (x, y) in enumerate(mesh.vertices):
            fh.write(f"{i} {float(x)!r} {float(y)!r}\n")
        fh.write(f"triangles {mesh.num_triangles}\n")
        for t in range(mesh.num_triangles):
            v1, v2, v3 = mesh.triangles[t]
            reg = "+" if mesh.region[t] > 0 else "-"
            kind = mesh.patch_kind[t]
            patch = ("none" if kind == PATCH_NONE else
                     f"{'corner' if kind == PATCH_CORNER else 'edge'}:{mesh.patch_index[t]}")
            fh.write(f"{t} {v1} {v2} {v3} {reg} {patch}\n")


def mesh_read(path) -> Mesh:
    def fail(lineno, msg):
        raise MeshError(f"{path}, line {lineno}: {msg}")

    with open(path) as fh:
        lines = fh.read().splitlines()
    if not lines or lines[0].strip() != "signfem-mesh v1":
        fail(1, "missing 'signfem-mesh v1' header")
    k = 1

    def expect_section(name):
        nonlocal k
        parts = lines[k].split() if k < len(lines) else []
        if len(parts) != 2 or parts[0] != name:
            fail(k + 1, f"expected '{name} <count>'")
        k += 1
        return int(parts[1])

    nv = expect_section("vertices")
    vertices = np.empty((nv, 2))
    for i in range(nv):
        parts = lines[k].split() if k < len(lines) else []
        if len(parts) != 3 or int(parts[0]) != i:
            fail(k + 1, f"expected vertex row '{i} x y'")
        vertices[i] = float(parts[1]), float(parts[2])
        k += 1
    nt = expect_section("triangles")
    tris = np.empty((nt, 3), dtype=np.int32)
    region = np.empty(nt, dtype=np.int8)
    patch_kind = np.empty(nt, dtype=np.int8)
    patch_index = np.empty(nt, dtype=np.int32)
    for t in range(nt):
        parts = lines[k].split() if k < len(lines) else []
        if len(parts) != 6 or int(parts[0]) != t:
            fail(k + 1, f"expected triangle row '{t} v1 v2 v3 region patch'")
        tris[t] = [int(p) for p in parts[1:4]]
        if np.any(tris[t] >= nv) or np.any(tris[t] < 0):
            fail(k + 1, f"triangle {t} references a missing vertex")
        if parts[4] not in "+-" or len(parts[4]) != 1:
            fail(k + 1, f"region label must be '+' or '-', got {parts[4]!r}")
        region[t] = 1 if parts[4] == "+" else -1
        patch = parts[5]
        if patch == "none":
            patch_kind[t], patch_index[t] = PATCH_NONE, -1
        elif patch.startswith("corner:") or patch.startswith("edge:"):
            kind, _, num = patch.partition(":")
            patch_kind[t] = PATCH_CORNER if kind == "corner" else PATCH_EDGE
            try:
                patch_index[t] = int(num)
            except ValueError:
                fail(k + 1, f"bad patch index in {patch!r}")
        else:
            fail(k + 1, f"unknown patch label {patch!r}")
        k += 1
    try:
        return Mesh(vertices, tris, region, patch_kind, patch_index)
    except MeshError as exc:
        raise MeshError(f"{path}: {exc}") from exc
