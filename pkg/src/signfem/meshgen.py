"""Coarse mesh construction honoring the reflection symmetries.

Corner patches are regular 2(p_+ + p_-)-gons: slice vertices on the sector
rays at the patch radius, each slice symmetrically bisected through its chord
midpoint, so sector reflections carry patch triangles onto patch triangles
exactly.  Edge patches are mirror-symmetric trapezoid strips anchored at the
hexagon chord midpoints (legs coincide with hexagon chord halves, so no
hanging nodes).  The leftover regions are ear-clipped, split to the target
size by longest-edge bisection (patch-boundary edges frozen), and smoothed
with Delaunay edge flips.
"""

from __future__ import annotations

import math
from typing import Dict, List, Tuple

import numpy as np

from . import geometry as geo
from .mesh import Mesh, MeshError, PATCH_CORNER, PATCH_EDGE, PATCH_NONE


class _VertexPool:
    """Deduplicating vertex store (grid hash, 1e-9 identity tolerance)."""

    _GRID = 1e-6

    def __init__(self):
        self.pts: List[np.ndarray] = []
        self._cells: Dict[Tuple[int, int], List[int]] = {}

    def add(self, point) -> int:
        p = np.asarray(point, dtype=float)
        cx, cy = int(math.floor(p[0] / self._GRID)), int(math.floor(p[1] / self._GRID))
        for dx in (-1, 0, 1):
            for dy in (-1, 0, 1):
                for i in self._cells.get((cx + dx, cy + dy), ()):
                    if abs(self.pts[i][0] - p[0]) < 1e-9 and abs(self.pts[i][1] - p[1]) < 1e-9:
                        return i
        i = len(self.pts)
        self.pts.append(p)
        self._cells.setdefault((cx, cy), []).append(i)
        return i

    def array(self) -> np.ndarray:
        return np.array(self.pts, dtype=float)


def _cross(o, a, b):
    return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])


def ear_clip(points: np.ndarray) -> List[Tuple[int, int, int]]:
    """Triangulate a counterclockwise (weakly) simple polygon by ear clipping.

    Accepts repeated vertices from hole-bridge cuts.  Each step clips the
    fattest available ear; a vertex on or inside a candidate ear blocks it,
    so collinear boundary chains never produce hanging nodes.
    """
    pts = np.asarray(points, dtype=float)
    n = len(pts)
    if n < 3:
        raise MeshError("polygon with fewer than 3 vertices")
    scale = float(np.ptp(pts, axis=0).max())
    eps2 = 1e-12 * scale * scale
    idx = list(range(n))
    tris: List[Tuple[int, int, int]] = []

    def blocked(a, b, c):
        for j in idx:
            v = pts[j]
            if any(abs(v[0] - w[0]) < 1e-12 * scale and abs(v[1] - w[1]) < 1e-12 * scale
                   for w in (a, b, c)):
                continue
            if (_cross(a, b, v) >= -eps2 and _cross(b, c, v) >= -eps2
                    and _cross(c, a, v) >= -eps2):
                return True
        return False

    while len(idx) > 3:
        m = len(idx)
        best, best_q = None, 0.0
        for pos in range(m):
            i0, i1, i2 = idx[pos - 1], idx[pos], idx[(pos + 1) % m]
            a, b, c = pts[i0], pts[i1], pts[i2]
            cr = _cross(a, b, c)
            if cr <= eps2:
                continue
            if blocked(a, b, c):
                continue
            perim2 = (np.dot(b - a, b - a) + np.dot(c - b, c - b)
                      + np.dot(a - c, a - c))
            q = cr / perim2  # fat-ear preference
            if q > best_q:
                best_q, best = q, pos
        if best is None:
            raise MeshError("ear clipping failed; polygon is not simple")
        pos = best
        tris.append((idx[pos - 1], idx[pos], idx[(pos + 1) % len(idx)]))
        del idx[pos]
    a, b, c = (pts[i] for i in idx)
    if _cross(a, b, c) <= eps2:
        raise MeshError("ear clipping left a degenerate final triangle")
    tris.append(tuple(idx))
    return tris


def _stations(pool: _VertexPool, a_id: int, b_id: int, m: int) -> List[int]:
    a, b = pool.pts[a_id], pool.pts[b_id]
    inner = [pool.add(a + (t / m) * (b - a)) for t in range(1, m)]
    return [a_id] + inner + [b_id]


def _cut_hole(pool: _VertexPool, outer: List[int], hole_cw: List[int]) -> List[int]:
    """Merge a clockwise hole loop into a counterclockwise outer loop with a
    doubled bridge edge from the hole's rightmost vertex toward +x."""
    hx = [pool.pts[i][0] for i in hole_cw]
    start = max(range(len(hole_cw)), key=lambda j: (hx[j], pool.pts[hole_cw[j]][1]))
    hole = hole_cw[start:] + hole_cw[:start]
    H = pool.pts[hole[0]]
    best = None  # (x_int, outer position)
    K = len(outer)
    for s in range(K):
        u, v = pool.pts[outer[s]], pool.pts[outer[(s + 1) % K]]
        if (u[1] - H[1]) * (v[1] - H[1]) > 0 or u[1] == v[1]:
            continue
        x_int = u[0] + (H[1] - u[1]) / (v[1] - u[1]) * (v[0] - u[0])
        if x_int <= H[0] + 1e-12:
            continue
        if best is None or x_int < best[0]:
            best = (x_int, s)
    if best is None:
        raise MeshError("hole bridge found no outer boundary to the right")
    x_int, s = best
    # the pool may dedupe the bridge onto an outer vertex; the resulting
    # adjacent duplicates in the loop are collapsed before clipping
    bridge = pool.add((x_int, H[1]))
    return outer[:s + 1] + [bridge] + hole + [hole[0], bridge] + outer[s + 1:]


def _split_to_size(pool, tris, region, pkind, pidx, frozen, h):
    """Longest-edge bisection of every unfrozen edge above the target length.

    Always splits the globally longest oversized edge, so it is the longest
    edge of each adjacent triangle and shape quality stays bounded; both
    neighbors split through the shared midpoint, keeping the mesh conforming.
    """
    while True:
        adj: Dict[Tuple[int, int], List[int]] = {}
        for t, (a, b, c) in enumerate(tris):
            for u, v in ((a, b), (b, c), (c, a)):
                adj.setdefault((u, v) if u < v else (v, u), []).append(t)
        best, best_len = None, h
        for e in adj:
            if e in frozen:
                continue
            L = float(np.linalg.norm(pool.pts[e[0]] - pool.pts[e[1]]))
            if L > best_len:
                best_len, best = L, e
        if best is None:
            return
        u, v = best
        mid = pool.add(0.5 * (pool.pts[u] + pool.pts[v]))
        for t in sorted(adj[best], reverse=True):
            a, b, c = tris[t]
            ring = (a, b, c, a)
            for j in range(3):
                if {ring[j], ring[j + 1]} == {u, v}:
                    w = ring[(j + 2) % 3]
                    x, y = ring[j], ring[j + 1]
                    tris[t] = [x, mid, w]
                    tris.append([mid, y, w])
                    for arr in (region, pkind, pidx):
                        arr.append(arr[t])
                    break


def _min_angle(pool, tri):
    p = [pool.pts[i] for i in tri]
    best = np.pi
    for j in range(3):
        u1 = p[(j + 1) % 3] - p[j]
        u2 = p[(j + 2) % 3] - p[j]
        cos = np.dot(u1, u2) / (np.linalg.norm(u1) * np.linalg.norm(u2))
        best = min(best, math.acos(max(-1.0, min(1.0, cos))))
    return best


def _smooth(pool, tris, region, pkind, pidx, frozen, rect, rounds=8):
    """Guarded Laplacian smoothing of leftover-region vertices, with Delaunay
    flips after each round.

    Vertices of patch triangles never move (the reflection symmetry lives
    there); outer-boundary vertices slide along their rectangle side; interior
    vertices move toward their neighbor centroid.  A move is kept only when
    the smallest incident angle does not get worse, so the pass is monotone.
    """
    (x0, y0), (x1, y1) = rect
    for _ in range(rounds):
        pinned = set()
        nbrs: Dict[int, set] = {}
        incident: Dict[int, List[int]] = {}
        count: Dict[Tuple[int, int], int] = {}
        for t, (a, b, c) in enumerate(tris):
            if pkind[t] != PATCH_NONE:
                pinned.update((a, b, c))
            for u, v in ((a, b), (b, c), (c, a)):
                nbrs.setdefault(u, set()).add(v)
                nbrs.setdefault(v, set()).add(u)
                count[(u, v) if u < v else (v, u)] = count.get((u, v) if u < v else (v, u), 0) + 1
            for i in (a, b, c):
                incident.setdefault(i, []).append(t)
        bnd_nbrs: Dict[int, List[int]] = {}
        for (u, v), k in count.items():
            if k == 1:
                bnd_nbrs.setdefault(u, []).append(v)
                bnd_nbrs.setdefault(v, []).append(u)
        moved = 0
        for i, around in nbrs.items():
            if i in pinned:
                continue
            p = pool.pts[i]
            on_x = abs(p[0] - x0) < 1e-12 or abs(p[0] - x1) < 1e-12
            on_y = abs(p[1] - y0) < 1e-12 or abs(p[1] - y1) < 1e-12
            if on_x and on_y:
                continue  # rectangle corner
            if on_x or on_y:
                two = bnd_nbrs.get(i, [])
                if len(two) != 2:
                    continue
                target = 0.5 * (pool.pts[two[0]] + pool.pts[two[1]])
                if on_x:
                    target[0] = p[0]
                else:
                    target[1] = p[1]
            else:
                target = np.mean([pool.pts[j] for j in around], axis=0)
            new = p + 0.7 * (target - p)
            before = min(_min_angle(pool, tris[t]) for t in incident[i])
            pool.pts[i] = new
            after = min(_min_angle(pool, tris[t]) for t in incident[i])
            areas_ok = all(_cross(*(pool.pts[v] for v in tris[t])) > 0 for t in incident[i])
            if after >= before and areas_ok:
                moved += 1
            else:
                pool.pts[i] = p
        _lawson_flips(pool, tris, region, pkind, pidx, frozen)
        if not moved:
            return


def _lawson_flips(pool, tris, region, pkind, pidx, frozen):
    """Delaunay edge flips restricted to unfrozen interior edges between
    same-region, patch-free triangles."""
    for _ in range(100):
        adj: Dict[Tuple[int, int], List[int]] = {}
        for t, (a, b, c) in enumerate(tris):
            for u, v in ((a, b), (b, c), (c, a)):
                adj.setdefault((u, v) if u < v else (v, u), []).append(t)
        dirty = set()
        flips = 0
        for e, ts in adj.items():
            if len(ts) != 2 or e in frozen:
                continue
            t1, t2 = ts
            if t1 in dirty or t2 in dirty:
                continue
            if region[t1] != region[t2] or pkind[t1] != PATCH_NONE or pkind[t2] != PATCH_NONE:
                continue
            u, v = e
            w1 = next(x for x in tris[t1] if x not in e)
            w2 = next(x for x in tris[t2] if x not in e)
            # orient so t1 holds the directed edge u->v
            ring = tris[t1] + tris[t1][:1]
            if not any(ring[j] == u and ring[j + 1] == v for j in range(3)):
                u, v = v, u
            pu, pv, p1, p2 = (pool.pts[i] for i in (u, v, w1, w2))
            # in-circle test: flip when w2 is strictly inside circumcircle(u,v,w1)
            mat = np.array([
                [pu[0] - p2[0], pu[1] - p2[1], np.dot(pu, pu) - np.dot(p2, p2)],
                [pv[0] - p2[0], pv[1] - p2[1], np.dot(pv, pv) - np.dot(p2, p2)],
                [p1[0] - p2[0], p1[1] - p2[1], np.dot(p1, p1) - np.dot(p2, p2)],
            ])
            scale = max(np.linalg.norm(pu - pv), np.linalg.norm(p1 - p2))
            if np.linalg.det(mat) <= 1e-10 * scale**4:
                continue
            # the flipped pair must stay positively oriented (convex quad)
            if _cross(pu, p2, p1) <= 0 or _cross(pv, p1, p2) <= 0:
                continue
            tris[t1] = [u, w2, w1]
            tris[t2] = [v, w1, w2]
            dirty.update(ts)
            flips += 1
        if not flips:
            return


def build_r_conform_coarse(domain: geo.DomainSpec, h_target: float) -> Mesh:
    """Build the coarse reflection-conforming mesh for DOMAIN.

    Patch triangulations are geometry-imposed; leftover-region elements are
    sized to at most h_target, so diameters obey max(h_target, patch sizes).
    """
    if not h_target > 0:
        raise MeshError("h_target must be positive")
    pool = _VertexPool()
    tris: List[List[int]] = []
    region: List[int] = []
    pkind: List[int] = []
    pidx: List[int] = []

    def add(a, b, c, reg, kind, index):
        if _cross(pool.pts[a], pool.pts[b], pool.pts[c]) <= 0:
            raise MeshError("degenerate patch triangle (h_target or radius too small?)")
        tris.append([a, b, c])
        region.append(reg)
        pkind.append(kind)
        pidx.append(index)

    patterns = domain.patterns
    N = len(patterns)
    R = domain.patch_radius_corner

    # corner patches: bisected slices of the regular 2p-gon
    V = [[pool.add(pat.ray_point(j, R)) for j in range(pat.p)] for pat in patterns]
    M = []
    for i, pat in enumerate(patterns):
        M.append([pool.add(0.5 * (pool.pts[V[i][j]] + pool.pts[V[i][(j + 1) % pat.p]]))
                  for j in range(pat.p)])
        ci = pool.add(pat.corner)
        for j in range(pat.p):
            reg = 1 if j < pat.p_plus else -1
            add(ci, V[i][j], M[i][j], reg, PATCH_CORNER, i)
            add(ci, M[i][j], V[i][(j + 1) % pat.p], reg, PATCH_CORNER, i)

    # edge patches: mirror trapezoid strips between consecutive corner patches
    base_sta, mtop_sta, ptop_sta = [], [], []
    for n in range(N):
        i, k = n, (n + 1) % N
        pp = patterns[i].p_plus
        A, B = V[i][pp], V[k][0]
        TmA, TmB = M[i][pp], M[k][patterns[k].p - 1]
        TpA, TpB = M[i][pp - 1], M[k][0]
        lengths = [np.linalg.norm(pool.pts[x] - pool.pts[y])
                   for x, y in ((A, B), (TmA, TmB), (TpA, TpB))]
        m = max(1, math.ceil(max(lengths) / h_target - 1e-12))
        base = _stations(pool, A, B, m)
        mtop = _stations(pool, TmA, TmB, m)
        ptop = _stations(pool, TpA, TpB, m)
        base_sta.append(base)
        mtop_sta.append(mtop)
        ptop_sta.append(ptop)
        for t in range(m):
            add(base[t], base[t + 1], mtop[t + 1], -1, PATCH_EDGE, n)
            add(base[t], mtop[t + 1], mtop[t], -1, PATCH_EDGE, n)
            # plus side: exact mirror images, reordered to positive orientation
            add(base[t + 1], base[t], ptop[t + 1], 1, PATCH_EDGE, n)
            add(base[t], ptop[t], ptop[t + 1], 1, PATCH_EDGE, n)

    frozen = set()
    for (a, b, c) in tris:
        for u, v in ((a, b), (b, c), (c, a)):
            frozen.add((u, v) if u < v else (v, u))

    # leftover inclusion interior: bounded by trapezoid tops and hexagon chords
    loop = []
    for n in range(N):
        k = (n + 1) % N
        pat = patterns[k]
        loop += mtop_sta[n][:-1]
        seq = [M[k][pat.p - 1]]
        for j in range(pat.p - 1, pat.p_plus, -1):
            seq += [V[k][j], M[k][j - 1]]
        loop += seq[:-1]
    _add_clipped(pool, loop, tris, region, pkind, pidx, -1)

    # leftover exterior: rectangle with the patch-collar hole bridged open
    (x0, y0), (x1, y1) = domain.outer_rect
    outer = [pool.add(p) for p in ((x0, y0), (x1, y0), (x1, y1), (x0, y1))]
    hole = []
    for n in range(N):
        pat = patterns[n]
        seq = [M[n][0]]
        for j in range(1, pat.p_plus):
            seq += [V[n][j], M[n][j]]
        hole += seq
        hole += ptop_sta[n][1:-1]
    if _loop_area(pool, hole) < 0:
        hole = hole[::-1]
    merged = _cut_hole(pool, outer, hole[::-1])
    _add_clipped(pool, merged, tris, region, pkind, pidx, 1)

    _split_to_size(pool, tris, region, pkind, pidx, frozen, h_target)
    _lawson_flips(pool, tris, region, pkind, pidx, frozen)
    _smooth(pool, tris, region, pkind, pidx, frozen, domain.outer_rect)

    mesh = Mesh(pool.array(), np.array(tris, dtype=np.int32),
                np.array(region, dtype=np.int8), np.array(pkind, dtype=np.int8),
                np.array(pidx, dtype=np.int32))
    area = (x1 - x0) * (y1 - y0)
    if abs(mesh.areas.sum() - area) > 1e-9 * area:
        raise MeshError("triangulated area disagrees with the domain area")
    return mesh


def _loop_area(pool, loop):
    pts = np.array([pool.pts[i] for i in loop])
    x, y = pts[:, 0], pts[:, 1]
    return 0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1)))


def _add_clipped(pool, loop, tris, region, pkind, pidx, reg):
    loop = [i for k, i in enumerate(loop) if i != loop[k - 1]]  # drop repeats
    if _loop_area(pool, loop) < 0:
        loop = loop[::-1]
    pts = np.array([pool.pts[i] for i in loop])
    for (a, b, c) in ear_clip(pts):
        tris.append([loop[a], loop[b], loop[c]])
        region.append(reg)
        pkind.append(PATCH_NONE)
        pidx.append(-1)


def square_mesh(n: int, lo=(0.0, 0.0), hi=(1.0, 1.0)) -> Mesh:
    """Uniform diagonal triangulation of a rectangle, single '+' region."""
    if n < 1:
        raise MeshError("need at least one cell per side")
    xs = np.linspace(lo[0], hi[0], n + 1)
    ys = np.linspace(lo[1], hi[1], n + 1)
    X, Y = np.meshgrid(xs, ys, indexing="ij")
    vertices = np.column_stack([X.ravel(), Y.ravel()])
    vid = lambda i, j: i * (n + 1) + j
    tris = []
    for i in range(n):
        for j in range(n):
            v00, v10 = vid(i, j), vid(i + 1, j)
            v01, v11 = vid(i, j + 1), vid(i + 1, j + 1)
            tris += [[v00, v10, v11], [v00, v11, v01]]
    T = len(tris)
    return Mesh(vertices, np.array(tris, dtype=np.int32),
                np.ones(T, dtype=np.int8), np.zeros(T, dtype=np.int8),
                np.full(T, -1, dtype=np.int32))
