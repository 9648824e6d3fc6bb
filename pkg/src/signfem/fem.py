"""Lowest-order edge elements and P1 Lagrange elements on labeled meshes.

Edge basis functions follow the global low->high edge orientation stored in
the mesh: on a triangle the local function for edge (a,b), a<b, is
w = lam_a grad(lam_b) - lam_b grad(lam_a), with curl w = 2 grad(lam_a) x
grad(lam_b) constant.  Per-region blocks are assembled with the 3-point
midpoint rule (exact for the quadratic integrands that occur); smooth or
cutoff-weighted integrands use the 7-point degree-5 rule.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Dict, Optional, Tuple

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from . import materials as mats
from .mesh import Mesh

__all__ = [
    "ScalarSpace", "EdgeSpace", "AuxCurlSpace", "FeField", "FemError",
    "assemble_blocks", "gradient_map", "assemble_A", "assemble_rhs",
    "assemble_scalar_problem", "helmholtz_project", "field_norms",
    "scalar_norms", "cross_error", "eval_cellwise", "error_vs_exact",
    "interpolate_edge", "interpolate_scalar",
    "prolong_edge", "prolong_scalar", "field_write", "field_read",
    "MID_RULE", "STRANG_RULE",
]

# midpoint rule: degree 2
MID_RULE = (np.array([[0.5, 0.5, 0.0], [0.0, 0.5, 0.5], [0.5, 0.0, 0.5]]),
            np.array([1 / 3, 1 / 3, 1 / 3]))
# Strang 7-point rule: degree 5, for cutoff-weighted and manufactured terms
_a, _b = 0.797426985353087, 0.101286507323456
_c, _d = 0.059715871789770, 0.470142064105115
STRANG_RULE = (
    np.array([[1 / 3, 1 / 3, 1 / 3],
              [_a, _b, _b], [_b, _a, _b], [_b, _b, _a],
              [_c, _d, _d], [_d, _c, _d], [_d, _d, _c]]),
    np.array([9 / 40] + [0.125939180544827] * 3 + [0.132394152788506] * 3),
)
# 3-point Gauss on [0,1] for tangential edge moments
_EDGE_T = np.array([0.5 - np.sqrt(15) / 10, 0.5, 0.5 + np.sqrt(15) / 10])
_EDGE_W = np.array([5 / 18, 8 / 18, 5 / 18])


class FemError(RuntimeError):
    pass


@dataclass(frozen=True, eq=False)
class ScalarSpace:
    """P1 Lagrange space on all mesh vertices (natural boundary condition)."""

    mesh: Mesh

    @property
    def ndof(self) -> int:
        return self.mesh.num_vertices

    @property
    def boundary_vertices(self) -> np.ndarray:
        return np.unique(self.mesh.edges[self.mesh.boundary_edge])

    @property
    def interior_vertices(self) -> np.ndarray:
        mask = np.ones(self.mesh.num_vertices, dtype=bool)
        mask[self.boundary_vertices] = False
        return np.flatnonzero(mask)


@dataclass(frozen=True, eq=False)
class EdgeSpace:
    """Lowest-order edge-element space; free dofs exclude boundary edges
    (perfectly conducting boundary, tangential trace eliminated).  clamp=False
    keeps every edge: the natural-boundary variant used by manufactured
    fixtures whose exact field has a nonzero tangential trace."""

    mesh: Mesh
    clamp: bool = True

    @property
    def ndof(self) -> int:
        return self.mesh.num_edges

    @property
    def free(self) -> np.ndarray:
        if not self.clamp:
            return np.arange(self.mesh.num_edges)
        return np.flatnonzero(~self.mesh.boundary_edge)

    @property
    def nfree(self) -> int:
        if not self.clamp:
            return self.mesh.num_edges
        return int((~self.mesh.boundary_edge).sum())

    def restrict_matrix(self, A: sp.spmatrix) -> sp.csr_matrix:
        free = self.free
        return sp.csr_matrix(A.tocsr()[free][:, free])

    def restrict_vec(self, v: np.ndarray) -> np.ndarray:
        return v[self.free]

    def expand_vec(self, v: np.ndarray) -> np.ndarray:
        out = np.zeros(self.ndof, dtype=v.dtype)
        out[self.free] = v
        return out


@dataclass(frozen=True, eq=False)
class AuxCurlSpace:
    """Piecewise constants on the minus-region triangles (= curls of the edge
    space restricted there)."""

    mesh: Mesh

    @property
    def triangles(self) -> np.ndarray:
        return np.flatnonzero(self.mesh.region == -1)

    @property
    def ndof(self) -> int:
        return len(self.triangles)


@dataclass
class FeField:
    space: object
    coeffs: np.ndarray
    lam: Optional[float] = None
    description: str = ""


def _geometry(mesh: Mesh):
    """Per-triangle barycentric gradients (T,3,2) and curls of the local edge
    functions (T,3), all following the stored orientation signs."""
    v = mesh.vertices[mesh.triangles]
    area = mesh.areas
    grads = np.empty((mesh.num_triangles, 3, 2))
    for j in range(3):
        opp = v[:, (j + 2) % 3] - v[:, (j + 1) % 3]
        grads[:, j, 0] = -opp[:, 1]
        grads[:, j, 1] = opp[:, 0]
    grads /= (2 * area)[:, None, None]
    # 2 grad(lam_j) x grad(lam_{j+1}) = 1/area for every local edge of a
    # positively oriented triangle.  Snap the weight to a multiple of 2^-30:
    # stiffness entries are then short sums of exactly representable +-q and
    # curl-of-gradient cancellation is exact in floating point, while the
    # perturbation (< 2^-31 absolute) sits far below discretization error.
    q = np.ldexp(np.round(np.ldexp(1.0 / area, 30)), -30)
    curls = np.repeat(q[:, None], 3, axis=1)
    return grads, curls


def _whitney_at(grads, lam):
    """Local edge functions at one barycentric point: (T,3,2)."""
    T = grads.shape[0]
    W = np.empty((T, 3, 2))
    for j in range(3):
        k = (j + 1) % 3
        W[:, j] = lam[j] * grads[:, k] - lam[k] * grads[:, j]
    return W


def _scatter(rows, cols, vals, shape):
    return sp.coo_matrix((vals.ravel(), (rows.ravel(), cols.ravel())),
                         shape=shape).tocsr()


def assemble_blocks(mesh: Mesh) -> Dict[str, sp.csr_matrix]:
    """Assemble the per-region building blocks.

    K/M: edge-element curl-curl and mass, by region.  Ks/Ms: P1 stiffness and
    mass, by region.  C: <curl u, q> pairing with the minus-region piecewise
    constants.  MY: their mass (diagonal of minus areas).
    """
    grads, curls = _geometry(mesh)
    area = mesh.areas
    E, V, T = mesh.num_edges, mesh.num_vertices, mesh.num_triangles
    signs = mesh.tri_edge_signs.astype(float)
    ge = mesh.tri_edges

    # edge-space element matrices (midpoint rule; exact at this degree)
    pts, wts = MID_RULE
    Mel = np.zeros((T, 3, 3))
    for lam, w in zip(pts, wts):
        W = _whitney_at(grads, lam)
        Mel += w * np.einsum("tjd,tkd->tjk", W, W)
    Mel *= area[:, None, None]
    Mel *= signs[:, :, None] * signs[:, None, :]
    # int_T (curl w_j)(curl w_k) = area * (1/area)^2; keep the snapped weight
    # as a single factor so element entries stay exactly +-q
    Kel = (signs[:, :, None] * signs[:, None, :]) * curls[:, :1, None]

    # P1 element matrices
    Ksel = np.einsum("tjd,tkd->tjk", grads, grads) * area[:, None, None]
    Msel = np.zeros((T, 3, 3))
    for lam, w in zip(pts, wts):
        Msel += w * np.einsum("j,k->jk", lam, lam)[None, :, :]
    Msel = Msel * area[:, None, None]

    rows_e = np.repeat(ge, 3, axis=1)
    cols_e = np.tile(ge, (1, 3))
    gv = mesh.triangles
    rows_v = np.repeat(gv, 3, axis=1)
    cols_v = np.tile(gv, (1, 3))

    blocks = {}
    for name, sign in (("plus", 1), ("minus", -1)):
        sel = mesh.region == sign
        blocks[f"K_{name}"] = _scatter(rows_e[sel], cols_e[sel], Kel[sel], (E, E))
        blocks[f"M_{name}"] = _scatter(rows_e[sel], cols_e[sel], Mel[sel], (E, E))
        blocks[f"Ks_{name}"] = _scatter(rows_v[sel], cols_v[sel], Ksel[sel], (V, V))
        blocks[f"Ms_{name}"] = _scatter(rows_v[sel], cols_v[sel], Msel[sel], (V, V))

    aux = AuxCurlSpace(mesh)
    tm = aux.triangles
    rows_c = np.repeat(np.arange(len(tm)), 3)
    cols_c = ge[tm].ravel()
    # int_T curl w_e = area * (1/area): exactly the orientation sign
    vals_c = signs[tm].ravel()
    blocks["C"] = sp.coo_matrix((vals_c, (rows_c, cols_c)),
                                shape=(len(tm), E)).tocsr()
    blocks["MY"] = sp.diags(area[tm]).tocsr()
    # snapped reciprocal mass: Ct @ MYinv @ C reproduces K_minus bit-for-bit,
    # which the auxiliary-variable elimination in the eigensolver relies on
    blocks["MYinv"] = sp.diags(curls[tm, 0]).tocsr()

    # scalar analog for the potential-formulation pencil: per minus triangle
    # the two components of area * grad v; Cs^T MYsinv Cs == Ks_minus
    rows_s = np.repeat(2 * np.arange(len(tm)), 3)
    rows_s = np.concatenate([rows_s, rows_s + 1])
    cols_s = np.tile(gv[tm].ravel(), 2)
    agrad = grads[tm] * area[tm, None, None]
    vals_s = np.concatenate([agrad[:, :, 0].ravel(), agrad[:, :, 1].ravel()])
    blocks["Cs"] = sp.coo_matrix((vals_s, (rows_s, cols_s)),
                                 shape=(2 * len(tm), V)).tocsr()
    blocks["MYs"] = sp.diags(np.repeat(area[tm], 2)).tocsr()
    blocks["MYsinv"] = sp.diags(np.repeat(curls[tm, 0], 2)).tocsr()
    return blocks


def gradient_map(mesh: Mesh) -> sp.csr_matrix:
    """Coefficient map from P1 functions into the edge space: the tangential
    moment of a gradient along edge (a,b), a<b, is p(b) - p(a)."""
    E = mesh.num_edges
    rows = np.repeat(np.arange(E), 2)
    cols = mesh.edges.ravel()
    vals = np.tile([-1.0, 1.0], E)
    return sp.coo_matrix((vals, (rows, cols)),
                         shape=(E, mesh.num_vertices)).tocsr()


def assemble_A(blocks: Dict[str, sp.csr_matrix], mat: mats.DrudeMaterial,
               lam, space: EdgeSpace) -> sp.csr_matrix:
    """A(lam) = mu(lam)^-1-weighted curl-curl minus lam eps(lam)-weighted
    mass, on the free (interior-edge) dofs."""
    mu_p = 1.0 / float(mats.mu(mat, lam, "+"))
    mu_m = complex(mats.mu_inv(mat, lam, "-")) if np.iscomplexobj(np.asarray(lam)) \
        else float(mats.mu_inv(mat, lam, "-"))
    eps_p = float(mats.eps(mat, lam, "+"))
    eps_m = mats.eps(mat, lam, "-")
    eps_m = complex(eps_m) if isinstance(eps_m, complex) else float(eps_m)
    A = (mu_p * blocks["K_plus"] + mu_m * blocks["K_minus"]
         - lam * (eps_p * blocks["M_plus"] + eps_m * blocks["M_minus"]))
    return space.restrict_matrix(A)


def assemble_rhs(mesh: Mesh, fun: Callable, rule=MID_RULE) -> np.ndarray:
    """Edge-space load vector <f, w> for a vector-valued f(x) -> (…,2)."""
    grads, _ = _geometry(mesh)
    signs = mesh.tri_edge_signs.astype(float)
    v = mesh.vertices[mesh.triangles]
    pts, wts = rule
    out = np.zeros(mesh.num_edges)
    vals = None
    for lam, w in zip(pts, wts):
        x = np.einsum("j,tjd->td", lam, v)
        f = np.asarray(fun(x), dtype=float)
        W = _whitney_at(grads, lam)
        contrib = w * np.einsum("td,tjd->tj", f, W)
        vals = contrib if vals is None else vals + contrib
    vals = vals * mesh.areas[:, None] * signs
    np.add.at(out, mesh.tri_edges.ravel(), vals.ravel())
    return out


def assemble_scalar_problem(blocks: Dict[str, sp.csr_matrix],
                            mat: mats.DrudeMaterial, lam, mesh: Mesh,
                            f0: Callable = None) -> Tuple[sp.csr_matrix, np.ndarray]:
    """Scalar analog on the P1 space with natural boundary conditions:
    eps(lam)^-1-weighted stiffness minus lam mu(lam)-weighted mass, loaded
    with <mu(lam) f0, w>.  The default f0(x) = x1 - x2 is affine, so the
    midpoint rule integrates the load exactly."""
    if f0 is None:
        f0 = lambda x: x[..., 0] - x[..., 1]
    eps_ip = 1.0 / float(mats.eps(mat, lam, "+"))
    eps_im = mats.eps_inv(mat, lam, "-")
    mu_p = float(mats.mu(mat, lam, "+"))
    mu_m = mats.mu(mat, lam, "-")
    eps_im = complex(eps_im) if isinstance(eps_im, complex) else float(eps_im)
    mu_m = complex(mu_m) if isinstance(mu_m, complex) else float(mu_m)
    S = (eps_ip * blocks["Ks_plus"] + eps_im * blocks["Ks_minus"]
         - lam * (mu_p * blocks["Ms_plus"] + mu_m * blocks["Ms_minus"]))

    v = mesh.vertices[mesh.triangles]
    pts, wts = MID_RULE
    mu_t = np.where(mesh.region == 1, mu_p, mu_m)
    vals = None
    for lam_b, w in zip(pts, wts):
        x = np.einsum("j,tjd->td", lam_b, v)
        f = np.asarray(f0(x), dtype=float)
        contrib = w * f[:, None] * lam_b[None, :]
        vals = contrib if vals is None else vals + contrib
    vals = vals * (mu_t * mesh.areas)[:, None]
    rhs = np.zeros(mesh.num_vertices, dtype=vals.dtype)
    np.add.at(rhs, mesh.triangles.ravel(), vals.ravel())
    return sp.csr_matrix(S), rhs


@dataclass
class HelmholtzSplit:
    potential: np.ndarray  # P1 coefficients, zero on the boundary
    gradient: np.ndarray   # edge coefficients of grad(potential)
    remainder: np.ndarray  # edge coefficients of u - grad(potential)


def helmholtz_project(mesh: Mesh, blocks: Dict[str, sp.csr_matrix],
                      u_full: np.ndarray) -> HelmholtzSplit:
    """L2-orthogonal splitting u = grad p + r against gradients of P1
    functions vanishing on the boundary."""
    G = gradient_map(mesh)
    M = blocks["M_plus"] + blocks["M_minus"]
    Ks = blocks["Ks_plus"] + blocks["Ks_minus"]
    interior = ScalarSpace(mesh).interior_vertices
    rhs = (G.T @ (M @ u_full))[interior]
    Kii = Ks.tocsr()[interior][:, interior]
    p = np.zeros(mesh.num_vertices, dtype=u_full.dtype)
    p[interior] = spla.spsolve(Kii.tocsc(), rhs)
    grad = G @ p
    return HelmholtzSplit(p, grad, u_full - grad)


@dataclass
class FieldNorms:
    l2: float
    curl: float
    hcurl: float


def field_norms(mesh: Mesh, u_full: np.ndarray) -> FieldNorms:
    """L2 norm, curl seminorm, and the graph norm of an edge-element field."""
    grads, curls = _geometry(mesh)
    signs = mesh.tri_edge_signs.astype(float)
    coef = u_full[mesh.tri_edges] * signs
    pts, wts = MID_RULE
    l2sq = 0.0
    for lam, w in zip(pts, wts):
        W = _whitney_at(grads, lam)
        vals = np.einsum("tj,tjd->td", coef, W)
        l2sq += w * np.einsum("td,td->t", vals.conj(), vals).real @ mesh.areas
    curl_vals = np.einsum("tj,tj->t", coef, curls)
    curlsq = float((np.abs(curl_vals) ** 2) @ mesh.areas)
    l2sq = float(l2sq)
    return FieldNorms(np.sqrt(l2sq), np.sqrt(curlsq), np.sqrt(l2sq + curlsq))


def scalar_norms(mesh: Mesh, p: np.ndarray) -> FieldNorms:
    """L2 norm, H1 seminorm, and H1 norm of a P1 field."""
    grads, _ = _geometry(mesh)
    vals = p[mesh.triangles]
    pts, wts = MID_RULE
    l2sq = 0.0
    for lam, w in zip(pts, wts):
        at = vals @ lam
        l2sq += w * float((np.abs(at) ** 2) @ mesh.areas)
    gvals = np.einsum("tj,tjd->td", vals, grads)
    h1sq = float(np.einsum("td,td->t", gvals.conj(), gvals).real @ mesh.areas)
    return FieldNorms(np.sqrt(l2sq), np.sqrt(h1sq), np.sqrt(l2sq + h1sq))


def cross_error(mesh: Mesh, mat: mats.DrudeMaterial, lam,
                u_full: np.ndarray, v_scalar: np.ndarray) -> float:
    """Relative L2 distance between the edge field u and eps(lam)^-1 Curl v,
    with Curl v = (d2 v, -d1 v) computed from the P1 field v."""
    grads, _ = _geometry(mesh)
    signs = mesh.tri_edge_signs.astype(float)
    coef = u_full[mesh.tri_edges] * signs
    gv = np.einsum("tj,tjd->td", v_scalar[mesh.triangles], grads)
    curl_v = np.column_stack([gv[:, 1], -gv[:, 0]])
    eps_t = np.where(mesh.region == 1,
                     float(mats.eps(mat, lam, "+")),
                     float(mats.eps(mat, lam, "-")))
    target = curl_v / eps_t[:, None]
    pts, wts = MID_RULE
    err = ref = 0.0
    for lam_b, w in zip(pts, wts):
        W = _whitney_at(grads, lam_b)
        uv = np.einsum("tj,tjd->td", coef, W)
        d = uv - target
        err += w * float(np.einsum("td,td->t", d.conj(), d).real @ mesh.areas)
        ref += w * float(np.einsum("td,td->t", target.conj(), target).real @ mesh.areas)
    if ref == 0:
        raise FemError("reference field vanishes; relative error undefined")
    return float(np.sqrt(err / ref))


def eval_cellwise(mesh: Mesh, u_full: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Barycenter values (T, 2) and elementwise curls (T,) of an edge field."""
    grads, curls = _geometry(mesh)
    coef = u_full[mesh.tri_edges] * mesh.tri_edge_signs.astype(float)
    W = _whitney_at(grads, np.array([1 / 3, 1 / 3, 1 / 3]))
    vals = np.einsum("tj,tjd->td", coef, W)
    return vals, np.einsum("tj,tj->t", coef, curls)


def error_vs_exact(mesh: Mesh, u_full: np.ndarray, exact: Callable,
                   exact_curl: Callable, rule=STRANG_RULE) -> Tuple[float, float]:
    """Relative L2 and H(curl) errors of an edge field against a smooth exact
    field (values (..., 2)) with known scalar curl.

    Quadrature-based on purpose: comparing to the edge interpolant instead
    would report the superclose O(h^2) distance on uniform meshes and fake a
    convergence order.
    """
    grads, curls = _geometry(mesh)
    coef = u_full[mesh.tri_edges] * mesh.tri_edge_signs.astype(float)
    v = mesh.vertices[mesh.triangles]
    curl_h = np.einsum("tj,tj->t", coef, curls)
    pts, wts = rule
    errsq = refsq = cerrsq = crefsq = 0.0
    for lam_b, w in zip(pts, wts):
        x = np.einsum("j,tjd->td", lam_b, v)
        W = _whitney_at(grads, lam_b)
        uh = np.einsum("tj,tjd->td", coef, W)
        ue = np.asarray(exact(x), dtype=float)
        ce = np.asarray(exact_curl(x), dtype=float)
        d = uh - ue
        errsq += w * float(np.einsum("td,td->t", d, d) @ mesh.areas)
        refsq += w * float(np.einsum("td,td->t", ue, ue) @ mesh.areas)
        cerrsq += w * float(((curl_h - ce) ** 2) @ mesh.areas)
        crefsq += w * float((ce ** 2) @ mesh.areas)
    if refsq + crefsq == 0:
        raise FemError("exact field vanishes; relative error undefined")
    l2 = np.sqrt(errsq / refsq)
    x = np.sqrt((errsq + cerrsq) / (refsq + crefsq))
    return float(l2), float(x)


def interpolate_edge(mesh: Mesh, fun: Callable) -> np.ndarray:
    """Edge dofs of a vector field: 3-point Gauss tangential moments."""
    a = mesh.vertices[mesh.edges[:, 0]]
    b = mesh.vertices[mesh.edges[:, 1]]
    d = b - a
    out = np.zeros(mesh.num_edges)
    for t, w in zip(_EDGE_T, _EDGE_W):
        x = a + t * d
        out += w * np.einsum("ed,ed->e", np.asarray(fun(x), dtype=float), d)
    return out


def interpolate_scalar(mesh: Mesh, fun: Callable) -> np.ndarray:
    return np.asarray(fun(mesh.vertices), dtype=float)


def _eval_edge_field(mesh: Mesh, grads, coef, tri_ids, points):
    """Evaluate an edge field at physical points lying in given triangles."""
    v0 = mesh.vertices[mesh.triangles[tri_ids, 0]]
    d1 = mesh.vertices[mesh.triangles[tri_ids, 1]] - v0
    d2 = mesh.vertices[mesh.triangles[tri_ids, 2]] - v0
    rel = points - v0
    det = d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0]
    l1 = (rel[:, 0] * d2[:, 1] - rel[:, 1] * d2[:, 0]) / det
    l2 = (d1[:, 0] * rel[:, 1] - d1[:, 1] * rel[:, 0]) / det
    lam = np.stack([1 - l1 - l2, l1, l2], axis=1)
    g = grads[tri_ids]
    out = np.zeros((len(tri_ids), 2))
    for j in range(3):
        k = (j + 1) % 3
        wj = lam[:, j, None] * g[:, k] - lam[:, k, None] * g[:, j]
        out += coef[tri_ids, j, None] * wj
    return out


def prolong_edge(coarse: Mesh, fine: Mesh, u_coarse_full: np.ndarray) -> np.ndarray:
    """Exact transfer of a coarse edge field onto a red-refined mesh (the
    spaces are nested; fine dofs are tangential moments of the coarse field)."""
    if fine.parent_tri is None:
        raise FemError("fine mesh lacks parent metadata (not from refine_red)")
    grads, _ = _geometry(coarse)
    signs = coarse.tri_edge_signs.astype(float)
    coef = u_coarse_full[coarse.tri_edges] * signs

    # any adjacent fine triangle for each fine edge, then its parent
    owner = np.full(fine.num_edges, -1, dtype=np.int64)
    owner[fine.tri_edges.ravel()] = np.repeat(np.arange(fine.num_triangles), 3)
    parent = fine.parent_tri[owner]
    a = fine.vertices[fine.edges[:, 0]]
    b = fine.vertices[fine.edges[:, 1]]
    d = b - a
    out = np.zeros(fine.num_edges)
    for t, w in zip(_EDGE_T, _EDGE_W):
        x = a + t * d
        vals = _eval_edge_field(coarse, grads, coef, parent, x)
        out += w * np.einsum("ed,ed->e", vals, d)
    return out


def prolong_scalar(coarse: Mesh, fine: Mesh, p_coarse: np.ndarray) -> np.ndarray:
    """Exact transfer of a P1 field onto a red-refined mesh: new vertices are
    coarse edge midpoints, so their values are endpoint averages."""
    V = coarse.num_vertices
    out = np.empty(fine.num_vertices, dtype=p_coarse.dtype)
    out[:V] = p_coarse
    out[V:] = 0.5 * (p_coarse[coarse.edges[:, 0]] + p_coarse[coarse.edges[:, 1]])
    return out


_SPACE_TAGS = {ScalarSpace: "scalar", EdgeSpace: "edge", AuxCurlSpace: "aux"}


def field_write(path, field: FeField) -> None:
    """Plain-text field file: space tag, dof count, then one `i re im` row
    per coefficient."""
    coeffs = np.asarray(field.coeffs)
    if isinstance(field.space, str):
        tag = field.space if field.space in _SPACE_TAGS.values() else None
    else:
        tag = _SPACE_TAGS.get(type(field.space))
    if tag is None:
        raise FemError(f"unknown field space {field.space!r}")
    with open(path, "w") as f:
        f.write("signfem-field v1\n")
        f.write(f"space {tag}\n")
        f.write("lam " + ("none" if field.lam is None else repr(float(field.lam))) + "\n")
        f.write(f"description {field.description}\n")
        f.write(f"dofs {len(coeffs)}\n")
        for i, c in enumerate(coeffs):
            c = complex(c)
            f.write(f"{i} {c.real!r} {c.imag!r}\n")


def field_read(path) -> FeField:
    """Read a field file back; the space slot holds the bare tag string (the
    caller re-binds it to a space on the right mesh)."""
    with open(path) as f:
        lines = f.read().splitlines()

    def fail(lineno, msg):
        raise FemError(f"{path}, line {lineno + 1}: {msg}")

    if not lines or lines[0].strip() != "signfem-field v1":
        fail(0, "expected header 'signfem-field v1'")
    head = {}
    ln = 1
    for key in ("space", "lam", "description", "dofs"):
        if ln >= len(lines) or not lines[ln].startswith(key + " "):
            fail(ln, f"expected '{key} ...'")
        head[key] = lines[ln][len(key) + 1:]
        ln += 1
    if head["space"] not in _SPACE_TAGS.values():
        fail(1, f"unknown space tag {head['space']!r}")
    lam = None if head["lam"] == "none" else float(head["lam"])
    try:
        n = int(head["dofs"])
    except ValueError:
        fail(4, f"bad dof count {head['dofs']!r}")
    coeffs = np.zeros(n, dtype=complex)
    for row in range(n):
        parts = lines[ln + row].split() if ln + row < len(lines) else []
        if len(parts) != 3 or int(parts[0]) != row:
            fail(ln + row, "expected 'index re im'")
        coeffs[row] = float(parts[1]) + 1j * float(parts[2])
    if not np.any(coeffs.imag):
        coeffs = coeffs.real
    return FeField(head["space"], coeffs, lam, head["description"])
