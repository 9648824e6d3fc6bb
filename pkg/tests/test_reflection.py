"""Reflection transfer tables: trace matching, transform identities, norms."""

import dataclasses

import numpy as np
import pytest
from scipy.spatial import cKDTree

from signfem import fem, geometry as geo, reflection as refl
from signfem.geometry import make_reference_domain
from signfem.mesh import Mesh, refine_red
from signfem.meshgen import build_r_conform_coarse

PATTERNS = [("corner", i) for i in range(3)] + [("edge", i) for i in range(3)]


@pytest.fixture(scope="module")
def dom():
    return make_reference_domain()


@pytest.fixture(scope="module")
def coarse(dom):
    return build_r_conform_coarse(dom, 0.2)


@pytest.fixture(scope="module")
def mesh_seq(coarse):
    seq = [coarse]
    for _ in range(3):
        seq.append(refine_red(seq[-1]))
    return seq


@pytest.mark.parametrize("pattern", PATTERNS)
@pytest.mark.parametrize("kind", ["scalar", "vector"])
@pytest.mark.parametrize("direction", ["+", "-"])
def test_trace_matching_full_basis(coarse, dom, pattern, kind, direction):
    r = refl.build_reflection(coarse, dom, pattern, kind, direction)
    assert len(r.interface_dofs) > 0
    assert refl.verify_trace_matching(coarse, r) <= 1e-12
    # with explicit trial fields the answer is the same
    rng = np.random.default_rng(1)
    trials = rng.standard_normal((4, r.matrix.shape[0]))
    assert refl.verify_trace_matching(coarse, r, trials) <= 1e-11


def test_flipped_fold_sign_detected(coarse, dom, monkeypatch):
    true_fold = geo.fold_maps

    def tampered(pattern, direction):
        maps = list(true_fold(pattern, direction))
        maps[1] = dataclasses.replace(maps[1], sign=-maps[1].sign)
        return tuple(maps)

    monkeypatch.setattr(geo, "fold_maps", tampered)
    r = refl.build_reflection(coarse, dom, ("corner", 0), "scalar", "+")
    assert refl.verify_trace_matching(coarse, r) >= 0.5


def test_constant_reflects_to_constant(coarse, dom):
    ones = np.ones(coarse.num_vertices)
    for pattern in PATTERNS:
        r = refl.build_reflection(coarse, dom, pattern, "scalar", "+")
        out = r.matrix @ ones
        assert np.abs(out[r.target_dofs] - 1.0).max() <= 1e-13
        # scalar weights are signed integers from the alternating fold
        assert np.allclose(r.matrix.data, np.round(r.matrix.data))


@pytest.mark.parametrize("pattern", [("corner", 0), ("edge", 1)])
@pytest.mark.parametrize("direction", ["+", "-"])
def test_pointwise_exactness(coarse, dom, pattern, direction):
    """The reflected FE function equals the signed pullback sum at interior
    points, not merely at dofs."""
    rng = np.random.default_rng(5)
    w = rng.standard_normal(coarse.num_vertices)
    r = refl.build_reflection(coarse, dom, pattern, "scalar", direction)
    rw = r.matrix @ w
    maps_by, cp = refl._composition_maps(dom, pattern, direction)
    in_patch = refl._patch_mask(coarse, pattern)
    tgt_reg = -1 if direction == "+" else 1
    tgt = np.flatnonzero(in_patch & (coarse.region == tgt_reg))
    bary = coarse.vertices[coarse.triangles].mean(axis=1)
    tree = cKDTree(bary)
    lamq = np.array([[0.6, 0.3, 0.1], [0.2, 0.5, 0.3], [1 / 3, 1 / 3, 1 / 3]])

    def p1_eval(point, t):
        v = coarse.triangles[t]
        v0, d1, d2 = (coarse.vertices[v[0]], coarse.vertices[v[1]] - coarse.vertices[v[0]],
                      coarse.vertices[v[2]] - coarse.vertices[v[0]])
        det = d1[0] * d2[1] - d1[1] * d2[0]
        rel = point - v0
        l1 = (rel[0] * d2[1] - rel[1] * d2[0]) / det
        l2 = (d1[0] * rel[1] - d1[1] * rel[0]) / det
        return np.array([1 - l1 - l2, l1, l2]) @ w[v]

    worst = 0.0
    for t in tgt:
        pts = coarse.vertices[coarse.triangles[t]]
        sector = cp.sector_of(pts.mean(axis=0)) if cp is not None else None
        for lam in lamq:
            x = lam @ pts
            have = lam @ rw[coarse.triangles[t]]
            want = 0.0
            for m in maps_by[sector]:
                img = m(x)
                _, j = tree.query(img)
                want += m.sign * p1_eval(img, j)
            worst = max(worst, abs(have - want))
    assert worst <= 1e-12


def test_gradient_commutation(coarse, dom):
    rng = np.random.default_rng(2)
    w = rng.standard_normal(coarse.num_vertices)
    G = fem.gradient_map(coarse)
    for pattern in PATTERNS:
        for direction in ("+", "-"):
            rs = refl.build_reflection(coarse, dom, pattern, "scalar", direction)
            rv = refl.build_reflection(coarse, dom, pattern, "vector", direction)
            lhs = (rv.matrix @ (G @ w))[rv.target_dofs]
            rhs = (G @ (rs.matrix @ w))[rv.target_dofs]
            assert np.abs(lhs - rhs).max() <= 1e-12


def test_curl_transform_identity(coarse, dom):
    """Elementwise curl of the reflected field is the signed, det-F-weighted
    pullback of the source curl."""
    rng = np.random.default_rng(4)
    u = rng.standard_normal(coarse.num_edges)
    _, curls = fem._geometry(coarse)
    signs = coarse.tri_edge_signs

    def tri_curl(field):
        return np.einsum("tj,tj->t", field[coarse.tri_edges] * signs, curls)

    cu = tri_curl(u)
    bary = coarse.vertices[coarse.triangles].mean(axis=1)
    tree = cKDTree(bary)
    for pattern in PATTERNS:
        for direction in ("+", "-"):
            rv = refl.build_reflection(coarse, dom, pattern, "vector", direction)
            cru = tri_curl(rv.matrix @ u)
            maps_by, cp = refl._composition_maps(dom, pattern, direction)
            in_patch = refl._patch_mask(coarse, pattern)
            tgt_reg = -1 if direction == "+" else 1
            for t in np.flatnonzero(in_patch & (coarse.region == tgt_reg)):
                sector = cp.sector_of(bary[t]) if cp is not None else None
                want = 0.0
                for m in maps_by[sector]:
                    _, j = tree.query(m(bary[t]))
                    want += m.sign * m.orientation * cu[j]
                assert abs(cru[t] - want) <= 1e-12


def test_edge_mirror_is_involutive(coarse, dom):
    rp = refl.build_reflection(coarse, dom, ("edge", 0), "vector", "+")
    rm = refl.build_reflection(coarse, dom, ("edge", 0), "vector", "-")
    both = rm.matrix @ rp.matrix
    rng = np.random.default_rng(6)
    u = rng.standard_normal(coarse.num_edges)
    assert np.abs((both @ u - u)[rm.target_dofs]).max() <= 1e-13


@pytest.mark.parametrize("kind", ["scalar", "vector"])
@pytest.mark.parametrize("direction", ["+", "-"])
def test_norm_estimates_corner(mesh_seq, dom, kind, direction):
    est = refl.estimate_norm(mesh_seq, dom, ("corner", 0), kind, direction)
    assert est.formula_value == 5.0
    assert est.measured_sup > 0
    assert est.measured_sup_squared == pytest.approx(est.measured_sup ** 2)
    sups = np.array(est.level_sups)
    assert len(sups) == 4
    # monotone non-decreasing along refinement, up to roundoff
    assert (np.diff(sups) >= -1e-9).all()
    # stabilized: last two levels within 2 percent
    assert abs(sups[-1] - sups[-2]) <= 0.02 * sups[-1]
    # bracket spanning both norm conventions
    assert np.sqrt(5) - 0.05 <= est.measured_sup <= 5.0 + 0.05


@pytest.mark.parametrize("kind", ["scalar", "vector"])
def test_norm_estimates_edge(mesh_seq, dom, kind):
    for direction in ("+", "-"):
        est = refl.estimate_norm(mesh_seq[:3], dom, ("edge", 2), kind, direction)
        assert est.formula_value == 1.0
        assert est.measured_sup == pytest.approx(1.0, abs=1e-6)


def test_other_corners_match_formula(mesh_seq, dom):
    for n in (1, 2):
        est = refl.estimate_norm(mesh_seq[:2], dom, ("corner", n), "vector", "+")
        assert est.formula_value == 5.0
        assert np.sqrt(5) - 0.05 <= est.measured_sup <= 5.0 + 0.05


def test_build_rejects_bad_input(coarse, dom):
    with pytest.raises(refl.ReflectionError, match="kind"):
        refl.build_reflection(coarse, dom, ("corner", 0), "tensor", "+")
    with pytest.raises(refl.ReflectionError, match="direction"):
        refl.build_reflection(coarse, dom, ("corner", 0), "scalar", "up")
    with pytest.raises(refl.ReflectionError, match="triangles"):
        refl.build_reflection(coarse, dom, ("corner", 7), "scalar", "+")


def test_build_rejects_nonconform_mesh(coarse, dom):
    sel = (coarse.patch_kind == 1) & (coarse.patch_index == 0) & (coarse.region == 1)
    vid = int(coarse.triangles[np.flatnonzero(sel)[0], 1])
    verts = coarse.vertices.copy()
    verts[vid] += 1e-6
    bad = Mesh(vertices=verts, triangles=coarse.triangles, region=coarse.region,
               patch_kind=coarse.patch_kind, patch_index=coarse.patch_index)
    with pytest.raises(refl.ReflectionError, match="non-conform"):
        refl.build_reflection(bad, dom, ("corner", 0), "scalar", "+")


def test_transfer_table_shape(coarse, dom):
    r = refl.build_reflection(coarse, dom, ("corner", 0), "vector", "+")
    table = r.table()
    assert sorted(table) == sorted(int(i) for i in r.target_dofs)
    src = set(int(s) for s in r.source_dofs)
    for entries in table.values():
        assert entries and all(j in src for j, _ in entries)
