"""Edge/P1 assembly, discrete exactness, splittings, and transfer operators."""

import numpy as np
import pytest
import scipy.linalg as sla
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from signfem import fem
from signfem.geometry import make_reference_domain
from signfem.materials import drude_material
from signfem.mesh import Mesh, refine_red
from signfem.meshgen import build_r_conform_coarse

REFERENCE = drude_material(mu_minus=10.0, eps_minus=10.0,
                           omega_mu_sq=4.0, omega_eps_sq=2.0)
# contrast -10 in both coefficients at lam = 1
CONTRAST_TEN = drude_material(mu_minus=0.1, eps_minus=10.0,
                              omega_mu_sq=2.0, omega_eps_sq=2.0)


@pytest.fixture(scope="module")
def coarse():
    return build_r_conform_coarse(make_reference_domain(), 0.2)


@pytest.fixture(scope="module")
def blocks(coarse):
    return fem.assemble_blocks(coarse)


def test_block_keys_and_exact_symmetry(blocks):
    for key in ("K_plus", "K_minus", "M_plus", "M_minus",
                "Ks_plus", "Ks_minus", "Ms_plus", "Ms_minus", "C", "MY"):
        assert key in blocks
    for key in ("K_plus", "K_minus", "M_plus", "M_minus",
                "Ks_plus", "Ks_minus", "Ms_plus", "Ms_minus"):
        B = blocks[key]
        assert abs(B - B.T).max() <= 1e-14


def test_mass_blocks_positive_definite_per_region(coarse, blocks):
    for name, sign in (("plus", 1), ("minus", -1)):
        sel = np.unique(coarse.tri_edges[coarse.region == sign])
        Msub = blocks[f"M_{name}"].toarray()[np.ix_(sel, sel)]
        assert np.linalg.eigvalsh(Msub).min() > 0
        vsel = np.unique(coarse.triangles[coarse.region == sign])
        Mssub = blocks[f"Ms_{name}"].toarray()[np.ix_(vsel, vsel)]
        assert np.linalg.eigvalsh(Mssub).min() > 0


def test_single_triangle_closed_forms():
    verts = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
    mesh = Mesh(vertices=verts, triangles=np.array([[0, 1, 2]]),
                region=np.array([1], dtype=np.int8),
                patch_kind=np.zeros(1, dtype=np.int8),
                patch_index=np.full(1, -1, dtype=np.int32))
    blocks = fem.assemble_blocks(mesh)
    K = (blocks["K_plus"] + blocks["K_minus"]).toarray()
    M = (blocks["M_plus"] + blocks["M_minus"]).toarray()

    # independent oracle: integrate the analytic edge functions with a dense
    # barycentric grid (degree >= 2 handled exactly by the trapezoid-free
    # summation below only in the limit, so use an exact degree-4 rule)
    g = np.array([[-1.0, -1.0], [1.0, 0.0], [0.0, 1.0]])  # barycentric grads
    pts = np.array([[0.108103018168070, 0.445948490915965, 0.445948490915965],
                    [0.445948490915965, 0.108103018168070, 0.445948490915965],
                    [0.445948490915965, 0.445948490915965, 0.108103018168070],
                    [0.816847572980459, 0.091576213509771, 0.091576213509771],
                    [0.091576213509771, 0.816847572980459, 0.091576213509771],
                    [0.091576213509771, 0.091576213509771, 0.816847572980459]])
    wts = np.array([0.223381589678011] * 3 + [0.109951743655322] * 3)
    area = 0.5
    edges = [(0, 1), (0, 2), (1, 2)]  # global low->high pairs
    Mref = np.zeros((3, 3))
    for lam, w in zip(pts, wts):
        W = [lam[a] * g[b] - lam[b] * g[a] for a, b in edges]
        for j in range(3):
            for k in range(3):
                Mref[j, k] += w * area * W[j] @ W[k]
    order = [tuple(e) for e in mesh.edges]
    perm = [order.index(e) for e in edges]
    assert np.allclose(M[np.ix_(perm, perm)], Mref, atol=1e-15)

    # curl of every edge function is +-1/area; edge (0,2) runs against the
    # triangle's traversal (2,0), so it picks up the minus sign
    signs = np.array([1.0, -1.0, 1.0])
    Kref = signs[:, None] * signs[None, :] / area
    assert np.allclose(K[np.ix_(perm, perm)], Kref, atol=1e-14)


def test_curl_of_gradient_vanishes_at_matrix_level(coarse, blocks):
    G = fem.gradient_map(coarse)
    K = blocks["K_plus"] + blocks["K_minus"]
    KG = K @ G
    assert KG.nnz == 0 or abs(KG).max() <= 1e-13
    rng = np.random.default_rng(7)
    for _ in range(5):
        w = rng.standard_normal(coarse.num_vertices) * rng.choice([1e-3, 1.0, 1e3])
        assert np.linalg.norm(KG @ w) <= 1e-13 * np.linalg.norm(w)


def test_gradient_map_matches_tangential_moments(coarse):
    G = fem.gradient_map(coarse)
    p = 2.0 * coarse.vertices[:, 0] + 3.0 * coarse.vertices[:, 1] - 0.25
    moments = fem.interpolate_edge(coarse, lambda x: np.broadcast_to([2.0, 3.0], x.shape))
    assert np.abs(G @ p - moments).max() <= 1e-12


def test_constant_field_patch_test(coarse, blocks):
    u = fem.interpolate_edge(coarse, lambda x: np.broadcast_to([1.0, 0.0], x.shape))
    K = blocks["K_plus"] + blocks["K_minus"]
    M = blocks["M_plus"] + blocks["M_minus"]
    area = float(coarse.areas.sum())
    assert abs(u @ (K @ u)) <= 1e-12
    assert u @ (M @ u) == pytest.approx(area, rel=1e-12)
    # the load of the same constant against the interpolant is again the area
    rhs = fem.assemble_rhs(coarse, lambda x: np.broadcast_to([1.0, 0.0], x.shape))
    assert rhs @ u == pytest.approx(area, rel=1e-12)


def test_operator_definiteness(coarse, blocks):
    space = fem.EdgeSpace(coarse)
    A = fem.assemble_A(blocks, REFERENCE, -1.0, space).toarray()
    assert np.abs(A - A.T).max() == 0.0
    sla.cholesky(A)  # raises if not positive definite

    # sign-changing contrast -10: indefinite, checked through the inertia of
    # a symmetric factorization
    A1 = fem.assemble_A(blocks, CONTRAST_TEN, 1.0, space).toarray()
    ev = np.linalg.eigvalsh(A1)
    assert (ev < 0).sum() > 50 and (ev > 0).sum() > 50

    # homogeneous limit (no dispersion, unit coefficients): symmetric PD
    homog = drude_material()
    Ah = fem.assemble_A(blocks, homog, -1.0, space)
    assert abs(Ah - Ah.T).max() == 0.0
    sla.cholesky(Ah.toarray())


def test_scalar_problem_shape_and_kernel(coarse, blocks):
    S, rhs = fem.assemble_scalar_problem(blocks, REFERENCE, 3.0, coarse)
    # natural boundary conditions: every vertex keeps its row
    assert S.shape == (coarse.num_vertices, coarse.num_vertices)
    assert rhs.shape == (coarse.num_vertices,)
    ones = np.ones(coarse.num_vertices)
    Ks = blocks["Ks_plus"] + blocks["Ks_minus"]
    assert np.abs(Ks @ ones).max() <= 1e-12
    # default load x1 - x2 integrates to a finite real vector
    assert np.isfinite(rhs).all()


def test_helmholtz_projection(coarse, blocks):
    rng = np.random.default_rng(3)
    u = rng.standard_normal(coarse.num_edges)
    split = fem.helmholtz_project(coarse, blocks, u)
    M = blocks["M_plus"] + blocks["M_minus"]
    unorm2 = u @ (M @ u)
    assert abs(split.remainder @ (M @ split.gradient)) <= 1e-10 * unorm2
    assert np.abs(split.gradient + split.remainder - u).max() <= 1e-14

    again = fem.helmholtz_project(coarse, blocks, split.remainder)
    assert np.abs(again.gradient).max() <= 1e-12

    # a discrete gradient is reproduced with zero remainder
    G = fem.gradient_map(coarse)
    p0 = rng.standard_normal(coarse.num_vertices)
    p0[fem.ScalarSpace(coarse).boundary_vertices] = 0.0
    gsplit = fem.helmholtz_project(coarse, blocks, G @ p0)
    assert np.abs(gsplit.remainder).max() <= 1e-12


def test_aux_space_spans_minus_curls(coarse, blocks):
    aux = fem.AuxCurlSpace(coarse)
    assert aux.ndof == int((coarse.region == -1).sum())
    # C maps the edge space onto all of the piecewise-constant space
    assert np.linalg.matrix_rank(blocks["C"].toarray()) == aux.ndof


def test_cross_check_consistency(coarse):
    homog = drude_material()
    # affine v has a globally constant rotated gradient (1, 2)
    v = coarse.vertices[:, 1] - 2.0 * coarse.vertices[:, 0] + 0.5
    u = fem.interpolate_edge(coarse, lambda x: np.broadcast_to([1.0, 2.0], x.shape))
    assert fem.cross_error(coarse, homog, -1.0, u, v) <= 1e-12
    with pytest.raises(fem.FemError, match="vanishes"):
        fem.cross_error(coarse, homog, -1.0, u, np.zeros(coarse.num_vertices))


def test_prolongation_is_exact(coarse):
    fine = refine_red(coarse)
    rng = np.random.default_rng(11)
    uc = rng.standard_normal(coarse.num_edges)
    uf = fem.prolong_edge(coarse, fine, uc)
    # same function in the nested space: identical norms
    nc = fem.field_norms(coarse, uc)
    nf = fem.field_norms(fine, uf)
    assert nf.l2 == pytest.approx(nc.l2, rel=1e-10)
    assert nf.curl == pytest.approx(nc.curl, rel=1e-10)

    pc = rng.standard_normal(coarse.num_vertices)
    pf = fem.prolong_scalar(coarse, fine, pc)
    sc = fem.scalar_norms(coarse, pc)
    sf = fem.scalar_norms(fine, pf)
    assert sf.l2 == pytest.approx(sc.l2, rel=1e-12)
    assert sf.curl == pytest.approx(sc.curl, rel=1e-12)

    with pytest.raises(fem.FemError, match="parent"):
        fem.prolong_edge(coarse, coarse, uc)


@settings(max_examples=25, deadline=None)
@given(hnp.arrays(np.float64, st.integers(1, 40),
                  elements=st.floats(-1e6, 1e6, allow_nan=False)),
       st.one_of(st.none(), st.floats(-10, 10, allow_nan=False)))
def test_field_io_roundtrip(tmp_path_factory, coeffs, lam):
    path = tmp_path_factory.mktemp("fields") / "f.field"
    fem.field_write(path, fem.FeField("scalar", coeffs, lam, "roundtrip probe"))
    back = fem.field_read(path)
    assert back.space == "scalar"
    assert back.description == "roundtrip probe"
    assert (back.lam is None) == (lam is None)
    if lam is not None:
        assert back.lam == lam
    assert np.array_equal(np.asarray(back.coeffs, dtype=float), coeffs)


def test_field_io_complex_and_malformed(tmp_path, coarse):
    space = fem.EdgeSpace(coarse)
    coeffs = np.arange(4) + 1j * np.array([0.5, -2.0, 0.0, 1e-8])
    fem.field_write(tmp_path / "c.field", fem.FeField(space, coeffs, 1.5, "x"))
    back = fem.field_read(tmp_path / "c.field")
    assert back.space == "edge"
    assert np.array_equal(back.coeffs, coeffs)

    text = (tmp_path / "c.field").read_text().splitlines()
    text[3 + 2] = "1 broken"
    (tmp_path / "bad.field").write_text("\n".join(text) + "\n")
    with pytest.raises(fem.FemError, match="line"):
        fem.field_read(tmp_path / "bad.field")
    (tmp_path / "tag.field").write_text(
        "signfem-field v1\nspace weird\nlam none\ndescription \ndofs 0\n")
    with pytest.raises(fem.FemError, match="space"):
        fem.field_read(tmp_path / "tag.field")
