import time

import numpy as np

from signfem import fem, materials as mats, solvers as sol
from signfem.geometry import make_reference_domain
from signfem.mesh import refine_red
from signfem.meshgen import build_r_conform_coarse

dom = make_reference_domain()
m0 = build_r_conform_coarse(dom, 0.2)
m1 = refine_red(m0)
m2 = refine_red(m1)
meshes = [m0, m1, m2]
blocks = [fem.assemble_blocks(m) for m in meshes]

M51 = mats.drude_material(mu_minus=0.1, eps_minus=10.0, omega_mu_sq=2.0, omega_eps_sq=2.0)
M52 = mats.drude_material(mu_minus=10.0, eps_minus=10.0, omega_mu_sq=4.0, omega_eps_sq=2.0)

print("=== source solve, 5.1 data, lam=1 ===")
sols = []
for m, bl in zip(meshes, blocks):
    s = sol.solve_source(m, bl, M51, 1.0, (1.0, 1.0))
    sols.append(s)
    n = fem.field_norms(m, s.field.coeffs)
    print(f"  nfree={fem.EdgeSpace(m).nfree:6d} res={s.residual:.2e} "
          f"wall={s.wall_time:.3f}s |u|_X={n.hcurl:.6f}")

print("=== errors vs finest (prolongated) ===")
ref = sols[-1].field.coeffs
nref = fem.field_norms(m2, ref).hcurl
prev = None
for i in range(len(meshes) - 1):
    u = sols[i].field.coeffs
    for j in range(i, len(meshes) - 1):
        u = fem.prolong_edge(meshes[j], meshes[j + 1], u)
    d = fem.field_norms(m2, u - ref).hcurl / nref
    print(f"  level {i}: rel H(curl) err {d:.4e}" + (f" ratio {prev/d:.3f}" if prev else ""))
    prev = d

print("=== scalar cross-check ===")
f0 = lambda x: x[..., 1] - x[..., 0]
for i, (m, bl) in enumerate(zip(meshes, blocks)):
    v, flux = sol.solve_scalar_potential(m, bl, M51, 1.0, f0=f0)
    ce = fem.cross_error(m, M51, 1.0, sols[i].field.coeffs, v.coeffs)
    print(f"  level {i}: cross_error {ce:.4e}")

print("=== trivial sources ===")
z = sol.solve_source(m0, blocks[0], M51, 1.0, (0.0, 0.0))
print("  f=0 -> max|u| =", np.abs(z.field.coeffs).max(), " res", z.residual)
s = sol.solve_source(m0, blocks[0], M51, -1.0, (1.0, 1.0))
print("  lam=-1 res", s.residual)

print("=== pencil ===")
pen = sol.build_pencil(m0, blocks[0], M52)
print("  n_edge", pen.layout.n_edge, "n_aux", pen.layout.n_aux, "coupled", pen.layout.coupled)
print("  S sym", abs(pen.S - pen.S.T).max(), " T sym", abs(pen.T - pen.T.T).max())
from numpy.linalg import eigvalsh
print("  T min eig", eigvalsh(pen.T.toarray()).min())

rng = np.random.default_rng(0)
space = fem.EdgeSpace(m0)
worst = 0.0
for lam in [0.7, 1.9, 2.8, 3.6, 4.7]:
    A = fem.assemble_A(blocks[0], M52, lam, space)
    for _ in range(20):
        u = rng.standard_normal(pen.layout.n_edge)
        direct = A @ u
        via = sol.schur_action(pen, lam, u)
        worst = max(worst, np.abs(direct - via).max() / np.abs(direct).max())
print("  schur equivalence worst rel:", worst)

pen0 = sol.build_pencil(m0, blocks[0], mats.drude_material())
print("  omega_mu=0 pencil coupled:", pen0.layout.coupled, "shape", pen0.S.shape)

print("=== eigen, 5.2 data, window [1.0, 1.33] ===")
for i, (m, bl) in enumerate(zip(meshes, blocks)):
    p = sol.build_pencil(m, bl, M52)
    t0 = time.time()
    pairs = sol.solve_eigen(m, bl, M52, p, (1.0, 4.0 / 3.0), 1.28, count=6)
    dt = time.time() - t0
    print(f"  level {i} ({p.S.shape[0]} dofs, {dt:.1f}s):")
    for pr in pairs:
        print(f"    lam={pr.lam:.6f} res={pr.residual:.2e} {pr.classification} frac={pr.curl_fraction:.2e}")

print("=== accumulation window [4/3, 100/51] level 1 ===")
p1 = sol.build_pencil(m1, blocks[1], M52)
pairs = sol.solve_eigen(m1, blocks[1], M52, p1, (4.0 / 3.0, 100.0 / 51.0), 1.6, count=10)
for pr in pairs[:6]:
    print(f"    lam={pr.lam:.6f} res={pr.residual:.2e} {pr.classification} frac={pr.curl_fraction:.2e}")

print("=== window count: dense vs sweep (coarse) ===")
t0 = time.time()
dense_vals = sol.count_eigen_window(p := sol.build_pencil(m0, blocks[0], M52), (4/3, 100/51))
t1 = time.time()
sweep_vals = sol.count_eigen_window(p, (4/3, 100/51), k=40, dense_below=0)
t2 = time.time()
print(f"  dense {len(dense_vals)} ({t1-t0:.1f}s)  sweep {len(sweep_vals)} ({t2-t1:.1f}s)")
print("  max gap:", np.abs(dense_vals - sweep_vals).max() if len(dense_vals) == len(sweep_vals) else "COUNT MISMATCH")

print("=== rational residual sanity ===")
rr = sol.rational_residual(m0, blocks[0], M52, 0.9, fem.EdgeSpace(m0).expand_vec(rng.standard_normal(space.nfree)))
print("  random vec:", rr)

print("=== infsup ===")
for i, (m, bl) in enumerate(zip(meshes, blocks)):
    t0 = time.time()
    e1 = sol.discrete_infsup(m, bl, M51, 1.0, level=i)
    e2 = sol.discrete_infsup(m, bl, M52, 20.0 / 11.0, level=i)
    e3 = sol.discrete_infsup(m, bl, M51, -1.0, level=i)
    print(f"  level {i}: beta(1)={e1.beta_n:.4e} beta(20/11)={e2.beta_n:.4e} "
          f"beta(-1)={e3.beta_n:.4e}  ({time.time()-t0:.1f}s)")
