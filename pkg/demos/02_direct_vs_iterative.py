"""The one-step solve against conjugate gradients on the same problem.

Both methods minimize the same Tikhonov functional, so their answers
agree up to the conditioning of the problem.  The direct solve costs the
same for every alpha.  The number of CG iterations grows as alpha
shrinks, and the agreement loosens with it.

Usage: python demos/02_direct_vs_iterative.py [out_dir]
"""

import time

import numpy as np

from _common import out_dir, save_panels
from onestep_eit.assemble import area_matrix, sensitivity
from onestep_eit.basis import CurrentBasis
from onestep_eit.forward import add_noise, forward_mesh_for, synthesize_V, two_disk_phantom
from onestep_eit.mesh import build_disk_mesh
from onestep_eit.reconstruct import RegConfig, direct_solve, iterative_baseline, reconstruct

m, h, delta = 16, 0.04, 0.01
mesh = build_disk_mesh(h)
basis = CurrentBasis(m)
A, P = sensitivity(mesh, basis), area_matrix(mesh)
V_delta = add_noise(synthesize_V(two_disk_phantom(), basis, mesh=forward_mesh_for(mesh)), delta, seed=1)
print(f"mesh: {mesh.n_cells} cells, {m * m} measurements")

print(f"{'alpha':>8}  {'direct s':>9}  {'cg s':>8}  {'cg iters':>8}  {'rel diff':>9}")
for alpha in (1e-2, 1e-3, 1e-4, 1e-5):
    cfg = RegConfig(alpha, delta)
    t0 = time.perf_counter()
    mu_d = direct_solve(A, P, V_delta, cfg)
    t1 = time.perf_counter()
    res = iterative_baseline(A, P, V_delta, cfg, tol=1e-10)
    t2 = time.perf_counter()
    diff = np.linalg.norm(res.mu - mu_d) / np.linalg.norm(mu_d)
    print(f"{alpha:8.0e}  {t1 - t0:9.4f}  {t2 - t1:8.4f}  {res.iterations:8d}  {diff:9.1e}")

cfg = RegConfig(1e-4, delta)
direct = reconstruct(mesh, A, P, V_delta, cfg)
cg = iterative_baseline(A, P, V_delta, cfg, tol=1e-10, mesh=mesh).field
save_panels([direct, cg], ["direct", "conjugate gradients"], out_dir() / "direct_vs_iterative.png")
