"""What the product-of-gradients family actually spans.

Prints the eigenvalues of the Gram matrix of ``{grad u_i . grad u_j}``
next to the closed-form pattern ``4/((2k+1) pi)`` that a block-diagonal
coupling matrix would give.  The leading eigenvalue is close to
``3/pi`` rather than ``4/pi`` and the tail decays much faster than
``1/k``, so the smallest eigenvalue (and with it the a-priori alpha
rule) is far from the pattern.  The Neumann-to-Dirichlet self-test of
the forward solver is shown alongside as a sanity check.

Usage: python demos/04_spectrum.py [out_dir]
"""

import matplotlib.pyplot as plt
import numpy as np

from _common import out_dir
from onestep_eit.basis import CurrentBasis, assemble_spectral, ntd_identity
from onestep_eit.forward import Phantom, measure_F
from onestep_eit.mesh import build_disk_mesh

fig, ax = plt.subplots(figsize=(5, 3.5))
for m in (4, 8, 12, 16):
    spec = assemble_spectral(m)
    lam = np.sort(spec.lam)[::-1]
    pattern = np.sort(spec.tt_diag)[::-1]
    print(f"m={m:2d}: lam_max*pi={lam[0] * np.pi:.4f} (pattern {pattern[0] * np.pi:.4f}), "
          f"lam_min={lam[-1]:.2e} (pattern {pattern[-1]:.2e})")
    ax.semilogy(lam, "o-", ms=3, label=f"m={m}")
    ax.semilogy(pattern, "k:", lw=0.8)
ax.set_xlabel("index")
ax.set_ylabel("eigenvalue")
ax.legend(fontsize=8)
fig.tight_layout()
path = out_dir() / "spectrum.png"
fig.savefig(path, dpi=120)
print(f"wrote {path}")

m = 8
F = measure_F(build_disk_mesh(0.05), Phantom(), CurrentBasis(m)).entries
ref = np.diag(ntd_identity(m).entries)
print("NtD diagonal (FEM vs 1/n):", np.round(np.diag(F), 5).tolist(), np.round(ref, 5).tolist())
