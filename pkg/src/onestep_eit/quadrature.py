"""Quadrature rules for triangles and the unit disk.

Both rules are exact for polynomials up to a requested total degree, which
is what the sensitivity integrals and the Gram matrices need: every
integrand there is a polynomial in ``(x, y)``.
"""

from __future__ import annotations

from functools import lru_cache

import numpy as np
from scipy.special import roots_jacobi


@lru_cache(maxsize=None)
def triangle_rule(degree: int) -> tuple[np.ndarray, np.ndarray]:
    """Collapsed-coordinate Gauss rule on the reference triangle.

    Returns barycentric-free reference points ``(xi, eta)`` in the triangle
    with vertices (0,0), (1,0), (0,1) and weights summing to 1/2.  Exact for
    total degree ``<= degree``.
    """
    q = max(1, degree // 2 + 1)
    # Gauss-Jacobi(alpha=1) absorbs the Duffy Jacobian (1 - s)
    s, ws = roots_jacobi(q, 1.0, 0.0)
    t, wt = np.polynomial.legendre.leggauss(q)
    s = (s + 1.0) / 2.0
    ws = ws / 4.0
    t = (t + 1.0) / 2.0
    wt = wt / 2.0
    S, Tt = np.meshgrid(s, t, indexing="ij")
    xi = S.ravel()
    eta = ((1.0 - S) * Tt).ravel()
    w = np.outer(ws, wt).ravel()
    pts = np.column_stack([xi, eta])
    pts.setflags(write=False)
    w.setflags(write=False)
    return pts, w


@lru_cache(maxsize=None)
def disk_rule(degree: int, n_phi: int | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Polar product rule on the unit disk.

    Gauss-Legendre in ``r`` (with the ``r dr`` Jacobian folded into the
    weights) times the periodic trapezoid rule in ``phi``.  Exact for
    polynomials of total degree ``<= degree``.
    """
    nr = degree // 2 + 2
    if n_phi is None:
        n_phi = degree + 2
    t, w = np.polynomial.legendre.leggauss(nr)
    r = (t + 1.0) / 2.0
    wr = w / 2.0 * r
    phi = 2.0 * np.pi * (np.arange(n_phi) + 0.5) / n_phi
    R, PHI = np.meshgrid(r, phi, indexing="ij")
    pts = np.column_stack([(R * np.cos(PHI)).ravel(), (R * np.sin(PHI)).ravel()])
    wts = np.outer(wr, np.full(n_phi, 2.0 * np.pi / n_phi)).ravel()
    pts.setflags(write=False)
    wts.setflags(write=False)
    return pts, wts


def map_to_cells(vertices: np.ndarray, triangles: np.ndarray, degree: int):
    """Physical quadrature points and weights for every cell.

    Returns ``points`` of shape (M, q, 2) and ``weights`` of shape (M, q).
    """
    ref, w = triangle_rule(degree)
    p = vertices[triangles]
    d1 = p[:, 1] - p[:, 0]
    d2 = p[:, 2] - p[:, 0]
    jac = np.abs(d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])
    pts = p[:, None, 0] + ref[None, :, 0, None] * d1[:, None] + ref[None, :, 1, None] * d2[:, None]
    return pts, jac[:, None] * w[None, :]
