"""
Coefficient-space diagnostics for the reconstruction.

Everything here works in the orthonormal eigenbasis ``e_i`` of the product
Gram operator (see :class:`~onestep_eit.basis.SpectralModel`), where
``T^T T`` is diagonal.  Then

* the projection coefficients of the data are ``gamma = T^T vec(V) / lam``;
* the regularized coefficients are ``beta = T^T vec(V_delta) / (lam + alpha)``.

These closed forms are checked against an independent dense solve in the
Zernike basis by :func:`analysis_space_solve`.
"""

from __future__ import annotations

import csv
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
from scipy.sparse.csgraph import connected_components

from .assemble import area_matrix, sensitivity
from .basis import (EXACT_MAX_M, CurrentBasis, SpectralModel, assemble_spectral,
                    gram_eigenvalues, zernike_eval, zeta_all)
from .errors import ParameterError
from .forward import Phantom, cell_integrals
from .measurement import MeasurementMatrix
from .mesh import TriMesh, build_disk_mesh, cell_geometry, refine
from .quadrature import disk_rule, map_to_cells
from .reconstruct import RegConfig, ReconField, dual_solve


def _vec(V, m: int) -> np.ndarray:
    E = V.entries if isinstance(V, MeasurementMatrix) else np.asarray(V, dtype=float)
    if E.shape != (m, m):
        raise ParameterError(f"data is {E.shape}, spectral model has m={m}")
    return E.reshape(-1)


def coeff_gamma(spec: SpectralModel, V) -> np.ndarray:
    """Least-squares coefficients of ``T gamma = vec(V)``."""
    spec.require_exact()
    return spec.T_exact.T @ _vec(V, spec.m) / spec.lam


def coeff_beta(spec: SpectralModel, V_delta, alpha: float) -> np.ndarray:
    """Tikhonov-filtered coefficients ``(alpha I + T^T T)^-1 T^T vec(V_delta)``."""
    if not alpha > 0:
        raise ParameterError("alpha must be positive")
    spec.require_exact()
    return spec.T_exact.T @ _vec(V_delta, spec.m) / (spec.lam + alpha)


def filter_factors(spec: SpectralModel, alpha: float) -> np.ndarray:
    spec.require_exact()
    return spec.lam / (spec.lam + alpha)


def analysis_space_solve(spec: SpectralModel, V_delta, alpha: float) -> np.ndarray:
    """Regularized solve over the span of the products, done densely.

    Builds ``S(z_i)`` for every orthonormal Zernike term ``z_i`` by
    quadrature of gradient products, solves the Galerkin system and returns
    the coefficients rotated into the eigenbasis used by :func:`coeff_beta`.
    """
    spec.require_exact()
    m = spec.m
    pts, w = disk_rule(2 * (m - 2))
    prods = zeta_all(m, pts)
    z = zernike_eval(spec.zhat_spec, pts)
    S_cols = (prods * w) @ z.T          # column i is vec(S(z_i))
    G = (z * w) @ z.T                  # b(z_i, z_j), identity up to rounding
    system = S_cols.T @ S_cols + alpha * G
    coef = np.linalg.solve(system, S_cols.T @ _vec(V_delta, m))
    return spec.rotation.T @ coef


def gap_expression(alpha: float, delta: float) -> float:
    """``sqrt(alpha^2 + delta^2/alpha^2 + (1 + 1/alpha^2) delta)``."""
    return math.sqrt(alpha ** 2 + delta ** 2 / alpha ** 2 + (1.0 + 1.0 / alpha ** 2) * delta)


def explicit_gap_bound(lam_max: float, lam_min: float, alpha: float,
                       v_norm: float, e_norm: float) -> float:
    """Square root of the eigenvalue-explicit bound on ``||gamma - beta||^2``."""
    a, l1, ln = alpha, lam_max, lam_min
    val = (a ** 2 * l1 / (ln ** 2 * (ln + a) ** 2) * v_norm ** 2
           + l1 / (ln + a) ** 2 * e_norm ** 2
           + (4 * ln + 2 * a) * l1 / (ln * (ln + a) ** 2) * v_norm * e_norm)
    return math.sqrt(val)


def error_functional(lam_max: float, lam_min: float, alpha: float, delta: float) -> float:
    """The alpha-dependent error proxy minimized by :func:`~onestep_eit.reconstruct.alpha_rule`,
    per unit ``||V||_F^2``."""
    a, l1, ln = alpha, lam_max, lam_min
    return l1 * ((1 + delta) ** 2 / (a + ln) ** 2 + 2 * (delta - 1) / (ln * (a + ln)) + 1 / ln ** 2)


# -- projections -------------------------------------------------------------


def project_true(spec: SpectralModel, kappa_true, mesh: TriMesh | None = None,
                 degree: int = 300):
    """Orthogonal projection of ``kappa_true`` onto the product span.

    ``kappa_true`` is either a callable ``f(points)``, a :class:`Phantom`
    (its contrast ``sigma - 1`` is projected) or, with ``mesh``, an array of
    cell values.  Callables and phantoms are integrated over the exact disk
    with a polar rule of the given degree; cell arrays are integrated exactly
    cell by cell.

    Returns ``(coefficients, L2 projection error)``; the coefficients refer
    to the orthonormal Zernike terms ``spec.zhat_spec`` (use
    :meth:`SpectralModel.to_eigen` to compare them with ``gamma``).
    """
    if mesh is None:
        func = kappa_true.kappa if isinstance(kappa_true, Phantom) else kappa_true
        pts, w = disk_rule(degree)
        vals = np.asarray(func(pts), dtype=float)
        basis = spec.zernike_values(pts)
        coef = basis @ (w * vals)
        resid = vals - coef @ basis
        return coef, float(math.sqrt(max(np.sum(w * resid ** 2), 0.0)))
    kappa = np.asarray(kappa_true, dtype=float)
    if kappa.shape != (mesh.n_cells,):
        raise ParameterError("cell values do not match the mesh")
    pts, w = map_to_cells(mesh.vertices, mesh.triangles, 2 * (spec.m - 2))
    basis = spec.zernike_values(pts)      # (m', M, q)
    coef = np.einsum("icq,cq,c->i", basis, w, kappa)
    resid = kappa[:, None] - np.tensordot(coef, basis, axes=1)
    return coef, float(math.sqrt(np.sum(w * resid ** 2)))


def projection_field(spec: SpectralModel, coef: np.ndarray, points) -> np.ndarray:
    """Evaluate ``sum_i coef_i z_i`` (Zernike coefficients) at ``points``."""
    return np.tensordot(coef, spec.zernike_values(points), axes=1)


# -- reports -----------------------------------------------------------------


@dataclass
class ErrorReport:
    """Error summary of one reconstruction.

    ``bound_value`` is the total-error bound with its hidden constant set to
    1 and ``||kappa_true||_{H^s}`` replaced by the L2 norm (a surrogate; the
    Sobolev norm of an indicator is not computable here).
    ``projection_error`` is None without a spectral model and
    ``coefficient_gap`` is None when the exact model is unavailable
    (``m > 16``).
    """

    l2_error: float
    projection_error: float | None
    coefficient_gap: float | None
    bound_value: float
    m: int
    delta: float
    alpha: float
    h: float
    s: float = 0.5
    bound_kind: str = "surrogate"
    extra: dict = field(default_factory=dict)

    def row(self) -> dict:
        d = asdict(self)
        extra = d.pop("extra")
        d.update(extra)
        return d


def l2_error(fld: ReconField, kappa_true) -> tuple[float, float]:
    """``(||mu - kappa_true||_L2, ||kappa_true||_L2)`` over the mesh.

    A :class:`Phantom` is integrated on its exact geometry by adaptive
    subdivision of cells that straddle an inclusion boundary.
    """
    areas, _ = cell_geometry(fld.mesh)
    mu = fld.mu
    if isinstance(kappa_true, Phantom):
        I1, I2 = cell_integrals(fld.mesh, kappa_true.kappa,
                                boundary_distance=kappa_true.boundary_distance)
    else:
        k = np.asarray(kappa_true, dtype=float)
        if k.shape != mu.shape:
            raise ParameterError("kappa_true does not match the reconstruction mesh")
        I1, I2 = k * areas, k * k * areas
    err2 = np.sum(mu * mu * areas - 2.0 * mu * I1 + I2)
    return math.sqrt(max(err2, 0.0)), math.sqrt(max(np.sum(I2), 0.0))


def error_report(fld: ReconField, kappa_true, spec: SpectralModel | None, V, V_delta,
                 cfg: RegConfig, h: float, s: float = 0.5) -> ErrorReport:
    m = V.m if isinstance(V, MeasurementMatrix) else np.asarray(V).shape[0]
    err, knorm = l2_error(fld, kappa_true)
    proj = gap = None
    if spec is not None:
        if isinstance(kappa_true, Phantom) or callable(kappa_true):
            _, proj = project_true(spec, kappa_true)
        else:
            _, proj = project_true(spec, kappa_true, mesh=fld.mesh)
    if spec is not None and spec.has_exact:
        gap = float(np.linalg.norm(coeff_gamma(spec, V) - coeff_beta(spec, V_delta, cfg.alpha)))
    vnorm = float(np.linalg.norm(V.entries if isinstance(V, MeasurementMatrix) else V))
    proj_rate = ((m - 2) / 2.0) ** (-s) if m > 2 else 1.0
    bound = proj_rate * knorm + (h + gap_expression(cfg.alpha, cfg.delta)) * vnorm \
        if cfg.alpha > 0 else float("inf")
    return ErrorReport(err, proj, gap, float(bound), m, cfg.delta, cfg.alpha, h, s)


REPORT_FIELDS = ["l2_error", "projection_error", "coefficient_gap", "bound_value",
                 "m", "delta", "alpha", "h", "s", "bound_kind"]


def write_reports_csv(reports, path, extra_fields=()) -> Path:
    path = Path(path)
    fields = REPORT_FIELDS + list(extra_fields)
    with path.open("w", newline="") as fh:
        fh.write("# schema=error_report/v1\n")
        writer = csv.DictWriter(fh, fieldnames=fields, extrasaction="ignore", lineterminator="\n")
        writer.writeheader()
        for rep in reports:
            row = rep.row() if isinstance(rep, ErrorReport) else dict(rep)
            writer.writerow({k: ("" if row.get(k) is None else _fmt(row.get(k))) for k in fields})
    return path


def _fmt(v):
    return repr(float(v)) if isinstance(v, (float, np.floating)) else v


def support_metrics(fld: ReconField) -> dict:
    """Half-maximum support of ``|mu|``: threshold, centroid, component count."""
    mu = fld.mu
    peak = float(np.abs(mu).max())
    if peak == 0.0:
        return {"support_threshold": 0.0, "support_centroid_x": None, "support_centroid_y": None,
                "support_components": 0}
    thr = 0.5 * peak
    sup = np.abs(mu) >= thr
    areas, cent = cell_geometry(fld.mesh)
    c = (cent[sup] * areas[sup, None]).sum(0) / areas[sup].sum()
    adj = fld.mesh.cell_adjacency()[sup][:, sup]
    ncomp, _ = connected_components(adj, directed=False)
    return {"support_threshold": thr, "support_centroid_x": float(c[0]),
            "support_centroid_y": float(c[1]), "support_components": int(ncomp)}


# -- spectrum ------------------------------------------------------------------


def spectrum_check(spec: SpectralModel | int) -> float:
    """Max relative deviation between the Gram eigenvalues of ``{zeta_ij}``
    and ``tt_diag`` (both sorted descending)."""
    m = spec if isinstance(spec, int) else spec.m
    if m > EXACT_MAX_M:
        raise ParameterError(f"spectrum_check is limited to m <= {EXACT_MAX_M}")
    if isinstance(spec, int):
        spec = assemble_spectral(m)
    ev = gram_eigenvalues(m)[: spec.m_prime]
    ref = np.sort(spec.tt_diag)[::-1]
    return float(np.max(np.abs(ev - ref) / ref))


# -- discretization study ----------------------------------------------------------


def discretization_errors(V, m: int, alpha: float, hs, levels: int = 2):
    """``||kappa_h - kappa_ref||_L2`` for each mesh size in ``hs``.

    The reference is the solve on ``levels`` uniform refinements of the same
    mesh; coarse values are compared cell by cell with their descendants.
    """
    basis = CurrentBasis(m)
    cfg = RegConfig(alpha)
    errors = []
    for h in hs:
        coarse = build_disk_mesh(h)
        fine = coarse
        for _ in range(levels):
            fine = refine(fine)
        mu_c = dual_solve(sensitivity(coarse, basis), area_matrix(coarse), V, cfg)
        mu_f = dual_solve(sensitivity(fine, basis), area_matrix(fine), V, cfg)
        areas, _ = cell_geometry(fine)
        diff = mu_f - mu_c[fine.parent]
        errors.append(math.sqrt(np.sum(diff * diff * areas)))
    return np.array(errors)
