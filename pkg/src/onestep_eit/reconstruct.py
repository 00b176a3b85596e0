"""
One-shot regularized reconstruction.

The discrete problem is the normal system ``(A^T A + alpha P) mu = A^T
vec(V)`` over cell coefficients ``mu``.  Three routes solve it:

* :func:`direct_solve` factorizes the ``M x M`` system.
* :func:`dual_solve` works in data space, ``mu = P^-1 A^T (A P^-1 A^T +
  alpha I)^-1 vec(V)``.  It is much cheaper when ``M`` exceeds the number of
  data rows.
* :func:`iterative_baseline` runs preconditioned conjugate gradients on the
  primal system and records the objective after each step.

All three use the compressed ``k <= l`` rows of the sensitivity tensor with
off-diagonal rows weighted by 2, which yields the same normal equations as
the full ``m**2`` rows.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.linalg as sla
from matplotlib.tri import Triangulation
from scipy.spatial import cKDTree

from .assemble import AreaMatrix, SensitivityTensor, apply_S
from .errors import NumericalError, ParameterError
from .measurement import MeasurementMatrix
from .mesh import TriMesh, cell_geometry

log = logging.getLogger(__name__)


def alpha_rule(m: int, delta: float) -> float:
    """Regularization parameter ``4 (3 + delta) delta / ((2m - 3) pi (1 - delta))``."""
    if m < 4 or m % 2:
        raise ParameterError(f"m must be even and >= 4, got {m}")
    if not 0.0 <= delta < 1.0:
        raise ParameterError(f"noise level must lie in [0, 1), got {delta}")
    return 4.0 * (3.0 + delta) * delta / ((2 * m - 3) * np.pi * (1.0 - delta))


@dataclass(frozen=True)
class RegConfig:
    """Regularization settings.

    With ``alpha_source == "rule"`` the parameter is always recomputed from
    ``m`` and ``delta``; use :meth:`from_rule` to build one.
    """

    alpha: float
    delta: float = 0.0
    alpha_source: str = "explicit"
    m: int | None = None

    def __post_init__(self):
        if self.alpha_source not in ("explicit", "rule"):
            raise ParameterError(f"unknown alpha source {self.alpha_source!r}")
        if not 0.0 <= self.delta < 1.0:
            raise ParameterError(f"noise level must lie in [0, 1), got {self.delta}")
        if self.alpha_source == "rule":
            if self.m is None:
                raise ParameterError("rule-based alpha needs m")
            object.__setattr__(self, "alpha", alpha_rule(self.m, self.delta))
        if not self.alpha >= 0.0:
            raise ParameterError(f"alpha must be nonnegative, got {self.alpha}")

    @classmethod
    def from_rule(cls, m: int, delta: float) -> "RegConfig":
        return cls(0.0, delta, "rule", m)


@dataclass(frozen=True, eq=False)
class ReconField:
    """Cell coefficients of the piecewise-constant reconstruction."""

    mesh: TriMesh
    mu: np.ndarray
    info: dict = field(default_factory=dict)

    def __post_init__(self):
        mu = np.asarray(self.mu, dtype=float)
        if mu.shape != (self.mesh.n_cells,):
            raise ParameterError(f"mu has shape {mu.shape}, mesh has {self.mesh.n_cells} cells")
        if not np.all(np.isfinite(mu)):
            raise NumericalError("reconstruction has non-finite coefficients")
        object.__setattr__(self, "mu", mu)


def _check(A: SensitivityTensor, P: AreaMatrix, V, cfg: RegConfig):
    if not cfg.alpha > 0:
        raise ParameterError("alpha must be positive; the unregularized system is rank deficient")
    if P.diag.shape != (A.M,):
        raise ParameterError("area matrix does not match the sensitivity tensor")
    return A.weighted(), A.weighted_data(V)


def objective(A: SensitivityTensor, P: AreaMatrix, V, alpha: float, mu) -> float:
    """``||V - S(mu)||_F^2 + alpha mu^T P mu``."""
    E = V.entries if isinstance(V, MeasurementMatrix) else np.asarray(V, dtype=float)
    R = E - apply_S(A, mu).entries
    return float(np.sum(R * R) + alpha * np.dot(mu * P.diag, mu))


def direct_solve(A: SensitivityTensor, P: AreaMatrix, V_delta, cfg: RegConfig,
                 mesh: TriMesh | None = None) -> ReconField | np.ndarray:
    """Cholesky solve of the primal normal system.

    Returns a :class:`ReconField` when ``mesh`` is given, else the raw ``mu``.
    """
    Aw, d = _check(A, P, V_delta, cfg)
    B = Aw.T @ Aw
    B[np.diag_indices_from(B)] += cfg.alpha * P.diag
    L = Aw.T @ d
    try:
        cf = sla.cho_factor(B)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"stiffness matrix is not positive definite: {exc}") from exc
    mu = sla.cho_solve(cf, L)
    # one step of iterative refinement
    mu += sla.cho_solve(cf, L - B @ mu)
    res = _relres(B @ mu - L, L)
    return _wrap(mesh, mu, method="direct", iterations=0, residual=res)


def dual_solve(A: SensitivityTensor, P: AreaMatrix, V_delta, cfg: RegConfig,
               mesh: TriMesh | None = None) -> ReconField | np.ndarray:
    """Data-space solve; cost grows linearly in the number of cells."""
    Aw, d = _check(A, P, V_delta, cfg)
    AP = Aw / P.diag[None, :]
    K = AP @ Aw.T
    K[np.diag_indices_from(K)] += cfg.alpha
    try:
        cf = sla.cho_factor(K)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"data-space matrix is not positive definite: {exc}") from exc
    c = sla.cho_solve(cf, d)
    c += sla.cho_solve(cf, d - K @ c)
    mu = AP.T @ c
    res = _relres(Aw.T @ (Aw @ mu) + cfg.alpha * P.diag * mu - Aw.T @ d, Aw.T @ d)
    return _wrap(mesh, mu, method="dual", iterations=0, residual=res)


@dataclass
class IterativeResult:
    mu: np.ndarray
    iterations: int
    objective_trace: list
    converged: bool
    residual: float
    field: ReconField | None = None


def iterative_baseline(A: SensitivityTensor, P: AreaMatrix, V_delta, cfg: RegConfig,
                       max_iters: int | None = None, tol: float = 1e-10,
                       mesh: TriMesh | None = None, precondition: bool = True) -> IterativeResult:
    """Conjugate gradients on ``(A^T A + alpha P) mu = A^T vec(V)`` from ``mu = 0``.

    With ``precondition`` the diagonal area matrix is used as preconditioner.
    Stops when ``||r|| <= tol ||b||`` or after ``max_iters`` steps (default
    ``2 M``); in the latter case ``converged`` is False and a warning is
    logged.
    """
    Aw, d = _check(A, P, V_delta, cfg)
    M = A.M
    if max_iters is None:
        max_iters = 2 * M
    pinv = 1.0 / P.diag if precondition else np.ones(M)
    b = Aw.T @ d
    const = float(d @ d)
    bnorm = np.linalg.norm(b)

    def op(x):
        return Aw.T @ (Aw @ x) + cfg.alpha * P.diag * x

    def obj(x, Bx):
        # ||d - Aw x||^2 + alpha x^T P x == x^T B x - 2 b^T x + d^T d
        return float(x @ Bx - 2.0 * b @ x + const)

    x = np.zeros(M)
    r = b.copy()
    trace = [const]
    if bnorm == 0:
        return _iter_result(mesh, x, 0, trace, True, 0.0)
    z = pinv * r
    p = z.copy()
    rz = r @ z
    it = 0
    converged = False
    while it < max_iters:
        Ap = op(p)
        step = rz / (p @ Ap)
        x += step * p
        r -= step * Ap
        it += 1
        trace.append(obj(x, b - r))
        if np.linalg.norm(r) <= tol * bnorm:
            converged = True
            break
        z = pinv * r
        rz_new = r @ z
        p = z + (rz_new / rz) * p
        rz = rz_new
    res = _relres(op(x) - b, b)
    if not converged:
        log.warning("conjugate gradients stopped after %d iterations (residual %.3e)", it, res)
    return _iter_result(mesh, x, it, trace, converged, res)


def _iter_result(mesh, x, it, trace, converged, res):
    fld = _wrap(mesh, x, method="cg", iterations=it, residual=res) if mesh is not None else None
    return IterativeResult(x, it, trace, converged, res, fld)


def _relres(r, b) -> float:
    bn = np.linalg.norm(b)
    return float(np.linalg.norm(r) / bn) if bn else float(np.linalg.norm(r))


def _wrap(mesh, mu, **info):
    if mesh is None:
        return mu
    return ReconField(mesh, mu, info)


def reconstruct(mesh: TriMesh, A: SensitivityTensor, P: AreaMatrix, V_delta,
                cfg: RegConfig, method: str = "auto") -> ReconField:
    """Solve with the cheaper exact route (dual when ``M > m**2``)."""
    if method == "auto":
        method = "dual" if A.M > A.m * A.m else "direct"
    if method == "direct":
        return direct_solve(A, P, V_delta, cfg, mesh)
    if method == "dual":
        return dual_solve(A, P, V_delta, cfg, mesh)
    if method == "cg":
        res = iterative_baseline(A, P, V_delta, cfg, mesh=mesh)
        return res.field
    raise ParameterError(f"unknown method {method!r}")


# -- export ----------------------------------------------------------------------


def write_recon_csv(fld: ReconField, path) -> Path:
    path = Path(path)
    areas, cent = cell_geometry(fld.mesh)
    with path.open("w") as fh:
        fh.write("# schema=recon/v1\n")
        fh.write("cell_index,centroid_x,centroid_y,area,mu\n")
        rows = zip(cent[:, 0].tolist(), cent[:, 1].tolist(), areas.tolist(), fld.mu.tolist())
        for j, (x, y, a, mu) in enumerate(rows):
            fh.write(f"{j},{x!r},{y!r},{a!r},{mu!r}\n")
    return path


def rasterize_field(fld: ReconField, size: int = 512) -> np.ndarray:
    """Sample the field at pixel centers of ``[-1, 1]^2`` (row 0 is the top).

    Pixels outside the unit disk are 0.  Pixels inside the disk but outside
    the polygonal mesh take the nearest cell's value.
    """
    mesh = fld.mesh
    c = (np.arange(size) + 0.5) / size * 2.0 - 1.0
    X, Y = np.meshgrid(c, c[::-1])
    inside = X ** 2 + Y ** 2 < 1.0
    img = np.zeros((size, size))
    tri = Triangulation(mesh.vertices[:, 0], mesh.vertices[:, 1], mesh.triangles)
    cell = tri.get_trifinder()(X[inside], Y[inside])
    missing = cell < 0
    if missing.any():
        _, cent = cell_geometry(mesh)
        _, near = cKDTree(cent).query(np.column_stack([X[inside][missing], Y[inside][missing]]))
        cell[missing] = near
    img[inside] = fld.mu[cell]
    return img


def write_pgm(fld: ReconField, path, size: int = 512) -> Path:
    """Binary PGM (P5) with a linear grey ramp between min and max of ``mu``."""
    path = Path(path)
    img = rasterize_field(fld, size)
    lo, hi = float(fld.mu.min()), float(fld.mu.max())
    if hi > lo:
        grey = np.clip(np.rint((img - lo) / (hi - lo) * 255.0), 0, 255).astype(np.uint8)
    else:
        grey = np.zeros_like(img, dtype=np.uint8)
    header = f"P5\n# mu_min={lo!r} mu_max={hi!r}\n{size} {size}\n255\n".encode("ascii")
    path.write_bytes(header + grey.tobytes())
    return path


def read_pgm(path) -> tuple[np.ndarray, dict]:
    raw = Path(path).read_bytes()
    lines = []
    pos = 0
    while len(lines) < 4:
        end = raw.index(b"\n", pos)
        lines.append(raw[pos:end].decode("ascii"))
        pos = end + 1
    meta = dict(tok.split("=") for tok in lines[1][1:].split())
    w, h = map(int, lines[2].split())
    img = np.frombuffer(raw[pos:], dtype=np.uint8).reshape(h, w)
    return img, {k: float(v) for k, v in meta.items()}
