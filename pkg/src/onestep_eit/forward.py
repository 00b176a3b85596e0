"""
Synthetic boundary data from piecewise-constant conductivity phantoms.

The Neumann problem ``div(sigma grad u) = 0``, ``sigma du/dn = g`` is solved
with continuous P1 elements.  Uniqueness comes from a scalar Lagrange
multiplier enforcing zero boundary mean of ``u``.  Boundary integrals are
taken along the unit-circle arcs spanned by the boundary edges, using the
edge's linear interpolant parametrized by angle and a two-point Gauss rule.

With ``L`` the matrix of load vectors for the ``m`` currents and ``U`` the
corresponding nodal solutions, the Galerkin NtD matrix is ``L.T @ U``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence, Union

import numpy as np
import scipy.sparse as sp
from matplotlib.path import Path as MplPath
from scipy.sparse.linalg import splu

from .basis import CurrentBasis, current_function
from .errors import NumericalError, ParameterError
from .measurement import MeasurementMatrix, symmetrize
from .mesh import TriMesh, build_disk_mesh, cell_geometry, refine

# -- phantoms ----------------------------------------------------------------


@dataclass(frozen=True)
class Disk:
    center: tuple
    radius: float

    def contains(self, pts):
        c = np.asarray(self.center, dtype=float)
        return np.sum((np.asarray(pts) - c) ** 2, axis=-1) < self.radius ** 2

    def extent(self) -> float:
        return float(np.hypot(*self.center) + self.radius)

    def boundary_distance(self, pts):
        c = np.asarray(self.center, dtype=float)
        return np.abs(np.linalg.norm(np.asarray(pts) - c, axis=-1) - self.radius)

    def to_json(self):
        return {"shape": "disk", "center": list(self.center), "radius": self.radius}


@dataclass(frozen=True)
class Annulus:
    center: tuple
    r_in: float
    r_out: float

    def contains(self, pts):
        c = np.asarray(self.center, dtype=float)
        d2 = np.sum((np.asarray(pts) - c) ** 2, axis=-1)
        return (d2 < self.r_out ** 2) & (d2 >= self.r_in ** 2)

    def extent(self) -> float:
        return float(np.hypot(*self.center) + self.r_out)

    def boundary_distance(self, pts):
        d = np.linalg.norm(np.asarray(pts) - np.asarray(self.center, dtype=float), axis=-1)
        return np.minimum(np.abs(d - self.r_in), np.abs(d - self.r_out))

    def to_json(self):
        return {"shape": "annulus", "center": list(self.center),
                "r_in": self.r_in, "r_out": self.r_out}


@dataclass(frozen=True)
class Polygon:
    vertices: tuple

    def contains(self, pts):
        pts = np.asarray(pts, dtype=float)
        flat = pts.reshape(-1, 2)
        inside = MplPath(np.asarray(self.vertices, dtype=float)).contains_points(flat)
        return inside.reshape(pts.shape[:-1])

    def extent(self) -> float:
        return float(np.max(np.linalg.norm(np.asarray(self.vertices, dtype=float), axis=1)))

    def boundary_distance(self, pts):
        pts = np.asarray(pts, dtype=float)
        flat = pts.reshape(-1, 2)
        a = np.asarray(self.vertices, dtype=float)
        b = np.roll(a, -1, axis=0)
        ab = b - a
        len2 = np.maximum(np.sum(ab * ab, axis=1), 1e-300)
        out = np.empty(len(flat))
        for start in range(0, len(flat), 4096):
            p = flat[start:start + 4096, None, :]
            t = np.clip(np.sum((p - a) * ab, axis=-1) / len2, 0.0, 1.0)
            d = np.linalg.norm(p - (a + t[..., None] * ab), axis=-1)
            out[start:start + 4096] = d.min(axis=1)
        return out.reshape(pts.shape[:-1])

    def to_json(self):
        return {"shape": "polygon", "vertices": [list(v) for v in self.vertices]}


Shape = Union[Disk, Annulus, Polygon]


@dataclass(frozen=True)
class Phantom:
    """Conductivity ``1 + sum of inclusions``; later inclusions overwrite earlier ones."""

    inclusions: tuple = field(default_factory=tuple)

    def __post_init__(self):
        incl = tuple((shape, float(value)) for shape, value in self.inclusions)
        for shape, value in incl:
            if not value > 0:
                raise ParameterError(f"inclusion value must be positive, got {value}")
            if not shape.extent() < 1.0:
                raise ParameterError(f"inclusion {shape} is not inside the open unit disk")
        object.__setattr__(self, "inclusions", incl)

    def sigma(self, pts) -> np.ndarray:
        pts = np.asarray(pts, dtype=float)
        out = np.ones(pts.shape[:-1])
        for shape, value in self.inclusions:
            out[shape.contains(pts)] = value
        return out

    def kappa(self, pts) -> np.ndarray:
        """Contrast ``sigma - 1``."""
        return self.sigma(pts) - 1.0

    def boundary_distance(self, pts) -> np.ndarray:
        """Distance to the nearest inclusion boundary (inf without inclusions)."""
        pts = np.asarray(pts, dtype=float)
        out = np.full(pts.shape[:-1], np.inf)
        for shape, _ in self.inclusions:
            out = np.minimum(out, shape.boundary_distance(pts))
        return out

    def rasterize(self, mesh: TriMesh) -> np.ndarray:
        """Cellwise conductivity by centroid membership."""
        _, centroids = cell_geometry(mesh)
        return self.sigma(centroids)

    def to_json(self) -> dict:
        return {"inclusions": [dict(s.to_json(), value=v) for s, v in self.inclusions]}


def _shape_from_json(d: dict) -> Shape:
    kind = d.get("shape")
    if kind == "disk":
        return Disk(tuple(d["center"]), float(d["radius"]))
    if kind == "annulus":
        return Annulus(tuple(d["center"]), float(d["r_in"]), float(d["r_out"]))
    if kind == "polygon":
        return Polygon(tuple(tuple(v) for v in d["vertices"]))
    raise ParameterError(f"unknown inclusion shape {kind!r}")


def phantom_from_dict(d: dict) -> Phantom:
    try:
        incl = [(_shape_from_json(item), item["value"]) for item in d.get("inclusions", [])]
    except KeyError as exc:
        raise ParameterError(f"inclusion is missing field {exc}") from None
    return Phantom(tuple(incl))


def load_phantom(path) -> Phantom:
    path = Path(path)
    if not path.is_file():
        raise ParameterError(f"phantom file not found: {path}")
    try:
        data = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ParameterError(f"phantom file {path} is not valid JSON: {exc}") from None
    return phantom_from_dict(data)


def save_phantom(phantom: Phantom, path) -> Path:
    path = Path(path)
    path.write_text(json.dumps(phantom.to_json(), indent=2) + "\n")
    return path


def disk_phantom(center=(0.4, 0.0), radius=0.25, value=2.0) -> Phantom:
    return Phantom(((Disk(tuple(center), radius), value),))


def two_disk_phantom(value=2.0) -> Phantom:
    return Phantom(((Disk((-0.45, 0.3), 0.2), value), (Disk((0.45, -0.3), 0.2), value)))


def loop_phantom(value=2.0) -> Phantom:
    return Phantom(((Annulus((0.0, 0.0), 0.35, 0.6), value),))


def arch_phantom(value=2.0, n=48) -> Phantom:
    """Upper half of an annulus, as a polygon."""
    t = np.linspace(0.0, np.pi, n)
    outer = np.column_stack([0.65 * np.cos(t), 0.65 * np.sin(t) - 0.1])
    inner = np.column_stack([0.35 * np.cos(t[::-1]), 0.35 * np.sin(t[::-1]) - 0.1])
    verts = np.vstack([outer, inner])
    return Phantom(((Polygon(tuple(map(tuple, verts))), value),))


def cell_integrals(mesh: TriMesh, func: Callable, depth: int = 5,
                   boundary_distance: Callable | None = None):
    """Integrals of a piecewise-constant ``func`` and of ``func**2`` over each cell.

    A triangle is split four ways, up to ``depth`` times, when it may cross
    a discontinuity of ``func``: if ``boundary_distance`` is given, when the
    nearest discontinuity passes within the triangle's centroid radius;
    otherwise when its vertex and centroid values disagree.  Leaves use
    their centroid value.
    """
    M = mesh.n_cells
    tri = mesh.vertices[mesh.triangles]  # (M, 3, 2)
    owner = np.arange(M)
    I1 = np.zeros(M)
    I2 = np.zeros(M)
    for level in range(depth + 1):
        cent = tri.mean(axis=1)
        d1 = tri[:, 1] - tri[:, 0]
        d2 = tri[:, 2] - tri[:, 0]
        area = 0.5 * np.abs(d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])
        if boundary_distance is not None:
            vals = func(cent)
            reach = np.max(np.linalg.norm(tri - cent[:, None], axis=-1), axis=1)
            uniform = boundary_distance(cent) > reach
        else:
            samples = func(np.concatenate([tri, cent[:, None]], axis=1))
            vals = samples[:, 3]
            uniform = np.all(samples == samples[:, :1], axis=1)
        done = uniform if level < depth else np.ones(len(tri), bool)
        np.add.at(I1, owner[done], vals[done] * area[done])
        np.add.at(I2, owner[done], vals[done] ** 2 * area[done])
        if done.all():
            break
        t = tri[~done]
        owner = np.repeat(owner[~done], 4)
        a, b, c = t[:, 0], t[:, 1], t[:, 2]
        ab, bc, ca = (a + b) / 2, (b + c) / 2, (c + a) / 2
        tri = np.stack([np.stack([a, ab, ca], 1), np.stack([ab, b, bc], 1),
                        np.stack([ca, bc, c], 1), np.stack([ab, bc, ca], 1)], 1).reshape(-1, 3, 2)
    return I1, I2


# -- Neumann solver -------------------------------------------------------------

_GAUSS_T = np.array([0.5 - 0.5 / np.sqrt(3.0), 0.5 + 0.5 / np.sqrt(3.0)])


def _boundary_arcs(mesh: TriMesh):
    be = mesh.boundary_edges
    p = mesh.vertices
    phi_a = np.arctan2(p[be[:, 0], 1], p[be[:, 0], 0])
    phi_b = np.arctan2(p[be[:, 1], 1], p[be[:, 1], 0])
    dphi = np.mod(phi_b - phi_a + np.pi, 2 * np.pi) - np.pi
    return be, phi_a, dphi


def stiffness(mesh: TriMesh, sigma: np.ndarray) -> sp.csr_matrix:
    p = mesh.vertices[mesh.triangles]
    # rows of the gradient of barycentric coordinates, scaled by 2*area
    x, y = p[..., 0], p[..., 1]
    b = np.stack([y[:, 1] - y[:, 2], y[:, 2] - y[:, 0], y[:, 0] - y[:, 1]], 1)
    c = np.stack([x[:, 2] - x[:, 1], x[:, 0] - x[:, 2], x[:, 1] - x[:, 0]], 1)
    area2 = b[:, 0] * c[:, 1] - b[:, 1] * c[:, 0]
    ke = (b[:, :, None] * b[:, None, :] + c[:, :, None] * c[:, None, :])
    ke *= (sigma / (2.0 * area2))[:, None, None]
    rows = np.repeat(mesh.triangles, 3, axis=1).ravel()
    cols = np.tile(mesh.triangles, (1, 3)).ravel()
    n = mesh.n_vertices
    return sp.csr_matrix((ke.ravel(), (rows, cols)), shape=(n, n))


def boundary_loads(mesh: TriMesh, currents: Sequence[Callable]) -> np.ndarray:
    """Load vectors ``int g v ds`` for each current; shape (n_vertices, len(currents))."""
    be, phi_a, dphi = _boundary_arcs(mesh)
    out = np.zeros((mesh.n_vertices, len(currents)))
    for k, g in enumerate(currents):
        for t in _GAUSS_T:
            gv = g(phi_a + t * dphi) * 0.5 * np.abs(dphi)
            np.add.at(out[:, k], be[:, 0], gv * (1.0 - t))
            np.add.at(out[:, k], be[:, 1], gv * t)
    return out


def boundary_mass(mesh: TriMesh) -> np.ndarray:
    be, _, dphi = _boundary_arcs(mesh)
    c = np.zeros(mesh.n_vertices)
    np.add.at(c, be[:, 0], 0.5 * np.abs(dphi))
    np.add.at(c, be[:, 1], 0.5 * np.abs(dphi))
    return c


class NeumannSolver:
    """Factorized Neumann problem for one mesh and conductivity.

    The factorization is shared by all right-hand sides.
    """

    def __init__(self, mesh: TriMesh, sigma):
        sigma = np.broadcast_to(np.asarray(sigma, dtype=float), (mesh.n_cells,))
        if not np.all(sigma > 0) or not np.all(np.isfinite(sigma)):
            raise ParameterError("conductivity must be strictly positive and finite")
        self.mesh = mesh
        n = mesh.n_vertices
        K = stiffness(mesh, sigma)
        c = boundary_mass(mesh)
        aug = sp.bmat([[K, sp.csr_matrix(c[:, None])],
                       [sp.csr_matrix(c[None, :]), None]], format="csc")
        try:
            self._lu = splu(aug)
        except RuntimeError as exc:
            raise NumericalError(f"Neumann system factorization failed: {exc}") from exc
        self._n = n

    def solve(self, loads: np.ndarray) -> np.ndarray:
        loads = np.atleast_2d(loads.T).T
        rhs = np.vstack([loads, np.zeros((1, loads.shape[1]))])
        sol = self._lu.solve(rhs)
        if not np.all(np.isfinite(sol)):
            raise NumericalError("Neumann solve produced non-finite values")
        return sol[: self._n]


def _as_current(current) -> Callable:
    if callable(current):
        return current
    return current_function(int(current))


def solve_neumann(mesh: TriMesh, sigma, current) -> np.ndarray:
    """Nodal P1 potential for cellwise ``sigma`` and one boundary current.

    ``current`` is a 1-based trigonometric current index or a callable
    ``g(phi)``.  The result has zero boundary mean.
    """
    solver = NeumannSolver(mesh, sigma)
    load = boundary_loads(mesh, [_as_current(current)])
    return solver.solve(load)[:, 0]


def measure_F(mesh: TriMesh, phantom: Phantom | np.ndarray, basis: CurrentBasis) -> MeasurementMatrix:
    """Galerkin NtD matrix on ``mesh``.

    ``phantom`` may also be a cellwise conductivity array.
    """
    sigma = phantom.rasterize(mesh) if isinstance(phantom, Phantom) else np.asarray(phantom, float)
    currents = [_as_current(j) for j in range(1, basis.m + 1)]
    L = boundary_loads(mesh, currents)
    U = NeumannSolver(mesh, sigma).solve(L)
    return MeasurementMatrix(symmetrize(L.T @ U), "F")


def forward_mesh_for(recon_mesh: TriMesh, levels: int = 2) -> TriMesh:
    """Default data-generation mesh: ``levels`` uniform refinements of the reconstruction mesh."""
    fine = recon_mesh
    for _ in range(levels):
        fine = refine(fine)
    return fine


def synthesize_V(phantom: Phantom, basis: CurrentBasis, h_forward: float | None = None,
                 mesh: TriMesh | None = None) -> MeasurementMatrix:
    """Difference data ``F(1) - F(sigma)`` on a single forward mesh.

    Give either ``h_forward`` (a fresh mesh is built) or ``mesh``.
    """
    if mesh is None:
        if h_forward is None:
            raise ParameterError("synthesize_V needs h_forward or mesh")
        mesh = build_disk_mesh(h_forward)
    F1 = measure_F(mesh, np.ones(mesh.n_cells), basis)
    if not phantom.inclusions:
        return MeasurementMatrix(np.zeros((basis.m, basis.m)), "V")
    Fs = measure_F(mesh, phantom, basis)
    return MeasurementMatrix(symmetrize(F1.entries - Fs.entries), "V")


def add_noise(V: MeasurementMatrix, delta: float, seed: int = 0) -> MeasurementMatrix:
    """``V + E`` with symmetric Gaussian ``E`` scaled to ``||E||_F = delta ||V||_F``."""
    if not 0.0 <= delta < 1.0:
        raise ParameterError(f"noise level must lie in [0, 1), got {delta}")
    if delta == 0.0:
        return MeasurementMatrix(V.entries.copy(), "V_delta", 0.0, seed)
    rng = np.random.default_rng(seed)
    m = V.m
    upper = np.triu(rng.standard_normal((m, m)))
    E = upper + np.triu(upper, 1).T
    norm = np.linalg.norm(E)
    target = delta * V.frobenius()
    E = E * (target / norm) if target > 0 else np.zeros_like(E)
    return MeasurementMatrix(V.entries + E, "V_delta", float(delta), seed)


def noise_matrix(V: MeasurementMatrix, V_delta: MeasurementMatrix) -> MeasurementMatrix:
    return MeasurementMatrix(V_delta.entries - V.entries, "E_delta", V_delta.delta, V_delta.seed)
