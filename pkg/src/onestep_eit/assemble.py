"""
Sensitivity tensor, area matrix and the linearized map kappa -> S(kappa).

For a partition into cells ``P_j`` the sensitivity entries are
``A[(k,l), j] = int_{P_j} grad u_k . grad u_l``.  All background gradients
are powers of ``conj(z)`` (see :mod:`onestep_eit.basis`), so every entry is
the real part of a complex moment ``int_{P_j} conj(z)**a z**b`` with
``a, b < m/2``.  The moments are integrated exactly with a triangle rule of
degree ``m - 2``.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path

import numpy as np

from .basis import CurrentBasis
from .errors import ParameterError
from .measurement import MeasurementMatrix
from .mesh import TriMesh, cell_geometry
from .quadrature import map_to_cells

_CHUNK = 2048


@dataclass(frozen=True, eq=False)
class SensitivityTensor:
    """Sensitivity entries in compressed (k <= l) storage.

    ``compressed`` has one row per pair ``pairs[r] = (k, l)`` with ``k <= l``
    (0-based).  :attr:`full` expands to the ``m**2 x M`` matrix whose rows
    follow the row-major (k, l) order of ``vec``.  ``weights`` are 1 on the
    diagonal pairs and 2 off it, so ``compressed.T @ diag(weights) @
    compressed == full.T @ full``.
    """

    m: int
    compressed: np.ndarray
    pairs: np.ndarray

    @property
    def M(self) -> int:
        return self.compressed.shape[1]

    @cached_property
    def weights(self) -> np.ndarray:
        w = np.where(self.pairs[:, 0] == self.pairs[:, 1], 1.0, 2.0)
        w.setflags(write=False)
        return w

    @cached_property
    def full_index(self) -> np.ndarray:
        """For each row-major (k, l), the compressed row holding it."""
        m = self.m
        lookup = np.empty((m, m), dtype=np.int64)
        lookup[self.pairs[:, 0], self.pairs[:, 1]] = np.arange(len(self.pairs))
        lookup[self.pairs[:, 1], self.pairs[:, 0]] = np.arange(len(self.pairs))
        return lookup.reshape(-1)

    @property
    def full(self) -> np.ndarray:
        return self.compressed[self.full_index]

    def weighted(self) -> np.ndarray:
        """``sqrt(weights) * compressed``: same normal matrix as :attr:`full`."""
        return np.sqrt(self.weights)[:, None] * self.compressed

    def weighted_data(self, V) -> np.ndarray:
        """Data vector matching :meth:`weighted` (uses the symmetric part of V)."""
        E = V.entries if isinstance(V, MeasurementMatrix) else np.asarray(V, dtype=float)
        if E.shape != (self.m, self.m):
            raise ParameterError(f"data is {E.shape}, expected {(self.m, self.m)}")
        Es = 0.5 * (E + E.T)
        return np.sqrt(self.weights) * Es[self.pairs[:, 0], self.pairs[:, 1]]


def _pairs(m: int) -> np.ndarray:
    k, l = np.triu_indices(m)
    return np.column_stack([k, l])


def complex_moments(mesh: TriMesh, n_max: int) -> np.ndarray:
    """``int_{P_j} conj(z)**a z**b`` for ``a, b < n_max``; shape (M, n_max, n_max)."""
    M = mesh.n_cells
    out = np.empty((M, n_max, n_max), dtype=complex)
    deg = max(2 * n_max - 2, 0)
    for start in range(0, M, _CHUNK):
        stop = min(start + _CHUNK, M)
        pts, w = map_to_cells(mesh.vertices, mesh.triangles[start:stop], deg)
        z = pts[..., 0] + 1j * pts[..., 1]
        powers = z[..., None] ** np.arange(n_max)
        out[start:stop] = np.einsum("cqa,cqb->cab", np.conj(powers) * w[..., None], powers)
    return out


def sensitivity(mesh: TriMesh, basis: CurrentBasis) -> SensitivityTensor:
    """Exact cell integrals of all background-gradient products."""
    m = basis.m
    freqs = basis.frequencies
    phase = np.array([1j if p == "sin" else 1.0 for _, p in basis.index_map])
    mom = complex_moments(mesh, basis.n_max)
    pairs = _pairs(m)
    k, l = pairs[:, 0], pairs[:, 1]
    coef = phase[k] * np.conj(phase[l])
    vals = coef[None, :] * mom[:, freqs[k] - 1, freqs[l] - 1]
    A = np.ascontiguousarray(vals.real.T) / np.pi
    A.setflags(write=False)
    pairs.setflags(write=False)
    return SensitivityTensor(m, A, pairs)


def apply_S(A: SensitivityTensor, kappa) -> MeasurementMatrix:
    """Linearized data ``S(kappa)_{kl} = sum_j kappa_j A[(k,l), j]``."""
    kappa = np.asarray(kappa, dtype=float)
    if kappa.shape != (A.M,):
        raise ParameterError(f"kappa has shape {kappa.shape}, expected ({A.M},)")
    c = A.compressed @ kappa
    S = np.empty((A.m, A.m))
    S[A.pairs[:, 0], A.pairs[:, 1]] = c
    S[A.pairs[:, 1], A.pairs[:, 0]] = c
    return MeasurementMatrix(S, "S")


@dataclass(frozen=True, eq=False)
class AreaMatrix:
    """Diagonal L2 mass matrix of the cell indicators."""

    diag: np.ndarray

    @property
    def total(self) -> float:
        return float(self.diag.sum())


def area_matrix(mesh: TriMesh) -> AreaMatrix:
    areas, _ = cell_geometry(mesh)
    if np.any(areas <= 0):
        raise ParameterError("mesh has cells with non-positive area")
    areas = areas.copy()
    areas.setflags(write=False)
    return AreaMatrix(areas)


# -- binary cache --------------------------------------------------------------

_MAGIC = b"EITSENS1"
_HEADER = struct.Struct("<8sQQQ")  # magic, m, M, version -> 32 bytes
_VERSION = 1


def cache_path(directory, mesh: TriMesh, m: int) -> Path:
    return Path(directory) / f"sens_{mesh.digest()[:16]}_m{m}.bin"


def save_sensitivity(A: SensitivityTensor, path) -> Path:
    """Write the full ``m**2 x M`` matrix as little-endian float64 after a 32-byte header."""
    path = Path(path)
    with path.open("wb") as fh:
        fh.write(_HEADER.pack(_MAGIC, A.m, A.M, _VERSION))
        fh.write(np.ascontiguousarray(A.full, dtype="<f8").tobytes())
    return path


def load_sensitivity(path) -> SensitivityTensor:
    raw = Path(path).read_bytes()
    magic, m, M, version = _HEADER.unpack_from(raw)
    if magic != _MAGIC or version != _VERSION:
        raise ParameterError(f"{path} is not a sensitivity cache (v{_VERSION})")
    full = np.frombuffer(raw, dtype="<f8", offset=_HEADER.size)
    if full.size != m * m * M:
        raise ParameterError("sensitivity cache is truncated")
    full = full.reshape(m * m, M)
    pairs = _pairs(m)
    rows = pairs[:, 0] * m + pairs[:, 1]
    comp = np.ascontiguousarray(full[rows], dtype=float)
    comp.setflags(write=False)
    pairs.setflags(write=False)
    return SensitivityTensor(int(m), comp, pairs)


def cached_sensitivity(mesh: TriMesh, basis: CurrentBasis, directory=None) -> SensitivityTensor:
    """``sensitivity`` backed by an on-disk cache keyed by mesh digest and m."""
    if directory is None:
        return sensitivity(mesh, basis)
    path = cache_path(directory, mesh, basis.m)
    if path.exists():
        A = load_sensitivity(path)
        if A.M == mesh.n_cells:
            return A
    A = sensitivity(mesh, basis)
    Path(directory).mkdir(parents=True, exist_ok=True)
    save_sensitivity(A, path)
    return A
