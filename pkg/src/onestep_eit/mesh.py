"""
Structured triangulations of the unit disk.

The mesher places concentric rings of vertices (ring ``k`` carries ``6k``
equally spaced points) and stitches consecutive rings into triangles.  The
outermost ring lies on the unit circle, so boundary identification is exact
and the construction is deterministic for a fixed ``h``.

The triangles double as the reconstruction partition: each cell is one
piecewise-constant degree of freedom.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from .errors import ParameterError

SNAP_TOL = 1e-12


@dataclass(frozen=True, eq=False)
class TriMesh:
    """Immutable triangulation of the unit disk.

    Attributes
    ----------
    vertices : ndarray, shape (nv, 2)
    triangles : ndarray, shape (M, 3)
        Counter-clockwise vertex indices.
    boundary_edges : ndarray, shape (nb, 2)
        Boundary edges ordered counter-clockwise around the circle, forming
        one closed loop.
    h : float
        Target mesh size the mesh was generated for.
    parent : ndarray or None
        For refined meshes, the index of the coarse cell each cell came from.
    """

    vertices: np.ndarray
    triangles: np.ndarray
    boundary_edges: np.ndarray
    h: float
    parent: np.ndarray | None = field(default=None)

    def __post_init__(self):
        for name in ("vertices", "triangles", "boundary_edges", "parent"):
            arr = getattr(self, name)
            if arr is not None:
                arr.setflags(write=False)

    @property
    def n_cells(self) -> int:
        return len(self.triangles)

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def boundary_vertices(self) -> np.ndarray:
        return self.boundary_edges[:, 0]

    def signed_areas(self) -> np.ndarray:
        p = self.vertices[self.triangles]
        d1 = p[:, 1] - p[:, 0]
        d2 = p[:, 2] - p[:, 0]
        return 0.5 * (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])

    def diameters(self) -> np.ndarray:
        """Longest edge of every triangle."""
        p = self.vertices[self.triangles]
        e = np.stack([p[:, 1] - p[:, 0], p[:, 2] - p[:, 1], p[:, 0] - p[:, 2]], axis=1)
        return np.linalg.norm(e, axis=2).max(axis=1)

    def polygon_area(self) -> float:
        """Area enclosed by the boundary loop (shoelace formula)."""
        a = self.vertices[self.boundary_edges[:, 0]]
        b = self.vertices[self.boundary_edges[:, 1]]
        return 0.5 * float(np.sum(a[:, 0] * b[:, 1] - a[:, 1] * b[:, 0]))

    def digest(self) -> str:
        """Content hash used to key caches."""
        hsh = hashlib.sha256()
        hsh.update(np.ascontiguousarray(self.vertices, dtype="<f8").tobytes())
        hsh.update(np.ascontiguousarray(self.triangles, dtype="<i8").tobytes())
        return hsh.hexdigest()

    def cell_adjacency(self) -> sp.csr_matrix:
        """Symmetric cell-to-cell adjacency through shared edges."""
        tri = self.triangles
        M = len(tri)
        edges = np.concatenate([tri[:, [0, 1]], tri[:, [1, 2]], tri[:, [2, 0]]])
        edges.sort(axis=1)
        owner = np.tile(np.arange(M), 3)
        order = np.lexsort((edges[:, 1], edges[:, 0]))
        e = edges[order]
        o = owner[order]
        same = np.all(e[1:] == e[:-1], axis=1)
        i, j = o[:-1][same], o[1:][same]
        data = np.ones(2 * len(i))
        adj = sp.coo_matrix((data, (np.r_[i, j], np.r_[j, i])), shape=(M, M))
        return adj.tocsr()


def _ring_points(k: int, n_rings: int) -> np.ndarray:
    if k == 0:
        return np.zeros((1, 2))
    phi = 2.0 * np.pi * np.arange(6 * k) / (6 * k)
    r = k / n_rings
    return np.column_stack([r * np.cos(phi), r * np.sin(phi)])


def _stitch(inner: np.ndarray, outer: np.ndarray, n_in: int, n_out: int) -> list:
    # inner/outer hold global vertex ids; angles are uniform on each ring.
    tris = []
    if n_in == 1:
        for j in range(n_out):
            tris.append((inner[0], outer[j], outer[(j + 1) % n_out]))
        return tris
    i = j = 0
    while i < n_in or j < n_out:
        # compare angles of the next candidate vertex on each ring
        next_in = (i + 1) / n_in
        next_out = (j + 1) / n_out
        if j < n_out and (i >= n_in or next_out <= next_in):
            tris.append((inner[i % n_in], outer[j % n_out], outer[(j + 1) % n_out]))
            j += 1
        else:
            tris.append((inner[i % n_in], outer[j % n_out], inner[(i + 1) % n_in]))
            i += 1
    return tris


def _orient(vertices: np.ndarray, triangles: np.ndarray) -> np.ndarray:
    p = vertices[triangles]
    d1 = p[:, 1] - p[:, 0]
    d2 = p[:, 2] - p[:, 0]
    neg = d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0] < 0
    triangles = triangles.copy()
    triangles[neg] = triangles[neg][:, [0, 2, 1]]
    return triangles


def build_disk_mesh(h: float) -> TriMesh:
    """Quasi-uniform triangulation of the unit disk with mesh size about ``h``.

    The number of rings is ``ceil(1/h)``; the mesh has ``6 K**2`` triangles
    for ``K`` rings, so the cell count grows like ``h**-2``.

    Raises
    ------
    ParameterError
        If ``h`` is not in the open interval (0, 1).
    """
    if not (0.0 < h < 1.0) or not math.isfinite(h):
        raise ParameterError(f"mesh size h must lie in (0, 1), got {h!r}")
    n_rings = max(1, math.ceil(1.0 / h - 1e-9))
    rings = [_ring_points(k, n_rings) for k in range(n_rings + 1)]
    offsets = np.cumsum([0] + [len(r) for r in rings])
    vertices = np.concatenate(rings)
    tris = []
    for k in range(1, n_rings + 1):
        inner = np.arange(offsets[k - 1], offsets[k])
        outer = np.arange(offsets[k], offsets[k + 1])
        tris.extend(_stitch(inner, outer, len(inner), len(outer)))
    triangles = _orient(vertices, np.asarray(tris, dtype=np.int64))
    bidx = np.arange(offsets[n_rings], offsets[n_rings + 1])
    boundary = np.column_stack([bidx, np.roll(bidx, -1)])
    return TriMesh(vertices, triangles, boundary, float(h))


def refine(mesh: TriMesh) -> TriMesh:
    """Uniform red refinement: every triangle is split into four.

    New vertices on boundary edges are projected onto the unit circle, so the
    refined polygon encloses the parent polygon.  The parent's vertices keep
    their indices.
    """
    tri = mesh.triangles
    nv = mesh.n_vertices
    edges = np.concatenate([tri[:, [0, 1]], tri[:, [1, 2]], tri[:, [2, 0]]])
    key = np.sort(edges, axis=1)
    uniq, inv = np.unique(key, axis=0, return_inverse=True)
    inv = inv.reshape(3, -1).T  # (M, 3): midpoint id of edge 01, 12, 20
    mids = 0.5 * (mesh.vertices[uniq[:, 0]] + mesh.vertices[uniq[:, 1]])

    bkey = np.sort(mesh.boundary_edges, axis=1)
    # locate boundary edges in the unique edge list
    bpos = _row_lookup(uniq, bkey)
    mids[bpos] /= np.linalg.norm(mids[bpos], axis=1, keepdims=True)

    vertices = np.concatenate([mesh.vertices, mids])
    m01, m12, m20 = (inv[:, 0] + nv, inv[:, 1] + nv, inv[:, 2] + nv)
    a, b, c = tri[:, 0], tri[:, 1], tri[:, 2]
    children = np.stack([
        np.column_stack([a, m01, m20]),
        np.column_stack([m01, b, m12]),
        np.column_stack([m20, m12, c]),
        np.column_stack([m01, m12, m20]),
    ], axis=1).reshape(-1, 3)
    parent_local = np.repeat(np.arange(mesh.n_cells), 4)
    parent = parent_local if mesh.parent is None else mesh.parent[parent_local]

    bmid = bpos + nv
    e0, e1 = mesh.boundary_edges[:, 0], mesh.boundary_edges[:, 1]
    boundary = np.stack([np.column_stack([e0, bmid]), np.column_stack([bmid, e1])],
                        axis=1).reshape(-1, 2)
    return TriMesh(vertices, children.astype(np.int64), boundary, mesh.h / 2.0, parent)


def _row_lookup(table: np.ndarray, rows: np.ndarray) -> np.ndarray:
    # table rows are unique and lexicographically sorted (np.unique output)
    base = table[:, 0].astype(np.int64) * (table.max() + 1) + table[:, 1]
    q = rows[:, 0].astype(np.int64) * (table.max() + 1) + rows[:, 1]
    pos = np.searchsorted(base, q)
    if not np.array_equal(base[pos], q):
        raise ParameterError("boundary edge missing from triangulation")
    return pos


def cell_geometry(mesh: TriMesh) -> tuple[np.ndarray, np.ndarray]:
    """Return ``(areas, centroids)`` of every triangle."""
    areas = mesh.signed_areas()
    centroids = mesh.vertices[mesh.triangles].mean(axis=1)
    return areas, centroids


def check_mesh(mesh: TriMesh, quasi_uniform_ratio: float = 8.0) -> None:
    """Assert the structural invariants of a disk triangulation.

    Raises ``ParameterError`` describing the first violated invariant.
    """
    if np.any(mesh.signed_areas() <= 0):
        raise ParameterError("mesh has non-positively oriented triangles")
    be = mesh.boundary_edges
    if not np.array_equal(be[:, 1], np.roll(be[:, 0], -1)):
        raise ParameterError("boundary edges do not form a single closed loop")
    if len(np.unique(be[:, 0])) != len(be):
        raise ParameterError("boundary loop visits a vertex twice")
    radii = np.linalg.norm(mesh.vertices[be[:, 0]], axis=1)
    if np.max(np.abs(radii - 1.0)) > SNAP_TOL:
        raise ParameterError("boundary vertices are not on the unit circle")
    d = mesh.diameters()
    if d.max() / d.min() > quasi_uniform_ratio:
        raise ParameterError(f"quasi-uniformity ratio {d.max() / d.min():.2f} exceeded")


def write_mesh_csv(mesh: TriMesh, path) -> Path:
    """Write the mesh as a sectioned CSV (vertices, triangles, boundary)."""
    path = Path(path)
    with path.open("w", newline="") as fh:
        fh.write("# schema=mesh/v1\n")
        fh.write("#vertices x,y\n")
        for x, y in mesh.vertices.tolist():
            fh.write(f"{x!r},{y!r}\n")
        fh.write("#triangles i,j,k\n")
        for i, j, k in mesh.triangles.tolist():
            fh.write(f"{i},{j},{k}\n")
        fh.write("#boundary i,j\n")
        for i, j in mesh.boundary_edges.tolist():
            fh.write(f"{i},{j}\n")
    return path


def read_mesh_csv(path, h: float) -> TriMesh:
    """Inverse of :func:`write_mesh_csv` (the parent map is not stored)."""
    sections: dict[str, list] = {}
    current = None
    with Path(path).open() as fh:
        first = fh.readline().strip()
        if first != "# schema=mesh/v1":
            raise ParameterError(f"not a mesh/v1 file: {first!r}")
        for line in fh:
            line = line.strip()
            if line.startswith("#"):
                current = line[1:].split()[0]
                sections[current] = []
            elif line:
                sections[current].append(line.split(","))
    return TriMesh(np.array(sections["vertices"], dtype=float),
                   np.array(sections["triangles"], dtype=np.int64),
                   np.array(sections["boundary"], dtype=np.int64), h)
