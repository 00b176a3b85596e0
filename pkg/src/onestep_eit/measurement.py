"""Symmetric measurement matrices and their CSV form."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ParameterError

ROLES = ("F", "V", "V_delta", "E_delta", "S")


@dataclass(frozen=True, eq=False)
class MeasurementMatrix:
    """An ``m x m`` matrix tagged with the role it plays in the pipeline.

    ``role`` is one of ``F`` (Galerkin NtD matrix), ``V`` (difference data
    ``F(1) - F(sigma)``), ``V_delta`` (noisy data), ``E_delta`` (noise) or
    ``S`` (linearized forward image of a contrast).
    """

    entries: np.ndarray
    role: str
    delta: float = 0.0
    seed: int | None = None

    def __post_init__(self):
        e = np.asarray(self.entries, dtype=float)
        if e.ndim != 2 or e.shape[0] != e.shape[1]:
            raise ParameterError(f"measurement matrix must be square, got {e.shape}")
        if self.role not in ROLES:
            raise ParameterError(f"unknown role {self.role!r}")
        e.setflags(write=False)
        object.__setattr__(self, "entries", e)

    @property
    def m(self) -> int:
        return self.entries.shape[0]

    def frobenius(self) -> float:
        return float(np.linalg.norm(self.entries))

    def vec(self) -> np.ndarray:
        """Row-major vectorization matching the (k, l) row order of A."""
        return self.entries.reshape(-1)

    def asymmetry(self) -> float:
        n = self.frobenius()
        return float(np.linalg.norm(self.entries - self.entries.T) / n) if n else 0.0


def symmetrize(a: np.ndarray) -> np.ndarray:
    return 0.5 * (a + a.T)


def write_measurement_csv(mat: MeasurementMatrix, path) -> Path:
    path = Path(path)
    seed = "none" if mat.seed is None else str(mat.seed)
    with path.open("w") as fh:
        fh.write("# schema=measurement/v1\n")
        fh.write(f"# m={mat.m} role={mat.role} delta={mat.delta!r} seed={seed}\n")
        for row in mat.entries:
            fh.write(",".join(repr(float(v)) for v in row) + "\n")
    return path


def read_measurement_csv(path) -> MeasurementMatrix:
    meta = {}
    rows = []
    with Path(path).open() as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            if line.startswith("#"):
                for tok in line[1:].split():
                    if "=" in tok:
                        k, v = tok.split("=", 1)
                        meta[k] = v
                continue
            rows.append([float(v) for v in line.split(",")])
    entries = np.array(rows)
    if "m" in meta and int(meta["m"]) != entries.shape[0]:
        raise ParameterError("header m does not match matrix size")
    seed = meta.get("seed", "none")
    return MeasurementMatrix(entries, meta.get("role", "V"), float(meta.get("delta", 0.0)),
                             None if seed == "none" else int(seed))
