import numpy as np
import pytest

from onestep_eit.assemble import area_matrix, sensitivity
from onestep_eit.basis import CurrentBasis
from onestep_eit.measurement import MeasurementMatrix
from onestep_eit.mesh import build_disk_mesh


@pytest.fixture(scope="session")
def small_instance():
    """m = 4 on a coarse mesh (M = 54) with a random symmetric data matrix."""
    mesh = build_disk_mesh(0.34)
    A = sensitivity(mesh, CurrentBasis(4))
    P = area_matrix(mesh)
    rng = np.random.default_rng(7)
    X = rng.standard_normal((4, 4))
    V = MeasurementMatrix(0.5 * (X + X.T), "V_delta")
    return mesh, A, P, V


@pytest.fixture(scope="session")
def rng():
    return np.random.default_rng(12345)
