"""
Analytic objects on the unit disk for trigonometric current patterns.

Current ``j`` (1-based) is ``sin(n phi)/sqrt(pi)`` with ``n = (j+1)/2`` when
``j`` is odd and ``cos(n phi)/sqrt(pi)`` with ``n = j/2`` when ``j`` is even.
For unit background conductivity the potentials are ``r**n trig(n phi)/(n
sqrt(pi))``.  Working in complex notation ``z = x + iy`` the gradients are

    cos:  conj(z**(n-1)) / sqrt(pi)
    sin:  1j * conj(z**(n-1)) / sqrt(pi)

(as ``grad_x + 1j grad_y``), so every product of two gradients is
``Re(a * conj(b))``, a polynomial of degree ``n_i + n_j - 2``.

The span of those products is the span of Zernike polynomials
``Z_n^{±d}`` with ``n + d <= m - 2``; ``m**2 / 4`` functions in total.
"""

from __future__ import annotations

from dataclasses import dataclass, field
import numpy as np
from scipy.special import eval_jacobi

from .errors import ParameterError
from .measurement import MeasurementMatrix
from .quadrature import disk_rule

SQRT_PI = np.sqrt(np.pi)
EXACT_MAX_M = 16


def index_pair(j: int) -> tuple[int, str]:
    """Frequency and parity of current ``j`` (1-based)."""
    if j < 1:
        raise ParameterError(f"current index must be >= 1, got {j}")
    return ((j + 1) // 2, "sin") if j % 2 else (j // 2, "cos")


@dataclass(frozen=True)
class CurrentBasis:
    """The first ``m`` orthonormal trigonometric currents."""

    m: int

    def __post_init__(self):
        if self.m < 2 or self.m % 2:
            raise ParameterError(f"number of currents must be even and >= 2, got {self.m}")

    @property
    def n_max(self) -> int:
        return self.m // 2

    @property
    def index_map(self) -> list[tuple[int, str]]:
        return [index_pair(j) for j in range(1, self.m + 1)]

    @property
    def frequencies(self) -> np.ndarray:
        return np.array([n for n, _ in self.index_map])

    def check(self, j: int) -> tuple[int, str]:
        if not 1 <= j <= self.m:
            raise ParameterError(f"current index {j} outside 1..{self.m}")
        return index_pair(j)

    def densities(self, phi) -> np.ndarray:
        """All currents at angles ``phi``; shape ``(m,) + phi.shape``."""
        phi = np.asarray(phi, dtype=float)
        return np.stack([current_density(self, j, phi) for j in range(1, self.m + 1)])


def current_density(basis: CurrentBasis, j: int, phi):
    basis.check(j)
    return current_function(j)(phi)


def current_function(j: int):
    """Current ``j`` as a callable of the boundary angle."""
    n, parity = index_pair(j)
    trig = np.sin if parity == "sin" else np.cos
    return lambda phi: trig(n * np.asarray(phi, dtype=float)) / SQRT_PI


def _split(point):
    p = np.asarray(point, dtype=float)
    return p[..., 0], p[..., 1]


def background_potential(j: int, point):
    """Potential of current ``j`` for unit conductivity (zero boundary mean)."""
    n, parity = index_pair(j)
    x, y = _split(point)
    zn = (x + 1j * y) ** n
    val = zn.imag if parity == "sin" else zn.real
    return val / (n * SQRT_PI)


def complex_gradient(j: int, point):
    """Gradient of the background potential packed as ``gx + 1j*gy``."""
    n, parity = index_pair(j)
    x, y = _split(point)
    g = np.conj((x + 1j * y) ** (n - 1)) / SQRT_PI
    return 1j * g if parity == "sin" else g


def background_gradient(j: int, point) -> np.ndarray:
    g = complex_gradient(j, point)
    return np.stack([g.real, g.imag], axis=-1)


def zeta(i: int, j: int, point):
    """Pointwise product ``grad u_i . grad u_j`` from the closed-form table.

    With ``s = n_i + n_j - 2``:

    ========  ========  ================================
    parity i  parity j  value
    ========  ========  ================================
    same      same      r**s cos((n_i - n_j) phi) / pi
    sin       cos       r**s sin((n_i - n_j) phi) / pi
    cos       sin       r**s sin((n_j - n_i) phi) / pi
    ========  ========  ================================
    """
    ni, pi_ = index_pair(i)
    nj, pj = index_pair(j)
    x, y = _split(point)
    r = np.hypot(x, y)
    phi = np.arctan2(y, x)
    s = ni + nj - 2
    rs = r ** s if s else np.ones_like(r)
    if pi_ == pj:
        return rs * np.cos((ni - nj) * phi) / np.pi
    if pi_ == "sin":
        return rs * np.sin((ni - nj) * phi) / np.pi
    return rs * np.sin((nj - ni) * phi) / np.pi


def zeta_all(m: int, points) -> np.ndarray:
    """All ``m**2`` products at ``points``, rows ordered (k, l) row-major.

    Computed from the complex gradients, so it is independent of the
    closed-form table in :func:`zeta`.
    """
    grads = np.stack([complex_gradient(j, points) for j in range(1, m + 1)])
    prod = grads[:, None] * np.conj(grads[None, :])
    return prod.real.reshape((m * m,) + grads.shape[1:])


def ntd_identity(m: int) -> MeasurementMatrix:
    """Analytic Galerkin NtD matrix ``F(1)``: ``diag(1/n_j)``."""
    basis = CurrentBasis(m)
    return MeasurementMatrix(np.diag(1.0 / basis.frequencies.astype(float)), "F")


# -- Zernike basis of the product span ------------------------------------

@dataclass(frozen=True)
class ZernikeTerm:
    n: int          # radial order
    d: int          # angular frequency
    parity: str     # "sin", "cos"; d == 0 is always "cos"

    @property
    def norm(self) -> float:
        return np.sqrt((self.n + 1) / np.pi) if self.d == 0 else np.sqrt(2 * (self.n + 1) / np.pi)


def zernike_terms(m: int) -> list[ZernikeTerm]:
    """Orthonormal Zernike functions spanning ``{zeta_ij}``, ordered by radial order."""
    top = m - 2
    terms = []
    for n in range(top + 1):
        for d in range(n % 2, n + 1, 2):
            if n + d > top:
                continue
            if d == 0:
                terms.append(ZernikeTerm(n, 0, "cos"))
            else:
                terms.append(ZernikeTerm(n, d, "sin"))
                terms.append(ZernikeTerm(n, d, "cos"))
    return terms


def zernike_eval(terms, points) -> np.ndarray:
    """Values of normalized Zernike terms; shape ``(len(terms),) + points.shape[:-1]``."""
    x, y = _split(points)
    r = np.hypot(x, y)
    phi = np.arctan2(y, x)
    out = np.empty((len(terms),) + r.shape)
    for k, t in enumerate(terms):
        q = (t.n - t.d) // 2
        radial = (-1) ** q * r ** t.d * eval_jacobi(q, t.d, 0.0, 1.0 - 2.0 * r * r)
        ang = np.sin(t.d * phi) if t.parity == "sin" else np.cos(t.d * phi)
        out[k] = t.norm * radial * ang
    return out


def block_pattern_T(terms: list[ZernikeTerm]) -> tuple[np.ndarray, np.ndarray]:
    """The displayed block-pattern matrix and its diagonal Gram entries.

    Column ``c`` occupies rows ``4c .. 4c+3``.  Rotation-free terms carry
    ``(0, 0, w, w)`` with ``w = sqrt(2/((2n+1) pi))``; sine terms carry
    ``(-v, -v, v, v)`` and cosine terms ``(v, v, v, v)`` with
    ``v = 1/sqrt((2n+1) pi)``.  Every column then has squared norm
    ``4/((2n+1) pi)``.
    """
    mp = len(terms)
    T = np.zeros((4 * mp, mp))
    for c, t in enumerate(terms):
        ell = 2 * t.n + 1
        if t.d == 0:
            T[4 * c + 2: 4 * c + 4, c] = np.sqrt(2.0 / (ell * np.pi))
        else:
            v = 1.0 / np.sqrt(ell * np.pi)
            T[4 * c: 4 * c + 4, c] = v if t.parity == "cos" else (-v, -v, v, v)
    diag = np.array([4.0 / ((2 * t.n + 1) * np.pi) for t in terms])
    return T, diag


@dataclass(frozen=True, eq=False)
class SpectralModel:
    """Coefficient-space model of the product span for ``m`` currents.

    Two realizations of the ``zeta = T zeta_hat`` relation live here.

    ``T`` / ``tt_diag``
        The block-pattern matrix with diagonal ``4/((2k-1) pi)`` entries, in
        the Zernike ordering of ``zhat_spec``.
    ``T_exact`` / ``lam``
        ``T_exact[(k,l), i] = int zeta_kl * e_i`` where ``e_i`` are the
        orthonormal eigenfunctions of the product Gram operator (the
        Zernike terms rotated by ``rotation``).  Its columns are orthogonal
        and ``T_exact.T @ T_exact == diag(lam)``.  The coefficient formulas
        in :mod:`onestep_eit.analysis` use this realization.
    """

    m: int
    T: np.ndarray
    tt_diag: np.ndarray
    zhat_spec: list
    T_zernike: np.ndarray | None
    lam: np.ndarray | None
    rotation: np.ndarray | None
    T_exact: np.ndarray | None = field(repr=False)

    @property
    def has_exact(self) -> bool:
        return self.T_exact is not None

    def require_exact(self) -> None:
        if not self.has_exact:
            raise ParameterError(
                f"exact coefficient model unavailable for m={self.m} (limit m <= {EXACT_MAX_M})")

    @property
    def m_prime(self) -> int:
        return self.m * self.m // 4

    def zernike_values(self, points) -> np.ndarray:
        return zernike_eval(self.zhat_spec, points)

    def to_eigen(self, coef: np.ndarray) -> np.ndarray:
        """Zernike coefficients -> eigenbasis coefficients."""
        self.require_exact()
        return self.rotation.T @ coef

    def eigenfunction_values(self, points) -> np.ndarray:
        """Orthonormal analysis basis ``e_i`` evaluated at ``points``."""
        self.require_exact()
        z = self.zernike_values(points)
        return np.tensordot(self.rotation.T, z, axes=1)


def assemble_spectral(m: int) -> SpectralModel:
    """Block-pattern and exact coefficient models for ``m`` currents.

    The exact model is built only for ``m <= EXACT_MAX_M``; beyond that the
    smallest Gram eigenvalues fall below double precision.
    """
    if m < 4 or m % 2:
        raise ParameterError(f"spectral model needs even m >= 4, got {m}")
    terms = zernike_terms(m)
    T_pattern, diag = block_pattern_T(terms)
    T_pattern.setflags(write=False)
    diag.setflags(write=False)
    if m > EXACT_MAX_M:
        return SpectralModel(m, T_pattern, diag, terms, None, None, None, None)
    pts, w = disk_rule(2 * (m - 2))
    zeta_vals = zeta_all(m, pts)
    z = zernike_eval(terms, pts)
    T_z = (zeta_vals * w) @ z.T
    lam, Q = np.linalg.eigh(T_z.T @ T_z)
    order = np.argsort(lam)[::-1]
    lam, Q = lam[order], Q[:, order]
    # deterministic sign convention: largest-magnitude entry of each vector positive
    flip = np.sign(Q[np.argmax(np.abs(Q), axis=0), np.arange(Q.shape[1])])
    Q = Q * flip
    T_exact = T_z @ Q
    for arr in (T_z, lam, Q, T_exact):
        arr.setflags(write=False)
    return SpectralModel(m, T_pattern, diag, terms, T_z, lam, Q, T_exact)


def gram_eigenvalues(m: int, dedup: bool = False) -> np.ndarray:
    """Eigenvalues (descending) of the quadrature Gram matrix of ``{zeta_ij}``.

    The Gram matrix of the full ``m**2`` family equals ``T T^T`` for any
    orthonormal realization of the span, so its leading ``m**2/4``
    eigenvalues are the spectrum of ``T^T T``.
    """
    pts, w = disk_rule(2 * (m - 2))
    vals = np.stack([zeta(i, j, pts) for i in range(1, m + 1) for j in range(1, m + 1)
                     if not dedup or j >= i])
    G = (vals * w) @ vals.T
    return np.sort(np.linalg.eigvalsh(G))[::-1]
