import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from onestep_eit.basis import (EXACT_MAX_M, CurrentBasis, assemble_spectral, background_gradient,
                               background_potential, current_density, gram_eigenvalues,
                               ntd_identity, zernike_eval, zernike_terms, zeta, zeta_all)
from onestep_eit.errors import ParameterError
from onestep_eit.quadrature import disk_rule

SQPI = np.sqrt(np.pi)


def _random_interior(rng, n, rmax=0.95):
    r = rmax * np.sqrt(rng.uniform(size=n))
    t = rng.uniform(0, 2 * np.pi, size=n)
    return np.column_stack([r * np.cos(t), r * np.sin(t)])


def test_index_map_convention():
    b = CurrentBasis(8)
    assert b.index_map == [(1, "sin"), (1, "cos"), (2, "sin"), (2, "cos"),
                           (3, "sin"), (3, "cos"), (4, "sin"), (4, "cos")]
    assert b.n_max == 4


@pytest.mark.parametrize("m", [0, 3, 7, -2])
def test_bad_m(m):
    with pytest.raises(ParameterError):
        CurrentBasis(m)


def test_current_density_values():
    b = CurrentBasis(4)
    assert current_density(b, 1, np.pi / 2) == pytest.approx(1 / SQPI, abs=1e-15)
    assert current_density(b, 2, 0.0) == pytest.approx(1 / SQPI, abs=1e-15)
    with pytest.raises(ParameterError):
        current_density(b, 5, 0.0)
    with pytest.raises(ParameterError):
        current_density(b, 0, 0.0)


def test_currents_orthonormal():
    b = CurrentBasis(8)
    n = 256
    phi = 2 * np.pi * np.arange(n) / n      # trapezoid is exact for these trig products
    g = b.densities(phi)
    G = g @ g.T * (2 * np.pi / n)
    assert np.max(np.abs(G - np.eye(8))) <= 1e-12
    assert np.max(np.abs(g.sum(axis=1))) * 2 * np.pi / n <= 1e-12


def test_background_potential_values():
    assert background_potential(1, (0.0, 1.0)) == pytest.approx(1 / SQPI, abs=1e-15)
    for j in range(1, 9):
        assert background_potential(j, (0.0, 0.0)) == 0.0


def test_background_potential_boundary_trace():
    phi = np.linspace(0, 2 * np.pi, 17)
    pts = np.column_stack([np.cos(phi), np.sin(phi)])
    b = CurrentBasis(8)
    for j in range(1, 9):
        n, _ = b.check(j)
        assert np.allclose(background_potential(j, pts), current_density(b, j, phi) / n, atol=1e-14)


def test_harmonic(rng):
    pts = _random_interior(rng, 20, 0.9)
    e = 1e-4
    for j in range(1, 17):
        lap = (background_potential(j, pts + [e, 0]) + background_potential(j, pts - [e, 0])
               + background_potential(j, pts + [0, e]) + background_potential(j, pts - [0, e])
               - 4 * background_potential(j, pts)) / e ** 2
        assert np.max(np.abs(lap)) <= 1e-6


def test_gradient_constant_currents(rng):
    pts = _random_interior(rng, 10)
    assert np.allclose(background_gradient(1, pts), [0.0, 1 / SQPI], atol=1e-15)
    assert np.allclose(background_gradient(2, pts), [1 / SQPI, 0.0], atol=1e-15)
    for j in range(3, 9):
        assert np.allclose(background_gradient(j, (0.0, 0.0)), 0.0)


def test_gradient_finite_differences(rng):
    pts = _random_interior(rng, 50)
    e = 1e-6
    for j in range(1, 17):
        g = background_gradient(j, pts)
        fd = np.column_stack([
            (background_potential(j, pts + [e, 0]) - background_potential(j, pts - [e, 0])) / (2 * e),
            (background_potential(j, pts + [0, e]) - background_potential(j, pts - [0, e])) / (2 * e)])
        scale = np.maximum(np.linalg.norm(g, axis=1), 1e-3)
        assert np.max(np.linalg.norm(g - fd, axis=1) / scale) <= 1e-6


def test_zeta_simple_cases():
    pts = np.array([[0.3, -0.2], [0.0, 0.5], [-0.7, 0.1]])
    assert np.allclose(zeta(1, 1, pts), 1 / np.pi, atol=1e-15)
    # constant gradients (0, 1)/sqrt(pi) and (1, 0)/sqrt(pi) are orthogonal
    assert np.allclose(zeta(1, 2, pts), 0.0, atol=1e-15)


def test_zeta_matches_gradient_products(rng):
    pts = _random_interior(rng, 200, 1.0)
    m = 16
    for i in range(1, m + 1):
        gi = background_gradient(i, pts)
        for j in range(1, m + 1):
            dot = np.sum(gi * background_gradient(j, pts), axis=-1)
            assert np.max(np.abs(zeta(i, j, pts) - dot)) <= 1e-12


@settings(max_examples=60, deadline=None)
@given(i=st.integers(1, 12), j=st.integers(1, 12),
       r=st.floats(0.0, 1.0), t=st.floats(-np.pi, np.pi))
def test_zeta_identity_property(i, j, r, t):
    p = np.array([r * np.cos(t), r * np.sin(t)])
    dot = background_gradient(i, p) @ background_gradient(j, p)
    assert abs(zeta(i, j, p) - dot) <= 1e-12
    assert abs(zeta(i, j, p) - zeta(j, i, p)) <= 1e-15


def test_zeta_weak_identity(rng):
    m = 8
    pts, w = disk_rule(2 * m + 8)
    x, y = pts[:, 0], pts[:, 1]
    for _ in range(20):
        c = rng.standard_normal(10)
        eta = (c[0] + c[1] * x + c[2] * y + c[3] * x * x + c[4] * x * y + c[5] * y * y
               + c[6] * x ** 3 + c[7] * x * x * y + c[8] * x * y * y + c[9] * y ** 3)
        for i in range(1, m + 1):
            for j in range(i, m + 1):
                dot = np.sum(background_gradient(i, pts) * background_gradient(j, pts), axis=-1)
                assert abs(w @ (zeta(i, j, pts) * eta) - w @ (dot * eta)) <= 1e-12


def test_zeta_all_rows(rng):
    pts = _random_interior(rng, 30, 1.0)
    Z = zeta_all(6, pts)
    for i in range(1, 7):
        for j in range(1, 7):
            assert np.allclose(Z[(i - 1) * 6 + (j - 1)], zeta(i, j, pts), atol=1e-14)


def test_ntd_identity():
    F = ntd_identity(4).entries
    assert np.array_equal(F, np.diag([1.0, 1.0, 0.5, 0.5]))
    F8 = ntd_identity(8).entries
    assert np.all(F8[~np.eye(8, dtype=bool)] == 0.0)
    d = np.diag(F8)
    assert np.all(d > 0) and np.all(np.diff(d) <= 0)


def test_ntd_identity_equals_boundary_pairing():
    b = CurrentBasis(8)
    n = 512
    phi = 2 * np.pi * np.arange(n) / n
    pts = np.column_stack([np.cos(phi), np.sin(phi)])
    g = b.densities(phi)
    u = np.stack([background_potential(j, pts) for j in range(1, 9)])
    F = g @ u.T * (2 * np.pi / n)
    assert np.allclose(F, ntd_identity(8).entries, atol=1e-12)


# -- orthonormal basis of the product span --------------------------------------


@pytest.mark.parametrize("m", [4, 6, 8, 12])
def test_zernike_terms_orthonormal(m):
    terms = zernike_terms(m)
    assert len(terms) == m * m // 4
    pts, w = disk_rule(2 * m)
    z = zernike_eval(terms, pts)
    assert np.allclose((z * w) @ z.T, np.eye(len(terms)), atol=1e-12)


def test_zernike_low_order_members():
    terms = zernike_terms(4)
    pts = np.array([[0.2, 0.3], [-0.5, 0.1]])
    z = zernike_eval(terms, pts)
    r = np.hypot(pts[:, 0], pts[:, 1])
    phi = np.arctan2(pts[:, 1], pts[:, 0])
    # the constant 1/sqrt(pi) and 2 r sin(phi)/sqrt(pi) are in the basis
    assert np.allclose(z[0], 1 / SQPI)
    assert any(np.allclose(row, 2 * r * np.sin(phi) / SQPI) for row in z)


@pytest.mark.parametrize("m", [4, 8])
def test_products_lie_in_span(m):
    pts, w = disk_rule(2 * m)
    z = zernike_eval(zernike_terms(m), pts)
    Z = zeta_all(m, pts)
    coef = (Z * w) @ z.T
    resid = Z - coef @ z
    assert np.max(np.sqrt((resid ** 2) @ w)) <= 1e-12


def test_spectral_m4_block_pattern():
    spec = assemble_spectral(4)
    assert spec.m_prime == 4
    assert spec.T.shape == (16, 4)
    expected = np.array([4 / np.pi, 4 / (3 * np.pi), 4 / (3 * np.pi), 4 / (5 * np.pi)])
    assert np.allclose(np.sort(spec.tt_diag)[::-1], expected, rtol=1e-14)
    assert np.allclose(spec.T.T @ spec.T, np.diag(spec.tt_diag), atol=1e-15)


def test_spectral_m32_extremes():
    spec = assemble_spectral(32)
    assert spec.m_prime == 256
    assert spec.tt_diag.max() == pytest.approx(4 / np.pi, rel=1e-14)
    assert spec.tt_diag.min() == pytest.approx(4 / (61 * np.pi), rel=1e-14)
    assert not spec.has_exact
    with pytest.raises(ParameterError):
        spec.require_exact()


@pytest.mark.parametrize("m", [4, 8, 16, 32])
def test_block_pattern_orthogonal(m):
    spec = assemble_spectral(m)
    assert np.allclose(spec.T.T @ spec.T, np.diag(spec.tt_diag), atol=1e-14)
    vals = set(np.round(spec.tt_diag * np.pi, 12))
    assert vals <= {round(4 / (2 * k - 1), 12) for k in range(1, m)}


@pytest.mark.parametrize("m", [3, 2, 5])
def test_spectral_bad_m(m):
    with pytest.raises(ParameterError):
        assemble_spectral(m)


@pytest.mark.parametrize("m", [4, 8, 12, 16])
def test_exact_model_diagonalizes_gram(m):
    spec = assemble_spectral(m)
    assert spec.has_exact
    TT = spec.T_exact.T @ spec.T_exact
    assert np.allclose(TT, np.diag(spec.lam), atol=1e-12 * spec.lam[0])
    ev = gram_eigenvalues(m)
    assert np.allclose(ev[: spec.m_prime], spec.lam, rtol=1e-8)
    assert np.all(np.abs(ev[spec.m_prime:]) <= 1e-12)
    assert np.all(np.diff(spec.lam) <= 0)


def test_exact_model_m4_values():
    # eigenvalues times pi for m = 4, frozen from an independent dense
    # quadrature of the 16 x 16 product Gram matrix
    lam = assemble_spectral(4).lam * np.pi
    assert np.allclose(lam[1:3], 1.0, atol=1e-12)
    assert lam[0] + lam[3] == pytest.approx(8 / 3, rel=1e-12)
    assert lam[0] * lam[3] == pytest.approx(1 / 3, rel=1e-12)


def test_dedup_gram_rank():
    ev = gram_eigenvalues(8, dedup=True)
    assert len(ev) == 8 * 9 // 2
    assert np.sum(ev > 1e-10) == 16


def test_exact_limit():
    assert assemble_spectral(EXACT_MAX_M).has_exact
    assert not assemble_spectral(EXACT_MAX_M + 2).has_exact


def test_gram_eigenvalues_match_block_pattern_diagonal():
    """Nonzero Gram eigenvalues of the products against ``tt_diag`` for m = 8."""
    spec = assemble_spectral(8)
    ev = gram_eigenvalues(8)[: spec.m_prime]
    ref = np.sort(spec.tt_diag)[::-1]
    assert np.max(np.abs(ev - ref) / ref) <= 1e-8
