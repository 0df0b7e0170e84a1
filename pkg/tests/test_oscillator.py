import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from numpy.polynomial import hermite as nph
from scipy.integrate import trapezoid

from flyby.errors import ConfigurationError, DomainError, NumericalError
from flyby.oscillator import (
    OscillatorSpec,
    PotentialSpec,
    eigenfunction,
    expand_potential,
    gauss_hermite,
    hermite,
    hermite_bracket,
    hermite_table,
    normalized_hermite_table,
    potential_matrix,
)

SPEC = OscillatorSpec(M=1.0, Omega=1.0)


def _H(n, X):
    c = np.zeros(n + 1)
    c[n] = 1.0
    return nph.hermval(X, c)


def _norm(n):
    return 2.0**n * math.factorial(n) * math.sqrt(math.pi)


def dense_coefficients(spec, V, x1, n_max):
    """Trapezoid rule on X in [-12, 12] with 1e5 points, numpy Hermite polynomials."""
    X = np.linspace(-12.0, 12.0, 100_001)
    a = spec.length_scale
    w = np.exp(-X**2)
    out = np.empty((n_max + 1, len(x1)))
    for j, xv in enumerate(x1):
        f = w * V(xv - a * X)
        for n in range(n_max + 1):
            out[n, j] = trapezoid(_H(n, X) * f, X) / _norm(n)
    return out


@pytest.mark.parametrize("n", [0, 1, 2, 5, 12, 30])
def test_hermite_matches_numpy(n):
    X = np.linspace(-4, 4, 41)
    np.testing.assert_allclose(hermite(n, X), _H(n, X), rtol=1e-12, atol=1e-12)


def test_normalised_table_consistent_with_plain_table():
    X = np.linspace(-5, 5, 33)
    H = hermite_table(20, X)
    Hn = normalized_hermite_table(20, X)
    scale = np.array([math.sqrt(_norm(n)) for n in range(21)])
    np.testing.assert_allclose(Hn * scale[:, None], H, rtol=1e-11, atol=1e-9)


def test_gauss_hermite_matches_numpy():
    for n in (5, 20, 60):
        x, w = gauss_hermite(n)
        xr, wr = nph.hermgauss(n)
        np.testing.assert_allclose(x, xr, atol=1e-12)
        np.testing.assert_allclose(w, wr, rtol=1e-9, atol=1e-14 * wr.max())
    x, _ = gauss_hermite(10)
    with pytest.raises(ValueError):
        x[0] = 1.0


def test_hermite_orthogonality():
    x, w = gauss_hermite(80)
    H = hermite_table(12, x)
    gram = (H * w) @ H.T
    norms = np.array([_norm(n) for n in range(13)])
    np.testing.assert_allclose(gram / np.sqrt(np.outer(norms, norms)), np.eye(13), atol=1e-10)


def test_eigenfunctions_are_orthonormal():
    X = np.linspace(-15, 15, 20001)
    phis = np.array([eigenfunction(SPEC, n, X) for n in range(8)])
    gram = trapezoid(phis[:, None, :] * phis[None, :, :], X, axis=-1)
    np.testing.assert_allclose(gram, np.eye(8), atol=1e-10)


def test_order_limits_and_overflow():
    with pytest.raises(ConfigurationError):
        hermite_table(65, 0.0)
    with pytest.raises(NumericalError, match="H_"):
        hermite_table(64, np.array([1e200]))


def test_constant_and_linear_expansions_are_exact():
    spec = OscillatorSpec(M=2.0, Omega=0.7)
    a = spec.length_scale
    x1 = np.linspace(-3, 3, 13)
    c = expand_potential(spec, lambda d: np.full_like(d, 2.5), x1, 12, 40).values
    np.testing.assert_allclose(c[0], 2.5, atol=1e-10)
    np.testing.assert_allclose(c[1:], 0.0, atol=1e-10)
    c = expand_potential(spec, lambda d: d, x1, 12, 40).values
    np.testing.assert_allclose(c[0], x1, atol=1e-10)
    np.testing.assert_allclose(c[1], -a / 2, atol=1e-10)
    np.testing.assert_allclose(c[2:], 0.0, atol=1e-10)


@settings(max_examples=25, deadline=None)
@given(coeffs=st.lists(st.floats(-2, 2), min_size=1, max_size=7), x1=st.floats(-2, 2))
def test_polynomial_potentials_reconstruct_exactly(coeffs, x1):
    V = lambda d: np.polynomial.polynomial.polyval(d, coeffs)  # noqa: E731
    e = expand_potential(SPEC, V, [x1], 8, 30)
    X = np.linspace(-2, 2, 9)
    np.testing.assert_allclose(e.reconstruct(X)[0], V(x1 - SPEC.length_scale * X), atol=1e-9)


@pytest.mark.parametrize(
    "pot",
    # the steep soft_core edge needs many more nodes than the gaussian
    [PotentialSpec.gaussian(1.0, 1.0), PotentialSpec.gaussian(-0.6, 0.5), PotentialSpec.soft_core(1.0, 2.5, 3.0)],
)
def test_expansion_against_dense_quadrature(pot):
    spec = OscillatorSpec(M=1.0, Omega=1.5)
    x1 = np.linspace(-4, 4, 9)
    gh = expand_potential(spec, pot, x1, 12, 200).values
    np.testing.assert_allclose(gh, dense_coefficients(spec, pot, x1, 12), atol=1e-8)


def test_expansion_requires_enough_nodes():
    with pytest.raises(ConfigurationError, match="quad_nodes"):
        expand_potential(SPEC, PotentialSpec.gaussian(1, 1), [0.0], 12, 20)


def test_channel_matrix_against_dense_oracle():
    pot = PotentialSpec.gaussian(1.0, 1.0)
    x1 = np.array([-2.0, 0.0, 0.7, 3.0])
    mat = potential_matrix(SPEC, pot, x1, 5, 40)
    X = np.linspace(-12, 12, 100_001)
    phis = np.array([eigenfunction(SPEC, n, X) for n in range(5)])
    for j, xv in enumerate(x1):
        v = pot(xv - X)
        ref = trapezoid(phis[:, None, :] * phis[None, :, :] * v, X, axis=-1)
        np.testing.assert_allclose(mat[j], ref, atol=1e-10)
    np.testing.assert_array_equal(mat, np.swapaxes(mat, 1, 2))


def test_matrix_elements_from_expansion_coefficients():
    pot = PotentialSpec.soft_core(0.8, 2.5, 3.0)
    x1 = np.linspace(-5, 5, 11)
    N = 7
    mat = potential_matrix(SPEC, pot, x1, N, 200)
    coeffs = expand_potential(SPEC, pot, x1, 2 * (N - 1), 200).values
    for i in range(N):
        for k in range(N):
            approx = sum(coeffs[m] * hermite_bracket(i, m, k, 200) for m in range(i + k + 1))
            np.testing.assert_allclose(approx, mat[:, i, k], atol=1e-8)


def test_quadrature_refinement_is_stable():
    pot = PotentialSpec.gaussian(1.0, 1.0)
    x1 = np.linspace(-6, 6, 25)
    np.testing.assert_allclose(potential_matrix(SPEC, pot, x1, 7, 40), potential_matrix(SPEC, pot, x1, 7, 80), atol=1e-9)


def test_matrix_node_count_rule():
    with pytest.raises(ConfigurationError, match="2\\*n_channels"):
        potential_matrix(SPEC, PotentialSpec.gaussian(1, 1), [0.0], 7, 30)


def test_tabulated_potential():
    d = np.linspace(0, 10, 101)
    tab = PotentialSpec.tabulated(d, np.exp(-0.5 * d**2))
    probe = np.array([-2.3, 0.0, 0.41, 3.3])
    np.testing.assert_allclose(tab(probe), np.exp(-0.5 * probe**2), atol=2e-5)
    with pytest.raises(DomainError, match="d_max"):
        tab(np.array([10.5]))
    with pytest.raises(ConfigurationError):
        PotentialSpec.tabulated([0.1, 1, 2, 3], [1, 1, 1, 1])


def test_spec_validation():
    with pytest.raises(ConfigurationError):
        OscillatorSpec(M=0.0, Omega=1.0)
    with pytest.raises(ConfigurationError):
        PotentialSpec.gaussian(1.0, 0.0)
    assert OscillatorSpec(M=4.0, Omega=1.0).length_scale == pytest.approx(0.5)
