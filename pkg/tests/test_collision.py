import numpy as np
import pytest

from vplsim.collision import apply_A, apply_Gamma, apply_K, apply_L, sigma_norm
from vplsim.equilibrium import maxwellian
from vplsim.errors import ShapeError
from vplsim.spectral_core import grad_v, integrate_v, norm_v

from conftest import smooth_random
from oracles import DenseOracle


@pytest.fixture(scope="module")
def oracle8(coeffs8):
    return DenseOracle(coeffs8.grid)


def _rel(a, b):
    return float(np.max(np.abs(a - b)) / np.max(np.abs(b)))


def test_dense_derivative_matches_spectral(coeffs8, oracle8):
    g = coeffs8.grid
    f = smooth_random(g, np.random.default_rng(1))
    for a in range(3):
        assert _rel(oracle8.D[a] @ f.ravel(), grad_v(f, g)[a].ravel()) < 1e-12


def test_K_matches_dense_oracle(coeffs8, oracle8):
    f = smooth_random(coeffs8.grid, np.random.default_rng(2))
    assert _rel(apply_K(f, coeffs8).ravel(), oracle8.K(f.ravel(), coeffs8)) < 1e-6


def test_A_matches_dense_oracle(coeffs8, oracle8):
    f = smooth_random(coeffs8.grid, np.random.default_rng(3))
    assert _rel(apply_A(f, coeffs8).ravel(), oracle8.A(f.ravel(), coeffs8)) < 1e-6


def test_Gamma_matches_dense_oracle(coeffs8, oracle8):
    rng = np.random.default_rng(4)
    g1 = smooth_random(coeffs8.grid, rng)
    g2 = smooth_random(coeffs8.grid, rng)
    assert _rel(apply_Gamma(g1, g2, coeffs8).ravel(), oracle8.Gamma(g1.ravel(), g2.ravel(), coeffs8)) < 1e-6


def test_K_symmetric(coeffs32):
    rng = np.random.default_rng(5)
    for _ in range(3):
        f, g = smooth_random(coeffs32.grid, rng), smooth_random(coeffs32.grid, rng)
        lhs = np.vdot(apply_K(f, coeffs32), g)
        rhs = np.vdot(f, apply_K(g, coeffs32))
        assert abs(lhs - rhs) < 1e-8 * max(abs(lhs), abs(rhs))


def test_zero_inputs(coeffs16):
    z = np.zeros(coeffs16.grid.vshape)
    f = smooth_random(coeffs16.grid, np.random.default_rng(6))
    assert not apply_A(z, coeffs16).any()
    assert not apply_K(z, coeffs16).any()
    assert not apply_Gamma(z, f, coeffs16).any()
    assert not apply_Gamma(f, z, coeffs16).any()
    assert sigma_norm(z, coeffs16) == 0.0


def test_K_real_output(coeffs16):
    f = smooth_random(coeffs16.grid, np.random.default_rng(7)).astype(complex)
    out = apply_K(f, coeffs16)
    assert np.max(np.abs(out.imag)) < 1e-12 * np.max(np.abs(out))


def test_linearity(coeffs16):
    rng = np.random.default_rng(8)
    f, g = smooth_random(coeffs16.grid, rng), smooth_random(coeffs16.grid, rng)
    al, be = 0.7, -1.3
    for op in (apply_A, apply_K, apply_L):
        lhs = op(al * f + be * g, coeffs16)
        rhs = al * op(f, coeffs16) + be * op(g, coeffs16)
        assert np.max(np.abs(lhs - rhs)) < 1e-12 * np.max(np.abs(rhs))
    lhs = apply_Gamma(al * f, g, coeffs16)
    assert np.max(np.abs(lhs - al * apply_Gamma(f, g, coeffs16))) < 1e-12 * np.max(np.abs(lhs))


def test_A_of_sqrt_mu_is_minus_K(coeffs32):
    smu = np.broadcast_to(coeffs32.sqrt_mu, coeffs32.grid.vshape).copy()
    a = apply_A(smu, coeffs32)
    k = apply_K(smu, coeffs32)
    g = coeffs32.grid
    assert norm_v(a + k, g) < 1e-6


def test_null_space(coeffs32):
    g = coeffs32.grid
    _, smu = maxwellian(g)
    v1, v2, v3 = g.v
    for chi in (smu, v1 * smu, v2 * smu, v3 * smu, g.vsq * smu):
        chi = np.broadcast_to(chi, g.vshape).copy()
        assert norm_v(apply_L(chi, coeffs32), g) < 1e-4 * norm_v(chi, g)


def test_L_nonnegative_random(coeffs16):
    g = coeffs16.grid
    rng = np.random.default_rng(9)
    for _ in range(100):
        f = smooth_random(g, rng, n_terms=4)
        assert float(integrate_v(apply_L(f, coeffs16) * f, g)) >= 0.0


def test_Gamma_mass_invariant(coeffs32):
    g = coeffs32.grid
    rng = np.random.default_rng(10)
    for _ in range(5):
        f = smooth_random(g, rng)
        m = float(integrate_v(apply_Gamma(f, f, coeffs32) * coeffs32.sqrt_mu, g))
        assert abs(m) < 1e-6 * norm_v(f, g) ** 2


def test_Gamma_with_sqrt_mu_first_is_A(coeffs32):
    g = coeffs32.grid
    smu = np.broadcast_to(coeffs32.sqrt_mu, g.vshape).copy()
    f = smooth_random(g, np.random.default_rng(12))
    lhs = apply_Gamma(smu, f, coeffs32)
    rhs = apply_A(f, coeffs32)
    assert np.max(np.abs(lhs - rhs)) < 1e-6 * np.max(np.abs(rhs))


def test_sigma_norm_homogeneous_and_coercive(coeffs16):
    g = coeffs16.grid
    rng = np.random.default_rng(13)
    ratios = []
    w = np.sqrt(1 + g.vsq)
    for _ in range(100):
        f = smooth_random(g, rng, n_terms=3)
        s = sigma_norm(f, coeffs16, ell=1.0)
        assert abs(sigma_norm(-2.5 * f, coeffs16, ell=1.0) - 2.5 * s) < 1e-12 * s
        grad = np.stack(grad_v(f, g))
        ref = norm_v(w ** 0.5 * f, g) + norm_v(w ** -0.5 * np.sqrt(np.sum(grad ** 2, axis=0)), g)
        ratios.append(s / ref)
    # measured constant c of |f|_{sigma,ell} >= c (||<v>^{l-1/2} f|| + ||<v>^{l-3/2} grad f||)
    assert min(ratios) > 0.1


def test_shape_errors(coeffs16):
    with pytest.raises(ShapeError):
        apply_L(np.zeros((4, 4, 4)), coeffs16)
    with pytest.raises(ShapeError):
        apply_Gamma(np.zeros(coeffs16.grid.vshape), np.zeros((4, 4, 4)), coeffs16)


def test_fallback_matches_extension(coeffs16):
    from vplsim import kernels
    if not kernels.HAVE_EXT:
        pytest.skip("compiled core not built")
    g = coeffs16.grid
    rng = np.random.default_rng(14)
    f = smooth_random(g, rng)
    from vplsim.collision import hessian_v
    dg, hg = hessian_v(f, g)
    a = coeffs16.sigma_ij
    z = coeffs16.div_sigma - coeffs16.quad_form
    ext = kernels.second_order(a, g.v_axes, f, dg, hg, z, use_ext=True)
    py = kernels.second_order(a, g.v_axes, f, dg, hg, z, use_ext=False)
    assert np.max(np.abs(ext - py)) < 1e-13 * np.max(np.abs(py))
