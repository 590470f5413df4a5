import numpy as np
import pytest
from scipy import optimize, special

from vplsim.config import RunConfig, apply_overrides
from vplsim.diagnostics import damping_fit
from vplsim.dynamics import controls_from_config, evolve_mode, initial_state, step
from vplsim.equilibrium import compute_coefficients, maxwellian
from vplsim.errors import DomainError, GridError, TailError
from vplsim.fields import compute_density, compute_moment
from vplsim.spectral_core import make_grid, norm_v
from vplsim.volterra import (KernelTable, compute_kernels, dispersion_root, forcing, free_streaming_kernel,
                             kernel_setup, laplace_transform, linear_grid, moment_volterra_check, penrose_margin,
                             reconstruct_density, recurrence_time, resolvent_G, resolvent_residual)

PI32 = np.pi ** 1.5


def laplace_closed_form(z, k=1.0):
    """Fourier-Laplace transform of the collisionless kernel through the Faddeeva function.

    ``int_0^inf t e^{-k^2 t^2/4} e^{i w t} dt = -i sqrt(pi)/k^2 w'(w/k)`` with ``w = -z``.
    """
    x = -np.asarray(z, dtype=complex) / k
    wprime = -2.0 * x * special.wofz(x) + 2j / np.sqrt(np.pi)
    return PI32 * (-1j * np.sqrt(np.pi) / k ** 2) * wprime


@pytest.fixture(scope="module")
def co64():
    return compute_coefficients(linear_grid(64, 16, 6.0))


@pytest.fixture(scope="module")
def table1(co64):
    return resolvent_G(compute_kernels((1,), 0.0, coeffs=co64, dt=0.05))


def _zero_table(n=201, h=0.05):
    t = h * np.arange(n)
    return KernelTable((1, 0, 0), 0.0, t, np.zeros(n, complex), np.zeros((n, 3), complex))


def test_kernel_initial_value_and_closed_form(table1):
    K = table1.K
    assert abs(K[0]) < 1e-14
    ref = free_streaming_kernel(table1.t_grid, (1,))
    peak = np.max(np.abs(ref))
    assert np.max(np.abs(K - ref)) < 1e-6 * peak
    assert table1.meta["H_perp"] < 1e-13


def test_kernel_gaussian_decay_slope(table1):
    t = table1.t_grid
    m = (t >= 2) & (t <= 6)
    slope = np.polyfit(t[m] ** 2, np.log(np.abs(table1.K[m]) / t[m]), 1)[0]
    assert abs(slope + 0.25) < 0.02 * 0.25


def test_kernel_tail_guard(co64):
    with pytest.raises(TailError):
        compute_kernels((1,), 0.0, coeffs=co64, t_grid=0.05 * np.arange(101))


def test_kernel_setup_clears_recurrence():
    for k in (1, 2, 3):
        for nu in (0.0, 1e-2):
            g, T = kernel_setup((k,), nu, 64, 16, 6.0)
            assert recurrence_time((k,), g) >= 1.25 * T


def test_collisional_kernel_efolds_earlier_for_larger_k(co64):
    tg = 0.1 * np.arange(81)
    tstar = []
    for k in (1, 2):
        K = np.abs(compute_kernels((k,), 1e-2, coeffs=co64, t_grid=tg, check_tail=False).K)
        p = int(np.argmax(K))
        tstar.append(tg[p:][K[p:] < K[p] / np.e][0])
    assert tstar[1] < tstar[0]


def test_collisions_beat_phase_mixing(co64):
    g = co64.grid
    _, smu = maxwellian(g)
    h = (g.v[0] * smu).astype(complex)
    nu = 1e-2
    t, n_nu = evolve_mode((1, 0, 0), h, nu, 8.0, 0.1, co64, observe=lambda x: norm_v(x, g))
    _, n_0 = evolve_mode((1, 0, 0), h, 0.0, 8.0, 0.1, co64, observe=lambda x: norm_v(x, g))
    late = t >= nu ** (-1 / 3)
    assert np.all(np.array(n_nu)[late] < np.array(n_0)[late])


def test_laplace_transform(table1):
    L00 = laplace_transform(table1, 0.0, 0.0)
    # trapezoid error O(h^2 K'(0)) at h = 0.05
    assert abs(L00 - 2 * PI32) < 2e-4 * 2 * PI32
    for z in (1.3 - 0.4j, -2.0 - 0.1j, 0.5 + 0j):
        ref = laplace_closed_form(z)
        assert abs(laplace_transform(table1, z.real, z.imag) - ref) < 1e-3 * abs(ref)
    scaled = KernelTable(table1.k, 0.0, table1.t_grid, (2 - 1j) * table1.K, table1.H)
    assert abs(laplace_transform(scaled, 0.7, -0.2) - (2 - 1j) * laplace_transform(table1, 0.7, -0.2)) < 1e-12
    assert laplace_transform(_zero_table(), 0.3, -0.5) == 0
    with pytest.raises(DomainError):
        laplace_transform(table1, 0.0, 0.1)


def test_dispersion_root_matches_faddeeva(table1):
    def resid(p):
        d = 1 + laplace_closed_form(complex(*p))
        return [d.real, d.imag]

    root = dispersion_root(table1)
    exact = complex(*optimize.root(resid, [root.real, root.imag], tol=1e-14).x)
    assert abs(root.real - exact.real) < 2e-3 * exact.real
    assert abs(root.imag - exact.imag) < 2e-2 * exact.imag


def test_penrose_margin(table1, co64):
    lam = np.linspace(-12, 12, 48001)
    exact = np.min(np.abs(1 + laplace_closed_form(lam + 0j)))
    m1, (l1, w1) = penrose_margin(table1)
    assert m1 > 0 and w1 <= 0
    assert abs(m1 - exact) < 0.05 * exact
    m2, _ = penrose_margin(compute_kernels((2,), 0.0, coeffs=co64, dt=0.05))
    assert m2 >= m1 - 0.05
    m0, _ = penrose_margin(_zero_table())
    assert m0 == 1.0


def test_resolvent(table1):
    scale = np.max(np.abs(table1.K))
    assert resolvent_residual(table1, table1.G) < 1e-8 * scale
    assert table1.meta["G_fourier_diff"] < 1e-4
    zero = resolvent_G(_zero_table())
    assert not zero.G.any()


def test_resolvent_decays_at_root_rate(table1):
    """|G| is dominated by the least-damped dispersion root."""
    gamma, r2 = damping_fit(table1.t_grid, np.abs(table1.G), (4.0, table1.T_K))
    root = dispersion_root(table1)
    assert abs(gamma - root.imag) < 0.1 * root.imag and r2 > 0.9


def test_reconstruct_density(table1):
    n = table1.t_grid.size
    assert not reconstruct_density(table1, np.zeros(n)).any()
    N = np.zeros(n, complex)
    N[0] = 1.0
    rho = reconstruct_density(table1, N)
    h = table1.dt
    assert rho[0] == 1.0
    assert np.max(np.abs(rho[1:] - 0.5 * h * table1.G[1:])) < 1e-15
    with pytest.raises(GridError):
        reconstruct_density(table1, np.zeros(n - 1))
    with pytest.raises(GridError):
        reconstruct_density(_zero_table(n), np.zeros(n))
    with pytest.raises(GridError):
        reconstruct_density(table1, np.zeros(n), t=table1.t_grid + 0.01)


def _linearized_run(cfg, co, T):
    """Direct linearized simulation: rho_1(t), M_1(t) and the initial mode-1 profile."""
    s = initial_state(cfg, co)
    c = controls_from_config(cfg)
    i1 = s.grid.index_of((1,))
    sel = (slice(None),) + i1
    fin = s.f.values[i1].copy()
    rho, M = [compute_density(s.f)[i1]], [compute_moment(s.f)[sel]]
    for _ in range(int(round(T / c.dt))):
        s = step(s, c)
        rho.append(compute_density(s.f)[i1])
        M.append(compute_moment(s.f)[sel])
    return np.array(rho), np.array(M), fin


def test_moment_volterra_relation():
    base = apply_overrides(RunConfig(), ["grid.K_max=1", "grid.N_v=[64,16,16]", "physics.nonlinear=false",
                                         "physics.epsilon=0.01"])
    co = compute_coefficients(make_grid(base))
    T = 5.0
    rel = []
    for dt in (0.0125, 0.00625):
        rho, M, fin = _linearized_run(apply_overrides(base, [f"stepper.dt={dt}"]), co, T)
        tg = dt * np.arange(rho.size)
        table = compute_kernels((1,), 0.0, coeffs=co, t_grid=tg, check_tail=False)
        _, Nsf = forcing((1, 0, 0), fin, 0.0, co, tg)
        r = moment_volterra_check(table, rho, M, Nsf)
        rel.append(np.max(r) / np.max(np.linalg.norm(M, axis=1)))
        zero = moment_volterra_check(table, np.zeros_like(rho), np.zeros_like(M), np.zeros_like(Nsf))
        assert not zero.any()
    assert rel[1] < 1e-4
    assert rel[0] / rel[1] >= 1.8
