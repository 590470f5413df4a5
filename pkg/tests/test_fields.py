import numpy as np
import pytest

from vplsim.config import RunConfig, apply_overrides
from vplsim.dynamics import controls_from_config, initial_state, step
from vplsim.errors import MeanError, RegimeError, TagError
from vplsim.fields import (compute_density, compute_moment, dt_phi, field_energy, field_physical, guo_inverse,
                           guo_transform, modes_to_physical, solve_poisson)
from vplsim.spectral_core import Distribution, GridSpec, enforce_reality, to_physical

PI32 = np.pi ** 1.5


@pytest.fixture(scope="module")
def g1():
    # dv = 0.375 keeps trapezoidal aliasing of Gaussian moments below 1e-15
    return GridSpec(d_x=1, K_max=2, N_v=32, V_max=6.0)


def _mode1(grid, prof):
    vals = np.zeros(grid.shape, dtype=complex)
    vals[grid.index_of((1,))] = prof
    return Distribution(grid, vals)


def test_density_examples(g1):
    assert not compute_density(Distribution.zeros(g1)).any()
    smu = np.broadcast_to(np.exp(-0.5 * g1.vsq), g1.vshape)
    rho = compute_density(_mode1(g1, smu))
    assert abs(rho[g1.index_of((1,))] - PI32) < 1e-12 * PI32
    rho = compute_density(_mode1(g1, g1.v[0] * smu))
    assert abs(rho[g1.index_of((1,))]) < 1e-14


def test_poisson_examples(g1):
    rho = np.zeros(g1.mode_shape, dtype=complex)
    phi, E = solve_poisson(rho, g1)
    assert not E.any() and not phi.any()
    rho[g1.index_of((1,))] = 1.0
    phi, E = solve_poisson(rho, g1)
    assert E[0][g1.index_of((1,))] == -1j
    assert phi[g1.zero_index] == 0 and E[0][g1.zero_index] == 0
    rho[g1.zero_index] = 1.0
    with pytest.raises(MeanError):
        solve_poisson(rho, g1)


def test_parseval(g1):
    rng = np.random.default_rng(1)
    rho = enforce_reality(rng.normal(size=g1.mode_shape) + 1j * rng.normal(size=g1.mode_shape), g1)
    rho[g1.zero_index] = 0
    fe = field_energy(rho, g1)
    _, E = solve_poisson(rho, g1)
    Ep = field_physical(E, g1)
    assert abs(fe - (2 * np.pi) * np.mean(Ep ** 2)) < 1e-12 * fe
    for d in (2, 3):
        g = GridSpec(d_x=d, K_max=2, N_v=8)
        r = enforce_reality(rng.normal(size=g.mode_shape) + 1j * rng.normal(size=g.mode_shape), g)
        r[g.zero_index] = 0
        _, E = solve_poisson(r, g)
        Ep = modes_to_physical(E, g)
        fe = field_energy(r, g)
        assert abs(fe - (2 * np.pi) ** d * np.mean(np.sum(Ep ** 2, axis=0))) < 1e-12 * fe


def test_moment_examples(g1):
    smu = np.broadcast_to(np.exp(-0.5 * g1.vsq), g1.vshape)
    M = compute_moment(_mode1(g1, smu))
    assert np.max(np.abs(M[:, g1.index_of((1,))])) < 1e-14
    M = compute_moment(_mode1(g1, g1.v[0] * smu))
    assert abs(M[0][g1.index_of((1,))] - 0.5 * PI32) < 1e-12


def test_dt_phi_examples(g1):
    M = np.zeros((3,) + g1.mode_shape, dtype=complex)
    assert not dt_phi(M, g1).any()
    M[0][g1.index_of((1,))] = 1.0
    assert dt_phi(M, g1)[g1.index_of((1,))] == -1j


@pytest.fixture(scope="module")
def trajectory():
    cfg = apply_overrides(RunConfig(), ["grid.K_max=2", "grid.N_v=16", "physics.epsilon=0.05", "stepper.dt=0.001"])
    state = initial_state(cfg)
    controls = controls_from_config(cfg)
    for _ in range(20):
        state = step(state, controls)
    back = step(state, controls.__class__(**{**controls.__dict__, "dt": -controls.dt}))
    fwd = step(state, controls)
    return state, back, fwd, controls.dt


def test_continuity_residual(trajectory):
    mid, back, fwd, dt = trajectory
    g = mid.grid
    drho = (compute_density(fwd.f) - compute_density(back.f)) / (2 * dt)
    M = compute_moment(mid.f)
    div = 1j * g.k[0] * M[0]
    assert np.max(np.abs(drho + div)) < 1e-4


def test_dt_phi_matches_time_difference(trajectory):
    mid, back, fwd, dt = trajectory
    g = mid.grid
    phi_f, _ = solve_poisson(compute_density(fwd.f), g)
    phi_b, _ = solve_poisson(compute_density(back.f), g)
    fd = (phi_f - phi_b) / (2 * dt)
    assert np.max(np.abs(fd - dt_phi(compute_moment(mid.f), g))) < 1e-4


def _manufactured(grid):
    v1 = grid.v[0]
    smu = np.exp(-0.5 * grid.vsq)
    vals = np.zeros(grid.shape, dtype=complex)
    vals[grid.index_of((1,))] = 0.02 * (1 + v1) * smu
    vals[grid.index_of((-1,))] = 0.02 * (1 + v1) * smu
    vals[grid.index_of((2,))] = 0.01j * v1 * smu
    vals[grid.index_of((-2,))] = -0.01j * v1 * smu
    phi = np.zeros(grid.mode_shape, dtype=complex)
    phi[grid.index_of((1,))] = 1e-3
    phi[grid.index_of((-1,))] = 1e-3
    return Distribution(grid, vals), phi


def test_guo_identity_and_round_trip():
    g = GridSpec(d_x=1, K_max=8, N_v=16)
    f, phi = _manufactured(g)
    same = guo_transform(f, np.zeros(g.mode_shape))
    assert np.max(np.abs(same.values - f.values)) < 1e-15
    back = guo_inverse(guo_transform(f, phi), phi)
    assert back.tag == "f"
    assert np.max(np.abs(back.values - f.values)) < 1e-12 * np.max(np.abs(f.values))


def test_guo_tags_and_regime():
    g = GridSpec(d_x=1, K_max=2, N_v=8)
    f = Distribution.zeros(g)
    with pytest.raises(TagError):
        guo_inverse(f, np.zeros(g.mode_shape))
    with pytest.raises(TagError):
        compute_density(Distribution.zeros(g, "g"))
    phi = np.zeros(g.mode_shape, dtype=complex)
    phi[g.index_of((1,))] = phi[g.index_of((-1,))] = 0.8
    with pytest.raises(RegimeError):
        guo_transform(f, phi)


def test_guo_transport_structure():
    """e^phi (v.grad_x f - E.v f) equals v.grad_x g for g = e^phi f."""
    g = GridSpec(d_x=1, K_max=8, N_v=16)
    f, phi = _manufactured(g)
    gg = guo_transform(f, phi)
    k = g.k[0].reshape(-1, 1, 1, 1)
    v1 = g.v[0]
    E = -1j * g.k[0] * phi
    ephi = np.exp(to_physical(phi, g)).reshape(-1, 1, 1, 1)
    Ep = to_physical(E, g).reshape(-1, 1, 1, 1)
    lhs = ephi * (v1 * to_physical(1j * k * f.values, g) - Ep * v1 * to_physical(f.values, g))
    rhs = v1 * to_physical(1j * k * gg.values, g)
    assert np.max(np.abs(lhs - rhs)) < 1e-6
