"""Experiment orchestrators over library calls: collisionless limit, enhanced dissipation, damping rate."""
from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .diagnostics import damping_fit, ed_halflife, field_energy, nonzero_mode_norm, trajectory_distance
from .dynamics import (FrozenTrajectory, controls_from_config, evolve_mode, initial_state, random_band_coefficients,
                       run_homogeneous, step, velocity_profile)
from .equilibrium import CollisionCoefficients, compute_coefficients, project_P0
from .errors import NotReachedError
from .spectral_core import Distribution, make_grid, norm_v
from .volterra import compute_kernels, dispersion_root, kernel_setup, linear_grid


def _with_nu(config, nu: float, **physics):
    return replace(config, physics=replace(config.physics, nu=float(nu), **physics))


def _loglog_slope(x, y) -> float:
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    m = (x > 0) & (y > 0)
    if m.sum() < 2:
        return float("nan")
    return float(np.polyfit(np.log(x[m]), np.log(y[m]), 1)[0])


# -- collisionless limit -----------------------------------------------------------

@dataclass
class LimitStudy:
    rows: list
    fits: list
    window: float
    in_window: bool


def _trajectory(config, nu: float, T: float, every: int, coeffs):
    state = initial_state(_with_nu(config, nu), coeffs)
    controls = controls_from_config(config)
    n = int(round(T / controls.dt))
    out = [(0.0, state.f)]
    for i in range(1, n + 1):
        state = step(state, controls)
        if i % every == 0 or i == n:
            out.append((state.t, state.f))
    return out


def experiment_limit_study(config, nu_list, T: float, coeffs: CollisionCoefficients | None = None,
                           c: float | None = None) -> LimitStudy:
    """Distances ``||f^nu(t) - f^0(t)||`` from identical initial data.

    The window ``T <= c min(nu)^{-1/3}`` is reported, not enforced.
    """
    ex = config.experiment
    c = ex.c if c is None else c
    coeffs = coeffs if coeffs is not None else compute_coefficients(make_grid(config))
    every = max(int(ex.sample_every), 1)
    positive = [nu for nu in nu_list if nu > 0]
    window = c * min(positive) ** (-1.0 / 3.0) if positive else float("inf")
    ref = _trajectory(config, 0.0, T, every, coeffs)
    rows, fits = [], []
    lo, hi = ex.fit_window
    for nu in nu_list:
        traj = ref if nu == 0 else _trajectory(config, nu, T, every, coeffs)
        ts, ds = [], []
        for (t, f), (_, f0) in zip(traj, ref):
            d = trajectory_distance(f, f0)
            rows.append((float(nu), float(t), d))
            ts.append(t)
            ds.append(d)
        ts, ds = np.array(ts), np.array(ds)
        sel = (ts >= lo - 1e-12) & (ts <= hi + 1e-12)
        probe = float(np.interp(ex.t_probe, ts, ds)) if ts[-1] >= ex.t_probe else float("nan")
        fits.append({"nu": float(nu), "slope": _loglog_slope(ts[sel], ds[sel]), "distance_at_probe": probe})
    return LimitStudy(rows, fits, window, T <= window)


def limit_ratio(study: LimitStudy) -> list:
    """``(nu_a, nu_b, d_a/d_b, nu_a/nu_b)`` for consecutive entries at the probe time."""
    out = []
    fs = [f for f in study.fits if f["nu"] > 0]
    for a, b in zip(fs, fs[1:]):
        out.append((a["nu"], b["nu"], a["distance_at_probe"] / b["distance_at_probe"], a["nu"] / b["nu"]))
    return out


# -- enhanced dissipation ----------------------------------------------------------

@dataclass
class EdSweep:
    rows: list
    exponent: float
    series: dict = field(default_factory=dict)


ED_HORIZON = 12.0


def ed_horizon(config, nu: float) -> float:
    """Run length for a halflife search: ``T_end``, or ``12 nu^{-1/3}`` when that is longer."""
    T = float(config.stepper.T_end)
    return max(T, ED_HORIZON * nu ** (-1.0 / 3.0)) if nu > 0 else T


def halflife_run(config, nu: float, coeffs=None, T_max: float | None = None):
    """Linear full-stepper run until ``||f_neq||`` halves; returns ``(halflife, times, series)``."""
    cfg = _with_nu(config, nu, nonlinear=False)
    state = initial_state(cfg, coeffs)
    controls = controls_from_config(cfg)
    T_max = ed_horizon(cfg, nu) if T_max is None else T_max
    n = int(round(T_max / controls.dt))
    times = [0.0]
    series = [nonzero_mode_norm(state.f)]
    for _ in range(n):
        state = step(state, controls)
        times.append(state.t)
        series.append(nonzero_mode_norm(state.f))
        if series[-1] <= 0.5 * series[0]:
            break
    return ed_halflife(times, series), np.array(times), np.array(series)


def halflife_mode(config, nu: float, coeffs=None, T_max: float | None = None):
    """Halflife of ``||f_neq(t)||`` from the single-mode solver on the [linear] grid.

    The linear flow keeps modes orthogonal, so ``||f_neq(t)||^2 = sum_k |c_k|^2
    ||S_|k|(t) h||^2`` with ``h`` the configured velocity profile and ``c_k`` the
    mode amplitudes of the initial family (one mode for single_mode).  The
    slowest |k| runs until it halves; the others run to the same time.
    """
    lin = config.linear
    if coeffs is None:
        coeffs = compute_coefficients(linear_grid(lin.n_par, lin.n_perp, config.grid.V_max))
    grid = coeffs.grid
    h = velocity_profile(config.physics.chi, float(config.physics.chi_beta), grid).astype(np.complex128)
    T_max = ed_horizon(config, nu) if T_max is None else T_max
    weights = _mode_weights(config)
    n0 = norm_v(h, grid)
    subst = int(config.stepper.collision_substeps)
    order = sorted(weights)
    obs = lambda x: norm_v(x, grid)
    times, first = evolve_mode((order[0], 0.0, 0.0), h, float(nu), T_max, float(lin.dt), coeffs,
                               observe=obs, stop=lambda s: s <= 0.5 * n0, substeps=subst)
    total = weights[order[0]] * np.array(first) ** 2
    for kk in order[1:]:
        _, ser = evolve_mode((kk, 0.0, 0.0), h, float(nu), float(times[-1]), float(lin.dt), coeffs,
                             observe=obs, substeps=subst)
        total = total + weights[kk] * np.array(ser[:times.size]) ** 2
    series = np.sqrt(total)
    return ed_halflife(times, series), times, series


def _mode_weights(config) -> dict:
    """``|k| -> sum |c_k|^2`` for the configured initial family."""
    ph = config.physics
    if ph.family == "single_mode":
        return {float(np.linalg.norm(np.atleast_1d(ph.k0))): 1.0}
    grid = make_grid(config)
    out = {}
    for idx, c in random_band_coefficients(config, grid):
        kk = round(float(np.linalg.norm(np.array(idx) - grid.K_max)), 12)
        out[kk] = out.get(kk, 0.0) + abs(c) ** 2
    return out


def experiment_ed_sweep(config, nu_list, coeffs=None, T_max: float | None = None) -> EdSweep:
    """Halflife of ``||f_neq||`` per nu (linear dynamics) and the fitted exponent of halflife vs nu.

    ``experiment.ed_solver`` picks the single-mode solver ("mode", coefficients on
    the [linear] grid) or the full linearized stepper ("full", the run grid).
    """
    mode = config.experiment.ed_solver == "mode"
    if coeffs is None:
        lin = config.linear
        grid = linear_grid(lin.n_par, lin.n_perp, config.grid.V_max) if mode else make_grid(config)
        coeffs = compute_coefficients(grid)
    runner = halflife_mode if mode else halflife_run
    rows, series = [], {}
    for nu in nu_list:
        try:
            hl, t, s = runner(config, nu, coeffs, T_max)
            rows.append((float(nu), hl, "ok"))
            series[float(nu)] = (t, s)
        except NotReachedError as exc:
            rows.append((float(nu), float("nan"), f"skipped: {exc}"))
    good = [(nu, hl) for nu, hl, status in rows if status == "ok" and nu > 0]
    exponent = _loglog_slope([g[0] for g in good], [g[1] for g in good]) if len(good) >= 2 else float("nan")
    return EdSweep(rows, exponent, series)


# -- Landau damping -------------------------------------------------------------

@dataclass
class DampingResult:
    times: np.ndarray
    E_L2: np.ndarray
    gamma_fit: float
    r2: float
    root: complex

    @property
    def gamma_root(self) -> float:
        return float(self.root.imag)


def electric_series(config, coeffs=None):
    """``(t, ||E(t)||)`` of the linearized run (nonlinear terms off)."""
    cfg = replace(config, physics=replace(config.physics, nonlinear=False))
    state = initial_state(cfg, coeffs)
    controls = controls_from_config(cfg)
    n = int(round(float(cfg.stepper.T_end) / controls.dt))
    ts = [0.0]
    es = [np.sqrt(field_energy(state.fields.rho, state.grid))]
    for _ in range(n):
        state = step(state, controls)
        ts.append(state.t)
        es.append(np.sqrt(field_energy(state.fields.rho, state.grid)))
    return np.array(ts), np.array(es)


def experiment_damping(config, coeffs=None, window=None, kernel_coeffs=None) -> DampingResult:
    """Envelope fit of ``||E(t)||`` against the dispersion root of the same (k0, nu)."""
    window = tuple(config.experiment.damping_window) if window is None else window
    t, E = electric_series(config, coeffs)
    gamma, r2 = damping_fit(t, E, window)
    k0 = np.atleast_1d(config.physics.k0)
    lin = config.linear
    grid, T_K = kernel_setup(k0, config.physics.nu, lin.n_par, lin.n_perp, config.grid.V_max, lin.T_K)
    if kernel_coeffs is None or kernel_coeffs.grid != grid:
        kernel_coeffs = compute_coefficients(grid)
    tg = lin.dt * np.arange(int(round(T_K / lin.dt)) + 1) if lin.T_K > 0 else None
    table = compute_kernels(k0, config.physics.nu, t_grid=tg, dt=lin.dt, coeffs=kernel_coeffs)
    root = dispersion_root(table)
    return DampingResult(t, E, gamma, r2, root)


# -- quasi-linear split ------------------------------------------------------------

@dataclass
class QuasilinearResult:
    times: np.ndarray
    f0L_norm: np.ndarray
    mean_deviation: np.ndarray
    f_neq: np.ndarray


def experiment_quasilinear(config, coeffs=None) -> QuasilinearResult:
    """Evolve ``f0^L`` homogeneously and the remainder with the frozen-coefficient coupling.

    The x-average of the initial data is ``homogeneous_initial(config)`` on top of
    the admissibility correction; ``f0^L(0)`` is that homogeneous part.  Reports
    ``||x-average of (f0^L + f~) - f0^L||`` over time.
    """
    grid = make_grid(config)
    coeffs = coeffs if coeffs is not None else compute_coefficients(grid)
    state = initial_state(config, coeffs)
    controls = controls_from_config(config)
    T = float(config.stepper.T_end)
    z = grid.zero_index
    f0 = homogeneous_initial(config, grid)
    hom = run_homogeneous(f0, coeffs, state.nu, T, controls.dt, nonlinear=controls.nonlinear,
                          sample_every=1, substeps=controls.substeps(state.nu, coeffs))
    bg = FrozenTrajectory([s[0] for s in hom.samples], [s[1] for s in hom.samples], coeffs, 10.0 * controls.dt)
    rest = state.f.values.copy()
    state = replace(state, f=Distribution(grid, rest, state.f.tag), background=bg)
    every = max(int(config.stepper.diag_every), 1)
    n = int(round(T / controls.dt))
    ts, f0n, dev, fneq = [0.0], [norm_v(f0, grid)], [norm_v(rest[z].real, grid)], [nonzero_mode_norm(state.f)]
    for i in range(1, n + 1):
        state = step(state, controls)
        if i % every == 0 or i == n:
            ts.append(state.t)
            f0n.append(norm_v(bg.values_at(state.t), grid))
            dev.append(norm_v(state.f.values[z].real, grid))
            fneq.append(nonzero_mode_norm(state.f))
    return QuasilinearResult(np.array(ts), np.array(f0n), np.array(dev), np.array(fneq))


def homogeneous_initial(config, grid=None) -> np.ndarray:
    """``epsilon chi(v) exp(-beta |v|^2) mu^{1/2}`` with its null-space part removed."""
    grid = make_grid(config) if grid is None else grid
    prof = config.physics.epsilon * velocity_profile(config.physics.chi, config.physics.chi_beta, grid)
    return prof - project_P0(prof, grid)

