"""Observables: conservation, mode norms, damping fits, hypocoercivity energy, weights."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .collision import sigma_density
from .equilibrium import compute_coefficients, maxwellian
from .errors import BlowupError, ConsistencyError, FitError, GuardError, NotReachedError, ShapeError
from .fields import compute_density, field_energy, guo_inverse, modes_to_physical, solve_poisson
from .spectral_core import Distribution, GridSpec, dv_axis, integrate_v, norm_v, norm_xv

ELL_GUARD = 8.0
PARSEVAL_TOL = 1e-10
TRUNCATION_NOTE = "vector-field diagnostics truncated at first order (n = 0 energy, Y and grad_x only)"


def _raw(f: Distribution, phi=None) -> Distribution:
    if f.tag != "g":
        return f
    if phi is None:
        from .dynamics import compute_fields
        phi = compute_fields(f).phi
    return guo_inverse(f, phi)


# -- conservation ---------------------------------------------------------------

def conservation_report(state) -> tuple[float, np.ndarray, float]:
    """``(mass, momentum, energy)`` with energy = kinetic moment + ``||E||^2``."""
    f = _raw(state.f, getattr(state.fields, "phi", None))
    grid = f.grid
    _, smu = maxwellian(grid)
    f0 = f.values[grid.zero_index].real
    vol = (2.0 * np.pi) ** grid.d_x
    mass = vol * float(integrate_v(f0 * smu, grid))
    mom = np.array([vol * float(integrate_v(f0 * (va * smu), grid)) for va in grid.v])
    kin = vol * float(integrate_v(f0 * (grid.vsq * smu), grid))
    return mass, mom, kin + field_energy(compute_density(f), grid)


def drift_scales(f_in: Distribution, E_sq: float) -> tuple[float, np.ndarray, float]:
    """Cauchy-Schwarz bounds on |mass|, |momentum_j|, |energy| for data of the size of ``f_in``."""
    grid = f_in.grid
    _, smu = maxwellian(grid)
    nf = norm_xv(f_in.values, grid) * np.sqrt((2.0 * np.pi) ** grid.d_x)

    def bound(w):
        return nf * norm_v(np.broadcast_to(w, grid.vshape), grid)

    return bound(smu), np.array([bound(va * smu) for va in grid.v]), bound(grid.vsq * smu) + E_sq


def nonzero_mode_norm(f: Distribution) -> float:
    vals = f.values.copy()
    vals[f.grid.zero_index] = 0.0
    return norm_xv(vals, f.grid)


def trajectory_distance(fA: Distribution, fB: Distribution) -> float:
    if fA.grid != fB.grid or fA.values.shape != fB.values.shape:
        raise ShapeError("trajectories live on different grids")
    return norm_xv(fA.values - fB.values, fA.grid)


# -- enhanced dissipation weights -------------------------------------------------

def iota_max(ell: float) -> int:
    return int(np.floor(ell / 3.0)) + 1


def weights(t: float, kappa0: float, nu: float, ell: float) -> np.ndarray:
    """``w_iota(t) = (kappa0 nu^{1/3} (1+t))^{iota/2}`` for ``iota = 0..[ell/3]+1``."""
    base = kappa0 * nu ** (1.0 / 3.0) * (1.0 + t)
    return np.array([base ** (0.5 * i) for i in range(iota_max(ell) + 1)])


def lambda_t(t: float, lam_inf: float, delta: float, a: float) -> float:
    return lam_inf + delta / (1.0 + t) ** a


def lambda_rate(t: float, lam_inf: float, delta: float, a: float) -> float:
    """``lambda'(t)/lambda(t)``."""
    return -a * delta * (1.0 + t) ** (-a - 1.0) / lambda_t(t, lam_inf, delta, a)


# -- hypocoercivity energy -------------------------------------------------------

@dataclass
class HypoParams:
    ell: float = 4.0
    kappa: float = 0.1
    A0: float = 4.0
    nu: float = 0.0
    t: float = 0.0
    lam_inf: float = 0.1
    delta: float = 0.1
    a: float = 0.05


_MULTI2 = ((0, 0), (0, 1), (0, 2), (1, 1), (1, 2), (2, 2))


def _vweight(grid: GridSpec, power: float) -> np.ndarray:
    return (1.0 + grid.vsq) ** (0.5 * power)


def hypo_energy(g: Distribution, params: HypoParams, coeffs=None) -> tuple[float, float, float]:
    """n = 0 hypocoercivity energy, its dissipation functional, and the CK-type sum.

    Returns ``(E, D, CK)``; ``CK = -2 (lambda'/lambda) S`` where ``S`` collects the
    weighted squared norms of ``E`` without the cross term.
    """
    p = params
    if p.ell > ELL_GUARD:
        raise GuardError(f"ell = {p.ell} exceeds the weight guard {ELL_GUARD}")
    grid = g.grid
    if coeffs is None:
        coeffs = compute_coefficients(grid)
    vol = (2.0 * np.pi) ** grid.d_x * grid.cell
    w = lambda power: _vweight(grid, power)
    l = p.ell
    k1 = p.kappa * p.nu ** (1.0 / 3.0)
    k2 = p.kappa ** 2 * p.nu ** (2.0 / 3.0)
    nu23 = p.nu ** (2.0 / 3.0)
    tw = 1.0 / (1.0 + p.t)
    sig_w = {lv: (1.0 + grid.vsq) ** lv for lv in (l, l - 2, l - 4)}

    def l2(arr, power):
        return float(np.sum(np.abs(arr * w(power)) ** 2)) * vol

    def sig(arr, lv):
        return float(np.sum(sig_w[lv] * sigma_density(arr, coeffs))) * vol

    E_x0 = E_x1 = E_v1 = E_v2 = cross = Yn = 0.0
    D_x = D_kx = D_v = D_Y = 0.0
    for idx in np.ndindex(*grid.mode_shape):
        gk = g.values[idx]
        if not np.any(gk):
            continue
        kv = [grid.k[a].ravel()[idx[a]] for a in range(grid.d_x)] + [0, 0, 0][:3 - grid.d_x]
        dv = [dv_axis(gk, a, grid) for a in range(3)]
        dx = [1j * kv[a] * gk for a in range(3)]
        E_x0 += l2(gk, l)
        E_x1 += sum(l2(dx[a], l - 2) for a in range(grid.d_x))
        E_v1 += sum(l2(dv[a], l - 2) for a in range(3))
        cross += sum(float(np.real(np.vdot(dx[a], w(2 * l - 4) * dv[a]))) * vol for a in range(grid.d_x))
        Y = [dv[a] + p.t * dx[a] for a in range(3)]
        Yn += sum(l2(Y[a], l - 2) for a in range(3))
        hs = [dv_axis(dv[j], i, grid) for i, j in _MULTI2]
        E_v2 += sum(l2(h, l - 4) for h in hs)
        if p.nu > 0.0:
            D_x += sig(gk, l) + sum(sig(dx[a], l - 2) for a in range(grid.d_x))
            D_v += k2 * sum(sig(dv[a], l - 2) for a in range(3)) + k2 * k2 * sum(sig(h, l - 4) for h in hs)
            D_Y += sum(sig(Y[a], l - 2) for a in range(3))
        D_kx += sum(l2(dx[a], l - 2) for a in range(grid.d_x))
    S = p.A0 * (E_x0 + E_x1) + k2 * E_v1 + k2 * k2 * E_v2 + p.kappa ** 2 * tw ** 2 * Yn
    E_val = S + 2.0 * k1 * cross
    D_val = p.A0 * nu23 * D_x + p.kappa * D_kx + nu23 * D_v + p.kappa ** 2 * nu23 * tw ** 2 * D_Y
    ck = -2.0 * lambda_rate(p.t, p.lam_inf, p.delta, p.a) * S
    return float(E_val), float(D_val), float(ck)


# -- fits -----------------------------------------------------------------------

def _local_maxima(t: np.ndarray, y: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Interior samples not below either neighbour, refined by a parabola through log values."""
    ts, ys = [], []
    for i in range(1, len(y) - 1):
        if y[i] >= y[i - 1] and y[i] >= y[i + 1] and y[i] > 0:
            a, b, c = np.log(y[i - 1:i + 2]) if np.all(y[i - 1:i + 2] > 0) else (0.0, 0.0, 0.0)
            den = a - 2.0 * b + c
            if den < 0:
                s = 0.5 * (a - c) / den
                h = t[i + 1] - t[i]
                ts.append(t[i] + s * h)
                ys.append(np.exp(b - 0.25 * (a - c) * s))
            else:
                ts.append(t[i])
                ys.append(y[i])
    return np.array(ts), np.array(ys)


def damping_fit(t, E, window: tuple[float, float] | None = None) -> tuple[float, float]:
    """Decay rate of the local-maxima envelope: ``(gamma, R^2)``."""
    t = np.asarray(t, dtype=float)
    E = np.abs(np.asarray(E, dtype=float))
    if window is not None:
        m = (t >= window[0]) & (t <= window[1])
        t, E = t[m], E[m]
    tm, ym = _local_maxima(t, E)
    if tm.size < 4:
        raise FitError(f"only {tm.size} envelope maxima in the fit window")
    ly = np.log(ym)
    A = np.vstack([tm, np.ones_like(tm)]).T
    coef, *_ = np.linalg.lstsq(A, ly, rcond=None)
    resid = ly - A @ coef
    ss_tot = float(np.sum((ly - ly.mean()) ** 2))
    r2 = 1.0 if ss_tot == 0.0 else 1.0 - float(np.sum(resid ** 2)) / ss_tot
    return float(-coef[0]), r2


def ed_halflife(t, series) -> float:
    """First time the series reaches half its initial value (linear interpolation)."""
    t = np.asarray(t, dtype=float)
    s = np.asarray(series, dtype=float)
    if s.size == 0:
        raise NotReachedError("empty series")
    target = 0.5 * s[0]
    below = np.nonzero(s <= target)[0]
    if below.size == 0:
        raise NotReachedError("series never fell to half its initial value")
    j = int(below[0])
    if j == 0:
        return float(t[0])
    t0, t1, s0, s1 = t[j - 1], t[j], s[j - 1], s[j]
    return float(t0 + (s0 - target) / (s0 - s1) * (t1 - t0))


def physical_field_energy(rho: np.ndarray, grid: GridSpec) -> float:
    """``||E||^2`` from Poisson's field sampled on the collocation grid (exact for band-limited E)."""
    _, E = solve_poisson(rho, grid)
    Ep = modes_to_physical(E, grid)
    return float((2.0 * np.pi) ** grid.d_x * np.mean(np.sum(Ep ** 2, axis=0)))


# -- records ----------------------------------------------------------------------

@dataclass
class DiagnosticsRecord:
    t: float
    mass: float
    momentum: np.ndarray
    kinetic_energy: float
    field_energy: float
    E_L2: float
    f_neq_L2: float
    f_L2: float
    rho_abs: np.ndarray
    hypo_E0: float
    sigma_D0: float
    ck: float
    weights: np.ndarray
    lambda_t: float
    mass_drift: float = 0.0
    momentum_drift: float = 0.0
    energy_drift: float = 0.0
    extra: dict = field(default_factory=dict)

    @property
    def energy(self) -> float:
        return self.kinetic_energy + self.field_energy

    def row(self) -> list:
        return ([self.t, self.mass, *self.momentum, self.kinetic_energy, self.field_energy, self.E_L2,
                 self.f_neq_L2, self.f_L2, *self.rho_abs, self.hypo_E0, self.sigma_D0, self.ck, *self.weights,
                 self.lambda_t, self.mass_drift, self.momentum_drift, self.energy_drift])


def record_header(grid: GridSpec, ell: float) -> list:
    modes = [idx for idx in grid.half_modes() if idx != grid.zero_index]
    rho = ["rho_abs_" + "_".join(str(i - grid.K_max) for i in idx) for idx in modes]
    w = [f"w_{i}" for i in range(iota_max(ell) + 1)]
    return (["t", "mass", "momentum_1", "momentum_2", "momentum_3", "kinetic_energy", "field_energy", "E_L2",
             "f_neq_L2", "f_L2"] + rho + ["hypo_E0", "sigma_D0", "CK", *w, "lambda_t", "mass_drift",
                                          "momentum_drift", "energy_drift"])


def make_record(state, config, ref: DiagnosticsRecord | None, hypo: bool = True) -> DiagnosticsRecord:
    """Diagnostics of a simulation state; drifts are relative to ``ref`` (None at t = 0)."""
    grid = state.grid
    dg = config.diagnostics
    f = _raw(state.f, state.fields.phi)
    mass, mom, energy = conservation_report(state)
    rho = compute_density(f)
    fe = field_energy(rho, grid)
    fe_phys = physical_field_energy(rho, grid)
    if not (np.isfinite(fe) and np.isfinite(mass) and np.isfinite(energy)):
        raise BlowupError(f"non-finite diagnostics at t = {state.t}")
    if abs(fe - fe_phys) > PARSEVAL_TOL * max(fe, fe_phys, np.finfo(float).tiny):
        raise ConsistencyError(f"field energy {fe!r} disagrees with physical-space value {fe_phys!r}")
    modes = [idx for idx in grid.half_modes() if idx != grid.zero_index]
    if hypo:
        hp = HypoParams(dg.ell, dg.kappa, dg.A0, state.nu, state.t, dg.lam_inf, dg.delta, dg.a)
        hE, hD, ck = hypo_energy(state.f, hp, state.coeffs)
    else:
        hE = hD = ck = float("nan")
    rec = DiagnosticsRecord(
        t=float(state.t), mass=mass, momentum=mom, kinetic_energy=energy - fe, field_energy=fe,
        E_L2=float(np.sqrt(fe)), f_neq_L2=nonzero_mode_norm(f), f_L2=norm_xv(f.values, grid),
        rho_abs=np.array([abs(rho[idx]) for idx in modes]), hypo_E0=hE, sigma_D0=hD, ck=ck,
        weights=weights(state.t, dg.kappa0, state.nu, dg.ell), lambda_t=lambda_t(state.t, dg.lam_inf, dg.delta, dg.a))
    if ref is None:
        ref = rec
        rec.extra["scales"] = drift_scales(f, fe)
    sm, sp, se = ref.extra["scales"]
    rec.extra["scales"] = ref.extra["scales"]
    rec.mass_drift = abs(rec.mass - ref.mass) / sm if sm > 0 else 0.0
    rec.momentum_drift = float(np.max(np.abs(rec.momentum - ref.momentum) / np.where(sp > 0, sp, 1.0)))
    rec.energy_drift = abs(rec.energy - ref.energy) / se if se > 0 else 0.0
    return rec
