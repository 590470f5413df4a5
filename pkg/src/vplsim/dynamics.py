"""Time integration: the full system, the homogeneous Landau equation, and per-mode problems.

One step is Strang split as ``T(dt/2) AS(dt/2) C(dt) AS(dt/2) T(dt/2)``:

* ``T`` is exact free streaming,
* ``AS`` is the field-driven flow with E frozen (acceleration and source),
* ``C`` integrates the collision term by SSP-RK3 with substeps.

In the raw unknown the AS flow with frozen E is solved exactly through the
full density ``F = mu + mu^{1/2} f``, which is transported rigidly in v:
``f(v) <- mu^{1/2} expm1(2 v.a - |a|^2) + exp(v.a - |a|^2/2) f(v - a)`` with
``a = E tau``.
"""
from __future__ import annotations

import ast
import math
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np

from .collision import apply_L, gamma_pointwise, mode_fields, sigma_norm
from .equilibrium import (CollisionCoefficients, KernelBasis, compute_coefficients, maxwellian, project_P0,
                          remove_invariants)
from .errors import BlowupError, ConfigError, InterpolationError
from .fields import (FieldState, compute_density, compute_moment, dt_phi, field_energy, field_physical,
                     solve_poisson)
from .spectral_core import (Distribution, GridSpec, check_shift, enforce_reality, from_physical, integrate_v,
                            make_grid, norm_v, norm_xv, shift_physical, to_physical, transport_phase)

RK3_STABILITY = 1.5
BLOWUP_FACTOR = 10.0
PICARD_TOL = 1e-14
PICARD_MAX = 100
AS_TOL = 1e-14
AS_ITER_MAX = 30


@dataclass
class StepControls:
    """Stepper settings.

    ``collision_substeps`` is a floor; the count is raised until
    ``nu lambda_max sum_a (pi/dv_a)^2 dt_c <= 1.5``.
    """

    dt: float = 0.01
    collision_substeps: int = 1
    splitting: str = "strang"
    unknown: str = "f"
    nonlinear: bool = True
    field_coupling: bool = True

    def __post_init__(self):
        if self.splitting != "strang":
            raise ConfigError(f"unknown splitting {self.splitting!r}")
        if self.unknown not in ("f", "g"):
            raise ConfigError(f"unknown must be f or g, got {self.unknown!r}")

    def substeps(self, nu: float, coeffs: CollisionCoefficients, dt: float | None = None) -> int:
        dt = abs(self.dt if dt is None else dt)
        stiff = nu * coeffs.lambda_max * sum((np.pi / d) ** 2 for d in coeffs.grid.dv)
        return max(int(self.collision_substeps), int(math.ceil(stiff * dt / RK3_STABILITY - 1e-12)), 1)


@dataclass
class SimState:
    f: Distribution
    fields: FieldState
    t: float
    step_count: int
    nu: float
    coeffs: CollisionCoefficients
    background: object = None

    @property
    def grid(self) -> GridSpec:
        return self.f.grid


# -- fields for either unknown ---------------------------------------------------

def _solve_fields_g(g: Distribution, t: float) -> tuple[FieldState, np.ndarray]:
    """Fields of ``f = e^{-phi} g``: Picard iteration on ``-Lap phi = e^{-phi} rho_g``."""
    grid = g.grid
    _, smu = maxwellian(grid)
    rho_g = to_physical(integrate_v(g.values * smu, grid), grid)
    m_g = [to_physical(integrate_v(g.values * (va * smu), grid), grid) for va in grid.v]
    phi = np.zeros(grid.mode_shape, dtype=np.complex128)
    for _ in range(PICARD_MAX):
        w = np.exp(-to_physical(phi, grid))
        rho = from_physical(w * rho_g, grid)
        rho[grid.zero_index] = 0.0
        new_phi, E = solve_poisson(rho, grid)
        delta = float(np.max(np.abs(new_phi - phi)))
        phi = new_phi
        if delta <= PICARD_TOL * max(1.0, float(np.max(np.abs(phi)))):
            break
    w = np.exp(-to_physical(phi, grid))
    M = np.stack([from_physical(w * m, grid) for m in m_g])
    return FieldState(rho, phi, E, M, t), to_physical(phi, grid)


def compute_fields(f: Distribution, t: float = 0.0) -> FieldState:
    if f.tag == "g":
        return _solve_fields_g(f, t)[0]
    rho = compute_density(f)
    phi, E = solve_poisson(rho, f.grid)
    return FieldState(rho, phi, E, compute_moment(f), t)


# -- sub-flows -------------------------------------------------------------

def _linear_source(values, E, tau, grid, smu):
    out = values.copy()
    for a in range(grid.d_x):
        out = out + 2.0 * tau * E[a][(Ellipsis,) + (None,) * 3] * (grid.v[a] * smu)
    return out


def _shift_weights(a, grid):
    va = 0.0
    asq = 0.0
    for i in range(grid.d_x):
        ai = a[i][(Ellipsis,) + (None,) * 3]
        va = va + ai * grid.v[i]
        asq = asq + ai * ai
    return va, asq


def _as_flow_f(values, fs: FieldState, tau, grid, smu, nonlinear):
    if not nonlinear:
        return _linear_source(values, fs.E, tau, grid, smu)
    a = field_physical(fs.E, grid) * tau
    check_shift(a, grid)
    shifted = shift_physical(to_physical(values, grid), a, grid)
    va, asq = _shift_weights(a, grid)
    out = smu * np.expm1(2.0 * va - asq) + np.exp(va - 0.5 * asq) * shifted
    return from_physical(out, grid)


_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(6)


def _as_flow_g(values, fs: FieldState, phi_phys, tau, grid, smu, nonlinear):
    """Exact flow of ``d_t g + E.grad_v g = c g + 2 e^{phi} E.v mu^{1/2}`` with frozen ``E, c, phi``.

    Along characteristics the source is ``-d/ds mu^{1/2}(v - E(tau - s))``; one
    integration by parts leaves ``c int e^{c(tau-s)} mu^{1/2}(...) ds``, taken by
    Gauss-Legendre quadrature.
    """
    if not nonlinear:
        return _linear_source(values, fs.E, tau, grid, smu)
    ex = (Ellipsis,) + (None,) * 3
    a = field_physical(fs.E, grid) * tau
    check_shift(a, grid)
    g = shift_physical(to_physical(values, grid), a, grid)
    c = to_physical(dt_phi(fs.M, grid), grid)
    z = (c * tau)[ex]
    va, asq = _shift_weights(a, grid)
    smu_a = smu * np.exp(va - 0.5 * asq)
    quad = 0.0
    for node, weight in zip(0.5 * (_GL_NODES + 1.0), 0.5 * _GL_WEIGHTS):
        r = 1.0 - node
        quad = quad + weight * np.exp(z * r) * smu * np.exp(r * va - 0.5 * r * r * asq)
    src = -2.0 * np.exp(phi_phys)[ex] * (smu - np.exp(z) * smu_a + z * quad)
    return from_physical(np.exp(z) * g + src, grid)


# -- collisions --------------------------------------------------------------

@dataclass
class Background:
    """x-independent field entering the collision term as ``Gamma(b, f) + Gamma(f, b)``."""

    values: np.ndarray
    fields: object


def background_for(values: np.ndarray, coeffs: CollisionCoefficients) -> Background:
    return Background(values, mode_fields(np.ascontiguousarray(values.real), coeffs))


def collision_rhs(values: np.ndarray, coeffs: CollisionCoefficients, nu: float, nonlinear: bool = True,
                  gamma_weight: np.ndarray | None = None, background: Background | None = None) -> np.ndarray:
    """``nu (-L f + Gamma(f, f))`` on every mode (``Gamma`` formed in physical x).

    ``gamma_weight`` multiplies Gamma pointwise in x (``e^{-phi}`` for the Guo
    unknown); ``background`` adds the frozen-coefficient coupling terms.  The
    result has no component along the collision invariants (``remove_invariants``),
    so collisions conserve mass, momentum and energy to round-off.
    """
    grid = coeffs.grid
    out = np.zeros_like(values)
    if nu == 0.0:
        return out
    need = nonlinear or background is not None
    if nonlinear:
        store = {n: np.zeros(grid.mode_shape + s + grid.vshape, dtype=np.complex128)
                 for n, s in (("a", (6,)), ("h", ()), ("dg", (3,)), ("hg", (6,)))}
    zero = grid.zero_index
    for idx in grid.half_modes():
        fk = values[idx]
        if not np.any(fk):
            continue
        if idx == zero:
            fk = np.ascontiguousarray(fk.real)
        conj = grid.conj_index(idx)
        if need:
            mf = mode_fields(fk, coeffs)
            lin = -mf.Lf
            if background is not None:
                bf = background.fields
                lin = lin + gamma_pointwise(bf.a, bf.h, fk, mf.dg, mf.hg, grid)
                lin = lin + gamma_pointwise(mf.a, mf.h, background.values, bf.dg, bf.hg, grid)
            if nonlinear:
                for name in store:
                    arr = getattr(mf, name)
                    store[name][idx] = arr
                    if conj != idx:
                        store[name][conj] = np.conj(arr)
        else:
            lin = -apply_L(fk, coeffs)
        out[idx] = lin
        if conj != idx:
            out[conj] = np.conj(lin)
    if nonlinear:
        phys = {n: to_physical(arr, grid) for n, arr in store.items()}
        fp = to_physical(values, grid)
        gam = np.empty_like(fp)
        for m in np.ndindex(*fp.shape[:grid.d_x]):
            gam[m] = gamma_pointwise(phys["a"][m], phys["h"][m], fp[m], phys["dg"][m], phys["hg"][m], grid)
        if gamma_weight is not None:
            gam = gam * gamma_weight[(Ellipsis,) + (None,) * 3]
        out = out + from_physical(gam, grid)
    return nu * remove_invariants(out, grid)


def ssp_rk3(u: np.ndarray, h: float, rhs: Callable[[np.ndarray, float], np.ndarray], t: float = 0.0) -> np.ndarray:
    """One Shu-Osher SSP-RK3 step of ``du/dt = rhs(u, t)``."""
    u1 = u + h * rhs(u, t)
    u2 = 0.75 * u + 0.25 * (u1 + h * rhs(u1, t + h))
    return u / 3.0 + 2.0 / 3.0 * (u2 + h * rhs(u2, t + 0.5 * h))


# -- the full step -----------------------------------------------------------

def _field_update(f: Distribution, t: float):
    if f.tag == "g":
        return _solve_fields_g(f, t)
    return compute_fields(f, t), None


def _mean_fields(a, b):
    fa, pa = a
    fb, pb = b
    fs = FieldState(0.5 * (fa.rho + fb.rho), 0.5 * (fa.phi + fb.phi), 0.5 * (fa.E + fb.E),
                    0.5 * (fa.M + fb.M), fa.t)
    return fs, (None if pa is None else 0.5 * (pa + pb))


def _fields_close(a, b) -> bool:
    fa, fb = a[0], b[0]
    for x, y in ((fa.E, fb.E), (fa.M, fb.M)):
        scale = float(np.max(np.abs(x))) if x.size else 0.0
        if float(np.max(np.abs(x - y))) > AS_TOL * max(scale, 1e-300):
            return False
    return True


def step(state: SimState, controls: StepControls) -> SimState:
    """One Strang step of the perturbed system; ``controls.dt`` may be negative."""
    f = state.f
    grid = f.grid
    dt = float(controls.dt)
    half = 0.5 * dt
    _, smu = maxwellian(grid)
    n0 = norm_xv(f.values, grid)
    bg = state.background

    def as_flow(values, t):
        emb = _embed_zero_mode(bg.values_at(t), grid) if bg is not None else 0.0
        start = _field_update(Distribution(grid, values, f.tag), t)
        used = start
        for _ in range(AS_ITER_MAX):
            fs, phi_phys = used
            if f.tag == "g":
                out = _as_flow_g(values + emb, fs, phi_phys, half, grid, smu, controls.nonlinear)
            else:
                out = _as_flow_f(values + emb, fs, half, grid, smu, controls.nonlinear)
            out = enforce_reality(out - emb, grid)
            mid = _mean_fields(start, _field_update(Distribution(grid, out, f.tag), t))
            if _fields_close(mid, used):
                break
            used = mid
        return out

    vals = transport_phase(f, half).values
    if controls.field_coupling:
        vals = as_flow(vals, state.t + half)
    if state.nu > 0.0:
        weight = None
        if f.tag == "g" and controls.nonlinear:
            _, phi_phys = _field_update(Distribution(grid, vals, "g"), state.t + half)
            weight = np.exp(-phi_phys)
        n_sub = controls.substeps(state.nu, state.coeffs, dt)
        hc = dt / n_sub
        t0 = state.t
        for s in range(n_sub):
            def rhs(u, tau, _w=weight):
                b = bg.at(tau) if bg is not None else None
                return collision_rhs(u, state.coeffs, state.nu, controls.nonlinear, _w, b)
            vals = enforce_reality(ssp_rk3(vals, hc, rhs, t0 + s * hc), grid)
    if controls.field_coupling:
        vals = as_flow(vals, state.t + half)
    out = transport_phase(Distribution(grid, vals, f.tag), half)
    n1 = norm_xv(out.values, grid)
    if not np.all(np.isfinite(out.values)) or (n0 > 0 and n1 > BLOWUP_FACTOR * n0):
        raise BlowupError(f"norm grew from {n0:.3e} to {n1:.3e} in one step")
    t_new = state.t + dt
    return replace(state, f=out, fields=compute_fields(out, t_new), t=t_new, step_count=state.step_count + 1)


def _embed_zero_mode(v_arr: np.ndarray, grid: GridSpec) -> np.ndarray:
    out = np.zeros(grid.shape, dtype=np.complex128)
    out[grid.zero_index] = v_arr
    return out


# -- initial data --------------------------------------------------------------

_ALLOWED_NAMES = {"v1": 0, "v2": 1, "v3": 2}


def parse_profile(expr: str) -> Callable[[tuple], np.ndarray]:
    """Compile a polynomial expression in ``v1, v2, v3`` (``+ - * **`` and numbers only)."""
    try:
        tree = ast.parse(str(expr), mode="eval")
    except SyntaxError as exc:
        raise ConfigError(f"cannot parse velocity profile {expr!r}") from exc

    def ev(node, v):
        if isinstance(node, ast.Expression):
            return ev(node.body, v)
        if isinstance(node, ast.Constant) and isinstance(node.value, (int, float)):
            return float(node.value)
        if isinstance(node, ast.Name) and node.id in _ALLOWED_NAMES:
            return v[_ALLOWED_NAMES[node.id]]
        if isinstance(node, ast.UnaryOp) and isinstance(node.op, (ast.USub, ast.UAdd)):
            x = ev(node.operand, v)
            return -x if isinstance(node.op, ast.USub) else x
        if isinstance(node, ast.BinOp):
            if isinstance(node.op, ast.Pow):
                p = node.right
                if not (isinstance(p, ast.Constant) and isinstance(p.value, int) and 0 <= p.value <= 12):
                    raise ConfigError(f"only small integer powers allowed in {expr!r}")
                return ev(node.left, v) ** p.value
            ops = {ast.Add: np.add, ast.Sub: np.subtract, ast.Mult: np.multiply}
            for typ, fn in ops.items():
                if isinstance(node.op, typ):
                    return fn(ev(node.left, v), ev(node.right, v))
        raise ConfigError(f"unsupported element in velocity profile {expr!r}")

    ev(tree, (1.0, 1.0, 1.0))
    return lambda v: ev(tree, v)


def velocity_profile(expr: str, beta: float, grid: GridSpec) -> np.ndarray:
    """``chi(v) exp(-beta |v|^2) mu^{1/2}`` on the grid."""
    _, smu = maxwellian(grid)
    chi = parse_profile(expr)(grid.v)
    return np.broadcast_to(chi * np.exp(-beta * grid.vsq) * smu, grid.vshape).astype(float)


def _mode0_moments(f0: np.ndarray, grid: GridSpec) -> np.ndarray:
    _, smu = maxwellian(grid)
    m = [integrate_v(f0 * smu, grid)]
    m += [integrate_v(f0 * (va * smu), grid) for va in grid.v]
    m.append(integrate_v(f0 * (grid.vsq * smu), grid))
    return np.array(m)


def make_admissible(values: np.ndarray, grid: GridSpec) -> np.ndarray:
    """Correct the mean mode so mass, momentum and energy (kinetic plus field) vanish.

    The correction is the minimal-norm element of the collision-invariant span.
    """
    from .equilibrium import kernel_basis
    out = values.copy()
    rho = integrate_v(values * maxwellian(grid)[1], grid)
    rho[grid.zero_index] = 0.0
    target = np.zeros(5)
    target[4] = -field_energy(rho, grid) / (2.0 * np.pi) ** grid.d_x
    kb: KernelBasis = kernel_basis(grid)
    f0 = out[grid.zero_index].real
    resid = target - _mode0_moments(f0, grid)
    c = np.linalg.solve(kb.gram, resid)
    out[grid.zero_index] = f0 + np.tensordot(c, kb.functions, axes=1)
    return out


def init_data(config, grid: GridSpec | None = None) -> Distribution:
    """Initial perturbation for the configured family, made admissible."""
    grid = make_grid(config) if grid is None else grid
    ph = config.physics
    eps = float(ph.epsilon)
    vals = np.zeros(grid.shape, dtype=np.complex128)
    if ph.family not in ("single_mode", "random_band"):
        raise ConfigError(f"unknown initial family {ph.family!r}")
    prof = velocity_profile(ph.chi, float(ph.chi_beta), grid)
    if eps == 0.0:
        return Distribution(grid, vals, "f")
    if ph.family == "single_mode":
        k0 = tuple(int(c) for c in np.atleast_1d(ph.k0))
        k0 = (k0 + (0,) * grid.d_x)[:grid.d_x]
        vals[grid.index_of(k0)] += 0.5 * eps * prof
        vals[grid.index_of(tuple(-c for c in k0))] += 0.5 * eps * prof
    else:
        for idx, c in random_band_coefficients(config, grid):
            vals[idx] += c * prof
            vals[grid.conj_index(idx)] += np.conj(c) * prof
    vals = make_admissible(vals, grid)
    return Distribution(grid, vals, "f")


def random_band_coefficients(config, grid: GridSpec) -> list:
    """``(mode index, c_k)`` of the random_band family over the half modes with ``0 < |k| <= k_band``."""
    rng = np.random.default_rng(int(config.seed))
    band = int(config.physics.k_band)
    eps = float(config.physics.epsilon)
    out = []
    for idx in grid.half_modes():
        kv = np.array(idx) - grid.K_max
        kk = float(np.sqrt(np.sum(kv * kv)))
        if kk == 0 or kk > band:
            continue
        out.append((idx, (rng.normal() + 1j * rng.normal()) * 0.5 * eps))
    return out


# -- runs -------------------------------------------------------------------

def controls_from_config(config) -> StepControls:
    st = config.stepper
    ph = config.physics
    return StepControls(dt=float(st.dt), collision_substeps=int(st.collision_substeps), unknown=ph.unknown,
                        nonlinear=bool(ph.nonlinear), field_coupling=bool(ph.field_coupling))


def initial_state(config, coeffs: CollisionCoefficients | None = None) -> SimState:
    grid = make_grid(config)
    coeffs = compute_coefficients(grid) if coeffs is None else coeffs
    f = init_data(config, grid)
    if config.physics.unknown == "g":
        from .fields import guo_transform
        f = guo_transform(f, compute_fields(f).phi)
    return SimState(f, compute_fields(f, 0.0), 0.0, 0, float(config.physics.nu), coeffs)


def run(config, state: SimState | None = None, on_diag: Callable | None = None,
        on_snapshot: Callable | None = None, coeffs: CollisionCoefficients | None = None):
    """Integrate to ``T_end``.

    Returns the final state and the list of diagnostics records; ``on_diag``
    and ``on_snapshot`` receive each record and each snapshot state.
    """
    from .diagnostics import make_record
    if state is None:
        state = initial_state(config, coeffs)
    controls = controls_from_config(config)
    st = config.stepper
    n_steps = int(round(float(st.T_end) / controls.dt))
    every = max(int(st.diag_every), 1)
    snap = int(st.snap_every)
    records = []
    ref = make_record(state, config, None)
    records.append(ref)
    if on_diag:
        on_diag(ref)
    if snap > 0 and on_snapshot:
        on_snapshot(state)
    for n in range(1, n_steps + 1):
        state = step(state, controls)
        if n % every == 0 or n == n_steps:
            rec = make_record(state, config, ref)
            records.append(rec)
            if on_diag:
                on_diag(rec)
        if snap > 0 and on_snapshot and n % snap == 0:
            on_snapshot(state)
    return state, records


# -- homogeneous equation ------------------------------------------------------

@dataclass
class HomogeneousResult:
    times: np.ndarray
    norms: np.ndarray
    dissipation: np.ndarray
    samples: list = field(default_factory=list)


def homogeneous_rhs(f0: np.ndarray, coeffs: CollisionCoefficients, nu: float, nonlinear: bool) -> np.ndarray:
    if nu == 0.0:
        return np.zeros_like(f0)
    if not nonlinear:
        return -nu * remove_invariants(apply_L(f0, coeffs), coeffs.grid)
    mf = mode_fields(f0, coeffs)
    q = -mf.Lf + gamma_pointwise(mf.a, mf.h, f0, mf.dg, mf.hg, coeffs.grid)
    return nu * remove_invariants(q, coeffs.grid)


def run_homogeneous(f0: np.ndarray, coeffs: CollisionCoefficients, nu: float, T: float, dt: float,
                    nonlinear: bool = True, sample_every: int = 0, substeps: int = 1) -> HomogeneousResult:
    """Integrate ``d_t f0 + nu L f0 = nu Gamma(f0, f0)`` after removing the null-space part.

    Records ``||f0(t)||`` and the running ``nu int_0^t |f0|_sigma^2`` (trapezoid).
    """
    grid = coeffs.grid
    f = np.asarray(f0, dtype=float) - project_P0(f0, grid)
    ctl = StepControls(dt=dt, collision_substeps=substeps)
    n_sub = ctl.substeps(nu, coeffs)
    n_steps = int(round(T / dt))
    h = dt / n_sub
    times = [0.0]
    norms = [norm_v(f, grid)]
    diss = [0.0]
    s_prev = sigma_norm(f, coeffs) ** 2
    samples = [(0.0, f.copy())] if sample_every else []
    for n in range(1, n_steps + 1):
        for _ in range(n_sub):
            f = ssp_rk3(f, h, lambda u, _t: homogeneous_rhs(u, coeffs, nu, nonlinear))
        s_now = sigma_norm(f, coeffs) ** 2
        diss.append(diss[-1] + 0.5 * dt * nu * (s_prev + s_now))
        s_prev = s_now
        times.append(n * dt)
        norms.append(norm_v(f, grid))
        if sample_every and n % sample_every == 0:
            samples.append((n * dt, f.copy()))
    return HomogeneousResult(np.array(times), np.array(norms), np.array(diss), samples)


# -- per-mode linear problems --------------------------------------------------

def mode_phase(k, grid: GridSpec) -> np.ndarray:
    """``k.v`` on the velocity grid for a single mode vector."""
    kk = np.zeros(3)
    kv = np.atleast_1d(np.asarray(k, dtype=float))
    kk[:kv.size] = kv
    return kk[0] * grid.v[0] + kk[1] * grid.v[1] + kk[2] * grid.v[2]


def _check_mode(k):
    if not np.any(np.atleast_1d(k)):
        raise ConfigError("mode k must be nonzero")


def evolve_mode(k, h_in: np.ndarray, nu: float, T: float, dt: float, coeffs: CollisionCoefficients,
                sample_every: int = 1, observe: Callable | None = None, substeps: int = 1,
                stop: Callable | None = None):
    """Semigroup ``S_k(t) h_in`` of ``d_t h + i k.v h + nu L h = 0``.

    Returns ``(times, samples)``; with ``observe`` the samples are
    ``observe(h)`` instead of the arrays themselves.  ``stop(sample)``
    returning true ends the run early.
    """
    return _evolve(k, h_in, nu, T, dt, coeffs, sample_every, observe, substeps, None, stop)


def _evolve(k, h_in, nu, T, dt, coeffs, sample_every, observe, substeps, extra, stop=None):
    _check_mode(k)
    grid = coeffs.grid
    kv = mode_phase(k, grid)
    half_phase = np.exp(-0.5j * dt * kv)
    ctl = StepControls(dt=dt, collision_substeps=substeps)
    n_sub = ctl.substeps(nu, coeffs)
    hc = dt / n_sub
    n_steps = int(round(T / dt))
    obs = observe if observe is not None else (lambda x: x.copy())
    h = np.asarray(h_in, dtype=np.complex128).copy()
    times = [0.0]
    out = [obs(h)]
    for n in range(n_steps):
        h = h * half_phase
        if nu > 0.0:
            t0 = n * dt
            for s in range(n_sub):
                if extra is None:
                    h = ssp_rk3(h, hc, lambda u, _t: -nu * remove_invariants(apply_L(u, coeffs), grid))
                else:
                    h = ssp_rk3(h, hc, lambda u, tau: extra(u, tau), t0 + s * hc)
        h = h * half_phase
        if sample_every and (n + 1) % sample_every == 0:
            times.append((n + 1) * dt)
            out.append(obs(h))
            if stop is not None and stop(out[-1]):
                break
    return np.array(times), out


class FrozenTrajectory:
    """Piecewise-linear interpolation of a sampled homogeneous solution."""

    def __init__(self, times, arrays, coeffs: CollisionCoefficients, max_gap: float):
        self.times = np.asarray(times, dtype=float)
        self.arrays = list(arrays)
        self.coeffs = coeffs
        if self.times.size == 0:
            raise InterpolationError("empty background trajectory")
        gaps = np.diff(self.times)
        if gaps.size and float(gaps.max()) > max_gap:
            raise InterpolationError(f"background samples {gaps.max():.3g} apart exceed {max_gap:.3g}")
        self._cache = {}

    def values_at(self, t: float) -> np.ndarray:
        ts = self.times
        if t <= ts[0]:
            return self.arrays[0]
        if t >= ts[-1]:
            return self.arrays[-1]
        j = int(np.searchsorted(ts, t)) - 1
        w = (t - ts[j]) / (ts[j + 1] - ts[j])
        return (1.0 - w) * self.arrays[j] + w * self.arrays[j + 1]

    def at(self, t: float) -> Background:
        key = round(float(t), 12)
        if key not in self._cache:
            if len(self._cache) > 8:
                self._cache.clear()
            self._cache[key] = background_for(self.values_at(t), self.coeffs)
        return self._cache[key]


def evolve_mode_quasilinear(k, h_in: np.ndarray, f0L_times, f0L_arrays, nu: float, T: float, dt: float,
                            coeffs: CollisionCoefficients, sample_every: int = 1, observe: Callable | None = None,
                            substeps: int = 1):
    """Two-parameter propagator: ``d_t h + i k.v h + nu L h = nu[Gamma(f0L, h) + Gamma(h, f0L)]``.

    ``f0L`` is interpolated linearly in time; samples more than ``10 dt``
    apart raise InterpolationError.
    """
    bg = FrozenTrajectory(f0L_times, f0L_arrays, coeffs, 10.0 * dt)
    grid = coeffs.grid

    def rhs(u, tau):
        b = bg.at(tau)
        mf = mode_fields(u, coeffs)
        coupling = gamma_pointwise(b.fields.a, b.fields.h, u, mf.dg, mf.hg, grid)
        coupling = coupling + gamma_pointwise(mf.a, mf.h, b.values, b.fields.dg, b.fields.hg, grid)
        return nu * remove_invariants(-mf.Lf + coupling, grid)

    return _evolve(k, h_in, nu, T, dt, coeffs, sample_every, observe, substeps, rhs)
