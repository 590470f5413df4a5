"""Linear dispersion analysis: kernels K_k and H_k, Fourier-Laplace transform, Penrose margin, resolvent.

Conventions: ``L[K](lam + i omega) = int_0^inf exp(-i(lam + i omega) t) K(t) dt`` which
converges for ``omega <= 0``.  A density mode behaves like ``exp(i z t)`` at a zero
``z`` of ``1 + L[K]``, so damped modes sit at ``Im z > 0`` (the continuation).
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np
from scipy import fft as sfft
from scipy import optimize

from .dynamics import evolve_mode
from .equilibrium import CollisionCoefficients, compute_coefficients, maxwellian
from .errors import ConfigError, DomainError, GridError, ResolutionError, SingularError, TailError
from .spectral_core import GridSpec, integrate_v

TAIL_TOL = 1e-8
T_K_CAP = 200.0
PENROSE_RES = 0.05
REFINE_TOL = 0.05
SINGULAR_TOL = 1e-10


@dataclass
class KernelTable:
    """Time samples of ``K_k``, ``H_k`` (3-vector) and optionally ``G_k`` on a uniform grid."""

    k: tuple
    nu: float
    t_grid: np.ndarray
    K: np.ndarray
    H: np.ndarray
    G: np.ndarray | None = None
    meta: dict = field(default_factory=dict)

    @property
    def dt(self) -> float:
        return float(self.t_grid[1] - self.t_grid[0]) if self.t_grid.size > 1 else 0.0

    @property
    def T_K(self) -> float:
        return float(self.t_grid[-1])

    @property
    def kabs(self) -> float:
        return float(np.linalg.norm(self.k))


def _kvec(k) -> np.ndarray:
    kv = np.zeros(3)
    arr = np.atleast_1d(np.asarray(k, dtype=float))
    if arr.size > 3:
        raise ConfigError(f"mode {k} has more than three components")
    kv[:arr.size] = arr
    if not np.any(kv):
        raise ConfigError("mode k must be nonzero")
    return kv


def default_T_K(k, nu: float = 0.0) -> float:
    """``20/|k|`` collisionless, ``48/|k|`` with collisions (the tail is no longer Gaussian)."""
    span = 20.0 if nu == 0 else 48.0
    return min(span / float(np.linalg.norm(_kvec(k))), T_K_CAP)


RECURRENCE_MARGIN = 1.25


def recurrence_time(k, grid: GridSpec) -> float:
    """Free-streaming recurrence ``2 pi / (|k| dv_1)`` of the mode solver (mode along axis 1)."""
    return 2.0 * np.pi / (float(np.linalg.norm(_kvec(k))) * grid.dv[0])


def kernel_setup(k, nu: float, n_par: int, n_perp: int, V_max: float, T_K: float = 0.0) -> tuple[GridSpec, float]:
    """Grid and horizon for a kernel table: ``T_K`` (0 means automatic) and ``n_par`` raised
    until the recurrence time exceeds ``1.25 T_K``."""
    T = default_T_K(k, nu) if T_K <= 0 else float(T_K)
    kabs = float(np.linalg.norm(_kvec(k)))
    need = int(np.ceil(RECURRENCE_MARGIN * T * V_max * kabs / np.pi))
    n = max(int(n_par), sfft.next_fast_len(need + (need % 2), real=True))
    n += n % 2
    return linear_grid(n, n_perp, V_max), T


def linear_grid(n_par: int = 64, n_perp: int = 24, V_max: float = 6.0) -> GridSpec:
    """Velocity grid for single-mode problems with the mode along axis 1."""
    return GridSpec(d_x=1, K_max=1, N_v=(n_par, n_perp, n_perp), V_max=V_max)


def _uniform(t_grid) -> tuple[np.ndarray, float]:
    t = np.asarray(t_grid, dtype=float)
    if t.ndim != 1 or t.size < 2 or t[0] != 0.0:
        raise GridError("time grid must be one-dimensional, start at 0 and have two samples or more")
    h = float(t[1] - t[0])
    if not h > 0 or np.max(np.abs(np.diff(t) - h)) > 1e-9 * max(h, 1.0):
        raise GridError("time grid is not uniform")
    return t, h


def compute_kernels(k, nu: float, grid: GridSpec | None = None, t_grid=None, *, dt: float = 0.05,
                    coeffs: CollisionCoefficients | None = None, substeps: int = 1,
                    check_tail: bool = True) -> KernelTable:
    """Evolve ``(k.v) mu^{1/2}`` under ``S_k`` and contract against ``mu^{1/2}`` and ``v mu^{1/2}``.

    The operator is rotation invariant, so the evolution runs with the mode along
    the first velocity axis; ``H`` is rotated back along ``k``.

    Without ``t_grid`` the horizon is automatic: the run stops at the first
    ``T >= 20/|k|`` whose tail window ``(T/2, T]`` passes the tail invariant, and
    at ``default_T_K(k, nu)`` otherwise.
    """
    kv = _kvec(k)
    kabs = float(np.linalg.norm(kv))
    if coeffs is None:
        coeffs = compute_coefficients(grid if grid is not None else linear_grid())
    vg = coeffs.grid
    stop = None
    if t_grid is None:
        T = default_T_K(kv, nu)
        n = int(round(T / dt))
        t_grid = dt * np.arange(n + 1)
        stop = _tail_stop(default_T_K(kv, 0.0), dt)
    t_grid, h = _uniform(t_grid)
    _, smu = maxwellian(vg)
    h_in = np.broadcast_to(kabs * vg.v[0] * smu, vg.vshape).astype(float)
    weights = [smu] + [va * smu for va in vg.v]

    def observe(x):
        return np.array([complex(integrate_v(x * w, vg)) for w in weights])

    times, samples = evolve_mode((kabs, 0.0, 0.0), h_in, float(nu), float(t_grid[-1]), h, coeffs,
                                 sample_every=1, observe=observe, substeps=substeps, stop=stop)
    samples = np.array(samples)
    t_grid = t_grid[:samples.shape[0]]
    pref = 2j / kabs ** 2
    K = pref * samples[:, 0]
    H = (pref * samples[:, 1])[:, None] * (kv / kabs)[None, :]
    meta = {"N_v": vg.N_v, "V_max": vg.V_max, "dt": h, "substeps": substeps,
            "H_perp": float(np.max(np.abs(samples[:, 2:]))) * abs(pref)}
    table = KernelTable(tuple(int(c) if float(c).is_integer() else float(c) for c in kv), float(nu),
                        t_grid, K, H, None, meta)
    if check_tail:
        check_kernel_tail(table)
    return table


def _tail_stop(T_min: float, h: float):
    """Stop predicate over ``S_k`` samples: horizon at least ``T_min`` and a passing tail window."""
    hist = [0.0]

    def stop(sample) -> bool:
        hist.append(abs(complex(sample[0])))
        n = len(hist) - 1
        if n * h < T_min - 1e-9 * h:
            return False
        peak = max(hist)
        return peak > 0 and max(hist[n // 2 + 1:]) < TAIL_TOL * peak

    return stop


def check_kernel_tail(table: KernelTable):
    K = np.abs(table.K)
    peak = float(K.max()) if K.size else 0.0
    tail = K[table.t_grid > 0.5 * table.T_K]
    if peak > 0 and tail.size and float(tail.max()) >= TAIL_TOL * peak:
        raise TailError(f"kernel tail {tail.max() / peak:.2e} of peak exceeds {TAIL_TOL:.0e}; extend T_K")


def _trap_weights(n: int, h: float) -> np.ndarray:
    w = np.full(n, h)
    w[0] = w[-1] = 0.5 * h
    return w


def _laplace(table: KernelTable, z) -> np.ndarray:
    """Trapezoid ``int_0^T exp(-i z t) K dt`` for any complex ``z`` (no domain check)."""
    z = np.asarray(z, dtype=np.complex128)
    t = table.t_grid
    wk = _trap_weights(t.size, table.dt) * table.K
    flat = z.reshape(-1)
    out = np.empty(flat.size, dtype=np.complex128)
    block = max(1, 2_000_000 // t.size)
    for s in range(0, flat.size, block):
        zz = flat[s:s + block]
        out[s:s + block] = np.exp(-1j * np.outer(zz, t)) @ wk
    return out.reshape(z.shape)


def laplace_transform(table: KernelTable, lam, omega) -> complex | np.ndarray:
    """``L[K](lam + i omega)`` for ``omega <= 0``."""
    omega = np.asarray(omega, dtype=float)
    if np.any(omega > 0):
        raise DomainError("omega must be nonpositive")
    res = _laplace(table, np.asarray(lam, dtype=float) + 1j * omega)
    return complex(res) if np.ndim(res) == 0 else res


def dielectric(table: KernelTable, z) -> np.ndarray:
    return 1.0 + _laplace(table, z)


@dataclass
class PenroseResult:
    margin: float
    argmin: tuple
    crossover: float
    refined_margin: float


def _scan(table: KernelTable, lam_grid, omega_grid):
    L, W = np.meshgrid(lam_grid, omega_grid, indexing="ij")
    vals = np.abs(dielectric(table, L + 1j * W))
    i, j = np.unravel_index(int(np.argmin(vals)), vals.shape)
    best = (float(vals[i, j]), float(L[i, j]), float(W[i, j]))
    step = float(lam_grid[1] - lam_grid[0]) if len(lam_grid) > 1 else PENROSE_RES
    # the infimum over Im <= 0 sits on omega = 0 (minimum modulus); polish there too
    row = np.abs(dielectric(table, np.asarray(lam_grid, dtype=float) + 0j))
    i0 = int(np.argmin(row))
    lo = float(lam_grid[max(i0 - 1, 0)])
    hi = float(lam_grid[min(i0 + 1, len(lam_grid) - 1)])
    if hi > lo:
        res = optimize.minimize_scalar(lambda x: abs(complex(dielectric(table, x + 0j))), bounds=(lo, hi),
                                       method="bounded", options={"xatol": 1e-10 * max(1.0, step)})
        if res.fun < best[0]:
            best = (float(res.fun), float(res.x), 0.0)
    return best


def penrose_margin(table: KernelTable, lam_grid=None, omega_grid=None) -> tuple[float, tuple]:
    """``min |1 + L[K](lam + i omega)|`` over the scan, accepted after refinement.

    Returns ``(margin, (lam, omega))``; the full report is ``penrose_report``.
    """
    r = penrose_report(table, lam_grid, omega_grid)
    return r.margin, r.argmin


def penrose_report(table: KernelTable, lam_grid=None, omega_grid=None) -> PenroseResult:
    crossover = max(4.0 * table.kabs, 8.0)
    if lam_grid is None:
        lam_grid = np.linspace(-crossover, crossover, int(round(2 * crossover / PENROSE_RES)) + 1)
    if omega_grid is None:
        omega_grid = np.linspace(-2.0, 0.0, int(round(2.0 / PENROSE_RES)) + 1)
    lam_grid = np.asarray(lam_grid, dtype=float)
    omega_grid = np.asarray(omega_grid, dtype=float)
    if np.any(omega_grid > 0):
        raise DomainError("omega grid must be nonpositive")
    if lam_grid.size < 2 or omega_grid.size < 1:
        raise GridError("scan grids are too small")
    coarse = _scan(table, lam_grid, omega_grid)
    fine_l = np.linspace(lam_grid[0], lam_grid[-1], 2 * lam_grid.size - 1)
    fine_w = np.linspace(omega_grid[0], omega_grid[-1], 2 * omega_grid.size - 1) if omega_grid.size > 1 else omega_grid
    fine = _scan(table, fine_l, fine_w)
    if abs(fine[0] - coarse[0]) > REFINE_TOL * max(fine[0], 1e-300):
        raise ResolutionError(f"margin moved from {coarse[0]:.4g} to {fine[0]:.4g} under refinement")
    return PenroseResult(fine[0], (fine[1], fine[2]), crossover, coarse[0])


def dispersion_root(table: KernelTable, guess: complex | None = None, lam_max: float | None = None,
                    omega_max: float = 1.0) -> complex:
    """Zero of ``1 + L[K]`` continued into ``Im z > 0`` with ``Re z >= 0``.

    Without a guess the start point is the minimiser of ``|1 + L[K]|`` on a
    coarse scan of the continued half-plane.
    """
    if guess is None:
        lam_max = lam_max if lam_max is not None else max(4.0 * table.kabs, 8.0)
        lg = np.linspace(0.0, lam_max, int(round(lam_max / 0.05)) + 1)
        wg = np.linspace(0.0, omega_max, int(round(omega_max / 0.02)) + 1)
        L, W = np.meshgrid(lg, wg, indexing="ij")
        vals = np.abs(dielectric(table, L + 1j * W))
        i, j = np.unravel_index(int(np.argmin(vals)), vals.shape)
        guess = complex(L[i, j], W[i, j])

    def resid(p):
        d = complex(dielectric(table, complex(p[0], p[1])))
        return [d.real, d.imag]

    sol = optimize.root(resid, [guess.real, guess.imag], method="hybr", options={"xtol": 1e-13})
    if not sol.success or abs(complex(*resid(sol.x))) > 1e-8:
        raise SingularError(f"no dispersion root near {guess}: {sol.message}")
    return complex(sol.x[0], sol.x[1])


def resolvent_G(table: KernelTable) -> KernelTable:
    """Solve ``G = -K - K * G`` by trapezoid marching and cross-check by a padded DFT."""
    K = np.asarray(table.K, dtype=np.complex128)
    n = K.size
    h = table.dt
    if n == 0:
        raise GridError("empty kernel table")
    G = np.zeros(n, dtype=np.complex128)
    diag = 1.0 + 0.5 * h * K[0]
    if abs(diag) < SINGULAR_TOL:
        raise SingularError("1 + h K(0)/2 vanishes")
    G[0] = -K[0] / diag
    for m in range(1, n):
        acc = 0.5 * K[m] * G[0] + np.dot(K[m - 1:0:-1], G[1:m]) if m > 1 else 0.5 * K[m] * G[0]
        G[m] = (-K[m] - h * acc) / diag
    # the resolvent equation is invariant under K, G -> K e^{-st}, G e^{-st}; the damped
    # pair makes the circular (padded DFT) solution equal the linear one
    P = int(2 ** np.ceil(np.log2(4 * n)))
    sigma = 40.0 / (P * h)
    damp = np.exp(-sigma * table.t_grid)
    Kw = K * damp
    Kh = sfft.fft(Kw, P)
    Kh0 = Kh - 0.5 * Kw[0]
    den = 1.0 + h * Kh0
    if float(np.min(np.abs(den))) < SINGULAR_TOL:
        raise SingularError("1 + L[K] vanishes on the discrete frequency grid")
    GF = sfft.ifft(-Kh / den)[:n] / damp
    half = table.t_grid <= 0.5 * table.T_K
    scale = max(float(np.max(np.abs(K))), 1e-300)
    resid = resolvent_residual(table, G)
    meta = dict(table.meta)
    meta.update(G_fourier_diff=float(np.max(np.abs(G - GF)[half])), G_residual=float(resid / scale),
                min_dielectric_dft=float(np.min(np.abs(den))))
    return replace(table, G=G, meta=meta)


def _trap_conv(A: np.ndarray, B: np.ndarray, h: float) -> np.ndarray:
    """``out[n] = int_0^{t_n} A(t_n - s) B(s) ds`` by the trapezoid rule; ``A`` may carry trailing axes."""
    n = B.shape[0]
    out = np.zeros((n,) + A.shape[1:], dtype=np.complex128)
    for m in range(1, n):
        w = np.full(m + 1, h)
        w[0] = w[-1] = 0.5 * h
        out[m] = np.tensordot(w * B[:m + 1], A[m::-1], axes=(0, 0))
    return out


def resolvent_residual(table: KernelTable, G: np.ndarray) -> float:
    """``max_n |G + K + K * G|`` with the same trapezoid convolution."""
    K = np.asarray(table.K, dtype=np.complex128)
    return float(np.max(np.abs(G + K + _trap_conv(K, G, table.dt))))


def _check_samples(table: KernelTable, N, t=None) -> np.ndarray:
    N = np.asarray(N, dtype=np.complex128)
    if N.shape[0] != table.t_grid.size:
        raise GridError(f"{N.shape[0]} samples for a table with {table.t_grid.size} times")
    if t is not None:
        t = np.asarray(t, dtype=float)
        if t.shape != table.t_grid.shape or np.max(np.abs(t - table.t_grid)) > 1e-9 * max(1.0, table.T_K):
            raise GridError("sample times differ from the table grid")
    return N


def reconstruct_density(table: KernelTable, N, t=None) -> np.ndarray:
    """``rho(t) = N(t) + int_0^t G(t - s) N(s) ds`` on the table grid."""
    if table.G is None:
        raise GridError("resolvent G has not been built")
    N = _check_samples(table, N, t)
    return N + _trap_conv(np.asarray(table.G), N, table.dt)


def moment_volterra_check(table: KernelTable, rho, M, Nsf, t=None) -> np.ndarray:
    """Residual norm per time of ``M = -int H(t - s) rho(s) ds + Nsf``."""
    rho = _check_samples(table, rho, t)
    M = _check_samples(table, M, t)
    Nsf = _check_samples(table, Nsf, t)
    if M.shape[1:] != (3,) or Nsf.shape[1:] != (3,):
        raise GridError("moment samples must have three components")
    pred = -_trap_conv(np.asarray(table.H), rho, table.dt) + Nsf
    return np.linalg.norm(M - pred, axis=1)


def forcing(k, f_hat: np.ndarray, nu: float, coeffs: CollisionCoefficients, t_grid, substeps: int = 1):
    """``N_k(t) = int S_k(t)[f_hat] mu^{1/2} dv`` and its first moment ``int S_k(t)[f_hat] v mu^{1/2} dv``."""
    t_grid, h = _uniform(t_grid)
    vg = coeffs.grid
    _, smu = maxwellian(vg)
    weights = [smu] + [va * smu for va in vg.v]

    def observe(x):
        return np.array([complex(integrate_v(x * w, vg)) for w in weights])

    _, samples = evolve_mode(k, f_hat, float(nu), float(t_grid[-1]), h, coeffs, 1, observe, substeps)
    samples = np.array(samples)
    return samples[:, 0], samples[:, 1:]


def free_streaming_kernel(t, k) -> np.ndarray:
    """Closed form ``K_k(t) = pi^{3/2} t exp(-|k|^2 t^2/4)`` of the collisionless kernel."""
    kabs = float(np.linalg.norm(_kvec(k)))
    t = np.asarray(t, dtype=float)
    return np.pi ** 1.5 * t * np.exp(-kabs * kabs * t * t / 4.0)
