"""Maxwellian background, Landau coefficient fields, and the null-space projection."""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy import integrate
from scipy.interpolate import CubicSpline

from .errors import QuadratureError, ShapeError
from .spectral_core import GridSpec, integrate_v

# index pairs of the six stored components of a symmetric 3x3 field
SYM_PAIRS = ((0, 0), (0, 1), (0, 2), (1, 1), (1, 2), (2, 2))
SYM_INDEX = {p: n for n, p in enumerate(SYM_PAIRS)}
SYM_INDEX.update({(j, i): n for (i, j), n in SYM_INDEX.items()})

N_TABLE = 2048
QUAD_TOL = 1e-10


def maxwellian(grid: GridSpec) -> tuple[np.ndarray, np.ndarray]:
    """Return ``mu = exp(-|v|^2)`` and ``mu^{1/2}`` on the velocity grid."""
    mu = np.exp(-grid.vsq)
    return mu, np.exp(-0.5 * grid.vsq)


def _moment(n: int, r: float) -> tuple[float, float]:
    """``int_0^1 s^n exp(-r^2 s^2) ds`` and its error estimate."""
    val, err = integrate.quad(lambda s: s**n * np.exp(-r * r * s * s), 0.0, 1.0,
                              epsabs=1e-14, epsrel=1e-13, limit=200)
    return val, err


def radial_eigenvalues(r: float) -> tuple[float, float]:
    """Eigenvalues of ``Phi * mu`` at speed ``r``, radial then tangential.

    Uses ``lam1 = (8 pi/3)[r^2 J4 + e^{-r^2}/2]`` and
    ``lam2 = 4 pi r^2 (J2 - J4/3) + (4 pi/3) e^{-r^2}`` where
    ``Jn = int_0^1 s^n exp(-r^2 s^2) ds``.
    """
    j2, e2 = _moment(2, r)
    j4, e4 = _moment(4, r)
    g = np.exp(-r * r)
    lam1 = 8.0 * np.pi / 3.0 * (r * r * j4 + 0.5 * g)
    lam2 = 4.0 * np.pi * r * r * (j2 - j4 / 3.0) + 4.0 * np.pi / 3.0 * g
    err1 = 8.0 * np.pi / 3.0 * r * r * e4
    err2 = 4.0 * np.pi * r * r * (e2 + e4 / 3.0)
    if max(err1, err2) > QUAD_TOL:
        raise QuadratureError(f"radial quadrature error {max(err1, err2):.2e} at r = {r}")
    return lam1, lam2


@dataclass
class RadialTable:
    """Cubic interpolant of a radial profile on log-spaced nodes.

    The spline runs in ``r^2`` so the profile stays smooth (even) through v = 0.
    """

    r: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        self._spline = CubicSpline(self.r**2, self.values)

    def __call__(self, r):
        r = np.asarray(r, dtype=float)
        return self._spline(r * r)


def radial_tables(V_max: float, n: int = N_TABLE) -> tuple[RadialTable, RadialTable]:
    r_tab = V_max * np.sqrt(3.0) + 2.0
    nodes = np.concatenate([[0.0], np.geomspace(1e-3, r_tab, n - 1)])
    lam = np.array([radial_eigenvalues(r) for r in nodes])
    return RadialTable(nodes, lam[:, 0]), RadialTable(nodes, lam[:, 1])


@dataclass
class CollisionCoefficients:
    """Coefficient fields of the linearised Landau operator on one grid.

    ``sigma_ij`` stores the six components in ``SYM_PAIRS`` order.
    """

    grid: GridSpec
    lambda1: RadialTable
    lambda2: RadialTable
    sigma_ij: np.ndarray
    sigma_i: np.ndarray
    quad_form: np.ndarray
    div_sigma: np.ndarray
    sqrt_mu: np.ndarray
    mu: np.ndarray

    def sigma(self, i: int, j: int) -> np.ndarray:
        return self.sigma_ij[SYM_INDEX[(i, j)]]

    @property
    def lambda_max(self) -> float:
        """Largest eigenvalue of sigma over all speeds (attained at v = 0)."""
        return float(max(self.lambda1.values.max(), self.lambda2.values.max()))

    @property
    def tail_constants(self) -> tuple[float, float]:
        """Measured ``r^3 lam1`` and ``r lam2`` at the end of the tables."""
        r = self.lambda1.r[-1]
        return float(r**3 * self.lambda1.values[-1]), float(r * self.lambda2.values[-1])


_TABLE_CACHE: dict = {}


def compute_coefficients(grid: GridSpec) -> CollisionCoefficients:
    """Assemble sigma^{ij}, sigma^i, sigma^{ij} v_i v_j and d_i sigma^i on the grid."""
    key = float(grid.V_max)
    if key not in _TABLE_CACHE:
        _TABLE_CACHE[key] = radial_tables(grid.V_max)
    lam1, lam2 = _TABLE_CACHE[key]
    mu, smu = maxwellian(grid)
    r = np.sqrt(grid.vsq)
    l1 = lam1(r)
    l2 = lam2(r)
    r2 = np.where(r > 0, r * r, 1.0)
    aniso = np.where(r > 0, (l1 - l2) / r2, 0.0)
    v = np.broadcast_arrays(*grid.v)
    sig = np.empty((6,) + grid.vshape)
    for n, (i, j) in enumerate(SYM_PAIRS):
        sig[n] = aniso * v[i] * v[j] + (l2 if i == j else 0.0)
    sig_i = np.stack([l1 * v[i] for i in range(3)])
    quad = l1 * grid.vsq
    # d_i sigma^i = 3 lam1 + r lam1' = 4 pi mu exactly
    div = 4.0 * np.pi * mu
    return CollisionCoefficients(grid, lam1, lam2, sig, sig_i, quad, div, smu, mu)


def contract_sigma(coeffs: CollisionCoefficients, g: np.ndarray, h: np.ndarray) -> np.ndarray:
    """Pointwise ``sigma^{ij} g_i h_j`` for vector fields stacked on axis 0."""
    s = coeffs.sigma_ij
    out = s[0] * g[0] * h[0] + s[3] * g[1] * h[1] + s[5] * g[2] * h[2]
    out = out + s[1] * (g[0] * h[1] + g[1] * h[0])
    out = out + s[2] * (g[0] * h[2] + g[2] * h[0])
    out = out + s[4] * (g[1] * h[2] + g[2] * h[1])
    return out


# -- null space --------------------------------------------------------------

@dataclass
class KernelBasis:
    """The five collision invariants times mu^{1/2} and their Gram matrix."""

    grid: GridSpec
    functions: np.ndarray
    gram: np.ndarray

    @staticmethod
    def analytic_gram() -> np.ndarray:
        p = np.pi ** 1.5
        g = np.zeros((5, 5))
        g[0, 0] = p
        g[1, 1] = g[2, 2] = g[3, 3] = p / 2
        g[0, 4] = g[4, 0] = 1.5 * p
        g[4, 4] = 15.0 / 4.0 * p
        return g


def kernel_basis(grid: GridSpec) -> KernelBasis:
    _, smu = maxwellian(grid)
    v1, v2, v3 = grid.v
    funcs = np.stack(np.broadcast_arrays(smu, v1 * smu, v2 * smu, v3 * smu, grid.vsq * smu)).astype(float)
    flat = funcs.reshape(5, -1)
    gram = flat @ flat.T * grid.cell
    return KernelBasis(grid, funcs, gram)


@lru_cache(maxsize=8)
def _cached_basis(grid: GridSpec) -> KernelBasis:
    return kernel_basis(grid)


def remove_invariants(q: np.ndarray, grid: GridSpec) -> np.ndarray:
    """Remove the component of ``q`` along the five collision invariants, in the discrete inner product.

    The continuous collision operator has none; applied to a collision term this
    removes the quadrature defect of under-resolved fields, so mass, momentum and
    energy are conserved to round-off on any grid.
    """
    q = np.asarray(q)
    if q.shape[-3:] != grid.vshape:
        raise ShapeError("velocity array does not match grid")
    b = _cached_basis(grid)
    flat = b.functions.reshape(5, -1)
    lead = q.shape[:-3]
    m = (q.reshape(lead + (-1,)) @ flat.T).reshape(-1, 5) * grid.cell
    c = np.linalg.solve(b.gram, m.T).T
    return q - (c @ flat).reshape(q.shape)


def null_moments(f_v: np.ndarray, grid: GridSpec) -> tuple:
    """``(int f mu^{1/2}, int f v mu^{1/2}, int f |v|^2 mu^{1/2})`` over the last three axes."""
    _, smu = maxwellian(grid)
    m0 = integrate_v(f_v * smu, grid)
    m1 = tuple(integrate_v(f_v * (va * smu), grid) for va in grid.v)
    m2 = integrate_v(f_v * (grid.vsq * smu), grid)
    return m0, m1, m2


def project_P0(f_v: np.ndarray, grid: GridSpec) -> np.ndarray:
    """Orthogonal projection onto span{mu^{1/2}, v mu^{1/2}, |v|^2 mu^{1/2}}.

    Coefficients follow the moment formulas ``c = <f, (|v|^2-3/2)mu^{1/2}>/||(|v|^2-3/2)mu^{1/2}||^2``,
    ``b_j = <f, v_j mu^{1/2}>/||v_j mu^{1/2}||^2`` and ``a = <f, mu^{1/2}>/||mu^{1/2}||^2 - 3c/2``
    with discrete integrals in both numerator and denominator.
    """
    f_v = np.asarray(f_v)
    if f_v.shape[-3:] != grid.vshape:
        raise ShapeError("velocity array does not match grid")
    mu, smu = maxwellian(grid)
    w = grid.vsq - 1.5
    c = integrate_v(f_v * (w * smu), grid) / integrate_v(w * w * mu, grid)
    a = integrate_v(f_v * smu, grid) / integrate_v(mu, grid) - 1.5 * c
    ex = (Ellipsis, None, None, None)
    out = (np.asarray(a)[ex] + np.asarray(c)[ex] * grid.vsq) * smu
    for va in grid.v:
        b = integrate_v(f_v * (va * smu), grid) / integrate_v(va * va * mu, grid)
        out = out + np.asarray(b)[ex] * (va * smu)
    return out
