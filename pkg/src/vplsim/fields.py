"""Density, Poisson field, first moment, and the Guo change of unknown.

Sign conventions: ``-Lap phi = rho``, ``E = -grad phi``, so for ``k != 0``
``phi_k = rho_k/|k|^2`` and ``E_k = -i k rho_k/|k|^2``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .equilibrium import maxwellian
from .errors import MeanError, RegimeError, TagError
from .spectral_core import Distribution, GridSpec, from_physical, integrate_v, to_physical

REGIME_LIMIT = 1.0
MEAN_TOL = 1e-10


@dataclass
class FieldState:
    """Per-mode fields at time ``t``.

    ``E`` has shape ``(d_x,) + mode_shape`` and ``M`` has ``(3,) + mode_shape``.
    """

    rho: np.ndarray
    phi: np.ndarray
    E: np.ndarray
    M: np.ndarray
    t: float = 0.0

    @classmethod
    def zeros(cls, grid: GridSpec, t: float = 0.0) -> "FieldState":
        z = np.zeros(grid.mode_shape, dtype=np.complex128)
        return cls(z, z.copy(), np.zeros((grid.d_x,) + grid.mode_shape, dtype=np.complex128),
                   np.zeros((3,) + grid.mode_shape, dtype=np.complex128), t)


def _require_raw(f: Distribution):
    if f.tag == "g":
        raise TagError("expected the raw unknown f, got the Guo unknown g")


def _nonzero_inverse_ksq(grid: GridSpec) -> np.ndarray:
    ksq = grid.ksq
    return np.where(ksq > 0, 1.0 / np.where(ksq > 0, ksq, 1.0), 0.0)


def density_mean(f: Distribution) -> complex:
    """Mode-0 coefficient of ``int f mu^{1/2} dv`` before it is zeroed."""
    _, smu = maxwellian(f.grid)
    return complex(integrate_v(f.values[f.grid.zero_index] * smu, f.grid))


def compute_density(f: Distribution) -> np.ndarray:
    """``rho_k = int f_k mu^{1/2} dv`` with the mean mode set to zero."""
    _require_raw(f)
    _, smu = maxwellian(f.grid)
    rho = integrate_v(f.values * smu, f.grid)
    rho[f.grid.zero_index] = 0.0
    return rho


def solve_poisson(rho: np.ndarray, grid: GridSpec) -> tuple[np.ndarray, np.ndarray]:
    """Return ``(phi, E)`` per mode; ``E`` stacks the ``d_x`` components."""
    rho = np.asarray(rho, dtype=np.complex128)
    peak = float(np.max(np.abs(rho))) if rho.size else 0.0
    if abs(rho[grid.zero_index]) > MEAN_TOL * max(peak, np.finfo(float).tiny):
        raise MeanError(f"density has nonzero mean {abs(rho[grid.zero_index]):.3e}")
    phi = rho * _nonzero_inverse_ksq(grid)
    E = np.stack([-1j * ka * phi for ka in np.broadcast_arrays(*grid.k)])
    return phi, E


def compute_moment(f: Distribution) -> np.ndarray:
    """``M_k = int v f_k mu^{1/2} dv``, shape ``(3,) + mode_shape``."""
    _require_raw(f)
    _, smu = maxwellian(f.grid)
    return np.stack([integrate_v(f.values * (va * smu), f.grid) for va in f.grid.v])


def dt_phi(M: np.ndarray, grid: GridSpec) -> np.ndarray:
    """``d_t phi_k = -(i k.M_k)/|k|^2`` from the continuity equation."""
    div = 0.0
    for a, ka in enumerate(grid.k):
        div = div + 1j * ka * M[a]
    return -div * _nonzero_inverse_ksq(grid)


def field_state(f: Distribution, t: float = 0.0) -> FieldState:
    rho = compute_density(f)
    phi, E = solve_poisson(rho, f.grid)
    return FieldState(rho, phi, E, compute_moment(f), t)


def field_energy(rho: np.ndarray, grid: GridSpec) -> float:
    """``||E||^2_{L^2_x} = (2 pi)^{d_x} sum_k |rho_k|^2/|k|^2``."""
    return float((2.0 * np.pi) ** grid.d_x * np.sum(np.abs(rho) ** 2 * _nonzero_inverse_ksq(grid)))


def modes_to_physical(arr: np.ndarray, grid: GridSpec) -> np.ndarray:
    """Collocation values of a per-mode array with leading component axes."""
    lead = arr.ndim - grid.d_x
    moved = np.moveaxis(arr, tuple(range(lead)), tuple(range(grid.d_x, arr.ndim)))
    phys = to_physical(moved, grid)
    return np.moveaxis(phys, tuple(range(grid.d_x, arr.ndim)), tuple(range(lead)))


def field_physical(E: np.ndarray, grid: GridSpec) -> np.ndarray:
    """Real field on the collocation grid, shape ``(d_x,) + (M,)*d_x``."""
    return modes_to_physical(E, grid)


# -- Guo unknown -------------------------------------------------------------

def _phi_physical(phi: np.ndarray, grid: GridSpec) -> np.ndarray:
    phys = to_physical(np.asarray(phi, dtype=np.complex128), grid)
    sup = float(np.max(np.abs(phys))) if phys.size else 0.0
    if not sup < REGIME_LIMIT:
        raise RegimeError(f"|phi|_inf = {sup:.3g} is outside the perturbative regime")
    return phys


def _multiply_physical(f: Distribution, weight: np.ndarray) -> np.ndarray:
    grid = f.grid
    phys = to_physical(f.values, grid) + 1j * to_physical(-1j * f.values, grid)
    w = weight.reshape(weight.shape + (1, 1, 1))
    return from_physical(phys * w, grid)


def guo_transform(f: Distribution, phi: np.ndarray) -> Distribution:
    """``g = e^{phi} f`` evaluated pointwise on the collocation grid.

    The product is truncated back to ``|k| <= K_max``; the round trip is exact
    to the size of the discarded modes of ``e^{phi} f``.
    """
    _require_raw(f)
    w = np.exp(_phi_physical(phi, f.grid))
    return Distribution(f.grid, _multiply_physical(f, w), "g")


def guo_inverse(g: Distribution, phi: np.ndarray) -> Distribution:
    """``f = e^{-phi} g``."""
    if g.tag != "g":
        raise TagError("guo_inverse expects the Guo unknown g")
    w = np.exp(-_phi_physical(phi, g.grid))
    return Distribution(g.grid, _multiply_physical(g, w), "f")
