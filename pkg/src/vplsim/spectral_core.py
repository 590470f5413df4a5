"""Grids, transforms, and the exact phase operators.

The unknown is stored as Fourier coefficients in x on the modes
``k in {-K..K}^d_x`` and as point values on a periodic velocity box
``[-V_max, V_max)^3``.  With ``f(x) = sum_k f_k e^{ik.x}`` the x-integral of a
quantity is ``(2 pi)^d_x`` times its mode-0 coefficient.
"""
from __future__ import annotations

import os
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy import fft as sfft

from .errors import CflError, ConfigError, ShapeError

TAGS = ("f", "g", "h")


def fft_workers() -> int:
    """Thread count for FFTs, capped by the VPL_THREADS variable."""
    raw = os.environ.get("VPL_THREADS", "1")
    try:
        n = int(raw)
    except ValueError:
        return 1
    return max(1, n)


@dataclass(frozen=True)
class GridSpec:
    """Spatial mode set and velocity box.

    Parameters
    ----------
    d_x : int
        Spatial dimension, 1 to 3.
    K_max : int
        Mode cutoff per spatial axis.
    N_v : int or tuple of int
        Velocity points per axis; an int means the same count on all axes.
    V_max : float
        Half width of the velocity box.
    """

    d_x: int = 1
    K_max: int = 8
    N_v: tuple = (32, 32, 32)
    V_max: float = 6.0
    L_x: float = field(default=2.0 * np.pi, init=False)

    def __post_init__(self):
        n = self.N_v
        if np.ndim(n) == 0:
            n = (int(n),) * 3
        n = tuple(int(x) for x in n)
        if len(n) != 3:
            raise ConfigError("N_v must be an int or a triple")
        object.__setattr__(self, "N_v", n)
        if self.d_x not in (1, 2, 3):
            raise ConfigError(f"d_x must be 1, 2 or 3, got {self.d_x}")
        if any(x % 2 for x in n):
            raise ConfigError(f"N_v must be even, got {n}")
        if any(x < 8 for x in n):
            raise ConfigError(f"N_v must be at least 8, got {n}")
        if not self.V_max > 0:
            raise ConfigError(f"V_max must be positive, got {self.V_max}")
        if self.K_max < 1:
            raise ConfigError(f"K_max must be at least 1, got {self.K_max}")

    # -- velocity side -------------------------------------------------
    @property
    def vshape(self) -> tuple:
        return self.N_v

    @cached_property
    def dv(self) -> tuple:
        return tuple(2.0 * self.V_max / n for n in self.N_v)

    @property
    def cell(self) -> float:
        """Quadrature weight of one velocity cell."""
        return float(np.prod(self.dv))

    @cached_property
    def v_axes(self) -> tuple:
        return tuple(-self.V_max + np.arange(n) * d for n, d in zip(self.N_v, self.dv))

    @cached_property
    def v(self) -> tuple:
        """Velocity components as arrays broadcastable to ``vshape``."""
        out = []
        for a, ax in enumerate(self.v_axes):
            shape = [1, 1, 1]
            shape[a] = -1
            out.append(ax.reshape(shape))
        return tuple(out)

    @cached_property
    def vsq(self) -> np.ndarray:
        v1, v2, v3 = self.v
        return v1 * v1 + v2 * v2 + v3 * v3

    @cached_property
    def eta_axes(self) -> tuple:
        """Dual wavenumbers per axis in FFT order (spacing pi/V_max)."""
        return tuple(2.0 * np.pi * sfft.fftfreq(n, d) for n, d in zip(self.N_v, self.dv))

    # -- spatial side --------------------------------------------------
    @property
    def mode_shape(self) -> tuple:
        return (2 * self.K_max + 1,) * self.d_x

    @property
    def n_modes(self) -> int:
        return int(np.prod(self.mode_shape))

    @property
    def shape(self) -> tuple:
        return self.mode_shape + self.N_v

    @cached_property
    def k(self) -> tuple:
        """Integer wavenumber components, broadcastable to ``mode_shape``."""
        ks = np.arange(-self.K_max, self.K_max + 1)
        out = []
        for a in range(self.d_x):
            shape = [1] * self.d_x
            shape[a] = -1
            out.append(ks.reshape(shape))
        return tuple(out)

    @cached_property
    def ksq(self) -> np.ndarray:
        total = np.zeros(self.mode_shape)
        for ka in self.k:
            total = total + ka * ka
        return total

    @property
    def zero_index(self) -> tuple:
        return (self.K_max,) * self.d_x

    @property
    def n_colloc(self) -> int:
        """Collocation points per x axis (alias free for quadratic terms)."""
        return 3 * self.K_max + 1

    @cached_property
    def x_axis(self) -> np.ndarray:
        m = self.n_colloc
        return 2.0 * np.pi * np.arange(m) / m

    def index_of(self, kvec) -> tuple:
        """Array index of the integer mode ``kvec``."""
        kvec = tuple(int(c) for c in np.atleast_1d(kvec))
        if len(kvec) != self.d_x or any(abs(c) > self.K_max for c in kvec):
            raise ShapeError(f"mode {kvec} not on grid")
        return tuple(c + self.K_max for c in kvec)

    def half_modes(self) -> list:
        """Indices of k = 0 and of one member of each (k, -k) pair."""
        out = []
        for idx in np.ndindex(*self.mode_shape):
            kv = tuple(i - self.K_max for i in idx)
            neg = tuple(-c for c in kv)
            if kv >= neg:
                out.append(idx)
        return out

    def conj_index(self, idx) -> tuple:
        return tuple(2 * self.K_max - i for i in idx)


def make_grid(config) -> GridSpec:
    """Build a validated grid from a run configuration."""
    g = config.grid
    return GridSpec(d_x=int(g.d_x), K_max=int(g.K_max), N_v=g.N_v, V_max=float(g.V_max))


@dataclass
class Distribution:
    """Spectral-in-x, grid-in-v array with its grid and stored unknown."""

    grid: GridSpec
    values: np.ndarray
    tag: str = "f"

    def __post_init__(self):
        if self.values.shape != self.grid.shape:
            raise ShapeError(f"values shape {self.values.shape} != grid shape {self.grid.shape}")
        if self.tag not in TAGS:
            raise ValueError(f"unknown tag {self.tag!r}")
        self.values = np.asarray(self.values, dtype=np.complex128)

    @classmethod
    def zeros(cls, grid: GridSpec, tag: str = "f") -> "Distribution":
        return cls(grid, np.zeros(grid.shape, dtype=np.complex128), tag)

    def copy(self) -> "Distribution":
        return Distribution(self.grid, self.values.copy(), self.tag)

    def mode(self, kvec) -> np.ndarray:
        return self.values[self.grid.index_of(kvec)]

    def with_values(self, values: np.ndarray, tag: str | None = None) -> "Distribution":
        return Distribution(self.grid, values, self.tag if tag is None else tag)


@dataclass
class VSpectrum:
    """Distribution with the velocity axes replaced by unnormalised DFT coefficients."""

    grid: GridSpec
    values: np.ndarray
    tag: str = "f"


def _check(f: Distribution):
    if f.values.shape != f.grid.shape:
        raise ShapeError("distribution does not match its grid")


def v_forward(f: Distribution) -> VSpectrum:
    _check(f)
    return VSpectrum(f.grid, sfft.fftn(f.values, axes=(-3, -2, -1), workers=fft_workers()), f.tag)


def v_inverse(F: VSpectrum) -> Distribution:
    if F.values.shape != F.grid.shape:
        raise ShapeError("spectrum does not match its grid")
    return Distribution(F.grid, sfft.ifftn(F.values, axes=(-3, -2, -1), workers=fft_workers()), F.tag)


# -- velocity derivatives ---------------------------------------------------

def _deriv_symbol(grid: GridSpec, a: int, half: bool) -> np.ndarray:
    n = grid.N_v[a]
    if half:
        eta = 2.0 * np.pi * sfft.rfftfreq(n, grid.dv[a])
    else:
        eta = grid.eta_axes[a].copy()
    eta[n // 2] = 0.0  # odd symbol: Nyquist mode dropped
    return 1j * eta


def dv_axis(arr: np.ndarray, a: int, grid: GridSpec) -> np.ndarray:
    """Spectral derivative along velocity axis ``a`` (last three axes are v)."""
    axis = arr.ndim - 3 + a
    shape = [1] * arr.ndim
    shape[axis] = -1
    w = fft_workers()
    if np.isrealobj(arr):
        sym = _deriv_symbol(grid, a, True).reshape(shape)
        return sfft.irfft(sfft.rfft(arr, axis=axis, workers=w) * sym, n=arr.shape[axis], axis=axis, workers=w)
    sym = _deriv_symbol(grid, a, False).reshape(shape)
    return sfft.ifft(sfft.fft(arr, axis=axis, workers=w) * sym, axis=axis, workers=w)


def grad_v(arr: np.ndarray, grid: GridSpec) -> tuple:
    return tuple(dv_axis(arr, a, grid) for a in range(3))


def div_v(comps, grid: GridSpec) -> np.ndarray:
    out = dv_axis(comps[0], 0, grid)
    out = out + dv_axis(comps[1], 1, grid)
    out = out + dv_axis(comps[2], 2, grid)
    return out


def integrate_v(arr: np.ndarray, grid: GridSpec) -> np.ndarray:
    """Trapezoid (periodic) quadrature over the last three axes."""
    return arr.sum(axis=(-3, -2, -1)) * grid.cell


# -- x collocation ----------------------------------------------------------

def to_physical(values: np.ndarray, grid: GridSpec) -> np.ndarray:
    """Evaluate mode coefficients on the collocation grid (real output).

    Only the Hermitian part of ``values`` contributes (the real part of the
    full synthesis); it is formed on the half spectrum and inverted by irfftn.
    """
    m = grid.n_colloc
    d = grid.d_x
    K = grid.K_max
    last = d - 1
    pos = np.take(values, np.arange(K, 2 * K + 1), axis=last)
    neg = np.flip(np.take(values, np.arange(0, K + 1), axis=last), axis=tuple(range(d)))
    herm = 0.5 * (pos + np.conj(neg))
    buf = np.zeros((m,) * last + (m // 2 + 1,) + values.shape[d:], dtype=np.complex128)
    idx = np.arange(-K, K + 1) % m
    buf[np.ix_(*([idx] * last + [np.arange(K + 1)]))] = herm
    return sfft.irfftn(buf, s=(m,) * d, axes=tuple(range(d)), norm="forward", workers=fft_workers())


def from_physical(phys: np.ndarray, grid: GridSpec) -> np.ndarray:
    """Mode coefficients |k| <= K_max of collocation values (2/3-rule truncation)."""
    m = grid.n_colloc
    d = grid.d_x
    spec = sfft.fftn(phys, axes=tuple(range(d)), norm="forward", workers=fft_workers())
    idx = np.arange(-grid.K_max, grid.K_max + 1) % m
    return np.ascontiguousarray(spec[np.ix_(*([idx] * d))])


def enforce_reality(values: np.ndarray, grid: GridSpec) -> np.ndarray:
    """Symmetrise so that the -k entry is the conjugate of the k entry."""
    d = grid.d_x
    flipped = np.conj(np.flip(values, axis=tuple(range(d))))
    return 0.5 * (values + flipped)


def reality_defect(values: np.ndarray, grid: GridSpec) -> float:
    d = grid.d_x
    flipped = np.conj(np.flip(values, axis=tuple(range(d))))
    return float(np.max(np.abs(values - flipped))) if values.size else 0.0


# -- norms -----------------------------------------------------------------

def inner_xv(a: np.ndarray, b: np.ndarray, grid: GridSpec) -> float:
    """Real L2_{x,v} inner product of two mode arrays."""
    return float(np.real(np.vdot(a, b))) * grid.cell * (2.0 * np.pi) ** grid.d_x


def norm_xv(values: np.ndarray, grid: GridSpec) -> float:
    return float(np.sqrt(max(inner_xv(values, values, grid), 0.0)))


def norm_v(arr: np.ndarray, grid: GridSpec) -> float:
    """L2_v norm of a single velocity array."""
    return float(np.sqrt(np.sum(np.abs(arr) ** 2) * grid.cell))


# -- phase operators -------------------------------------------------------

def _kv(grid: GridSpec) -> np.ndarray:
    """k.v broadcast to (modes..., N1, N2, N3)."""
    d = grid.d_x
    kv = 0.0
    for a in range(d):
        ka = grid.k[a].reshape(grid.k[a].shape + (1, 1, 1))
        va = grid.v[a].reshape((1,) * d + grid.v[a].shape)
        kv = kv + ka * va
    return kv


def transport_phase(f: Distribution, dt: float) -> Distribution:
    """Exact free streaming: multiply each entry by exp(-i k.v dt)."""
    _check(f)
    if not np.isfinite(dt):
        raise ValueError("dt must be finite")
    phase = np.exp(-1j * dt * _kv(f.grid))
    out = f.values * phase
    if not np.all(np.isfinite(out)):
        raise FloatingPointError("non-finite values after transport")
    return Distribution(f.grid, out, f.tag)


def shift_physical(phys: np.ndarray, shifts: np.ndarray, grid: GridSpec) -> np.ndarray:
    """Shift real collocation data in v: ``out(x, v) = phys(x, v - s(x))``.

    Parameters
    ----------
    phys : ndarray
        Real array of shape ``(M,)*d_x + vshape``.
    shifts : ndarray
        Shape ``(d_x,) + (M,)*d_x``; component ``a`` shifts velocity axis ``a``.
    """
    d = grid.d_x
    w = fft_workers()
    out = phys
    for a in range(d):
        s = shifts[a]
        if not np.any(s):
            continue
        axis = d + a
        n = grid.N_v[a]
        eta = 2.0 * np.pi * sfft.rfftfreq(n, grid.dv[a])
        shp = [1] * (d + 3)
        shp[axis] = -1
        eta = eta.reshape(shp)
        mult = np.exp(-1j * eta * s.reshape(s.shape + (1, 1, 1)))
        # Nyquist kept fixed so the map stays unitary and real
        nyq = [slice(None)] * (d + 3)
        nyq[axis] = n // 2
        mult[tuple(nyq)] = 1.0
        out = sfft.irfft(sfft.rfft(out, axis=axis, workers=w) * mult, n=n, axis=axis, workers=w)
    return out


def acceleration_phase(f: Distribution, E_phys: np.ndarray, dt: float) -> Distribution:
    """Exact solution of ``d_t f + E.grad_v f = 0`` with E frozen.

    Parameters
    ----------
    E_phys : ndarray
        Real field on the collocation grid, shape ``(d_x,) + (M,)*d_x``.
    """
    _check(f)
    grid = f.grid
    E_phys = np.asarray(E_phys, dtype=float)
    if E_phys.shape != (grid.d_x,) + (grid.n_colloc,) * grid.d_x:
        raise ShapeError(f"field shape {E_phys.shape} does not match grid")
    shifts = E_phys * dt
    check_shift(shifts, grid)
    phys = to_physical(f.values, grid)
    out = from_physical(shift_physical(phys, shifts, grid), grid)
    return Distribution(grid, out, f.tag)


def check_shift(shifts: np.ndarray, grid: GridSpec):
    smax = float(np.max(np.abs(shifts))) if shifts.size else 0.0
    if not np.isfinite(smax) or smax >= grid.V_max / 4:
        raise CflError(f"velocity shift {smax:.3g} exceeds V_max/4 = {grid.V_max / 4:.3g}")
