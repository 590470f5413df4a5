"""Linearised Landau operator L = -K - A, the bilinear form Gamma, and sigma norms.

Convolutions against ``Phi^{ij}(z) = (delta_ij - z_i z_j/|z|^2)/|z|`` use
``Phi^{ij} = d_i d_j |z|``: the kernel ``|z|`` is truncated at ``R = 2 V_max``
and applied on a box zero-padded to twice its width, where the truncated
kernel has the closed-form transform

    T(xi) = 4 pi [(2 - xi^2 R^2) cos(xi R) + 2 xi R sin(xi R) - 2] / xi^4.

Every convolution input here carries a factor mu^{1/2} and every output is
used against a mu^{1/2}-decaying field, so the pairs cut by the truncation
carry weight at most exp(-R^2/4).
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy import fft as sfft

from .equilibrium import SYM_PAIRS, CollisionCoefficients, contract_sigma
from .errors import ShapeError
from .kernels import second_order
from .spectral_core import GridSpec, dv_axis, fft_workers, grad_v


def truncated_abs_symbol(xi: np.ndarray, R: float) -> np.ndarray:
    """Fourier transform of ``|z| 1_{|z|<R}`` in three dimensions."""
    x = np.asarray(xi, dtype=float) * R
    out = np.empty_like(x)
    small = x < 0.1
    xs = x[~small]
    out[~small] = 4.0 * np.pi * R**4 * ((2.0 - xs * xs) * np.cos(xs) + 2.0 * xs * np.sin(xs) - 2.0) / xs**4
    xq = x[small] ** 2
    out[small] = 4.0 * np.pi * R**4 * (0.25 - xq / 36.0 + xq * xq / 960.0)
    return out


class ConvolutionPlan:
    """Padded-FFT machinery for Phi-type convolutions on one velocity grid."""

    def __init__(self, grid: GridSpec):
        self.grid = grid
        self.R = 2.0 * grid.V_max
        self.pshape = tuple(2 * n for n in grid.N_v)
        xi = []
        xi_odd = []
        for a, (n, d) in enumerate(zip(self.pshape, grid.dv)):
            if a < 2:
                k = 2.0 * np.pi * sfft.fftfreq(n, d)
            else:
                k = 2.0 * np.pi * sfft.rfftfreq(n, d)
            ko = k.copy()
            ko[n // 2] = 0.0
            shape = [1, 1, 1]
            shape[a] = -1
            xi.append(k.reshape(shape))
            xi_odd.append(ko.reshape(shape))
        self.xi = tuple(xi)
        self.xi_odd = tuple(xi_odd)
        self.xisq = xi[0] ** 2 + xi[1] ** 2 + xi[2] ** 2
        self.T = truncated_abs_symbol(np.sqrt(self.xisq), self.R)

    def forward(self, src: np.ndarray) -> np.ndarray:
        """Padded transform of a real velocity array, times T."""
        return sfft.rfftn(src, s=self.pshape, workers=fft_workers()) * self.T

    def inverse(self, spec: np.ndarray) -> np.ndarray:
        n1, n2, n3 = self.grid.N_v
        out = sfft.irfftn(spec, s=self.pshape, workers=fft_workers())
        return np.ascontiguousarray(out[:n1, :n2, :n3])

    def pair_symbol(self, i: int, j: int) -> np.ndarray:
        """Symbol of ``d_i d_j`` (Nyquist dropped for mixed pairs)."""
        if i == j:
            return -(self.xi[i] ** 2)
        return -(self.xi_odd[i] * self.xi_odd[j])


_PLANS: dict = {}


def plan_for(grid: GridSpec) -> ConvolutionPlan:
    key = (grid.N_v, grid.V_max)
    if key not in _PLANS:
        _PLANS[key] = ConvolutionPlan(grid)
    return _PLANS[key]


def _check(arr: np.ndarray, coeffs: CollisionCoefficients):
    if arr.shape != coeffs.grid.vshape:
        raise ShapeError(f"velocity array shape {arr.shape} != {coeffs.grid.vshape}")


def _split(fn, arr, *args):
    """Apply a real-linear map to a possibly complex array."""
    if np.iscomplexobj(arr):
        re = fn(np.ascontiguousarray(arr.real), *args)
        if np.any(arr.imag):
            return re + 1j * fn(np.ascontiguousarray(arr.imag), *args)
        return re.astype(np.complex128)
    return fn(arr, *args)


def hessian_v(g: np.ndarray, grid: GridSpec) -> tuple[np.ndarray, np.ndarray]:
    """Spectral gradient (3 components) and Hessian (6, ``SYM_PAIRS`` order) in v."""
    dg = np.stack(grad_v(g, grid))
    hg = np.empty((6,) + g.shape, dtype=dg.dtype)
    for n, (i, j) in enumerate(SYM_PAIRS):
        hg[n] = dv_axis(dg[j], i, grid)
    return dg, hg


def apply_A(f_v: np.ndarray, coeffs: CollisionCoefficients) -> np.ndarray:
    """Local part ``d_i(sigma^{ij} d_j f) - sigma^{ij} v_i v_j f + (d_i sigma^i) f``.

    Expanded with ``d_i sigma^{ij} = -2 sigma^j`` into
    ``sigma^{ij} f_ij - 2 sigma^j f_j + (4 pi mu - sigma^{ij} v_i v_j) f`` so
    that only ``f`` is differentiated; the coefficients enter pointwise.
    """
    _check(f_v, coeffs)
    dg, hg = hessian_v(f_v, coeffs.grid)
    return second_order(coeffs.sigma_ij, coeffs.grid.v_axes, f_v, dg, hg,
                        coeffs.div_sigma - coeffs.quad_form)


def _convolve_phi_real(h: np.ndarray, coeffs: CollisionCoefficients) -> np.ndarray:
    plan = plan_for(coeffs.grid)
    H = plan.forward(h)
    out = np.empty((6,) + coeffs.grid.vshape)
    for n, (i, j) in enumerate(SYM_PAIRS):
        out[n] = plan.inverse(plan.pair_symbol(i, j) * H)
    return out


def convolve_phi(h: np.ndarray, coeffs: CollisionCoefficients) -> np.ndarray:
    """The six fields ``Phi^{ij} * h`` on the box, ``SYM_PAIRS`` order."""
    _check(h, coeffs)
    return _split(_convolve_phi_real, h, coeffs)


def _vav(a: np.ndarray, grid: GridSpec) -> np.ndarray:
    v1, v2, v3 = grid.v
    out = v1 * v1 * a[0] + v2 * v2 * a[3] + v3 * v3 * a[5]
    return out + 2.0 * (v1 * v2 * a[1] + v1 * v3 * a[2] + v2 * v3 * a[4])


def k_from_fields(a: np.ndarray, f_v: np.ndarray, coeffs: CollisionCoefficients) -> np.ndarray:
    """``K f`` from ``a = Phi * (mu^{1/2} f)``."""
    tr = a[0] + a[3] + a[5]
    smu = coeffs.sqrt_mu
    return smu * (4.0 * _vav(a, coeffs.grid) - 2.0 * tr + 8.0 * np.pi * smu * f_v)


def apply_K(f_v: np.ndarray, coeffs: CollisionCoefficients) -> np.ndarray:
    """Nonlocal part ``-mu^{-1/2} d_i[mu Phi^{ij} * (mu^{1/2}(d_j f + v_j f))]``.

    Moving the derivatives onto the kernel and using ``Phi^{ij} z_j = 0``
    turns this into ``mu^{1/2}(4 v_i v_j a^{ij} - 2 a^{ii} + 8 pi mu^{1/2} f)``
    with ``a^{ij} = Phi^{ij} * (mu^{1/2} f)``: no division by mu^{1/2} and no
    derivative of a non-decaying field.
    """
    _check(f_v, coeffs)
    return k_from_fields(convolve_phi(coeffs.sqrt_mu * f_v, coeffs), f_v, coeffs)


def apply_L(f_v: np.ndarray, coeffs: CollisionCoefficients) -> np.ndarray:
    return -apply_K(f_v, coeffs) - apply_A(f_v, coeffs)


@dataclass
class GammaCoefficients:
    """Convolved fields of the first argument of Gamma, restricted to the box.

    ``a[n] = Phi^{ij} * h`` for the pairs in ``SYM_PAIRS`` and ``h = mu^{1/2} g1``.
    """

    a: np.ndarray
    h: np.ndarray


def gamma_coefficients(g1: np.ndarray, coeffs: CollisionCoefficients) -> GammaCoefficients:
    _check(g1, coeffs)
    h = coeffs.sqrt_mu * g1
    return GammaCoefficients(convolve_phi(h, coeffs), h)


def gamma_apply(gc: GammaCoefficients, g2: np.ndarray, coeffs: CollisionCoefficients) -> np.ndarray:
    """Evaluate ``Gamma(g1, g2)`` from precomputed first-argument fields.

    The divergence form ``d_i[a^{ij} d_j g2 - c^i g2] - b^j d_j g2 + d g2``
    (``b^j = v_i a^{ij}``, ``c^i = d_j a^{ij} + b^i``, ``d = v_i c^i``) is
    expanded with ``d_i d_j a^{ij} = -8 pi h`` to
    ``a^{ij} g2_ij - 2 b^j g2_j + (v_i v_j a^{ij} - a^{ii} + 8 pi h) g2``.
    """
    _check(g2, coeffs)
    dg, hg = hessian_v(g2, coeffs.grid)
    return gamma_pointwise(gc.a, gc.h, g2, dg, hg, coeffs.grid)


def gamma_pointwise(a, h, g2, dg, hg, grid: GridSpec) -> np.ndarray:
    """Gamma from first-argument fields ``(a, h)`` and second-argument derivatives."""
    return second_order(a, grid.v_axes, g2, dg, hg, 8.0 * np.pi * h, s=1.0)


def apply_Gamma(g1_v: np.ndarray, g2_v: np.ndarray, coeffs: CollisionCoefficients) -> np.ndarray:
    """Nonlinear Landau form, bilinear in ``(g1, g2)``."""
    _check(g1_v, coeffs)
    _check(g2_v, coeffs)
    return gamma_apply(gamma_coefficients(g1_v, coeffs), g2_v, coeffs)


@dataclass
class ModeFields:
    """Everything the collision step needs from one velocity array.

    ``a`` and ``h`` are the Gamma first-argument fields, ``dg`` and ``hg`` the
    gradient and Hessian; ``Lf`` is the linearised operator applied to it.
    """

    a: np.ndarray
    h: np.ndarray
    dg: np.ndarray
    hg: np.ndarray
    Lf: np.ndarray


def mode_fields(f_v: np.ndarray, coeffs: CollisionCoefficients) -> ModeFields:
    """One convolution pass shared by ``L f`` and by Gamma with ``f`` in either slot."""
    _check(f_v, coeffs)
    h = coeffs.sqrt_mu * f_v
    a = convolve_phi(h, coeffs)
    dg, hg = hessian_v(f_v, coeffs.grid)
    A = second_order(coeffs.sigma_ij, coeffs.grid.v_axes, f_v, dg, hg, coeffs.div_sigma - coeffs.quad_form)
    return ModeFields(a, h, dg, hg, -k_from_fields(a, f_v, coeffs) - A)


# -- sigma norms -------------------------------------------------------------

@dataclass(frozen=True)
class SigmaNormSpec:
    """Velocity weight ``<v>^{2 ell}`` with ``<v> = (1 + |v|^2)^{1/2}``."""

    ell: float
    grid: GridSpec

    @cached_property
    def weight(self) -> np.ndarray:
        return (1.0 + self.grid.vsq) ** self.ell


def sigma_density(f_v: np.ndarray, coeffs: CollisionCoefficients) -> np.ndarray:
    """Pointwise ``sigma^{ij} d_i f d_j conj(f) + sigma^{ij} v_i v_j |f|^2``."""
    g = np.stack(grad_v(f_v, coeffs.grid))
    dens = contract_sigma(coeffs, g, np.conj(g)).real
    return dens + coeffs.quad_form * np.abs(f_v) ** 2


def sigma_norm(f_v: np.ndarray, coeffs: CollisionCoefficients, ell: float = 0.0) -> float:
    """``|f|_{sigma, ell}`` by spectral gradients and trapezoid quadrature."""
    _check(f_v, coeffs)
    w = SigmaNormSpec(float(ell), coeffs.grid).weight
    val = float(np.sum(w * sigma_density(f_v, coeffs)) * coeffs.grid.cell)
    return float(np.sqrt(max(val, 0.0)))
