"""Pointwise collision kernel: compiled extension when built, numpy otherwise."""
from __future__ import annotations

import os

import numpy as np


def second_order_py(a, v1, v2, v3, g, dg, hg, zeroth, s: float) -> np.ndarray:
    x = v1[:, None, None]
    y = v2[None, :, None]
    z = v3[None, None, :]
    b0 = x * a[0] + y * a[1] + z * a[2]
    b1 = x * a[1] + y * a[3] + z * a[4]
    b2 = x * a[2] + y * a[4] + z * a[5]
    out = a[0] * hg[0] + a[3] * hg[3] + a[5] * hg[5]
    out = out + 2.0 * (a[1] * hg[1] + a[2] * hg[2] + a[4] * hg[4])
    out = out - 2.0 * (b0 * dg[0] + b1 * dg[1] + b2 * dg[2])
    zz = zeroth
    if s:
        zz = zz + s * (x * b0 + y * b1 + z * b2 - a[0] - a[3] - a[5])
    return out + zz * g


try:
    if os.environ.get("VPL_NO_EXT"):
        raise ImportError("extension disabled")
    from . import _kernels as _ext
    HAVE_EXT = True
except ImportError:
    _ext = None
    HAVE_EXT = False


def second_order(a, v_axes, g, dg, hg, zeroth, s: float = 0.0, use_ext: bool | None = None) -> np.ndarray:
    """Pointwise ``a^{ij} g_ij - 2 v_i a^{ij} g_j + (zeroth + s (v a v - tr a)) g``.

    Parameters
    ----------
    a : ndarray, shape (6, N1, N2, N3)
        Symmetric coefficient field in (00, 01, 02, 11, 12, 22) order.
    g, dg, hg : ndarray
        Field, its gradient (3 components) and Hessian (6 components).
    zeroth : ndarray
        Zeroth-order coefficient, broadcastable to ``g``.
    """
    if use_ext is None:
        use_ext = HAVE_EXT
    v1, v2, v3 = (np.ascontiguousarray(x, dtype=np.float64) for x in v_axes)
    cplx = any(np.iscomplexobj(x) for x in (a, g, dg, hg, zeroth))
    dt = np.complex128 if cplx else np.float64
    shape = g.shape
    if use_ext:
        def flat(x, lead):
            x = np.broadcast_to(np.asarray(x, dtype=dt), ((lead,) if lead else ()) + shape)
            return np.ascontiguousarray(x).reshape((lead, -1) if lead else (-1,))
        out = _ext.second_order(flat(a, 6), v1, v2, v3, flat(g, 0), flat(dg, 3), flat(hg, 6),
                                flat(zeroth, 0), float(s))
        return out.reshape(shape)
    return second_order_py(a, v1, v2, v3, g, dg, hg, zeroth, s)
