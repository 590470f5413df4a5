"""Compiled core vs numpy fallback: the pointwise collision kernel alone and a full ``apply_L``.

Usage: ``python3 benchmarks/bench_kernels.py [--sizes 16 32 64] [--repeat 5]``.
"""
from __future__ import annotations

import argparse
import timeit

import numpy as np

from vplsim import kernels
from vplsim.collision import apply_L, hessian_v
from vplsim.equilibrium import compute_coefficients
from vplsim.spectral_core import GridSpec


def _best(fn, repeat: int) -> float:
    number = max(1, int(0.2 / max(timeit.timeit(fn, number=1), 1e-6)))
    return min(timeit.repeat(fn, number=number, repeat=repeat)) / number


def bench(N: int, repeat: int) -> list[tuple]:
    co = compute_coefficients(GridSpec(d_x=1, K_max=1, N_v=N, V_max=6.0))
    g = co.grid
    rng = np.random.default_rng(0)
    f = rng.normal(size=g.vshape) * co.sqrt_mu
    dg, hg = hessian_v(f, g)
    zeroth = co.div_sigma - co.quad_form
    rows = []
    for dtype in (np.float64, np.complex128):
        ff, dd, hh = (x.astype(dtype) for x in (f, dg, hg))
        t_py = _best(lambda: kernels.second_order(co.sigma_ij, g.v_axes, ff, dd, hh, zeroth, use_ext=False), repeat)
        t_ext = (_best(lambda: kernels.second_order(co.sigma_ij, g.v_axes, ff, dd, hh, zeroth, use_ext=True), repeat)
                 if kernels.HAVE_EXT else float("nan"))
        rows.append((N, f"kernel {np.dtype(dtype).name}", t_py, t_ext))
    saved = kernels.HAVE_EXT
    try:
        kernels.HAVE_EXT = False
        t_py = _best(lambda: apply_L(f, co), repeat)
        kernels.HAVE_EXT = saved
        t_ext = _best(lambda: apply_L(f, co), repeat) if saved else float("nan")
    finally:
        kernels.HAVE_EXT = saved
    rows.append((N, "apply_L", t_py, t_ext))
    return rows


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--sizes", type=int, nargs="+", default=[16, 32, 64])
    p.add_argument("--repeat", type=int, default=5)
    args = p.parse_args(argv)
    print(f"compiled core available: {kernels.HAVE_EXT}")
    print(f"{'N_v':>4} {'case':<18} {'numpy [ms]':>11} {'compiled [ms]':>14} {'speedup':>8}")
    for N in args.sizes:
        for n, case, t_py, t_ext in bench(N, args.repeat):
            print(f"{n:>4} {case:<18} {1e3 * t_py:>11.3f} {1e3 * t_ext:>14.3f} {t_py / t_ext:>8.2f}")


if __name__ == "__main__":
    main()
