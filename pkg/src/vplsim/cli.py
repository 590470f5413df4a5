"""Command-line entry point: ``vplsim <subcommand> [--config PATH] [--set k=v ...] [--out DIR]``.

Exit codes: 0 success, 1 configuration error, 2 runtime or solver error.
"""
from __future__ import annotations

import argparse
import os
import sys

import numpy as np

from . import __version__
from .config import RunConfig, apply_overrides, format_config, load_config, validate
from .diagnostics import TRUNCATION_NOTE, record_header
from .dynamics import run, run_homogeneous
from .errors import ConfigError, VPLError
from .io import CsvStream, cached_coefficients, kernel_table_rows, write_csv, write_kernel_table, write_snapshot
from .kernels import HAVE_EXT
from .spectral_core import make_grid

SUBCOMMANDS = ("run", "linear-kernel", "homogeneous", "limit-study", "ed-sweep", "damping-fit")


def build_id() -> str:
    return f"vplsim {__version__} ({'compiled core' if HAVE_EXT else 'numpy core'})"


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="vplsim", description="Vlasov-Poisson-Landau simulator")
    p.add_argument("--version", action="version", version=build_id())
    sub = p.add_subparsers(dest="command", required=True)
    for name in SUBCOMMANDS:
        s = sub.add_parser(name)
        s.add_argument("--config", help="configuration file")
        s.add_argument("--set", action="append", default=[], metavar="KEY=VALUE", help="override a key")
        s.add_argument("--out", help="output directory (overrides paths.out_dir)")
    return p


def resolve_config(args) -> RunConfig:
    cfg = load_config(args.config) if args.config else validate(RunConfig())
    cfg = apply_overrides(cfg, args.set)
    if args.out:
        cfg = apply_overrides(cfg, [f"paths.out_dir={args.out!r}"])
    return cfg


def _prepare_out(cfg: RunConfig) -> str:
    out = cfg.paths.out_dir
    os.makedirs(out, exist_ok=True)
    with open(os.path.join(out, "resolved_config.cfg"), "w", encoding="utf-8") as fh:
        fh.write(format_config(cfg))
    return out


def _cmd_run(cfg: RunConfig, out: str):
    grid = make_grid(cfg)
    coeffs = cached_coefficients(grid, cfg.paths.cache_dir)
    if cfg.physics.mode == "quasilinear":
        from .experiments import experiment_quasilinear
        res = experiment_quasilinear(cfg, coeffs)
        rows = zip(res.times, res.f0L_norm, res.mean_deviation, res.f_neq)
        write_csv(os.path.join(out, "quasilinear.csv"), ["t", "f0L_norm", "mean_deviation", "f_neq_L2"], rows)
        return
    header = record_header(grid, cfg.diagnostics.ell)
    with CsvStream(os.path.join(out, "diagnostics.csv"), header, [TRUNCATION_NOTE]) as csv:
        snaps = [0]

        def on_snapshot(state):
            write_snapshot(state, os.path.join(out, f"snap_{state.step_count:08d}.vplk"))
            snaps[0] += 1

        state, _ = run(cfg, on_diag=lambda r: csv.write(r.row()), on_snapshot=on_snapshot, coeffs=coeffs)
    write_snapshot(state, os.path.join(out, "final.vplk"))


def _cmd_linear_kernel(cfg: RunConfig, out: str):
    from .volterra import compute_kernels, kernel_setup, penrose_report, resolvent_G
    lin = cfg.linear
    k0 = np.atleast_1d(cfg.physics.k0)
    grid, T_K = kernel_setup(k0, cfg.physics.nu, lin.n_par, lin.n_perp, cfg.grid.V_max, lin.T_K)
    coeffs = cached_coefficients(grid, cfg.paths.cache_dir)
    tg = lin.dt * np.arange(int(round(T_K / lin.dt)) + 1) if lin.T_K > 0 else None
    table = resolvent_G(compute_kernels(k0, cfg.physics.nu, t_grid=tg, dt=lin.dt, coeffs=coeffs,
                                        substeps=cfg.stepper.collision_substeps))
    write_kernel_table(table, os.path.join(out, "kernel.vplt"))
    header, rows = kernel_table_rows(table)
    write_csv(os.path.join(out, "kernel.csv"), header, rows)
    rep = penrose_report(table)
    write_csv(os.path.join(out, "penrose.csv"), ["margin", "lam", "omega", "crossover", "coarse_margin"],
              [[rep.margin, rep.argmin[0], rep.argmin[1], rep.crossover, rep.refined_margin]])


def _cmd_homogeneous(cfg: RunConfig, out: str):
    from .experiments import homogeneous_initial
    grid = make_grid(cfg)
    coeffs = cached_coefficients(grid, cfg.paths.cache_dir)
    f0 = homogeneous_initial(cfg, grid)
    st = cfg.stepper
    res = run_homogeneous(f0, coeffs, cfg.physics.nu, st.T_end, st.dt, nonlinear=cfg.physics.nonlinear,
                          substeps=st.collision_substeps)
    n0 = res.norms[0] ** 2
    rows = [(t, n, d, n * n + 0.5 * d, 2.0 * n0) for t, n, d in zip(res.times, res.norms, res.dissipation)]
    write_csv(os.path.join(out, "homogeneous.csv"), ["t", "norm", "nu_int_sigma_sq", "lhs", "bound"], rows)


def _cmd_limit_study(cfg: RunConfig, out: str):
    from .experiments import experiment_limit_study, limit_ratio
    coeffs = cached_coefficients(make_grid(cfg), cfg.paths.cache_dir)
    ex = cfg.experiment
    study = experiment_limit_study(cfg, [0.0] + [nu for nu in ex.nu_list if nu > 0], ex.T, coeffs)
    write_csv(os.path.join(out, "limit_study.csv"), ["nu", "t", "distance"], study.rows)
    note = [f"window c*min(nu)^(-1/3) = {study.window!r}, T within window: {study.in_window}"]
    write_csv(os.path.join(out, "limit_fit.csv"), ["nu", "slope", "distance_at_probe"],
              [(f["nu"], f["slope"], f["distance_at_probe"]) for f in study.fits], note)
    write_csv(os.path.join(out, "limit_ratio.csv"), ["nu_a", "nu_b", "distance_ratio", "nu_ratio"],
              limit_ratio(study))


def _cmd_ed_sweep(cfg: RunConfig, out: str):
    from .experiments import experiment_ed_sweep
    from .volterra import linear_grid
    lin = cfg.linear
    grid = linear_grid(lin.n_par, lin.n_perp, cfg.grid.V_max) if cfg.experiment.ed_solver == "mode" else make_grid(cfg)
    coeffs = cached_coefficients(grid, cfg.paths.cache_dir)
    sweep = experiment_ed_sweep(cfg, cfg.experiment.nu_list, coeffs)
    rows = [(nu, hl, 1.0 if status == "ok" else 0.0) for nu, hl, status in sweep.rows]
    notes = [f"nu={nu!r}: {status}" for nu, _, status in sweep.rows if status != "ok"]
    notes.append(f"fitted exponent of halflife vs nu: {sweep.exponent!r}")
    write_csv(os.path.join(out, "ed_sweep.csv"), ["nu", "halflife", "reached"], rows, notes)


def _cmd_damping_fit(cfg: RunConfig, out: str):
    from .experiments import experiment_damping
    coeffs = cached_coefficients(make_grid(cfg), cfg.paths.cache_dir)
    res = experiment_damping(cfg, coeffs)
    write_csv(os.path.join(out, "damping_series.csv"), ["t", "E_L2"], zip(res.times, res.E_L2))
    write_csv(os.path.join(out, "damping_fit.csv"), ["gamma_fit", "r2", "gamma_root", "omega_root"],
              [[res.gamma_fit, res.r2, res.gamma_root, res.root.real]])


_COMMANDS = {"run": _cmd_run, "linear-kernel": _cmd_linear_kernel, "homogeneous": _cmd_homogeneous,
             "limit-study": _cmd_limit_study, "ed-sweep": _cmd_ed_sweep, "damping-fit": _cmd_damping_fit}


def main(argv=None) -> int:
    parser = _parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0) if exc.code in (0, None) else 1
    try:
        cfg = resolve_config(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    try:
        out = _prepare_out(cfg)
        _COMMANDS[args.command](cfg, out)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except (VPLError, FloatingPointError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
