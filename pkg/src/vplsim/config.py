"""Run configuration: a line-oriented ``key = value`` format with ``[section]`` headers.

Values are Python literals (numbers, quoted strings, lists) or ``true``/``false``.
Every key has a default and unknown keys are rejected with the line number.
"""
from __future__ import annotations

import ast
from dataclasses import dataclass, field, fields, replace

from .errors import ConfigError


@dataclass
class GridBlock:
    d_x: int = 1
    K_max: int = 8
    N_v: object = 32
    V_max: float = 6.0


@dataclass
class PhysicsBlock:
    nu: float = 0.0
    epsilon: float = 1e-3
    family: str = "single_mode"
    k0: object = 1
    unknown: str = "f"
    nonlinear: bool = True
    field_coupling: bool = True
    mode: str = "full"
    chi: str = "1"
    chi_beta: float = 0.0
    k_band: int = 2


@dataclass
class StepperBlock:
    dt: float = 0.01
    T_end: float = 1.0
    diag_every: int = 10
    snap_every: int = 0
    collision_substeps: int = 1


@dataclass
class DiagnosticsBlock:
    ell: float = 4.0
    kappa: float = 0.1
    A0: float = 4.0
    kappa0: float = 0.05
    lam_inf: float = 0.1
    delta: float = 0.1
    a: float = 0.05
    s: object = None


@dataclass
class PathsBlock:
    out_dir: str = "out"
    cache_dir: str = ""


@dataclass
class LinearBlock:
    """Velocity grid and horizon of the single-mode kernel solver (0 means automatic)."""

    n_par: int = 64
    n_perp: int = 24
    T_K: float = 0.0
    dt: float = 0.05


@dataclass
class ExperimentBlock:
    nu_list: list = field(default_factory=lambda: [1e-2, 5e-3])
    T: float = 8.0
    c: float = 0.5
    fit_window: list = field(default_factory=lambda: [2.0, 8.0])
    t_probe: float = 5.0
    sample_every: int = 10
    damping_window: list = field(default_factory=lambda: [2.0, 15.0])
    ed_solver: str = "mode"


@dataclass
class RunConfig:
    grid: GridBlock = field(default_factory=GridBlock)
    physics: PhysicsBlock = field(default_factory=PhysicsBlock)
    stepper: StepperBlock = field(default_factory=StepperBlock)
    diagnostics: DiagnosticsBlock = field(default_factory=DiagnosticsBlock)
    paths: PathsBlock = field(default_factory=PathsBlock)
    linear: LinearBlock = field(default_factory=LinearBlock)
    experiment: ExperimentBlock = field(default_factory=ExperimentBlock)
    seed: int = 0


SECTIONS = ("grid", "physics", "stepper", "diagnostics", "paths", "linear", "experiment")


def _literal(text: str, line: int):
    t = text.strip()
    low = t.lower()
    if low in ("true", "false"):
        return low == "true"
    if low in ("none", "null"):
        return None
    try:
        return ast.literal_eval(t)
    except (ValueError, SyntaxError) as exc:
        raise ConfigError(f"line {line}: cannot parse value {t!r}") from exc


def _coerce(name: str, default, value, line: int):
    """Match ``value`` to the type of the default; ints promote to floats."""
    if name in ("N_v", "k0"):
        if isinstance(value, bool) or not (isinstance(value, int) or
                                           (isinstance(value, (list, tuple)) and
                                            all(isinstance(c, int) and not isinstance(c, bool) for c in value))):
            raise ConfigError(f"line {line}: {name} must be an integer or a list of integers")
        return tuple(value) if isinstance(value, (list, tuple)) else value
    if name == "s":
        if value is None:
            return None
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"line {line}: s must be a number")
        return float(value)
    if isinstance(default, bool):
        if not isinstance(value, bool):
            raise ConfigError(f"line {line}: {name} must be true or false")
        return value
    if isinstance(default, int):
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"line {line}: {name} must be an integer")
        return value
    if isinstance(default, float):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"line {line}: {name} must be a number")
        return float(value)
    if isinstance(default, str):
        if not isinstance(value, str):
            raise ConfigError(f"line {line}: {name} must be a string")
        return value
    if isinstance(default, list):
        if not isinstance(value, (list, tuple)) or not all(isinstance(c, (int, float)) for c in value):
            raise ConfigError(f"line {line}: {name} must be a list of numbers")
        return [float(c) for c in value]
    return value


def _set(cfg: RunConfig, section: str | None, key: str, raw, line: int, from_text: bool = True):
    if section is None:
        if key != "seed":
            raise ConfigError(f"line {line}: unknown top-level key {key!r}")
        return replace(cfg, seed=_coerce("seed", 0, raw, line))
    block = getattr(cfg, section)
    names = {f.name: f for f in fields(block)}
    if key not in names:
        raise ConfigError(f"line {line}: unknown key {key!r} in [{section}]")
    new = replace(block, **{key: _coerce(key, getattr(type(block)(), key), raw, line)})
    return replace(cfg, **{section: new})


def validate(cfg: RunConfig, line_of: dict | None = None) -> RunConfig:
    """Check cross-field invariants; ``line_of`` maps ``section.key`` to a line for messages."""
    line_of = line_of or {}

    def fail(key, msg):
        ln = line_of.get(key)
        raise ConfigError(f"line {ln}: {msg}" if ln else msg)

    g, p, st, dg = cfg.grid, cfg.physics, cfg.stepper, cfg.diagnostics
    if g.d_x not in (1, 2, 3):
        fail("grid.d_x", f"d_x must be 1, 2 or 3, got {g.d_x}")
    if g.K_max < 1:
        fail("grid.K_max", "K_max must be at least 1")
    nv = g.N_v if isinstance(g.N_v, tuple) else (g.N_v,)
    if len(nv) not in (1, 3) or any(n < 8 or n % 2 for n in nv):
        fail("grid.N_v", f"N_v must be even and at least 8 (one value or three), got {g.N_v}")
    if not g.V_max > 0:
        fail("grid.V_max", "V_max must be positive")
    if p.nu < 0:
        fail("physics.nu", f"nu must be nonnegative, got {p.nu}")
    if p.family not in ("single_mode", "random_band"):
        fail("physics.family", f"unknown initial family {p.family!r}")
    if p.unknown not in ("f", "g"):
        fail("physics.unknown", f"unknown must be f or g, got {p.unknown!r}")
    if p.mode not in ("full", "quasilinear"):
        fail("physics.mode", f"mode must be full or quasilinear, got {p.mode!r}")
    k0 = p.k0 if isinstance(p.k0, tuple) else (p.k0,)
    if len(k0) > g.d_x or not any(k0) or any(abs(c) > g.K_max for c in k0):
        fail("physics.k0", f"k0 = {p.k0} is not a nonzero mode of the grid")
    if p.k_band < 1:
        fail("physics.k_band", "k_band must be at least 1")
    if not st.dt > 0:
        fail("stepper.dt", "dt must be positive")
    if st.T_end < 0:
        fail("stepper.T_end", "T_end must be nonnegative")
    if st.diag_every < 1:
        fail("stepper.diag_every", "diag_every must be at least 1")
    if st.snap_every < 0:
        fail("stepper.snap_every", "snap_every must be nonnegative")
    if st.collision_substeps < 1:
        fail("stepper.collision_substeps", "collision_substeps must be at least 1")
    if dg.s is not None and not 0.5 < dg.s < 2.0 / 3.0:
        fail("diagnostics.s", f"s = {dg.s} must lie in (1/2, 2/3)")
    if dg.ell < 0 or dg.kappa < 0 or dg.A0 < 0 or dg.kappa0 < 0:
        fail("diagnostics.ell", "hypocoercivity parameters must be nonnegative")
    if cfg.linear.n_par < 8 or cfg.linear.n_par % 2 or cfg.linear.n_perp < 8 or cfg.linear.n_perp % 2:
        fail("linear.n_par", "linear grid sizes must be even and at least 8")
    if not cfg.linear.dt > 0:
        fail("linear.dt", "linear.dt must be positive")
    ex = cfg.experiment
    if any(n < 0 for n in ex.nu_list):
        fail("experiment.nu_list", "nu_list entries must be nonnegative")
    if ex.ed_solver not in ("mode", "full"):
        fail("experiment.ed_solver", f"ed_solver must be mode or full, got {ex.ed_solver!r}")
    if len(ex.fit_window) != 2 or len(ex.damping_window) != 2:
        fail("experiment.fit_window", "windows need two entries")
    return cfg


def parse_config(text: str) -> RunConfig:
    """Parse and validate configuration text."""
    cfg = RunConfig()
    section = None
    line_of = {}
    for ln, raw in enumerate(str(text).splitlines(), start=1):
        s = _strip_comment(raw)
        if not s:
            continue
        if s.startswith("["):
            if not s.endswith("]"):
                raise ConfigError(f"line {ln}: malformed section header {raw.strip()!r}")
            name = s[1:-1].strip()
            if name not in SECTIONS:
                raise ConfigError(f"line {ln}: unknown section [{name}]")
            section = name
            continue
        if "=" not in s:
            raise ConfigError(f"line {ln}: expected key = value, got {raw.strip()!r}")
        key, val = (part.strip() for part in s.split("=", 1))
        cfg = _set(cfg, section, key, _literal(val, ln), ln)
        line_of[f"{section}.{key}" if section else key] = ln
    return validate(cfg, line_of)


def _strip_comment(line: str) -> str:
    quote = None
    for i, ch in enumerate(line):
        if quote:
            if ch == quote:
                quote = None
        elif ch in "\"'":
            quote = ch
        elif ch == "#":
            return line[:i].strip()
    return line.strip()


def load_config(path) -> RunConfig:
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return parse_config(text)


def apply_overrides(cfg: RunConfig, items) -> RunConfig:
    """Apply ``section.key=value`` overrides; bare words are accepted for string keys."""
    for n, item in enumerate(items or (), start=1):
        if "=" not in item:
            raise ConfigError(f"override {n}: expected section.key=value, got {item!r}")
        path, val = (p.strip() for p in item.split("=", 1))
        section, _, key = path.rpartition(".")
        section = section or None
        if section is not None and section not in SECTIONS:
            raise ConfigError(f"override {n}: unknown section {section!r}")
        try:
            value = _literal(val, n)
        except ConfigError:
            value = val
        cfg = _set(cfg, section, key, value, n)
    return validate(cfg)


def _format_value(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if v is None:
        return "none"
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, tuple):
        return repr(list(v))
    return repr(v)


def format_config(cfg: RunConfig) -> str:
    """Resolved configuration text; ``parse_config(format_config(c)) == c``."""
    out = [f"seed = {cfg.seed}"]
    for name in SECTIONS:
        block = getattr(cfg, name)
        out.append("")
        out.append(f"[{name}]")
        for f in fields(block):
            out.append(f"{f.name} = {_format_value(getattr(block, f.name))}")
    return "\n".join(out) + "\n"
