"""Binary snapshots (VPLK), kernel tables (VPLT), coefficient caches (VPLC) and CSV tables.

All binary fields are little-endian.  Layouts (version 1):

* VPLK: magic, u32 version, u32 d_x, u32 K_max, 3 x u32 N_v, f64 V_max, f64 t, f64 nu,
  u32 step_count, u32 tag (0 f, 1 g, 2 h), then the complex payload as interleaved
  (re, im) f64 in array order (modes, then v1, v2, v3).
* VPLT: magic, u32 version, 3 x i64 k, f64 nu, f64 T_K, u32 n_samples, u32 has_G,
  3 x u32 N_v, f64 V_max, then K (n), H (n x 3), G (n, when present) as (re, im) f64.
* VPLC: magic, u32 version, u32 d_x, u32 K_max, 3 x u32 N_v, f64 V_max, u32 n_table,
  then r, lambda1, lambda2 (n_table each), sigma_ij, sigma_i, quad_form, div_sigma,
  sqrt_mu, mu as f64.
"""
from __future__ import annotations

import os
import struct

import numpy as np

from .equilibrium import CollisionCoefficients, RadialTable, compute_coefficients
from .errors import FormatError, IoError
from .spectral_core import Distribution, GridSpec, TAGS

VERSION = 1
_SNAP = struct.Struct("<4sIIIIIIdddII")
_TABLE = struct.Struct("<4sIqqqddIIIIId")
_COEF = struct.Struct("<4sIIIIIIdI")


def _write(path, chunks):
    try:
        with open(path, "wb") as fh:
            for c in chunks:
                fh.write(c)
    except OSError as exc:
        raise IoError(f"cannot write {path}: {exc}") from exc


def _read(path) -> bytes:
    try:
        with open(path, "rb") as fh:
            return fh.read()
    except OSError as exc:
        raise IoError(f"cannot read {path}: {exc}") from exc


def _header(data: bytes, st: struct.Struct, magic: bytes):
    if len(data) < 8:
        raise FormatError("file too short for a header")
    if data[:4] != magic:
        raise FormatError(f"bad magic {data[:4]!r}, expected {magic!r}")
    (version,) = struct.unpack_from("<I", data, 4)
    if version != VERSION:
        raise FormatError(f"unsupported version {version}")
    if len(data) < st.size:
        raise FormatError("truncated header")
    return st.unpack_from(data, 0)


def _complex(data: bytes, offset: int, count: int, shape) -> tuple[np.ndarray, int]:
    nbytes = 16 * count
    if len(data) < offset + nbytes:
        raise FormatError("truncated payload")
    arr = np.frombuffer(data, dtype="<c16", count=count, offset=offset).astype(np.complex128)
    return arr.reshape(shape), offset + nbytes


def _real(data: bytes, offset: int, count: int, shape) -> tuple[np.ndarray, int]:
    nbytes = 8 * count
    if len(data) < offset + nbytes:
        raise FormatError("truncated payload")
    arr = np.frombuffer(data, dtype="<f8", count=count, offset=offset).astype(np.float64)
    return arr.reshape(shape), offset + nbytes


# -- snapshots -------------------------------------------------------------------

def write_snapshot(state, path):
    f = state.f
    g = f.grid
    head = _SNAP.pack(b"VPLK", VERSION, g.d_x, g.K_max, *g.N_v, float(g.V_max), float(state.t),
                      float(state.nu), int(state.step_count), TAGS.index(f.tag))
    _write(path, [head, np.ascontiguousarray(f.values, dtype="<c16").tobytes()])


def read_snapshot(path, coeffs: CollisionCoefficients | None = None):
    """Load a VPLK snapshot as a SimState (fields recomputed from the payload)."""
    from .dynamics import SimState, compute_fields
    data = _read(path)
    _, _, d_x, K_max, n1, n2, n3, V_max, t, nu, count, tag = _header(data, _SNAP, b"VPLK")
    if tag >= len(TAGS):
        raise FormatError(f"unknown tag code {tag}")
    try:
        grid = GridSpec(d_x=d_x, K_max=K_max, N_v=(n1, n2, n3), V_max=V_max)
    except Exception as exc:
        raise FormatError(f"invalid grid header: {exc}") from exc
    values, end = _complex(data, _SNAP.size, int(np.prod(grid.shape)), grid.shape)
    if end != len(data):
        raise FormatError("trailing bytes after payload")
    if coeffs is None or coeffs.grid != grid:
        coeffs = compute_coefficients(grid)
    f = Distribution(grid, values, TAGS[tag])
    return SimState(f, compute_fields(f, t), t, count, nu, coeffs)


# -- kernel tables ---------------------------------------------------------------

def write_kernel_table(table, path):
    n = table.t_grid.size
    k = [int(round(c)) for c in table.k]
    nv = tuple(table.meta.get("N_v", (0, 0, 0)))
    head = _TABLE.pack(b"VPLT", VERSION, *k, float(table.nu), float(table.T_K), n, int(table.G is not None),
                       *nv, float(table.meta.get("V_max", 0.0)))
    chunks = [head, np.ascontiguousarray(table.K, dtype="<c16").tobytes(),
              np.ascontiguousarray(table.H, dtype="<c16").tobytes()]
    if table.G is not None:
        chunks.append(np.ascontiguousarray(table.G, dtype="<c16").tobytes())
    _write(path, chunks)


def read_kernel_table(path):
    from .volterra import KernelTable
    data = _read(path)
    _, _, k1, k2, k3, nu, T_K, n, has_G, n1, n2, n3, V_max = _header(data, _TABLE, b"VPLT")
    if n < 2:
        raise FormatError("kernel table needs two samples or more")
    K, off = _complex(data, _TABLE.size, n, (n,))
    H, off = _complex(data, off, 3 * n, (n, 3))
    G = None
    if has_G:
        G, off = _complex(data, off, n, (n,))
    if off != len(data):
        raise FormatError("trailing bytes after payload")
    t = np.linspace(0.0, T_K, n)
    meta = {"N_v": (n1, n2, n3), "V_max": V_max, "dt": float(t[1] - t[0])}
    return KernelTable((k1, k2, k3), nu, t, K, H, G, meta)


def kernel_table_rows(table) -> tuple[list, list]:
    header = ["t", "K_re", "K_im", "H1_re", "H1_im", "H2_re", "H2_im", "H3_re", "H3_im", "G_re", "G_im"]
    G = table.G if table.G is not None else np.full(table.K.shape, np.nan)
    rows = []
    for j, t in enumerate(table.t_grid):
        h = table.H[j]
        rows.append([t, table.K[j].real, table.K[j].imag, h[0].real, h[0].imag, h[1].real, h[1].imag,
                     h[2].real, h[2].imag, G[j].real, G[j].imag])
    return header, rows


# -- coefficient cache -------------------------------------------------------------

_COEF_FIELDS = ("sigma_ij", "sigma_i", "quad_form", "div_sigma", "sqrt_mu", "mu")


def write_coefficients(coeffs: CollisionCoefficients, path):
    g = coeffs.grid
    r = coeffs.lambda1.r
    head = _COEF.pack(b"VPLC", VERSION, g.d_x, g.K_max, *g.N_v, float(g.V_max), r.size)
    chunks = [head] + [np.ascontiguousarray(a, dtype="<f8").tobytes()
                       for a in (r, coeffs.lambda1.values, coeffs.lambda2.values)]
    for name in _COEF_FIELDS:
        chunks.append(np.ascontiguousarray(np.broadcast_to(getattr(coeffs, name), _coef_shape(name, g)),
                                           dtype="<f8").tobytes())
    _write(path, chunks)


def _coef_shape(name: str, g: GridSpec) -> tuple:
    lead = {"sigma_ij": (6,), "sigma_i": (3,)}.get(name, ())
    return lead + g.vshape


def read_coefficients(path) -> CollisionCoefficients:
    data = _read(path)
    _, _, d_x, K_max, n1, n2, n3, V_max, nt = _header(data, _COEF, b"VPLC")
    try:
        grid = GridSpec(d_x=d_x, K_max=K_max, N_v=(n1, n2, n3), V_max=V_max)
    except Exception as exc:
        raise FormatError(f"invalid grid header: {exc}") from exc
    off = _COEF.size
    r, off = _real(data, off, nt, (nt,))
    l1, off = _real(data, off, nt, (nt,))
    l2, off = _real(data, off, nt, (nt,))
    arrays = {}
    for name in _COEF_FIELDS:
        shape = _coef_shape(name, grid)
        arrays[name], off = _real(data, off, int(np.prod(shape)), shape)
    if off != len(data):
        raise FormatError("trailing bytes after payload")
    return CollisionCoefficients(grid, RadialTable(r, l1), RadialTable(r, l2), **arrays)


def cached_coefficients(grid: GridSpec, cache_dir: str | None) -> CollisionCoefficients:
    """Coefficients from ``cache_dir`` when a matching VPLC file exists, else computed and stored."""
    if not cache_dir:
        return compute_coefficients(grid)
    n = "x".join(str(c) for c in grid.N_v)
    path = os.path.join(cache_dir, f"coeffs_d{grid.d_x}_K{grid.K_max}_N{n}_V{grid.V_max!r}.vplc")
    if os.path.exists(path):
        return read_coefficients(path)
    coeffs = compute_coefficients(grid)
    os.makedirs(cache_dir, exist_ok=True)
    write_coefficients(coeffs, path)
    return coeffs


# -- CSV ---------------------------------------------------------------------------

def format_float(x) -> str:
    return f"{float(x):.17g}"


def csv_text(header, rows, comments=()) -> str:
    lines = [f"# {c}" for c in comments]
    lines.append(",".join(header))
    for row in rows:
        lines.append(",".join(format_float(x) for x in row))
    return "\n".join(lines) + "\n"


def write_csv(path, header, rows, comments=()):
    try:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(csv_text(header, rows, comments))
    except OSError as exc:
        raise IoError(f"cannot write {path}: {exc}") from exc


class CsvStream:
    """Row-by-row CSV writer for diagnostics streams."""

    def __init__(self, path, header, comments=()):
        self.path = path
        try:
            self._fh = open(path, "w", encoding="utf-8", newline="")
        except OSError as exc:
            raise IoError(f"cannot write {path}: {exc}") from exc
        for c in comments:
            self._fh.write(f"# {c}\n")
        self._fh.write(",".join(header) + "\n")

    def write(self, row):
        self._fh.write(",".join(format_float(x) for x in row) + "\n")

    def close(self):
        self._fh.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()
