"""Binary dataset (``GPDS``) and model (``GPNN``) files.

All integers and floats are little-endian.  Dataset layout::

    b"GPDS"  u32 version
    u8 kind (0 heat, 1 convdiff, 2 burgers)  f64 D  f64 v_x  f64 v_y
    u8 bc (0 periodic, 1 dirichlet)  f64 x_lo  f64 y_lo  f64 x_hi  f64 y_hi
    u32 n_sims
    per simulation:
        u32 N  u32 M+1  u8 d
        f64 coords[N][2]  f64 times[M+1]  f64 states[M+1][N][d]
    metadata block

Model layout::

    b"GPNN"  u32 version
    u32 state_dim  u32 hidden_width  u32 message_dim  u32 n_graph_layers
    u8 use_edge_features
    u64 n_params  f64 params[n_params]
    metadata block

The metadata block is ``u32 n_entries`` followed by that many entries, each
``u32 n_bytes`` and a UTF-8 ``key=value`` string.  The equation fields the
header has no room for (Fourier cutoff, reference grid and step) and the
number of hidden layers travel in the metadata under ``eq_*`` and
``hidden_layers`` keys.
"""

import os
import struct
import tempfile

import numpy as np

from .datagen import Dataset, EquationSpec, KINDS, SimulationRecord
from .errors import FormatError, ShapeMismatch
from .mpnn import Model, SurrogateConfig

VERSION = 1
_BCS = ("periodic", "dirichlet")
_F8 = np.dtype("<f8")


class _Reader:
    def __init__(self, data):
        self.data = data
        self.pos = 0

    def take(self, n):
        if self.pos + n > len(self.data):
            raise FormatError("file is truncated")
        out = self.data[self.pos:self.pos + n]
        self.pos += n
        return out

    def unpack(self, fmt):
        size = struct.calcsize(fmt)
        return struct.unpack(fmt, self.take(size))

    def floats(self, count):
        return np.frombuffer(self.take(8 * count), dtype=_F8).astype(np.float64)


def _pack_meta(meta):
    parts = [struct.pack("<I", len(meta))]
    for k, v in meta.items():
        k = str(k)
        if "=" in k:
            raise FormatError(f"metadata key {k!r} contains '='")
        raw = f"{k}={v}".encode("utf-8")
        parts.append(struct.pack("<I", len(raw)))
        parts.append(raw)
    return b"".join(parts)


def _read_meta(rd):
    (n,) = rd.unpack("<I")
    meta = {}
    for _ in range(n):
        (size,) = rd.unpack("<I")
        try:
            key, _, value = rd.take(size).decode("utf-8").partition("=")
        except UnicodeDecodeError as exc:
            raise FormatError("metadata is not valid UTF-8") from exc
        meta[key] = value
    return meta


def _check_magic(rd, magic):
    if rd.take(4) != magic:
        raise FormatError(f"not a {magic.decode()} file")
    (version,) = rd.unpack("<I")
    if version != VERSION:
        raise FormatError(f"unsupported format version {version}")


def _finish(rd):
    if rd.pos != len(rd.data):
        raise FormatError("trailing bytes after metadata block")


def write_atomic(path, data):
    """Write ``data`` to ``path`` through a temporary file and a rename."""
    path = os.fspath(path)
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


# -- datasets ------------------------------------------------------------


def dataset_to_bytes(ds):
    eq = ds.equation
    parts = [b"GPDS", struct.pack("<I", VERSION),
             struct.pack("<B3d", KINDS.index(eq.kind), eq.D, *eq.v),
             struct.pack("<B4d", _BCS.index(eq.bc), *eq.domain),
             struct.pack("<I", len(ds.simulations))]
    for rec in ds.simulations:
        n = rec.n_nodes
        m1 = rec.times.size
        d = rec.state_dim
        parts.append(struct.pack("<IIB", n, m1, d))
        parts.append(np.ascontiguousarray(rec.coords, dtype=_F8).tobytes())
        parts.append(np.ascontiguousarray(rec.times, dtype=_F8).tobytes())
        parts.append(np.ascontiguousarray(rec.states, dtype=_F8).tobytes())
    meta = {"eq_fourier_N": str(eq.fourier_N), "eq_gt_grid": str(eq.gt_grid),
            "eq_gt_dt": repr(eq.gt_dt), "format": f"GPDS v{VERSION}"}
    meta.update(ds.metadata)
    parts.append(_pack_meta(meta))
    return b"".join(parts)


def dataset_from_bytes(data):
    rd = _Reader(data)
    _check_magic(rd, b"GPDS")
    kind, D, vx, vy = rd.unpack("<B3d")
    bc, *domain = rd.unpack("<B4d")
    if kind >= len(KINDS) or bc >= len(_BCS):
        raise FormatError("unknown equation or boundary code")
    (n_sims,) = rd.unpack("<I")
    sims = []
    for _ in range(n_sims):
        n, m1, d = rd.unpack("<IIB")
        coords = rd.floats(2 * n).reshape(n, 2)
        times = rd.floats(m1)
        states = rd.floats(m1 * n * d).reshape(m1, n, d)
        try:
            sims.append(SimulationRecord(coords, times, states))
        except (ValueError, ShapeMismatch) as exc:
            raise FormatError(f"invalid simulation record: {exc}") from exc
    meta = _read_meta(rd)
    _finish(rd)
    extra = {}
    try:
        if "eq_fourier_N" in meta:
            extra["fourier_N"] = int(meta.pop("eq_fourier_N"))
        if "eq_gt_grid" in meta:
            extra["gt_grid"] = int(meta.pop("eq_gt_grid"))
        if "eq_gt_dt" in meta:
            extra["gt_dt"] = float(meta.pop("eq_gt_dt"))
        eq = EquationSpec(kind=KINDS[kind], D=D, v=(vx, vy), domain=tuple(domain),
                          bc=_BCS[bc], **extra)
        meta.pop("format", None)
        return Dataset(eq, sims, meta)
    except (ValueError, ShapeMismatch) as exc:
        raise FormatError(f"invalid dataset: {exc}") from exc


def write_dataset(path, ds):
    write_atomic(path, dataset_to_bytes(ds))


def read_dataset(path):
    with open(path, "rb") as fh:
        return dataset_from_bytes(fh.read())


# -- models --------------------------------------------------------------


def model_to_bytes(model):
    cfg = model.cfg
    if cfg.aggregation != "mean":
        raise FormatError("only mean aggregation can be stored")
    parts = [b"GPNN", struct.pack("<I", VERSION),
             struct.pack("<IIIIB", cfg.state_dim, cfg.hidden_width, cfg.message_dim,
                         cfg.n_graph_layers, int(cfg.use_edge_features)),
             struct.pack("<Q", model.params.size),
             np.ascontiguousarray(model.params, dtype=_F8).tobytes()]
    meta = {"hidden_layers": str(cfg.hidden_layers), "format": f"GPNN v{VERSION}"}
    meta.update(model.metadata)
    parts.append(_pack_meta(meta))
    return b"".join(parts)


def model_from_bytes(data):
    rd = _Reader(data)
    _check_magic(rd, b"GPNN")
    d, hidden, message, k, edge = rd.unpack("<IIIIB")
    (n_params,) = rd.unpack("<Q")
    params = rd.floats(n_params)
    meta = _read_meta(rd)
    _finish(rd)
    try:
        layers = int(meta.pop("hidden_layers", "3"))
        cfg = SurrogateConfig(state_dim=d, message_dim=message, hidden_width=hidden,
                              hidden_layers=layers, n_graph_layers=k,
                              use_edge_features=bool(edge))
    except ValueError as exc:
        raise FormatError(f"invalid architecture descriptor: {exc}") from exc
    if cfg.n_params != n_params:
        raise FormatError(f"architecture needs {cfg.n_params} parameters, file has {n_params}")
    meta.pop("format", None)
    return Model(cfg, params, meta)


def write_model(path, model):
    write_atomic(path, model_to_bytes(model))


def read_model(path):
    with open(path, "rb") as fh:
        return model_from_bytes(fh.read())
