"""Datasets as CSV, noise specifications as JSON, estimator states as binary files.

State files are a flat sequence of named little-endian arrays behind a magic
string and a format version, followed by a SHA-256 digest of everything
before it. Floats are stored bit for bit, so a saved state continues exactly
as the in-memory one would.
"""

from __future__ import annotations

import contextlib
import csv
import fcntl
import hashlib
import json
import os
import struct
from collections import defaultdict
from pathlib import Path

import numpy as np

from .errors import CorruptState, DimensionMismatch, StateVersionMismatch, TvpError
from .estimator import FilterState, WindowState
from .model import NoiseSpec, SurDataset

MAGIC = b"TVPSTATE"
VERSION = 1
_DIGEST = 32


class DataFormatError(TvpError):
    code = "DataFormatError"
    exit_code = 4


class EmptyDataset(DataFormatError):
    code = "EmptyDataset"


# ---------------------------------------------------------------------------
# CSV datasets


def read_dataset(path) -> tuple:
    """Read a long-format CSV. Returns ``(dataset, times)``.

    Columns are ``time, regression_id, y, x1..xk``; a regression with fewer
    regressors leaves the trailing ``x`` cells empty. Every regression must
    be observed at the same times.
    """
    cells = defaultdict(dict)
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header[:3]] != ["time", "regression_id", "y"]:
            raise DataFormatError(f"{path}: header must start with time,regression_id,y")
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            try:
                t = int(row[0])
                g = int(row[1])
                y = float(row[2])
                x = [float(c) for c in row[3:] if c.strip() != ""]
            except (ValueError, IndexError) as exc:
                raise DataFormatError(f"{path}:{lineno}: {exc}") from None
            if t in cells[g]:
                raise DataFormatError(f"{path}:{lineno}: duplicate time {t} for regression {g}")
            cells[g][t] = (x, y)
    if not cells:
        raise EmptyDataset(f"{path}: no observations")
    regs = sorted(cells)
    times = sorted(cells[regs[0]])
    X, Y = [], []
    for g in regs:
        if sorted(cells[g]) != times:
            raise DataFormatError(f"{path}: regression {g} is not observed at the same times")
        ks = {len(cells[g][t][0]) for t in times}
        if len(ks) != 1:
            raise DataFormatError(f"{path}: regression {g} has rows of different length")
        X.append(np.array([cells[g][t][0] for t in times]))
        Y.append([cells[g][t][1] for t in times])
    try:
        return SurDataset(tuple(X), np.array(Y)), times
    except (ValueError, DimensionMismatch) as exc:
        raise DataFormatError(f"{path}: {exc}") from None


def write_dataset(path, data: SurDataset, times=None) -> None:
    times = list(range(1, data.t + 1)) if times is None else list(times)
    kmax = max(data.k)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["time", "regression_id", "y"] + [f"x{j + 1}" for j in range(kmax)])
        for s, t in enumerate(times):
            for i in range(data.G):
                xs = [repr(float(v)) for v in data.X[i][s]]
                w.writerow([t, i, repr(float(data.y[i, s]))] + xs + [""] * (kmax - len(xs)))


# ---------------------------------------------------------------------------
# noise specifications


def read_noise(path) -> NoiseSpec:
    """JSON object with ``Sigma`` (G x G) and ``Sigma_i`` (list of k_i x k_i)."""
    try:
        with open(path) as fh:
            obj = json.load(fh)
        return NoiseSpec(np.array(obj["Sigma"], dtype=float),
                         tuple(np.array(s, dtype=float) for s in obj["Sigma_i"]))
    except (KeyError, TypeError, json.JSONDecodeError) as exc:
        raise DataFormatError(f"{path}: bad noise file ({exc})") from None


def noise_record(noise: NoiseSpec) -> dict:
    return {"Sigma": noise.Sigma.tolist(), "Sigma_i": [s.tolist() for s in noise.Sigma_i]}


# ---------------------------------------------------------------------------
# binary state container


def _pack(fields) -> bytes:
    out = [MAGIC, struct.pack("<H", VERSION)]
    for name, arr in fields:
        arr = np.asarray(arr)
        code = b"f" if arr.dtype.kind == "f" else b"i"
        arr = np.ascontiguousarray(arr, dtype="<f8" if code == b"f" else "<i8")
        nb = name.encode()
        out.append(struct.pack("<H", len(nb)) + nb + code + struct.pack("<B", arr.ndim))
        out.append(struct.pack(f"<{arr.ndim}Q", *arr.shape) + arr.tobytes())
    body = b"".join(out)
    return body + hashlib.sha256(body).digest()


def _unpack(blob: bytes) -> list:
    if len(blob) < len(MAGIC) + 2 + _DIGEST or not blob.startswith(MAGIC):
        raise CorruptState("not a state file")
    body, digest = blob[:-_DIGEST], blob[-_DIGEST:]
    (version,) = struct.unpack_from("<H", body, len(MAGIC))
    if version != VERSION:
        raise StateVersionMismatch(f"state file version {version}, expected {VERSION}")
    if hashlib.sha256(body).digest() != digest:
        raise CorruptState("checksum mismatch")
    pos, fields = len(MAGIC) + 2, []
    try:
        while pos < len(body):
            (n,) = struct.unpack_from("<H", body, pos)
            name = body[pos + 2:pos + 2 + n].decode()
            pos += 2 + n
            code = body[pos:pos + 1]
            (ndim,) = struct.unpack_from("<B", body, pos + 1)
            shape = struct.unpack_from(f"<{ndim}Q", body, pos + 2)
            pos += 2 + 8 * ndim
            size = int(np.prod(shape)) * 8
            dtype = "<f8" if code == b"f" else "<i8"
            fields.append((name, np.frombuffer(body[pos:pos + size], dtype=dtype).reshape(shape).copy()))
            pos += size
    except (struct.error, ValueError, UnicodeDecodeError) as exc:
        raise CorruptState(f"malformed state file ({exc})") from None
    return fields


def _noise_fields(noise: NoiseSpec) -> list:
    f = [("noise.Sigma", noise.Sigma), ("noise.C", noise.C)]
    for i in range(noise.G):
        f += [(f"noise.Sigma_{i}", noise.Sigma_i[i]), (f"noise.C_{i}", noise.C_i[i])]
    return f


def _filter_fields(prefix: str, st: FilterState) -> list:
    f = [(prefix + "meta", np.array([st.t, st.window_start, len(st.R_blocks)])),
         (prefix + "y_reduced", st.y_reduced), (prefix + "L11", st.L11),
         (prefix + "residual_sq", np.array([st.residual_sq]))]
    f += [(f"{prefix}R_{i}", R) for i, R in enumerate(st.R_blocks)]
    return f


def encode_state(state, snapshots=(), window_data: SurDataset | None = None) -> bytes:
    """Serialize a ``FilterState`` (with optional snapshots) or a ``WindowState``."""
    if isinstance(state, FilterState):
        fields = [("kind", np.array([1]))] + _noise_fields(state.noise) + _filter_fields("s.", state)
        for j, snap in enumerate(snapshots):
            fields += _filter_fields(f"snap{j}.", snap)
    elif isinstance(state, WindowState):
        fields = [("kind", np.array([2]))] + _noise_fields(state.noise)
        fields += [("w.meta", np.array([state.t, state.window_start])), ("w.z", state.z),
                   ("w.U", state.U), ("w.residual_sq", np.array([state.residual_sq]))]
        if window_data is not None:
            fields += [("w.y", window_data.y)] + [(f"w.X_{i}", x) for i, x in enumerate(window_data.X)]
    else:
        raise TypeError(f"cannot serialize {type(state).__name__}")
    return _pack(fields)


def decode_state(blob: bytes) -> dict:
    """Inverse of ``encode_state``: a dict with ``state``, ``snapshots`` and ``window_data``."""
    f = dict(_unpack(blob))
    try:
        G = f["noise.Sigma"].shape[0]
        noise = NoiseSpec(f["noise.Sigma"], tuple(f[f"noise.Sigma_{i}"] for i in range(G)),
                          f["noise.C"], tuple(f[f"noise.C_{i}"] for i in range(G)))
        kind = int(f["kind"][0])
        if kind == 1:
            state = _read_filter(f, "s.", noise)
            snaps, j = [], 0
            while f"snap{j}.meta" in f:
                snaps.append(_read_filter(f, f"snap{j}.", noise))
                j += 1
            return {"state": state, "snapshots": snaps, "window_data": None}
        if kind == 2:
            t, start = (int(v) for v in f["w.meta"])
            state = WindowState(t, start, f["w.z"], f["w.U"], float(f["w.residual_sq"][0]), noise)
            data = None
            if "w.y" in f:
                data = SurDataset(tuple(f[f"w.X_{i}"] for i in range(G)), f["w.y"])
            return {"state": state, "snapshots": [], "window_data": data}
    except KeyError as exc:
        raise CorruptState(f"missing field {exc}") from None
    raise CorruptState(f"unknown state kind {kind}")


def _read_filter(f, prefix, noise) -> FilterState:
    t, start, G = (int(v) for v in f[prefix + "meta"])
    R = tuple(f[f"{prefix}R_{i}"] for i in range(G))
    return FilterState(t, R, f[prefix + "y_reduced"], f[prefix + "L11"],
                       float(f[prefix + "residual_sq"][0]), noise, start)


def save_state(path, state, snapshots=(), window_data=None) -> None:
    """Write atomically: a temporary file renamed over ``path``."""
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_bytes(encode_state(state, snapshots, window_data))
    os.replace(tmp, path)


def load_state(path) -> dict:
    return decode_state(Path(path).read_bytes())


@contextlib.contextmanager
def locked(path):
    """Exclusive advisory lock on ``<path>.lock`` for a read-modify-write cycle."""
    lock = Path(str(path) + ".lock")
    with open(lock, "a+b") as fh:
        fcntl.flock(fh.fileno(), fcntl.LOCK_EX)
        try:
            yield
        finally:
            fcntl.flock(fh.fileno(), fcntl.LOCK_UN)
