"""Tensor and decomposition file formats.

``.dten`` is a little binary container: the magic bytes ``DTEN``, one byte
with the order ``d``, ``d`` little-endian u64 dimensions, then the entries as
little-endian f64 with the last index varying fastest.  Any other extension
is read as whitespace-separated text whose first line holds ``d`` followed by
the dimensions; the remaining numbers are the entries in the same order.
"""
from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .cpd import CpdPoint
from .tensor import TuckerDecomposition

MAGIC = b"DTEN"


def write_dten(path, T) -> None:
    T = np.ascontiguousarray(T, dtype="<f8")
    if T.ndim < 1 or T.ndim > 255:
        raise ValueError("order must be between 1 and 255")
    header = MAGIC + struct.pack("<B", T.ndim) + struct.pack(f"<{T.ndim}Q", *T.shape)
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(T.tobytes(order="C"))


def read_dten(path) -> np.ndarray:
    raw = Path(path).read_bytes()
    if raw[:4] != MAGIC:
        raise ValueError(f"{path}: not a DTEN file")
    d = raw[4]
    if d < 1:
        raise ValueError(f"{path}: order must be at least 1")
    dims = struct.unpack_from(f"<{d}Q", raw, 5)
    offset = 5 + 8 * d
    count = int(np.prod(dims))
    if len(raw) - offset != 8 * count:
        raise ValueError(f"{path}: expected {count} values, found {(len(raw) - offset) / 8:g}")
    return np.frombuffer(raw, dtype="<f8", count=count, offset=offset).reshape(dims).astype(float)


def read_text_tensor(path) -> np.ndarray:
    with open(path) as fh:
        head = fh.readline().split()
        rest = fh.read().split()
    if not head:
        raise ValueError(f"{path}: empty header line")
    d = int(head[0])
    dims = tuple(int(v) for v in head[1:1 + d])
    if len(dims) != d or any(n < 1 for n in dims):
        raise ValueError(f"{path}: header must be 'd n_1 ... n_d' with positive dims")
    values = np.array(head[1 + d:] + rest, dtype=float)
    if values.size != int(np.prod(dims)):
        raise ValueError(f"{path}: expected {int(np.prod(dims))} values, found {values.size}")
    return values.reshape(dims)


def write_text_tensor(path, T) -> None:
    T = np.asarray(T, dtype=float)
    with open(path, "w") as fh:
        fh.write(" ".join(str(v) for v in (T.ndim, *T.shape)) + "\n")
        rows = T.reshape(-1, T.shape[-1]) if T.ndim > 1 else T.reshape(1, -1)
        for row in rows:
            fh.write(" ".join(repr(float(v)) for v in row) + "\n")


def load_tensor(path) -> np.ndarray:
    """Read a tensor, sniffing the DTEN magic and falling back to text."""
    with open(path, "rb") as fh:
        magic = fh.read(4)
    return read_dten(path) if magic == MAGIC else read_text_tensor(path)


def save_tensor(path, T) -> None:
    if str(path).endswith(".dten"):
        write_dten(path, T)
    else:
        write_text_tensor(path, T)


def cpd_to_dict(p: CpdPoint) -> dict:
    # factor k is stored as a list of its r columns
    return {
        "shape": list(p.shape),
        "r": p.rank,
        "factors": [A.T.tolist() for A in p.factors()],
    }


def cpd_from_dict(data: dict) -> CpdPoint:
    factors = [np.asarray(cols, dtype=float).T for cols in data["factors"]]
    shape = tuple(int(n) for n in data["shape"])
    r = int(data["r"])
    if tuple(A.shape[0] for A in factors) != shape or any(A.shape[1] != r for A in factors):
        raise ValueError("factor sizes disagree with shape and r")
    return CpdPoint.from_factors(factors)


def save_cpd(path, p: CpdPoint) -> None:
    Path(path).write_text(json.dumps(cpd_to_dict(p), indent=2))


def load_cpd(path) -> CpdPoint:
    return cpd_from_dict(json.loads(Path(path).read_text()))


def _sidecar(path) -> Path:
    path = Path(path)
    return path.with_name(path.stem + ".factors.json")


def save_tucker(path, tucker: TuckerDecomposition) -> Path:
    """Write the core to ``path`` (DTEN) and the factors to ``<stem>.factors.json``."""
    write_dten(path, tucker.core)
    side = _sidecar(path)
    side.write_text(json.dumps({"factors": [Q.T.tolist() for Q in tucker.factors]}))
    return side


def load_tucker(path) -> TuckerDecomposition:
    core = read_dten(path)
    data = json.loads(_sidecar(path).read_text())
    return TuckerDecomposition(core, [np.asarray(cols, dtype=float).T for cols in data["factors"]])
