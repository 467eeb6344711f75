"""Versioned binary parameter file.

Layout: magic, version, tensor count, then a name/shape table, then the
raw float64 little-endian values in table order. Round-trips bit-exactly.
"""
from __future__ import annotations

import struct

import numpy as np

from .params import Params

MAGIC = b"CFNSYNCP"
VERSION = 1


def save_params(params: Params, path: str) -> None:
    names = sorted(params.values)
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<II", VERSION, len(names)))
        for name in names:
            arr = params.values[name]
            if not np.all(np.isfinite(arr)):
                raise ValueError(f"parameter {name} holds non-finite values")
            enc = name.encode("utf-8")
            f.write(struct.pack("<H", len(enc)))
            f.write(enc)
            f.write(struct.pack("<B", arr.ndim))
            f.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
        for name in names:
            f.write(np.ascontiguousarray(params.values[name], dtype="<f8").tobytes())


def load_params(path: str) -> Params:
    with open(path, "rb") as f:
        if f.read(len(MAGIC)) != MAGIC:
            raise ValueError(f"{path}: not a parameter file")
        version, count = struct.unpack("<II", f.read(8))
        if version != VERSION:
            raise ValueError(f"{path}: unsupported version {version}")
        table = []
        for _ in range(count):
            (nlen,) = struct.unpack("<H", f.read(2))
            name = f.read(nlen).decode("utf-8")
            (ndim,) = struct.unpack("<B", f.read(1))
            shape = struct.unpack(f"<{ndim}I", f.read(4 * ndim))
            table.append((name, shape))
        out = Params()
        for name, shape in table:
            n = int(np.prod(shape)) if shape else 1
            buf = f.read(8 * n)
            arr = np.frombuffer(buf, dtype="<f8").astype(np.float64).reshape(shape)
            out.add(name, arr)
        return out
