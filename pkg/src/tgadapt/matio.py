"""Binary dense-matrix files with a small self-describing header.

Layout (little-endian): 4-byte magic ``b"FMAT"``, u8 format version, u8
element-type code (0 = float32, 1 = float64), 2 padding bytes, u64 row
count, u64 column count, then the row-major payload.  Feature stores are
written as float32; parameter checkpoints may use float64.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

MAGIC = b"FMAT"
_VERSION = 1
_HEADER = struct.Struct("<4sBBxxQQ")
_DTYPE_CODES = {0: np.dtype("<f4"), 1: np.dtype("<f8")}
_CODE_FOR = {np.dtype("float32"): 0, np.dtype("float64"): 1}


class MatrixFormatError(ValueError):
    """Raised when a matrix file is malformed or truncated."""


def save_matrix(path, array):
    array = np.ascontiguousarray(array)
    if array.ndim != 2:
        raise MatrixFormatError(f"expected a 2-d array, got shape {array.shape}")
    if array.dtype not in _CODE_FOR:
        raise MatrixFormatError(f"unsupported dtype {array.dtype}")
    code = _CODE_FOR[array.dtype]
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, _VERSION, code, array.shape[0], array.shape[1]))
        fh.write(array.astype(array.dtype.newbyteorder("<"), copy=False).tobytes())


def load_matrix(path):
    raw = Path(path).read_bytes()
    if len(raw) < _HEADER.size:
        raise MatrixFormatError(f"{path}: file shorter than header")
    magic, version, code, rows, cols = _HEADER.unpack_from(raw)
    if magic != MAGIC:
        raise MatrixFormatError(f"{path}: bad magic {magic!r}")
    if version != _VERSION:
        raise MatrixFormatError(f"{path}: unsupported version {version}")
    if code not in _DTYPE_CODES:
        raise MatrixFormatError(f"{path}: unknown element-type code {code}")
    dtype = _DTYPE_CODES[code]
    expected = _HEADER.size + rows * cols * dtype.itemsize
    if len(raw) != expected:
        raise MatrixFormatError(
            f"{path}: payload size mismatch (header says {rows}x{cols}, "
            f"{expected - _HEADER.size} bytes, file has {len(raw) - _HEADER.size})"
        )
    data = np.frombuffer(raw, dtype=dtype, offset=_HEADER.size)
    return data.reshape(rows, cols).astype(dtype.newbyteorder("="), copy=True)


def save_named_matrices(directory, arrays):
    """Write a manifest plus one matrix file per named array (checkpoints)."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    manifest = {}
    for name, array in arrays.items():
        fname = name.replace("/", "__") + ".mat"
        arr2d = np.asarray(array)
        orig_shape = list(arr2d.shape)
        if arr2d.ndim == 1:
            arr2d = arr2d.reshape(1, -1)
        save_matrix(directory / fname, arr2d)
        manifest[name] = {"shape": orig_shape, "file": fname, "dtype": str(np.asarray(array).dtype)}
    with open(directory / "manifest.json", "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)


def load_named_matrices(directory):
    directory = Path(directory)
    with open(directory / "manifest.json") as fh:
        manifest = json.load(fh)
    out = {}
    for name, meta in manifest.items():
        arr = load_matrix(directory / meta["file"])
        out[name] = arr.reshape(meta["shape"])
    return out
