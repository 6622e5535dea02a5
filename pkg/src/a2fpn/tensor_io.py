"""A2TSR tensor files and manifest-based parameter directories.

Wire format of one tensor:

    bytes 0..5   magic ``A2TSR\\0``
    byte  6      version, 0x01
    bytes 7..10  little-endian uint32 header length L
    bytes 11..   UTF-8 JSON header ``{"dtype": "f32"|"f64", "shape": [...]}``
    after L      raw row-major little-endian scalar payload

A parameter checkpoint is a directory of ``<symbol>.a2tsr`` files plus a
``manifest.json`` listing the symbol names, e.g. ``mgc.l3.psi.weight``.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .tensor_core import DTYPES, dtype_name

MAGIC = b"A2TSR\0"
VERSION = 1
MANIFEST_NAME = "manifest.json"


class TensorFormatError(ValueError):
    """Corrupt or mistyped A2TSR payload."""


def save_tensor(path, arr: np.ndarray) -> None:
    arr = np.ascontiguousarray(arr)
    header = json.dumps({"dtype": dtype_name(arr), "shape": list(arr.shape)}).encode("utf-8")
    payload = arr.astype(arr.dtype.newbyteorder("<"), copy=False).tobytes()
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(bytes([VERSION]))
        fh.write(struct.pack("<I", len(header)))
        fh.write(header)
        fh.write(payload)


def load_tensor(path) -> np.ndarray:
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[:6] != MAGIC:
        raise TensorFormatError(f"{path}: bad magic, not an A2TSR file")
    if blob[6] != VERSION:
        raise TensorFormatError(f"{path}: unsupported version {blob[6]}")
    (hlen,) = struct.unpack("<I", blob[7:11])
    header = json.loads(blob[11 : 11 + hlen].decode("utf-8"))
    dtype = DTYPES[header["dtype"]]
    shape = tuple(int(s) for s in header["shape"])
    want = int(np.prod(shape)) if shape else 1
    payload = blob[11 + hlen :]
    have = len(payload) // np.dtype(dtype).itemsize
    if have != want:
        raise TensorFormatError(f"{path}: payload holds {have} scalars, header says {want}")
    arr = np.frombuffer(payload, dtype=np.dtype(dtype).newbyteorder("<"), count=want)
    return arr.astype(dtype).reshape(shape)


def save_params(dirpath, params: dict) -> None:
    """Write every named array to ``<dir>/<name>.a2tsr`` plus a manifest."""
    d = Path(dirpath)
    d.mkdir(parents=True, exist_ok=True)
    names = sorted(params)
    for name in names:
        save_tensor(d / f"{name}.a2tsr", params[name])
    manifest = {"format": "a2tsr-manifest", "version": VERSION, "symbols": names}
    (d / MANIFEST_NAME).write_text(json.dumps(manifest, indent=1) + "\n", encoding="utf-8")


def load_params(dirpath) -> dict:
    d = Path(dirpath)
    manifest = json.loads((d / MANIFEST_NAME).read_text(encoding="utf-8"))
    return {name: load_tensor(d / f"{name}.a2tsr") for name in manifest["symbols"]}
