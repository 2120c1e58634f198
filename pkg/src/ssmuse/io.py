"""Binary array format and small file helpers.

All tensors move between pipeline stages in the ``SSMA`` container:
magic bytes ``SSMA``, format version (u16 LE), dtype code (u8; 0 =
float64, 1 = complex128), ndim (u8), one u64 LE per dimension, then the
row-major little-endian payload.  Round trips are bit-exact.
"""

from __future__ import annotations

import csv
import struct
from pathlib import Path

import numpy as np

MAGIC = b"SSMA"
FORMAT_VERSION = 1

_DTYPE_CODES = {0: np.dtype("<f8"), 1: np.dtype("<c16")}
_CODE_FOR_KIND = {"f": 0, "c": 1}


def save_array(path, arr) -> None:
    """Write ``arr`` to ``path``; real arrays as float64, complex as complex128."""
    arr = np.asarray(arr)
    if arr.dtype.kind in ("b", "i", "u"):
        arr = arr.astype(np.float64)
    if arr.dtype.kind not in _CODE_FOR_KIND:
        raise ValueError(f"unsupported dtype {arr.dtype}")
    code = _CODE_FOR_KIND[arr.dtype.kind]
    arr = arr.astype(_DTYPE_CODES[code], copy=False)
    header = MAGIC + struct.pack("<HBB", FORMAT_VERSION, code, arr.ndim)
    header += struct.pack(f"<{arr.ndim}Q", *arr.shape)
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(np.ascontiguousarray(arr).tobytes())


def load_array(path) -> np.ndarray:
    with open(path, "rb") as fh:
        raw = fh.read()
    if raw[:4] != MAGIC:
        raise ValueError(f"{path}: not an SSMA file")
    version, code, ndim = struct.unpack_from("<HBB", raw, 4)
    if version != FORMAT_VERSION:
        raise ValueError(f"{path}: unsupported format version {version}")
    if code not in _DTYPE_CODES:
        raise ValueError(f"{path}: unknown dtype code {code}")
    shape = struct.unpack_from(f"<{ndim}Q", raw, 8)
    offset = 8 + 8 * ndim
    dtype = _DTYPE_CODES[code]
    count = int(np.prod(shape, dtype=np.int64)) if ndim else 1
    data = np.frombuffer(raw, dtype=dtype, count=count, offset=offset)
    return data.reshape(shape).copy()


def write_csv(path, header, rows) -> None:
    """Write a CSV with ``\n`` line endings so output is platform independent."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow(row)


def read_csv(path):
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        rows = list(reader)
    return rows[0], rows[1:]


def write_pgm(path, image, lo=None, hi=None) -> None:
    """Render a real 2D array as an 8-bit binary PGM plus a window/level sidecar.

    The sidecar ``<path>.wl.txt`` records the intensity window actually used
    so rendered bytes stay interpretable (and reproducible).
    """
    image = np.asarray(image, dtype=np.float64)
    if image.ndim != 2:
        raise ValueError("PGM rendering expects a 2D array")
    lo = float(np.min(image)) if lo is None else float(lo)
    hi = float(np.max(image)) if hi is None else float(hi)
    span = hi - lo
    if span <= 0:
        scaled = np.zeros_like(image)
    else:
        scaled = np.clip((image - lo) / span, 0.0, 1.0)
    data = np.round(scaled * 255.0).astype(np.uint8)
    with open(path, "wb") as fh:
        fh.write(f"P5\n{image.shape[1]} {image.shape[0]}\n255\n".encode())
        fh.write(data.tobytes())
    sidecar = Path(str(path) + ".wl.txt")
    sidecar.write_text(f"window_min = {lo!r}\nwindow_max = {hi!r}\n")
