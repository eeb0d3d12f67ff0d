"""Matrix files for the ``factorize`` subcommand.

Binary container (little endian)::

    bytes 0-7    b"RLFMAT01"
    byte  8      dtype tag, 0 = float64, 1 = complex128
    bytes 9-16   u64 rows m
    bytes 17-24  u64 cols n
    then         m*n scalars, row-major

CSV: one matrix row per line, comma separated. Complex entries use the
``a+bi`` token form (``1.5-2i``, ``3i``).
"""

from __future__ import annotations

import csv
import struct
from pathlib import Path

import numpy as np

MAGIC = b"RLFMAT01"
_HEADER = struct.Struct("<8sBQQ")
_DTYPES = {0: np.dtype("<f8"), 1: np.dtype("<c16")}


def write_binary(path, A) -> None:
    A = np.asarray(A)
    if A.ndim != 2:
        raise ValueError(f"expected a 2-D matrix, got shape {A.shape}")
    tag = 1 if np.iscomplexobj(A) else 0
    data = np.ascontiguousarray(A, dtype=_DTYPES[tag])
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, tag, A.shape[0], A.shape[1]))
        fh.write(data.tobytes())


def read_binary(path) -> np.ndarray:
    raw = Path(path).read_bytes()
    if len(raw) < _HEADER.size:
        raise ValueError(f"{path}: truncated header")
    magic, tag, m, n = _HEADER.unpack_from(raw)
    if magic != MAGIC:
        raise ValueError(f"{path}: bad magic {magic!r}")
    if tag not in _DTYPES:
        raise ValueError(f"{path}: unknown dtype tag {tag}")
    dtype = _DTYPES[tag]
    expected = m * n * dtype.itemsize
    body = raw[_HEADER.size:]
    if len(body) != expected:
        raise ValueError(f"{path}: expected {expected} data bytes, found {len(body)}")
    return np.frombuffer(body, dtype=dtype).reshape(m, n).astype(dtype.newbyteorder("="))


def parse_scalar(token: str) -> complex | float:
    tok = token.strip().replace(" ", "")
    if not tok:
        raise ValueError("empty CSV field")
    if tok.endswith("i"):
        return complex(tok[:-1] + "j")
    return float(tok)


def format_scalar(x) -> str:
    if isinstance(x, (complex, np.complexfloating)):
        re, im = float(np.real(x)), float(np.imag(x))
        sign = "-" if im < 0 or (im == 0 and np.signbit(im)) else "+"
        return f"{re:.17g}{sign}{abs(im):.17g}i"
    return f"{float(x):.17g}"


def read_csv(path) -> np.ndarray:
    rows = []
    with open(path, newline="") as fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if not row or all(not c.strip() for c in row):
                continue
            try:
                rows.append([parse_scalar(c) for c in row])
            except ValueError as exc:
                raise ValueError(f"{path}:{lineno}: {exc}") from None
    if not rows:
        raise ValueError(f"{path}: no data")
    width = len(rows[0])
    if any(len(r) != width for r in rows):
        raise ValueError(f"{path}: ragged rows")
    is_complex = any(isinstance(x, complex) for r in rows for x in r)
    return np.array(rows, dtype=np.complex128 if is_complex else np.float64)


def write_csv(path, A) -> None:
    A = np.asarray(A)
    if A.ndim == 1:
        A = A[None, :]
    complex_ = np.iscomplexobj(A) and np.any(A.imag != 0)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        for row in A:
            w.writerow([format_scalar(x if complex_ else np.real(x)) for x in row])


def read_matrix(path) -> np.ndarray:
    """Read either format; the binary container is recognised by its magic."""
    with open(path, "rb") as fh:
        head = fh.read(len(MAGIC))
    if head == MAGIC:
        return read_binary(path)
    return read_csv(path)
