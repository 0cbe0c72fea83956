"""Binary field files.

Layout (little-endian): magic ``b"GLF1"``, int32 ``n``, int32 ``N``, ``n``
int32 grid dimensions, float64 ``h``, then float64 values for every grid
node in x-fastest order; per node the N-1 components, each with n-1 values.
Excluded nodes hold NaN.  The box is centred at the origin.
"""

from __future__ import annotations

import os
import struct

import numpy as np

MAGIC = b"GLF1"


class FieldFileError(ValueError):
    pass


def write_fields(path, fs) -> None:
    g = fs.grid
    K, _, c = fs.u.shape
    dense = g.dense(np.moveaxis(fs.u, 0, 1))  # dims + (K, c)
    # x-fastest: reverse the axis order before a C-order flatten
    vals = np.transpose(dense, tuple(range(g.n))[::-1] + (g.n, g.n + 1))
    head = MAGIC + struct.pack(f"<ii{g.n}id", g.n, K + 1, *map(int, g.dims), float(g.h))
    tmp = f"{path}.tmp"
    with open(tmp, "wb") as fh:
        fh.write(head)
        fh.write(np.ascontiguousarray(vals, dtype="<f8").tobytes())
    os.replace(tmp, path)


def read_fields(path):
    """Returns ``(n, N, dims, h, values)``; ``values`` has shape dims + (N-1, n-1)."""
    with open(path, "rb") as fh:
        raw = fh.read()
    if raw[:4] != MAGIC:
        raise FieldFileError("not a GLF1 field file")
    try:
        n, N = struct.unpack_from("<ii", raw, 4)
        dims = struct.unpack_from(f"<{n}i", raw, 12)
        (h,) = struct.unpack_from("<d", raw, 12 + 4 * n)
    except struct.error as exc:
        raise FieldFileError(f"truncated header: {exc}") from exc
    off = 20 + 4 * n
    count = int(np.prod(dims)) * (N - 1) * (n - 1)
    if len(raw) - off != 8 * count:
        raise FieldFileError(f"expected {count} values, found {(len(raw) - off) / 8:g}")
    vals = np.frombuffer(raw, dtype="<f8", offset=off).reshape(tuple(dims[::-1]) + (N - 1, n - 1))
    vals = np.transpose(vals, tuple(range(n))[::-1] + (n, n + 1))
    return n, N, tuple(dims), h, np.array(vals)
