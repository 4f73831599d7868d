"""AEMB container writer.

Layout: magic "AEMB" | version u32 LE | kind u8 (0 embedding, 1 probability)
| rows u64 LE | cols u64 LE | float32 LE row-major payload.
"""

import struct

import numpy as np

_HEADER = struct.Struct("<4sIBQQ")
_KINDS = {"embedding": 0, "probability": 1}


def write_aemb(matrix, kind, path):
    m = np.ascontiguousarray(matrix, dtype=np.float32)
    if m.ndim != 2 or m.size == 0:
        raise ValueError("matrix must be non-empty and 2-D")
    if not np.all(np.isfinite(m)):
        raise ValueError("refusing to write non-finite values")
    if kind not in _KINDS:
        raise ValueError(f"unknown kind {kind!r}")
    if kind == "probability":
        sums = m.astype(np.float64).sum(axis=1)
        bad = np.nonzero(np.abs(sums - 1.0) > 1e-6)[0]
        if bad.size:
            raise ValueError(f"probability row {bad[0]} sums to {sums[bad[0]]}")
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(b"AEMB", 1, _KINDS[kind], m.shape[0], m.shape[1]))
        fh.write(m.tobytes(order="C"))
