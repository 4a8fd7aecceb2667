"""QEMB container writer.

Shared wire contract with the training-side tooling: magic "QEMB",
version u32, N u32, D u32, then N*D float32 rows, all little-endian. The
file boundary is the only coupling between the exporter and any consumer.
"""

import struct

import numpy as np

MAGIC = b"QEMB"
VERSION = 1


def write_qemb(rows: np.ndarray, path) -> None:
    rows = np.ascontiguousarray(rows, dtype="<f4")
    if rows.ndim != 2:
        raise ValueError(f"expected a 2-D row array, got shape {rows.shape}")
    n, d = rows.shape
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<III", VERSION, n, d))
        f.write(rows.tobytes())
