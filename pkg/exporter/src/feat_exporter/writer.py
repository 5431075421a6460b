"""Feature-file emission in the two portable formats.

FMX1 binary: magic bytes ``FMX1``, u64 little-endian row count N, u64
little-endian column count M, N*M IEEE-754 little-endian f64 values in
row-major order, then N ids each as a u32 little-endian byte length followed
by the UTF-8 bytes. CSV: header ``id,f0,...,f{M-1}``, one row per image,
values written with ``repr`` so parsing them back is value-exact.

Writes go to a temporary file in the target directory and are renamed into
place, so readers never observe a half-written file.
"""

from __future__ import annotations

import csv
import os
import struct
import tempfile
from pathlib import Path

import numpy as np

_HEADER = struct.Struct("<4sQQ")
_MAGIC = b"FMX1"


def _fmx1_bytes(ids, values: np.ndarray) -> bytes:
    parts = [_HEADER.pack(_MAGIC, values.shape[0], values.shape[1])]
    parts.append(np.ascontiguousarray(values, dtype="<f8").tobytes())
    for id_ in ids:
        raw = id_.encode("utf-8")
        parts.append(struct.pack("<I", len(raw)))
        parts.append(raw)
    return b"".join(parts)


def _csv_text(ids, values: np.ndarray) -> str:
    import io

    buf = io.StringIO(newline="")
    writer = csv.writer(buf)
    writer.writerow(["id"] + [f"f{i}" for i in range(values.shape[1])])
    for id_, row in zip(ids, values):
        writer.writerow([id_] + [repr(float(v)) for v in row])
    return buf.getvalue()


def write_features(ids, values: np.ndarray, path) -> None:
    """Write the matrix to `path`, picking the format from the extension
    (``.csv`` for CSV, anything else FMX1). The write is atomic."""
    path = Path(path)
    if path.suffix.lower() == ".csv":
        payload = _csv_text(ids, values).encode("utf-8")
    else:
        payload = _fmx1_bytes(ids, values)
    fd, tmp_name = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(payload)
        os.replace(tmp_name, path)
    except BaseException:
        if os.path.exists(tmp_name):
            os.unlink(tmp_name)
        raise
