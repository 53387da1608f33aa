"""Little-endian versioned binary containers shared by the model files.

Layout: 8-byte magic, uint32 version, uint32 count of int64 header fields,
the int64 fields, then float64 payload arrays back to back.
"""

import struct

import numpy as np

from asrlab.errors import FormatError

VERSION = 1


def write_container(path, magic: bytes, ints, arrays):
    assert len(magic) == 8
    with open(path, "wb") as fh:
        fh.write(magic)
        fh.write(struct.pack("<II", VERSION, len(ints)))
        fh.write(struct.pack(f"<{len(ints)}q", *[int(v) for v in ints]))
        for arr in arrays:
            fh.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())


def read_container(path, magic: bytes):
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[:8] != magic:
        raise FormatError(f"{path}: bad magic {blob[:8]!r}, expected {magic!r}")
    version, n_ints = struct.unpack_from("<II", blob, 8)
    if version != VERSION:
        raise FormatError(f"{path}: unsupported version {version}")
    off = 16
    ints = struct.unpack_from(f"<{n_ints}q", blob, off)
    off += 8 * n_ints
    payload = np.frombuffer(blob, dtype="<f8", offset=off).astype(np.float64)
    return list(ints), payload


def take(payload, offset, shape):
    n = int(np.prod(shape))
    if offset + n > payload.size:
        raise FormatError("truncated payload")
    return payload[offset:offset + n].reshape(shape).copy(), offset + n
