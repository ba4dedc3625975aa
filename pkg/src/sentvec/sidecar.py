"""Versioned binary container for auxiliary nets (regressor/classifier).

Layout mirrors the main model format: magic, u32 version, JSON metadata,
named float arrays, trailing CRC-32.  All integers little-endian.
"""

from __future__ import annotations

import json
import os
import struct
import zlib

import numpy as np

from .model import ChecksumError, NotAModelFileError, UnsupportedVersionError, _Reader

SIDECAR_VERSION = 1


def write_sidecar(path: str, magic: bytes, meta: dict, arrays: dict[str, np.ndarray]) -> None:
    parts = [magic, struct.pack("<I", SIDECAR_VERSION)]
    mb = json.dumps(meta, sort_keys=True, separators=(",", ":")).encode("utf-8")
    parts.append(struct.pack("<I", len(mb)))
    parts.append(mb)
    parts.append(struct.pack("<I", len(arrays)))
    for name, arr in arrays.items():
        nb = name.encode("utf-8")
        a = np.ascontiguousarray(arr, dtype="<f8")
        parts.append(struct.pack("<I", len(nb)))
        parts.append(nb)
        parts.append(struct.pack("<I", a.ndim))
        parts.append(struct.pack(f"<{a.ndim}Q", *a.shape))
        parts.append(a.tobytes())
    payload = b"".join(parts)
    tmp = path + ".tmp"
    with open(tmp, "wb") as f:
        f.write(payload)
        f.write(struct.pack("<I", zlib.crc32(payload) & 0xFFFFFFFF))
    os.replace(tmp, path)


def read_sidecar(path: str, magic: bytes) -> tuple[dict, dict[str, np.ndarray]]:
    with open(path, "rb") as f:
        data = f.read()
    if len(data) < len(magic) or data[: len(magic)] != magic:
        raise NotAModelFileError(f"not a {magic.decode()} file")
    r = _Reader(data)
    r.take(len(magic))
    (version,) = r.unpack("<I")
    if version != SIDECAR_VERSION:
        raise UnsupportedVersionError(f"unsupported sidecar version {version}")
    (mlen,) = r.unpack("<I")
    meta = json.loads(r.take(mlen).decode("utf-8"))
    (n_arrays,) = r.unpack("<I")
    arrays: dict[str, np.ndarray] = {}
    for _ in range(n_arrays):
        (nlen,) = r.unpack("<I")
        name = r.take(nlen).decode("utf-8")
        (ndim,) = r.unpack("<I")
        shape = r.unpack(f"<{ndim}Q")
        count = 1
        for s in shape:
            count *= s
        arrays[name] = np.frombuffer(r.take(count * 8), dtype="<f8").reshape(shape).copy()
    (crc_stored,) = r.unpack("<I")
    if r.pos != len(data) or zlib.crc32(data[: len(data) - 4]) & 0xFFFFFFFF != crc_stored:
        raise ChecksumError("checksum mismatch")
    return meta, arrays
