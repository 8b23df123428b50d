"""Binary parameter checkpoints.

Layout (all integers little-endian)::

    b"BRSG" | u32 version | u32 count | count x blob
    blob = u32 name_len | name (UTF-8) | u32 rank | rank x u64 dim | float32 values

Values are stored as little-endian float32 regardless of the in-memory dtype.
"""

import struct

import numpy as np

MAGIC = b"BRSG"
VERSION = 1


class CheckpointError(ValueError):
    pass


def encode(arrays: dict) -> bytes:
    parts = [MAGIC, struct.pack("<II", VERSION, len(arrays))]
    for name, arr in arrays.items():
        arr = np.asarray(arr)
        raw = name.encode("utf-8")
        parts.append(struct.pack("<I", len(raw)))
        parts.append(raw)
        parts.append(struct.pack("<I", arr.ndim))
        parts.append(struct.pack(f"<{arr.ndim}Q", *arr.shape))
        parts.append(np.ascontiguousarray(arr, dtype="<f4").tobytes())
    return b"".join(parts)


def decode(buf: bytes) -> dict:
    if buf[:4] != MAGIC:
        raise CheckpointError("not a BRSG checkpoint (bad magic)")
    version, count = struct.unpack_from("<II", buf, 4)
    if version != VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version}")
    pos = 12
    out = {}
    try:
        for _ in range(count):
            (nlen,) = struct.unpack_from("<I", buf, pos)
            pos += 4
            name = buf[pos:pos + nlen].decode("utf-8")
            pos += nlen
            (rank,) = struct.unpack_from("<I", buf, pos)
            pos += 4
            dims = struct.unpack_from(f"<{rank}Q", buf, pos)
            pos += 8 * rank
            n = int(np.prod(dims, dtype=np.int64))
            out[name] = np.frombuffer(buf, dtype="<f4", count=n, offset=pos).reshape(dims).copy()
            pos += 4 * n
    except (struct.error, ValueError) as exc:
        raise CheckpointError(f"truncated or corrupt checkpoint: {exc}") from exc
    if pos != len(buf):
        raise CheckpointError("trailing bytes after last blob")
    return out


def save(path, arrays: dict) -> None:
    with open(path, "wb") as fh:
        fh.write(encode(arrays))


def load(path) -> dict:
    with open(path, "rb") as fh:
        return decode(fh.read())
