"""Versioned binary containers for named float64 tensors.

Weights container layout (magic "CROSSPATH-W1"):

    magic(12) | u32 tensor count | per tensor:
        u16 name length | name utf-8 | u8 ndim | u32 * ndim dims | f64 * n data

All integers and floats little-endian; tensors written in mapping order, so
identical parameters always produce identical bytes. Model artifacts and
sample sets embed this container behind a JSON header:

    magic(12) | u32 header length | header JSON utf-8 | weights container
"""

import json
import struct

import numpy as np

from ..errors import ParseError

CONTAINER_MAGIC = b"CROSSPATH-W1"


def pack_tensors(tensors):
    """Serialize an ordered mapping name -> ndarray into container bytes."""
    chunks = [CONTAINER_MAGIC, struct.pack("<I", len(tensors))]
    for name, arr in tensors.items():
        data = np.ascontiguousarray(arr, dtype="<f8")
        encoded = name.encode("utf-8")
        chunks.append(struct.pack("<H", len(encoded)))
        chunks.append(encoded)
        chunks.append(struct.pack("<B", data.ndim))
        chunks.append(struct.pack(f"<{data.ndim}I", *data.shape))
        chunks.append(data.tobytes())
    return b"".join(chunks)


def unpack_tensors(blob):
    """Inverse of pack_tensors; returns an insertion-ordered dict."""
    if blob[: len(CONTAINER_MAGIC)] != CONTAINER_MAGIC:
        raise ParseError("not a CROSSPATH-W1 tensor container")
    offset = len(CONTAINER_MAGIC)
    (count,) = struct.unpack_from("<I", blob, offset)
    offset += 4
    out = {}
    for _ in range(count):
        (name_len,) = struct.unpack_from("<H", blob, offset)
        offset += 2
        name = blob[offset:offset + name_len].decode("utf-8")
        offset += name_len
        (ndim,) = struct.unpack_from("<B", blob, offset)
        offset += 1
        shape = struct.unpack_from(f"<{ndim}I", blob, offset)
        offset += 4 * ndim
        n = int(np.prod(shape)) if ndim else 1
        arr = np.frombuffer(blob, dtype="<f8", count=n, offset=offset).reshape(shape)
        offset += 8 * n
        out[name] = arr.astype(np.float64)
    return out


def write_blob(path, magic, header, tensors):
    """Write `magic | header JSON | tensor container` to `path`."""
    if len(magic) != 12:
        raise ValueError("magic must be 12 bytes")
    header_bytes = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    with open(path, "wb") as fp:
        fp.write(magic)
        fp.write(struct.pack("<I", len(header_bytes)))
        fp.write(header_bytes)
        fp.write(pack_tensors(tensors))


def read_blob(path, magic):
    """Read a file written by write_blob; returns (header, tensors)."""
    with open(path, "rb") as fp:
        blob = fp.read()
    if blob[:12] != magic:
        raise ParseError(f"bad magic in {path}: expected {magic!r}")
    (header_len,) = struct.unpack_from("<I", blob, 12)
    header = json.loads(blob[16:16 + header_len].decode("utf-8"))
    tensors = unpack_tensors(blob[16 + header_len:])
    return header, tensors
