"""Versioned binary parameter checkpoints.

Layout (all integers little-endian)::

    magic        8 bytes   b"EPIORMCK"
    version      u32       currently 1
    meta_len     u32       length of the UTF-8 JSON metadata block
    meta         bytes     JSON (architecture, config, fingerprints)
    count        u32       number of tensors
    per tensor:
      name_len   u16, name (UTF-8)
      precision  u8        4 = float32, 8 = float64
      ndim       u8, then ndim x u32 dims
      values     prod(dims) x precision bytes, little-endian, C order
    crc32        u32       zlib.crc32 of every preceding byte
"""

from __future__ import annotations

import json
import os
import struct
import tempfile
import zlib

import numpy as np

from ..errors import FormatError

MAGIC = b"EPIORMCK"
VERSION = 1
_DTYPES = {4: np.dtype("<f4"), 8: np.dtype("<f8")}


def atomic_write_bytes(path, payload):
    """Write via a temporary file in the same directory, then rename."""
    path = os.fspath(path)
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, "wb") as f:
            f.write(payload)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def encode_checkpoint(tensors, meta=None):
    parts = [MAGIC, struct.pack("<I", VERSION)]
    meta_bytes = json.dumps(meta or {}, sort_keys=True).encode("utf-8")
    parts += [struct.pack("<I", len(meta_bytes)), meta_bytes, struct.pack("<I", len(tensors))]
    for name in sorted(tensors):
        arr = np.asarray(tensors[name])
        size = arr.dtype.itemsize
        if size not in _DTYPES or arr.dtype.kind != "f":
            raise ValueError(f"tensor {name!r}: unsupported dtype {arr.dtype}")
        encoded = name.encode("utf-8")
        parts.append(struct.pack("<H", len(encoded)) + encoded)
        parts.append(struct.pack("<BB", size, arr.ndim) + struct.pack(f"<{arr.ndim}I", *arr.shape))
        parts.append(np.ascontiguousarray(arr, dtype=_DTYPES[size]).tobytes())
    body = b"".join(parts)
    return body + struct.pack("<I", zlib.crc32(body))


def decode_checkpoint(payload):
    """Return ``(tensors, meta)``; raises :class:`FormatError` with a byte offset."""
    if len(payload) < len(MAGIC) + 4 or payload[:len(MAGIC)] != MAGIC:
        raise FormatError("not a checkpoint (bad magic)", 0)
    body, tail = payload[:-4], payload[-4:]
    (crc,) = struct.unpack("<I", tail)
    if zlib.crc32(body) != crc:
        raise FormatError("checksum mismatch", len(payload) - 4)
    pos = len(MAGIC)

    def read(fmt):
        nonlocal pos
        n = struct.calcsize(fmt)
        if pos + n > len(body):
            raise FormatError("truncated checkpoint", pos)
        vals = struct.unpack_from(fmt, body, pos)
        pos += n
        return vals

    (version,) = read("<I")
    if version != VERSION:
        raise FormatError(f"unsupported checkpoint version {version}", pos - 4)
    (meta_len,) = read("<I")
    meta = json.loads(body[pos:pos + meta_len].decode("utf-8"))
    pos += meta_len
    (count,) = read("<I")
    tensors = {}
    for _ in range(count):
        (name_len,) = read("<H")
        name = body[pos:pos + name_len].decode("utf-8")
        pos += name_len
        size, ndim = read("<BB")
        if size not in _DTYPES:
            raise FormatError(f"tensor {name!r}: bad precision code {size}", pos - 2)
        shape = read(f"<{ndim}I")
        nbytes = int(np.prod(shape, dtype=np.int64)) * size
        if pos + nbytes > len(body):
            raise FormatError(f"tensor {name!r} payload truncated", pos)
        arr = np.frombuffer(body, dtype=_DTYPES[size], count=nbytes // size, offset=pos)
        tensors[name] = arr.reshape(shape).astype(_DTYPES[size].newbyteorder("="))
        pos += nbytes
    if pos != len(body):
        raise FormatError("trailing bytes before checksum", pos)
    return tensors, meta


def save_checkpoint(path, tensors, meta=None):
    atomic_write_bytes(path, encode_checkpoint(tensors, meta))


def load_checkpoint(path):
    with open(path, "rb") as f:
        return decode_checkpoint(f.read())
