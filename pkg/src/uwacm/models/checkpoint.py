"""Model checkpoint files.

Layout, little-endian::

    "UWAM"  u32 version  u16 len + kind tag  u32 len + config JSON
    u32 n_arrays, then per array: u16 len + name, u8 dtype, u8 ndim, ndim * u64 dims
    array payloads in table order, row-major
    u64 checksum: sum of every preceding byte, mod 2**64

dtype codes: 1 = float64, 2 = int64.
"""

from __future__ import annotations

import json
import struct

import numpy as np

from ..dataset import atomic_write
from ..errors import FormatError

MAGIC = b"UWAM"
VERSION = 1
_DTYPES = {1: np.dtype("<f8"), 2: np.dtype("<i8")}
_CODES = {"f": 1, "i": 2}


def _checksum(buf):
    return int(np.frombuffer(buf, dtype=np.uint8).sum(dtype=np.uint64))


def to_bytes(kind, config, arrays):
    out = bytearray(MAGIC)
    out += struct.pack("<I", VERSION)
    tag = kind.encode("ascii")
    out += struct.pack("<H", len(tag)) + tag
    blob = json.dumps(config, sort_keys=True).encode("utf-8")
    out += struct.pack("<I", len(blob)) + blob
    names = list(arrays)
    out += struct.pack("<I", len(names))
    payloads = []
    for name in names:
        a = np.asarray(arrays[name])
        code = _CODES.get(a.dtype.kind)
        if code is None:
            raise FormatError(f"cannot store array {name!r} of dtype {a.dtype}", len(out))
        key = name.encode("utf-8")
        out += struct.pack("<H", len(key)) + key
        out += struct.pack("<BB", code, a.ndim) + struct.pack(f"<{a.ndim}Q", *a.shape)
        payloads.append(np.ascontiguousarray(a, dtype=_DTYPES[code]).tobytes())
    for p in payloads:
        out += p
    out += struct.pack("<Q", _checksum(bytes(out)))
    return bytes(out)


class _Reader:
    def __init__(self, buf):
        self.buf = buf
        self.pos = 0

    def take(self, n, what):
        if self.pos + n > len(self.buf):
            raise FormatError(
                f"truncated {what}: expected {self.pos + n} bytes, got {len(self.buf)}", self.pos)
        chunk = self.buf[self.pos:self.pos + n]
        self.pos += n
        return chunk

    def unpack(self, fmt, what):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt), what))


def from_bytes(buf):
    """Returns ``(kind, config, arrays)``."""
    r = _Reader(buf)
    if r.take(4, "magic") != MAGIC:
        raise FormatError("bad magic", 0)
    (version,) = r.unpack("<I", "header")
    if version != VERSION:
        raise FormatError(f"unsupported version {version}", 4)
    (n,) = r.unpack("<H", "kind tag")
    kind = r.take(n, "kind tag").decode("ascii")
    (n,) = r.unpack("<I", "config")
    try:
        config = json.loads(r.take(n, "config").decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError):
        raise FormatError("config block is not valid JSON", r.pos - n) from None
    (count,) = r.unpack("<I", "shape table")
    table = []
    for _ in range(count):
        (n,) = r.unpack("<H", "shape table")
        name = r.take(n, "shape table").decode("utf-8")
        at = r.pos
        code, ndim = r.unpack("<BB", "shape table")
        if code not in _DTYPES:
            raise FormatError(f"unsupported dtype code {code}", at)
        shape = r.unpack(f"<{ndim}Q", "shape table")
        table.append((name, _DTYPES[code], shape))
    arrays = {}
    for name, dtype, shape in table:
        size = int(np.prod(shape, dtype=np.int64)) * dtype.itemsize
        raw = r.take(size, f"array {name!r}")
        arrays[name] = np.frombuffer(raw, dtype=dtype).reshape(shape).astype(dtype.newbyteorder("="))
    end = r.pos
    (stored,) = r.unpack("<Q", "checksum")
    if r.pos != len(buf):
        raise FormatError(f"trailing data: expected {r.pos} bytes, got {len(buf)}", r.pos)
    if stored != _checksum(buf[:end]):
        raise FormatError("checksum mismatch", end)
    return kind, config, arrays


def save(model, path, run=None):
    """Write ``model``; ``run`` is optional JSON-able context stored alongside
    (normalisation statistics, window length, split)."""
    config = {"model": model.config(), "run": run or {}}
    atomic_write(path, to_bytes(model.kind, config, model.arrays()))


def load_with_run(path):
    with open(path, "rb") as fh:
        kind, config, arrays = from_bytes(fh.read())
    from . import model_class  # late import: the registry imports this module

    try:
        model = model_class(kind).from_arrays(config["model"], arrays)
    except (KeyError, TypeError, ValueError) as exc:
        raise FormatError(f"checkpoint of kind {kind!r} is inconsistent: {exc}", 0) from None
    return model, config.get("run", {})


def load(path):
    return load_with_run(path)[0]
