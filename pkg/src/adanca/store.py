"""``ANCT`` named-tensor container.

Layout (all integers little-endian)::

    b"ANCT" | u32 version | u32 entry count
    per entry: u16 name length | UTF-8 name | u8 dtype code | u8 rank
               | rank x u32 dims | raw payload

dtype codes: 0 = float32, 1 = uint8, 2 = int32.
"""

from __future__ import annotations

import os
import struct
import tempfile
from collections import OrderedDict
from pathlib import Path

import numpy as np

from .errors import CorruptFileError, FormatError

MAGIC = b"ANCT"
VERSION = 1
DTYPE_CODES = {0: np.dtype("<f4"), 1: np.dtype("u1"), 2: np.dtype("<i4")}
_CODE_OF = {np.dtype("float32"): 0, np.dtype("uint8"): 1, np.dtype("int32"): 2}


def _normalize(name: str, arr) -> tuple[int, np.ndarray]:
    arr = np.asarray(arr)
    if arr.dtype == np.bool_:
        arr = arr.astype(np.uint8)
    elif arr.dtype == np.int64:
        if arr.size and (arr.min() < -2**31 or arr.max() >= 2**31):
            raise FormatError(f"{name}: int64 values out of int32 range")
        arr = arr.astype(np.int32)
    code = _CODE_OF.get(arr.dtype.newbyteorder("=") if arr.dtype.byteorder == ">" else arr.dtype)
    if code is None:
        raise FormatError(f"{name}: unsupported dtype {arr.dtype} (float32, uint8, int32 only)")
    if arr.ndim > 255:
        raise FormatError(f"{name}: rank {arr.ndim} exceeds 255")
    return code, np.asarray(arr, dtype=DTYPE_CODES[code], order="C")


def encode(entries: dict) -> bytes:
    parts = [MAGIC, struct.pack("<II", VERSION, len(entries))]
    for name, arr in entries.items():
        raw_name = name.encode("utf-8")
        if len(raw_name) > 0xFFFF:
            raise FormatError(f"entry name too long: {name[:40]}...")
        code, arr = _normalize(name, arr)
        parts.append(struct.pack("<H", len(raw_name)))
        parts.append(raw_name)
        parts.append(struct.pack("<BB", code, arr.ndim))
        parts.append(struct.pack(f"<{arr.ndim}I", *arr.shape))
        parts.append(arr.tobytes(order="C"))
    return b"".join(parts)


class _Reader:
    def __init__(self, buf: bytes):
        self.buf = buf
        self.pos = 0

    def take(self, n: int, what: str) -> bytes:
        if self.pos + n > len(self.buf):
            raise CorruptFileError(f"truncated container while reading {what} at byte {self.pos}")
        out = self.buf[self.pos:self.pos + n]
        self.pos += n
        return out

    def unpack(self, fmt: str, what: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt), what))


def decode(buf: bytes) -> "OrderedDict[str, np.ndarray]":
    r = _Reader(buf)
    if r.take(4, "magic") != MAGIC:
        raise FormatError("not an ANCT container (bad magic)")
    version, count = r.unpack("<II", "header")
    if version != VERSION:
        raise FormatError(f"unsupported container version {version} (expected {VERSION})")
    out: OrderedDict[str, np.ndarray] = OrderedDict()
    for k in range(count):
        (nlen,) = r.unpack("<H", f"entry {k} name length")
        try:
            name = r.take(nlen, f"entry {k} name").decode("utf-8")
        except UnicodeDecodeError as exc:
            raise CorruptFileError(f"entry {k}: name is not UTF-8") from exc
        code, rank = r.unpack("<BB", f"{name} dtype/rank")
        if code not in DTYPE_CODES:
            raise FormatError(f"{name}: unknown dtype code {code}")
        dims = r.unpack(f"<{rank}I", f"{name} dims")
        dt = DTYPE_CODES[code]
        nbytes = int(np.prod(dims, dtype=np.int64)) * dt.itemsize
        payload = r.take(nbytes, f"{name} payload")
        if name in out:
            raise FormatError(f"duplicate entry name {name!r}")
        out[name] = np.frombuffer(payload, dtype=dt).reshape(dims).astype(dt.newbyteorder("="))
    if r.pos != len(buf):
        raise CorruptFileError(f"{len(buf) - r.pos} trailing bytes after the last entry")
    return out


def atomic_write_bytes(path, data: bytes):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def atomic_write_text(path, text: str):
    atomic_write_bytes(path, text.encode("utf-8"))


def write_store(path, entries: dict):
    atomic_write_bytes(path, encode(entries))


def read_store(path) -> "OrderedDict[str, np.ndarray]":
    return decode(Path(path).read_bytes())


def text_entry(text: str) -> np.ndarray:
    return np.frombuffer(text.encode("utf-8"), dtype=np.uint8).copy()


def entry_text(arr: np.ndarray) -> str:
    return np.asarray(arr, dtype=np.uint8).tobytes().decode("utf-8")
