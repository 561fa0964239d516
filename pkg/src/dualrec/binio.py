"""Checksummed little-endian binary block I/O.

All engine file formats (exchange files, PCA models, vector collections)
share the same skeleton: magic bytes, a u32 version, typed payload blocks,
and a trailing CRC32 of everything that precedes it.
"""

from __future__ import annotations

import struct
import zlib
from typing import BinaryIO

import numpy as np

from .errors import BadMagicError, ChecksumError, TruncatedFileError, VersionError


class BlockWriter:
    """Writes typed blocks to a binary stream while accumulating a CRC32."""

    def __init__(self, fh: BinaryIO):
        self._fh = fh
        self._crc = 0

    def write(self, data: bytes) -> None:
        self._fh.write(data)
        self._crc = zlib.crc32(data, self._crc)

    def magic(self, magic: bytes) -> None:
        self.write(magic)

    def u8(self, value: int) -> None:
        self.write(struct.pack("<B", value))

    def u32(self, value: int) -> None:
        self.write(struct.pack("<I", value))

    def i32(self, value: int) -> None:
        self.write(struct.pack("<i", value))

    def u64(self, value: int) -> None:
        self.write(struct.pack("<Q", value))

    def f64(self, value: float) -> None:
        self.write(struct.pack("<d", value))

    def text(self, value: str) -> None:
        raw = value.encode("utf-8")
        self.u32(len(raw))
        self.write(raw)

    def array(self, arr: np.ndarray, dtype: str) -> None:
        self.write(np.ascontiguousarray(arr, dtype=np.dtype(dtype).newbyteorder("<")).tobytes())

    def finish(self) -> None:
        """Append the CRC32 of all bytes written so far."""
        self._fh.write(struct.pack("<I", self._crc))


class BlockReader:
    """Reads typed blocks, tracking a CRC32 for final verification."""

    def __init__(self, fh: BinaryIO):
        self._fh = fh
        self._crc = 0

    def take(self, n: int) -> bytes:
        data = self._fh.read(n)
        if len(data) != n:
            raise TruncatedFileError(f"expected {n} bytes, got {len(data)}")
        self._crc = zlib.crc32(data, self._crc)
        return data

    def expect_magic(self, magic: bytes) -> None:
        got = self.take(len(magic))
        if got != magic:
            raise BadMagicError(f"expected magic {magic!r}, got {got!r}")

    def expect_version(self, supported: int) -> int:
        version = self.u32()
        if version != supported:
            raise VersionError(f"unsupported format version {version} (supported: {supported})")
        return version

    def u8(self) -> int:
        return struct.unpack("<B", self.take(1))[0]

    def u32(self) -> int:
        return struct.unpack("<I", self.take(4))[0]

    def i32(self) -> int:
        return struct.unpack("<i", self.take(4))[0]

    def u64(self) -> int:
        return struct.unpack("<Q", self.take(8))[0]

    def f64(self) -> float:
        return struct.unpack("<d", self.take(8))[0]

    def text(self) -> str:
        n = self.u32()
        return self.take(n).decode("utf-8")

    def array(self, count: int, dtype: str) -> np.ndarray:
        dt = np.dtype(dtype).newbyteorder("<")
        raw = self.take(count * dt.itemsize)
        return np.frombuffer(raw, dtype=dt).astype(dtype)

    def verify_checksum(self) -> None:
        """Read the trailing CRC32 and compare against accumulated bytes."""
        expected_crc = self._crc
        raw = self._fh.read(4)
        if len(raw) != 4:
            raise TruncatedFileError("missing trailing checksum")
        stored = struct.unpack("<I", raw)[0]
        if stored != expected_crc:
            raise ChecksumError(f"checksum mismatch: stored {stored:#010x}, computed {expected_crc:#010x}")
