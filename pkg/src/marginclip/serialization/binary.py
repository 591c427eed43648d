"""
Little-endian primitives shared by the checkpoint and dataset file formats.
"""

import struct

import numpy as np

from ..errors import ArtifactFormatError

U8 = struct.Struct("<B")
U32 = struct.Struct("<I")
F64 = struct.Struct("<d")


class BinaryWriter:
    def __init__(self):
        self.parts: list[bytes] = []

    def magic(self, tag: bytes) -> None:
        self.parts.append(tag)

    def u8(self, value: int) -> None:
        self.parts.append(U8.pack(value))

    def u32(self, value: int) -> None:
        self.parts.append(U32.pack(value))

    def f64(self, value: float) -> None:
        self.parts.append(F64.pack(value))

    def array(self, values: np.ndarray, dtype: str) -> None:
        self.parts.append(np.ascontiguousarray(values, dtype=dtype).tobytes())

    def getvalue(self) -> bytes:
        return b"".join(self.parts)


class BinaryReader:
    """Sequential reader raising ArtifactFormatError on truncated input."""

    def __init__(self, data: bytes, what: str):
        self.data = memoryview(data)
        self.offset = 0
        self.what = what

    @property
    def remaining(self) -> int:
        return len(self.data) - self.offset

    def _take(self, size: int) -> memoryview:
        if size > self.remaining:
            raise ArtifactFormatError(f"{self.what} is truncated at byte {self.offset}")
        chunk = self.data[self.offset : self.offset + size]
        self.offset += size
        return chunk

    def magic(self, expected: bytes) -> None:
        found = bytes(self._take(len(expected)))
        if found != expected:
            raise ArtifactFormatError(
                f"{self.what}: expected magic {expected!r}, found {found!r}"
            )

    def peek(self, size: int) -> bytes:
        return bytes(self.data[self.offset : self.offset + size])

    def u8(self) -> int:
        return int(U8.unpack(self._take(U8.size))[0])

    def u32(self) -> int:
        return int(U32.unpack(self._take(U32.size))[0])

    def f64(self) -> float:
        return float(F64.unpack(self._take(F64.size))[0])

    def array(self, dtype: str, shape: tuple[int, ...]) -> np.ndarray:
        count = int(np.prod(shape, dtype=np.int64))
        itemsize = np.dtype(dtype).itemsize
        raw = self._take(count * itemsize)
        return np.frombuffer(raw, dtype=dtype, count=count).reshape(shape).copy()

    def expect_end(self) -> None:
        if self.remaining:
            raise ArtifactFormatError(f"{self.what} has {self.remaining} trailing bytes")
