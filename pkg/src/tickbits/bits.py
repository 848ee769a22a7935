"""Bit-string container and bit file I/O.

Bits are stored as a numpy uint8 array of 0/1 values.  Files on disk are
ASCII '0'/'1' with no separators so external battery binaries can consume
them directly; raw byte files are unpacked most-significant-bit first.
"""
from __future__ import annotations

import os
from dataclasses import dataclass, field

import numpy as np

__all__ = ["BitString", "bits_from_str", "bits_to_str", "read_bit_file", "write_bit_file"]


def _as_bit_array(bits) -> np.ndarray:
    a = np.asarray(bits, dtype=np.uint8)
    if a.ndim != 1:
        a = a.ravel()
    if a.size and (a.max(initial=0) > 1):
        raise ValueError("bit values must be 0 or 1")
    return a


@dataclass(frozen=True)
class BitString:
    """An immutable ordered sequence over {0, 1}."""

    bits: np.ndarray = field(default_factory=lambda: np.empty(0, dtype=np.uint8))

    def __post_init__(self):
        a = _as_bit_array(self.bits)
        a.setflags(write=False)
        object.__setattr__(self, "bits", a)

    @classmethod
    def from_str(cls, s: str) -> "BitString":
        return cls(bits_from_str(s))

    @classmethod
    def from_bytes(cls, data: bytes) -> "BitString":
        return cls(np.unpackbits(np.frombuffer(data, dtype=np.uint8)))

    @classmethod
    def concat(cls, parts: list["BitString"]) -> "BitString":
        if not parts:
            return cls()
        return cls(np.concatenate([p.bits for p in parts]))

    def __len__(self) -> int:
        return int(self.bits.size)

    def __getitem__(self, i):
        return self.bits[i]

    def __eq__(self, other) -> bool:
        if not isinstance(other, BitString):
            return NotImplemented
        return len(self) == len(other) and bool(np.array_equal(self.bits, other.bits))

    def to01(self) -> str:
        return bits_to_str(self.bits)

    def complement(self) -> "BitString":
        return BitString(np.uint8(1) - self.bits)


def bits_from_str(s: str) -> np.ndarray:
    a = np.frombuffer(s.encode("ascii"), dtype=np.uint8)
    bad = (a != ord("0")) & (a != ord("1"))
    if bad.any():
        raise ValueError("bit string may contain only '0' and '1'")
    return (a - ord("0")).astype(np.uint8)


def bits_to_str(bits: np.ndarray) -> str:
    return (np.asarray(bits, dtype=np.uint8) + ord("0")).tobytes().decode("ascii")


def write_bit_file(path: str | os.PathLike, bits) -> None:
    a = _as_bit_array(getattr(bits, "bits", bits))
    with open(path, "wb") as fh:
        fh.write((a + ord("0")).tobytes())


def read_bit_file(path: str | os.PathLike) -> BitString:
    """Read a bit file: ASCII '0'/'1' text, or raw bytes unpacked MSB first."""
    with open(path, "rb") as fh:
        data = fh.read()
    if not data:
        raise ValueError(f"empty bit file: {path}")
    stripped = bytes(b for b in data if b not in b" \t\r\n")
    if stripped and all(b in b"01" for b in stripped):
        a = np.frombuffer(stripped, dtype=np.uint8) - ord("0")
        return BitString(a.astype(np.uint8))
    return BitString.from_bytes(data)
