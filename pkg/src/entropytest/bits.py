"""Binary samples and their on-disk encodings."""

from __future__ import annotations

import re
from typing import Iterable, Union

import numpy as np

__all__ = [
    "BitSequence",
    "as_bits",
    "decode_bits",
    "encode_bits",
    "FORMATS",
]

FORMATS = ("raw", "ascii01", "hex")


class BitSequence:
    """An immutable sample x = x1 x2 ... xn over {0, 1}.

    Backed by a read-only ``uint8`` array; ``len(x)`` is n.
    """

    __slots__ = ("_bits",)

    def __init__(self, bits: Union[str, Iterable[int], np.ndarray]):
        if isinstance(bits, str):
            if not bits or set(bits) - {"0", "1"}:
                raise ValueError("bit string must be a non-empty string of '0'/'1'")
            arr = np.frombuffer(bits.encode("ascii"), dtype=np.uint8) - ord("0")
        else:
            arr = np.asarray(bits)
            if arr.ndim != 1:
                raise ValueError("bit sequence must be one-dimensional")
            if arr.size and ((arr != 0) & (arr != 1)).any():
                raise ValueError("every symbol must be 0 or 1")
            arr = arr.astype(np.uint8)
        if arr.size == 0:
            raise ValueError("bit sequence must contain at least one symbol")
        arr = np.array(arr, dtype=np.uint8, copy=True)
        arr.setflags(write=False)
        self._bits = arr

    @property
    def array(self) -> np.ndarray:
        return self._bits

    def __len__(self) -> int:
        return int(self._bits.size)

    def __getitem__(self, item):
        if isinstance(item, slice):
            return BitSequence(self._bits[item])
        return int(self._bits[item])

    def __iter__(self):
        return iter(self._bits.tolist())

    def __eq__(self, other) -> bool:
        if isinstance(other, str):
            other = BitSequence(other)
        if not isinstance(other, BitSequence):
            return NotImplemented
        return np.array_equal(self._bits, other._bits)

    def __hash__(self) -> int:
        return hash((len(self), self._bits.tobytes()))

    def __str__(self) -> str:
        return (self._bits + ord("0")).tobytes().decode("ascii")

    def __repr__(self) -> str:
        s = str(self)
        if len(s) > 40:
            s = s[:37] + "..."
        return f"BitSequence('{s}', n={len(self)})"

    def count_ones(self) -> int:
        return int(np.count_nonzero(self._bits))

    def complement(self) -> "BitSequence":
        return BitSequence(1 - self._bits)


def as_bits(x) -> BitSequence:
    """Coerce strings, lists and arrays to a BitSequence."""
    if isinstance(x, BitSequence):
        return x
    return BitSequence(x)


_WS = re.compile(rb"\s+")


def decode_bits(data: bytes, fmt: str = "raw", max_bits: int | None = None) -> BitSequence:
    """Decode a byte payload into bits.

    ``raw`` reads each byte most-significant bit first, ``ascii01`` accepts
    only '0', '1' and whitespace, ``hex`` accepts hex digits and whitespace
    (each digit yields four bits, MSB first).
    """
    if fmt == "raw":
        bits = np.unpackbits(np.frombuffer(data, dtype=np.uint8))
    elif fmt == "ascii01":
        body = _WS.sub(b"", data)
        if body.strip(b"01"):
            raise ValueError("ascii01 input may contain only '0', '1' and whitespace")
        bits = np.frombuffer(body, dtype=np.uint8) - ord("0")
    elif fmt == "hex":
        body = _WS.sub(b"", data).decode("ascii", errors="replace")
        try:
            raw = bytes.fromhex(body if len(body) % 2 == 0 else body + "0")
        except ValueError as exc:
            raise ValueError(f"invalid hex input: {exc}") from None
        bits = np.unpackbits(np.frombuffer(raw, dtype=np.uint8))
        if len(body) % 2:
            bits = bits[:-4]
    else:
        raise ValueError(f"unknown input format {fmt!r}; expected one of {FORMATS}")
    if max_bits is not None:
        if max_bits < 1:
            raise ValueError("max_bits must be positive")
        bits = bits[:max_bits]
    if bits.size == 0:
        raise ValueError("input decodes to zero bits")
    return BitSequence(bits)


def encode_bits(x: BitSequence, fmt: str = "raw") -> bytes:
    """Inverse of :func:`decode_bits`; raw output is zero-padded to a whole byte."""
    arr = as_bits(x).array
    if fmt == "raw":
        return np.packbits(arr).tobytes()
    if fmt == "ascii01":
        return (arr + ord("0")).tobytes() + b"\n"
    if fmt == "hex":
        return np.packbits(arr).tobytes().hex().encode("ascii") + b"\n"
    raise ValueError(f"unknown output format {fmt!r}; expected one of {FORMATS}")
