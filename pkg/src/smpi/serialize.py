"""Serialization of dynamic values into byte-buffer messages.

A serialization contract is anything with ``encode(value) -> bytes`` and
``decode(data) -> value`` where decode(encode(v)) reconstructs v.  The
built-in contracts cover length-prefixed sequences of fundamentals, UTF-8
strings, and pairs of other contracts; the wire forms are little-endian
with u64 prefixes.

Serialized transfer rides a single BYTE-typed message: the frame header
already carries the payload length, so no separate size message is needed.
The receive side probes, allocates, receives, and decodes; both steps are
documented as allocating.
"""

from __future__ import annotations

import struct
from typing import Any, Tuple

from .buffer import adapt
from .comm import ANY_SOURCE, ANY_TAG, Communicator, Status
from .datatype import FundamentalKind
from .errors import InvalidArgument

__all__ = [
    "SequenceCodec",
    "Utf8Codec",
    "PairCodec",
    "send_serialized",
    "recv_serialized",
]


class SequenceCodec:
    """Sequence of one fundamental kind: u64 count, then packed elements."""

    def __init__(self, kind: FundamentalKind):
        self.kind = kind

    def encode(self, values) -> bytes:
        values = list(values)
        fmt = f"<{len(values)}{self.kind.struct_format}"
        try:
            body = struct.pack(fmt, *values)
        except struct.error as exc:
            raise InvalidArgument(f"value not encodable as {self.kind.name}: {exc}")
        return len(values).to_bytes(8, "little") + body

    def decode(self, data: bytes) -> list:
        data = bytes(data)
        if len(data) < 8:
            raise InvalidArgument("sequence shorter than its count prefix")
        count = int.from_bytes(data[:8], "little")
        body = data[8:]
        if count * self.kind.size != len(body):
            raise InvalidArgument(
                f"sequence declares {count} elements but carries {len(body)} bytes"
            )
        return list(struct.unpack(f"<{count}{self.kind.struct_format}", body))


class Utf8Codec:
    """String as u64 byte length plus UTF-8 bytes."""

    def encode(self, text: str) -> bytes:
        if not isinstance(text, str):
            raise InvalidArgument(f"expected str, got {type(text).__name__}")
        body = text.encode("utf-8")
        return len(body).to_bytes(8, "little") + body

    def decode(self, data: bytes) -> str:
        data = bytes(data)
        if len(data) < 8:
            raise InvalidArgument("string shorter than its length prefix")
        length = int.from_bytes(data[:8], "little")
        body = data[8:]
        if length != len(body):
            raise InvalidArgument(
                f"string declares {length} bytes but carries {len(body)}"
            )
        try:
            return body.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise InvalidArgument(f"invalid UTF-8 payload: {exc}") from None


class PairCodec:
    """Pair of two contracts: u64 first-part length, first, then second."""

    def __init__(self, first, second):
        self.first = first
        self.second = second

    def encode(self, pair: Tuple[Any, Any]) -> bytes:
        try:
            a, b = pair
        except (TypeError, ValueError):
            raise InvalidArgument("pair codec needs a 2-tuple") from None
        head = self.first.encode(a)
        return len(head).to_bytes(8, "little") + head + self.second.encode(b)

    def decode(self, data: bytes) -> Tuple[Any, Any]:
        data = bytes(data)
        if len(data) < 8:
            raise InvalidArgument("pair shorter than its split prefix")
        split = int.from_bytes(data[:8], "little")
        if split > len(data) - 8:
            raise InvalidArgument(
                f"pair declares a {split}-byte first part in {len(data) - 8} bytes"
            )
        return (
            self.first.decode(data[8 : 8 + split]),
            self.second.decode(data[8 + split :]),
        )


def send_serialized(comm: Communicator, value, codec, dest: int, tag: int = 0) -> None:
    """Encode and ship one value as a single BYTE-typed message."""
    payload = codec.encode(value)
    comm.send(adapt(payload, kind=FundamentalKind.BYTE), dest, tag)


def recv_serialized(comm: Communicator, codec, source: int = ANY_SOURCE,
                    tag: int = ANY_TAG):
    """Probe, allocate, receive, decode; returns the reconstructed value."""
    storage, _status = comm.recv_probe(FundamentalKind.BYTE, source, tag)
    return codec.decode(bytes(storage))
