"""Bit-exact wire format shared by both backends.

Every message travels as one frame: a fixed 44-byte little-endian header
followed by the payload.

    magic "SMPI" | version u16 | kind u8 | flags u8 | context_id u64 |
    source u32 | dest u32 | tag i32 | signature_hash u64 | payload_len u64

Frame kinds: 0 = user data, 1 = collective-internal, 2 = abort (payload is a
4-byte little-endian exit code).  Flag bit 0 marks a present type signature;
``signature_hash`` is zero when unset.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

from ..errors import InvalidArgument

__all__ = [
    "MAGIC",
    "WIRE_VERSION",
    "HEADER_LEN",
    "KIND_DATA",
    "KIND_COLLECTIVE",
    "KIND_ABORT",
    "FLAG_SIGNATURE",
    "DEFAULT_PAYLOAD_CAP",
    "Envelope",
    "encode_header",
    "encode_frame",
    "decode_header",
]

MAGIC = b"SMPI"
WIRE_VERSION = 1

KIND_DATA = 0
KIND_COLLECTIVE = 1
KIND_ABORT = 2

FLAG_SIGNATURE = 0x01

DEFAULT_PAYLOAD_CAP = 1 << 30  # 1 GiB

_HEADER = struct.Struct("<4sHBBQIIiQQ")
HEADER_LEN = _HEADER.size
assert HEADER_LEN == 44


@dataclass(frozen=True)
class Envelope:
    """Frame header minus the transport framing itself."""

    kind: int
    flags: int
    context_id: int
    source: int
    dest: int
    tag: int
    signature_hash: int
    payload_len: int

    @property
    def has_signature(self) -> bool:
        return bool(self.flags & FLAG_SIGNATURE)


def encode_header(env: Envelope) -> bytes:
    return _HEADER.pack(
        MAGIC,
        WIRE_VERSION,
        env.kind,
        env.flags,
        env.context_id,
        env.source,
        env.dest,
        env.tag,
        env.signature_hash,
        env.payload_len,
    )


def encode_frame(env: Envelope, payload: bytes) -> bytes:
    if len(payload) != env.payload_len:
        raise InvalidArgument(
            f"payload of {len(payload)} bytes does not match "
            f"declared length {env.payload_len}"
        )
    return encode_header(env) + payload


def decode_header(data: bytes, payload_cap: int = DEFAULT_PAYLOAD_CAP) -> Envelope:
    if len(data) != HEADER_LEN:
        raise InvalidArgument(f"header must be {HEADER_LEN} bytes, got {len(data)}")
    magic, version, kind, flags, ctx, source, dest, tag, sig, plen = _HEADER.unpack(data)
    if magic != MAGIC:
        raise InvalidArgument(f"bad frame magic {magic!r}")
    if version != WIRE_VERSION:
        raise InvalidArgument(f"unsupported wire version {version}")
    if plen > payload_cap:
        raise InvalidArgument(f"payload length {plen} exceeds cap {payload_cap}")
    return Envelope(kind, flags, ctx, source, dest, tag, sig, plen)
