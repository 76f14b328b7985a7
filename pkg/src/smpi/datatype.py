"""Datatype trees, the commit type-state, layout flattening, and pack/unpack.

A datatype describes how the elements of a message are laid out in memory.
Trees are built from four node shapes (fundamental, contiguous, vector,
struct) and stay inert until :func:`commit` freezes them into a
:class:`CommittedDatatype` carrying the derived packed size, memory extent,
flattened segment list, and a 64-bit signature.  Only committed types are
accepted by communication calls.

``commit`` consumes its argument: the uncommitted tree is marked used and
rejects any further construction or commit, which turns the commit
requirement into a state the type system tracks instead of a runtime
convention the user must remember.

Two byte counts matter throughout: *size* is the number of payload bytes one
element contributes to a packed message, *extent* is the span one element
occupies in memory including any gaps.  ``size <= extent`` always.
"""

from __future__ import annotations

import struct as _struct
from dataclasses import dataclass, field
from enum import Enum
from functools import lru_cache
from typing import Iterable, Sequence, Union

from .errors import InvalidArgument, UsageError

__all__ = [
    "FundamentalKind",
    "Fundamental",
    "Contiguous",
    "Vector",
    "StructType",
    "DatatypeTree",
    "LayoutDescriptor",
    "CommittedDatatype",
    "fundamental",
    "contiguous",
    "vector",
    "struct_type",
    "for_layout",
    "commit",
    "committed_fundamental",
    "flatten",
    "size_of",
    "extent_of",
    "canonical_encoding",
    "signature",
    "fundamental_signature",
    "fnv1a64",
    "pack",
    "unpack",
]

FNV_OFFSET_BASIS = 0xCBF29CE484222325
FNV_PRIME = 0x100000001B3
_U64_MASK = (1 << 64) - 1


def fnv1a64(data: bytes, h: int = FNV_OFFSET_BASIS) -> int:
    """64-bit FNV-1a over ``data``, optionally continuing from ``h``."""
    for byte in data:
        h ^= byte
        h = (h * FNV_PRIME) & _U64_MASK
    return h


class FundamentalKind(Enum):
    """Fixed-width value types with a direct host representation.

    Each kind carries a stable wire code and its size in bytes; the code is
    what enters the canonical type encoding, so it must never be renumbered.
    """

    INT8 = (1, 1, "b")
    UINT8 = (2, 1, "B")
    INT16 = (3, 2, "h")
    UINT16 = (4, 2, "H")
    INT32 = (5, 4, "i")
    UINT32 = (6, 4, "I")
    INT64 = (7, 8, "q")
    UINT64 = (8, 8, "Q")
    FLOAT32 = (9, 4, "f")
    FLOAT64 = (10, 8, "d")
    BOOL = (11, 1, "?")
    BYTE = (12, 1, "B")

    def __init__(self, code: int, size: int, struct_format: str):
        self.code = code
        self.size = size
        self.struct_format = struct_format

    @property
    def is_integer(self) -> bool:
        return self.code <= 8

    @property
    def is_float(self) -> bool:
        return self in (FundamentalKind.FLOAT32, FundamentalKind.FLOAT64)


# Host representation must match the declared sizes exactly.
for _kind in FundamentalKind:
    assert _struct.calcsize("<" + _kind.struct_format) == _kind.size


@dataclass(eq=True)
class Fundamental:
    kind: FundamentalKind
    _consumed: bool = field(default=False, compare=False, repr=False)


@dataclass(eq=True)
class Contiguous:
    count: int
    inner: "DatatypeTree"
    _consumed: bool = field(default=False, compare=False, repr=False)


@dataclass(eq=True)
class Vector:
    count: int
    blocklength: int
    stride: int
    inner: "DatatypeTree"
    _consumed: bool = field(default=False, compare=False, repr=False)


@dataclass(eq=True)
class StructType:
    fields: tuple
    extent: int
    _consumed: bool = field(default=False, compare=False, repr=False)


DatatypeTree = Union[Fundamental, Contiguous, Vector, StructType]


@dataclass
class LayoutDescriptor:
    """Explicit layout of a trivially copyable composite.

    ``fields`` is an ordered sequence of ``(byte offset, item)`` pairs where
    each item is a :class:`FundamentalKind` or a nested descriptor;
    ``extent`` is the total in-memory span including trailing padding.
    """

    fields: Sequence[tuple]
    extent: int


def _require_fresh(tree: DatatypeTree) -> None:
    if tree._consumed:
        raise UsageError("datatype tree already consumed by commit")


def size_of(tree: DatatypeTree) -> int:
    """Packed bytes contributed by one element of ``tree``."""
    if isinstance(tree, Fundamental):
        return tree.kind.size
    if isinstance(tree, Contiguous):
        return tree.count * size_of(tree.inner)
    if isinstance(tree, Vector):
        return tree.count * tree.blocklength * size_of(tree.inner)
    if isinstance(tree, StructType):
        return sum(size_of(inner) for _, inner in tree.fields)
    raise InvalidArgument(f"not a datatype tree: {tree!r}")


def extent_of(tree: DatatypeTree) -> int:
    """Memory span of one element of ``tree``, gaps included."""
    if isinstance(tree, Fundamental):
        return tree.kind.size
    if isinstance(tree, Contiguous):
        return tree.count * extent_of(tree.inner)
    if isinstance(tree, Vector):
        return ((tree.count - 1) * tree.stride + tree.blocklength) * extent_of(tree.inner)
    if isinstance(tree, StructType):
        return tree.extent
    raise InvalidArgument(f"not a datatype tree: {tree!r}")


def fundamental(kind: FundamentalKind) -> Fundamental:
    """Leaf node for a fixed-width value type."""
    if not isinstance(kind, FundamentalKind):
        raise InvalidArgument(f"not a fundamental kind: {kind!r}")
    return Fundamental(kind)


def contiguous(count: int, inner: DatatypeTree) -> Contiguous:
    """``count`` back-to-back copies of ``inner``."""
    _require_fresh(inner)
    if count < 1:
        raise InvalidArgument(f"contiguous count must be >= 1, got {count}")
    return Contiguous(count, inner)


def vector(count: int, blocklength: int, stride: int, inner: DatatypeTree) -> Vector:
    """``count`` blocks of ``blocklength`` elements, block starts ``stride``
    elements apart (both measured in units of the inner extent).

    Overlapping blocks (stride < blocklength) are rejected so that packing
    stays a bijection on the covered bytes.
    """
    _require_fresh(inner)
    if count < 1:
        raise InvalidArgument(f"vector count must be >= 1, got {count}")
    if blocklength < 1:
        raise InvalidArgument(f"vector blocklength must be >= 1, got {blocklength}")
    if stride < blocklength:
        raise InvalidArgument(
            f"vector stride {stride} overlaps blocks of length {blocklength}"
        )
    return Vector(count, blocklength, stride, inner)


def struct_type(fields: Iterable[tuple], extent: int) -> StructType:
    """Heterogeneous record: ordered ``(byte offset, inner tree)`` fields
    inside a declared extent.

    Field spans (offset to offset + inner extent) must fit in the extent and
    must not overlap each other.
    """
    normalized = tuple((int(offset), inner) for offset, inner in fields)
    if not normalized:
        raise InvalidArgument("struct must have at least one field")
    spans = []
    for offset, inner in normalized:
        _require_fresh(inner)
        if offset < 0:
            raise InvalidArgument(f"negative field offset {offset}")
        span_end = offset + extent_of(inner)
        if span_end > extent:
            raise InvalidArgument(
                f"field at offset {offset} ends at {span_end}, beyond extent {extent}"
            )
        spans.append((offset, span_end))
    spans.sort()
    for (_, prev_end), (next_start, _) in zip(spans, spans[1:]):
        if next_start < prev_end:
            raise InvalidArgument(
                f"struct fields overlap at byte {next_start}"
            )
    return StructType(normalized, int(extent))


def for_layout(descriptor: LayoutDescriptor) -> StructType:
    """Build the struct tree equivalent to an explicit layout descriptor."""
    if not descriptor.fields:
        raise InvalidArgument("empty layout descriptor")

    def as_tree(item):
        if isinstance(item, FundamentalKind):
            return Fundamental(item)
        if isinstance(item, LayoutDescriptor):
            return for_layout(item)
        raise InvalidArgument(f"layout field must be a kind or descriptor: {item!r}")

    return struct_type(
        [(offset, as_tree(item)) for offset, item in descriptor.fields],
        descriptor.extent,
    )


def _leaf_runs(tree: DatatypeTree) -> list:
    """All ``(offset, length, kind code)`` leaf intervals of one element."""
    if isinstance(tree, Fundamental):
        return [(0, tree.kind.size, tree.kind.code)]
    if isinstance(tree, Contiguous):
        inner_runs = _leaf_runs(tree.inner)
        step = extent_of(tree.inner)
        return [
            (i * step + off, length, code)
            for i in range(tree.count)
            for off, length, code in inner_runs
        ]
    if isinstance(tree, Vector):
        inner_runs = _leaf_runs(tree.inner)
        step = extent_of(tree.inner)
        return [
            ((i * tree.stride + j) * step + off, length, code)
            for i in range(tree.count)
            for j in range(tree.blocklength)
            for off, length, code in inner_runs
        ]
    if isinstance(tree, StructType):
        return [
            (field_offset + off, length, code)
            for field_offset, inner in tree.fields
            for off, length, code in _leaf_runs(inner)
        ]
    raise InvalidArgument(f"not a datatype tree: {tree!r}")


def flatten(tree: DatatypeTree) -> list:
    """Canonical segment list ``[(offset, length), ...]`` of one element.

    Segments are sorted, pairwise disjoint, and maximal: byte-adjacent runs
    merge exactly when they hold the same fundamental kind, so the output is
    a canonical form both ends of a connection can agree on.
    """
    runs = sorted(_leaf_runs(tree))
    merged: list = []
    prev_off = prev_len = prev_code = None
    for off, length, code in runs:
        if prev_off is not None and off < prev_off + prev_len:
            raise InvalidArgument(f"overlapping layout at byte {off}")
        if prev_off is not None and off == prev_off + prev_len and code == prev_code:
            prev_len += length
        else:
            if prev_off is not None:
                merged.append((prev_off, prev_len))
            prev_off, prev_len, prev_code = off, length, code
    if prev_off is not None:
        merged.append((prev_off, prev_len))
    return merged


def canonical_encoding(tree: DatatypeTree) -> bytes:
    """Deterministic byte encoding of the tree structure.

    This is the externally visible form: it feeds signature hashing and any
    cross-rank type exchange, so it is fixed bit-exactly.
    """
    out = bytearray()
    _encode_into(tree, out)
    return bytes(out)


def _encode_into(tree: DatatypeTree, out: bytearray) -> None:
    if isinstance(tree, Fundamental):
        out.append(0x01)
        out.append(tree.kind.code)
        out += tree.kind.size.to_bytes(4, "little")
    elif isinstance(tree, Contiguous):
        out.append(0x02)
        out += tree.count.to_bytes(8, "little")
        _encode_into(tree.inner, out)
    elif isinstance(tree, Vector):
        out.append(0x03)
        out += tree.count.to_bytes(8, "little")
        out += tree.blocklength.to_bytes(8, "little")
        out += tree.stride.to_bytes(8, "little", signed=True)
        _encode_into(tree.inner, out)
    elif isinstance(tree, StructType):
        out.append(0x04)
        out += len(tree.fields).to_bytes(4, "little")
        for offset, inner in tree.fields:
            out += offset.to_bytes(8, "little")
            _encode_into(inner, out)
        out += tree.extent.to_bytes(8, "little")
    else:
        raise InvalidArgument(f"not a datatype tree: {tree!r}")


def signature(tree: DatatypeTree) -> int:
    """64-bit FNV-1a hash of the canonical encoding."""
    return fnv1a64(canonical_encoding(tree))


@lru_cache(maxsize=None)
def fundamental_signature(kind: FundamentalKind) -> int:
    """Signature of a bare fundamental element type."""
    return signature(Fundamental(kind))


class CommittedDatatype:
    """Frozen datatype: layout facts derived once, immutable afterwards.

    Attributes
    ----------
    size : packed bytes per element
    extent : memory span per element
    segments : canonical ``(offset, length)`` list covering one element
    signature : 64-bit hash of the canonical encoding
    encoding : the canonical encoding itself
    """

    __slots__ = ("tree", "size", "extent", "segments", "signature", "encoding")

    def __init__(self, tree: DatatypeTree):
        object.__setattr__(self, "tree", tree)
        object.__setattr__(self, "size", size_of(tree))
        object.__setattr__(self, "extent", extent_of(tree))
        object.__setattr__(self, "segments", tuple(flatten(tree)))
        object.__setattr__(self, "encoding", canonical_encoding(tree))
        object.__setattr__(self, "signature", fnv1a64(self.encoding))

    def __setattr__(self, name, value):
        raise AttributeError("committed datatypes are immutable")

    def __eq__(self, other):
        if not isinstance(other, CommittedDatatype):
            return NotImplemented
        return self.encoding == other.encoding

    def __hash__(self):
        return hash(self.encoding)

    def __repr__(self):
        return (
            f"CommittedDatatype(size={self.size}, extent={self.extent}, "
            f"segments={list(self.segments)}, signature={self.signature:#018x})"
        )


def commit(tree: DatatypeTree) -> CommittedDatatype:
    """Freeze a tree for use in communication, consuming the argument.

    The input tree is unusable afterwards: committing it again or embedding
    it in another constructor raises :class:`UsageError`.
    """
    _require_fresh(tree)
    committed = CommittedDatatype(tree)
    tree._consumed = True
    return committed


@lru_cache(maxsize=None)
def committed_fundamental(kind: FundamentalKind) -> CommittedDatatype:
    """Shared committed form of a bare fundamental kind."""
    return CommittedDatatype(Fundamental(kind))


def _flat_view(source) -> memoryview:
    view = memoryview(source)
    if not view.contiguous:
        raise InvalidArgument("buffer must be contiguous")
    return view.cast("B")


def pack(source, ctype: CommittedDatatype, count: int) -> bytes:
    """Gather ``count`` elements laid out per ``ctype`` into packed bytes.

    Element ``i`` is read at byte offset ``i * extent``; the output holds
    ``count * size`` bytes in segment order.
    """
    if count < 0:
        raise InvalidArgument(f"negative element count {count}")
    view = _flat_view(source)
    needed = count * ctype.extent
    if view.nbytes < needed:
        raise InvalidArgument(
            f"pack source holds {view.nbytes} bytes, needs {needed}"
        )
    if count == 0:
        return b""
    if ctype.segments == ((0, ctype.extent),):
        return bytes(view[: count * ctype.size])
    out = bytearray(count * ctype.size)
    pos = 0
    for i in range(count):
        base = i * ctype.extent
        for off, length in ctype.segments:
            out[pos : pos + length] = view[base + off : base + off + length]
            pos += length
    return bytes(out)


def unpack(packed, ctype: CommittedDatatype, count: int, destination) -> None:
    """Scatter packed bytes back into ``count`` laid-out elements.

    Exact inverse of :func:`pack` on segment-covered bytes; gap bytes in the
    destination are left untouched.  The packed length must be exactly
    ``count * size``.
    """
    if count < 0:
        raise InvalidArgument(f"negative element count {count}")
    data = memoryview(packed).cast("B")
    if data.nbytes != count * ctype.size:
        raise InvalidArgument(
            f"packed length {data.nbytes} does not match "
            f"{count} elements of size {ctype.size}"
        )
    view = _flat_view(destination)
    if view.readonly:
        raise InvalidArgument("unpack destination is read-only")
    needed = count * ctype.extent
    if view.nbytes < needed:
        raise InvalidArgument(
            f"unpack destination holds {view.nbytes} bytes, needs {needed}"
        )
    if count == 0:
        return
    if ctype.segments == ((0, ctype.extent),):
        view[: count * ctype.size] = data
        return
    pos = 0
    for i in range(count):
        base = i * ctype.extent
        for off, length in ctype.segments:
            view[base + off : base + off + length] = data[pos : pos + length]
            pos += length
