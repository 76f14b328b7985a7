"""Data buffers: contiguous, sized, typed views over user memory.

Adapters never copy or touch element data; they capture (base, byte
capacity, element count, type) and the access mode the underlying storage
permits.  Anything exposing the buffer protocol with a fundamental element
format adapts directly: ``bytes``, ``bytearray``, ``array.array``,
``memoryview``, numpy arrays.

Send paths need readable storage (always true); receive paths demand
writable storage and exclusive access, so a read-only object can never back
a receive.  Nonblocking operations additionally take custody of the buffer
until the request completes; a buffer currently owned by a request refuses
any other use.
"""

from __future__ import annotations

import struct as _struct
import sys
from typing import Optional, Sequence

from .datatype import (
    CommittedDatatype,
    FundamentalKind,
    committed_fundamental,
    pack,
    unpack,
)
from .errors import InvalidArgument, UsageError

__all__ = [
    "DataBuffer",
    "IrregularBuffer",
    "ScalarBuffer",
    "adapt",
    "adapt_typed",
    "adapt_counted",
    "irregular",
    "single",
    "borrow",
]

_BY_CLASS_AND_SIZE = {
    ("int", 1): FundamentalKind.INT8,
    ("int", 2): FundamentalKind.INT16,
    ("int", 4): FundamentalKind.INT32,
    ("int", 8): FundamentalKind.INT64,
    ("uint", 1): FundamentalKind.UINT8,
    ("uint", 2): FundamentalKind.UINT16,
    ("uint", 4): FundamentalKind.UINT32,
    ("uint", 8): FundamentalKind.UINT64,
    ("float", 4): FundamentalKind.FLOAT32,
    ("float", 8): FundamentalKind.FLOAT64,
}

_INT_CODES = set("bhilqn")
_UINT_CODES = set("BHILQN")
_FLOAT_CODES = set("fd")


def _kind_from_format(fmt: str, itemsize: int) -> FundamentalKind:
    code = fmt
    if code[:1] in ("@", "=", "<"):
        if code[0] == "<" and sys.byteorder != "little":
            raise InvalidArgument(f"non-native byte order in format {fmt!r}")
        code = code[1:]
    elif code[:1] in (">", "!"):
        raise InvalidArgument(f"non-native byte order in format {fmt!r}")
    if code == "?":
        return FundamentalKind.BOOL
    if code == "c":
        return FundamentalKind.BYTE
    if code in _INT_CODES:
        cls = "int"
    elif code in _UINT_CODES:
        cls = "uint"
    elif code in _FLOAT_CODES:
        cls = "float"
    else:
        raise InvalidArgument(
            f"element format {fmt!r} has no fundamental mapping; "
            "pass a committed datatype instead"
        )
    try:
        return _BY_CLASS_AND_SIZE[(cls, itemsize)]
    except KeyError:
        raise InvalidArgument(f"unsupported element width {itemsize} for {fmt!r}") from None


def _contiguous_view(obj) -> memoryview:
    try:
        view = memoryview(obj)
    except TypeError:
        raise InvalidArgument(
            f"{type(obj).__name__} does not expose contiguous memory; "
            "use a bytes-like or array container"
        ) from None
    if not view.c_contiguous:
        raise InvalidArgument("buffer storage must be contiguous")
    return view


class DataBuffer:
    """Metadata view: base storage + element count + committed type.

    ``kind`` is set when the element type is a fundamental; ``ctype`` is
    always a committed datatype (fundamentals use a shared committed form).
    """

    __slots__ = ("obj", "view", "kind", "ctype", "count", "borrowed", "_request_owner")

    def __init__(self, obj, view: memoryview, kind: Optional[FundamentalKind],
                 ctype: CommittedDatatype, count: int, borrowed: bool = False):
        self.obj = obj
        self.view = view
        self.kind = kind
        self.ctype = ctype
        self.count = count
        self.borrowed = borrowed
        self._request_owner = None

    @property
    def readonly(self) -> bool:
        return self.view.readonly

    @property
    def byte_capacity(self) -> int:
        return self.view.nbytes

    @property
    def element_size(self) -> int:
        return self.ctype.size

    @property
    def element_extent(self) -> int:
        return self.ctype.extent

    @property
    def type_signature(self) -> int:
        return self.ctype.signature

    def require_writable(self) -> None:
        if self.view.readonly:
            raise InvalidArgument("receive buffer is backed by read-only storage")

    def claim(self, owner) -> None:
        """Transfer custody to an in-flight request."""
        if self._request_owner is not None:
            raise UsageError("buffer is owned by an active request")
        if self.borrowed:
            raise UsageError(
                "nonblocking operations take buffer ownership; "
                "a borrowed buffer cannot be transferred"
            )
        self._request_owner = owner

    def release(self, owner) -> None:
        if self._request_owner is owner:
            self._request_owner = None

    def require_unclaimed(self) -> None:
        if self._request_owner is not None:
            raise UsageError("buffer is owned by an active request")

    def pack_elements(self, count: Optional[int] = None) -> bytes:
        n = self.count if count is None else count
        return pack(self.view, self.ctype, n)

    def unpack_payload(self, payload: bytes, count: int) -> None:
        unpack(payload, self.ctype, count, self.view)

    def __repr__(self):
        ty = self.kind.name if self.kind else f"sig={self.ctype.signature:#x}"
        return f"<DataBuffer count={self.count} type={ty} bytes={self.byte_capacity}>"


class IrregularBuffer(DataBuffer):
    """Buffer with per-rank element counts and displacements.

    Displacements are measured in units of the element extent.  Window
    bounds are validated here; disjointness is only demanded when the buffer
    receives, which the collective itself checks.
    """

    __slots__ = ("counts", "displacements")

    def __init__(self, base: DataBuffer, counts: Sequence[int],
                 displacements: Sequence[int]):
        super().__init__(base.obj, base.view, base.kind, base.ctype, base.count,
                         base.borrowed)
        counts = tuple(int(c) for c in counts)
        displacements = tuple(int(d) for d in displacements)
        if len(counts) != len(displacements):
            raise InvalidArgument(
                f"{len(counts)} counts but {len(displacements)} displacements"
            )
        for i, (c, d) in enumerate(zip(counts, displacements)):
            if c < 0 or d < 0:
                raise InvalidArgument(f"negative count/displacement for rank {i}")
            if d + c > self.count:
                raise InvalidArgument(
                    f"window for rank {i} ([{d}, {d + c})) exceeds "
                    f"buffer of {self.count} elements"
                )
        self.counts = counts
        self.displacements = displacements

    def window(self, index: int) -> memoryview:
        """Byte view of the window assigned to ``index``."""
        start = self.displacements[index] * self.element_extent
        stop = start + self.counts[index] * self.element_extent
        return self.view[start:stop]

    def windows_disjoint(self) -> bool:
        spans = sorted(
            (d, d + c) for d, c in zip(self.displacements, self.counts) if c > 0
        )
        return all(b[0] >= a[1] for a, b in zip(spans, spans[1:]))


class ScalarBuffer(DataBuffer):
    """Count-1 buffer wrapping a single value in owned backing storage."""

    __slots__ = ()

    @property
    def value(self):
        if self.kind is None:
            return bytes(self.view)
        return _struct.unpack("<" + self.kind.struct_format, bytes(self.view))[0]


def adapt(obj, kind: Optional[FundamentalKind] = None) -> DataBuffer:
    """Adapt a contiguous container of fundamental values.

    The element kind is deduced from the container's element format unless
    overridden; an explicit ``kind`` must match the element width.
    """
    if isinstance(obj, DataBuffer):
        return obj
    view = _contiguous_view(obj)
    flat = view.cast("B") if view.format != "B" or view.ndim != 1 else view
    if kind is None:
        kind = _kind_from_format(view.format, view.itemsize)
    if flat.nbytes % kind.size:
        raise InvalidArgument(
            f"{flat.nbytes} bytes is not a whole number of {kind.name} elements"
        )
    return DataBuffer(obj, flat, kind, committed_fundamental(kind),
                      flat.nbytes // kind.size)


def adapt_typed(obj, ctype: CommittedDatatype) -> DataBuffer:
    """Adapt a byte region as elements of a committed type.

    The count is the number of whole extents that fit; a non-empty region
    smaller than one extent is rejected.
    """
    view = _contiguous_view(obj).cast("B")
    if view.nbytes and view.nbytes < ctype.extent:
        raise InvalidArgument(
            f"region of {view.nbytes} bytes cannot hold one element "
            f"of extent {ctype.extent}"
        )
    return DataBuffer(obj, view, None, ctype, view.nbytes // ctype.extent)


def adapt_counted(obj, ctype: CommittedDatatype, count: int) -> DataBuffer:
    """Adapt a byte region as exactly ``count`` elements (slack allowed)."""
    if count < 0:
        raise InvalidArgument(f"negative element count {count}")
    view = _contiguous_view(obj).cast("B")
    if view.nbytes < count * ctype.extent:
        raise InvalidArgument(
            f"region of {view.nbytes} bytes cannot hold {count} elements "
            f"of extent {ctype.extent}"
        )
    return DataBuffer(obj, view, None, ctype, count)


def irregular(obj, counts: Sequence[int], displacements: Sequence[int],
              ctype: Optional[CommittedDatatype] = None) -> IrregularBuffer:
    """Adapt a container plus per-rank windows for varying-count collectives."""
    base = adapt_typed(obj, ctype) if ctype is not None else adapt(obj)
    return IrregularBuffer(base, counts, displacements)


def single(value, kind: Optional[FundamentalKind] = None) -> ScalarBuffer:
    """Wrap one fundamental value in a count-1 buffer.

    Kind defaults by value type: bool -> BOOL, int -> INT64, float ->
    FLOAT64.  The backing storage is owned by the adapter; read the result
    of an in-place collective back through ``.value``.
    """
    if kind is None:
        if isinstance(value, bool):
            kind = FundamentalKind.BOOL
        elif isinstance(value, int):
            kind = FundamentalKind.INT64
        elif isinstance(value, float):
            kind = FundamentalKind.FLOAT64
        else:
            raise InvalidArgument(
                f"cannot infer a fundamental kind for {type(value).__name__}"
            )
    backing = bytearray(kind.size)
    _struct.pack_into("<" + kind.struct_format, backing, 0, value)
    view = memoryview(backing)
    return ScalarBuffer(backing, view, kind, committed_fundamental(kind), 1)


def borrow(obj, kind: Optional[FundamentalKind] = None) -> DataBuffer:
    """Adapt with an explicit no-ownership-transfer marker.

    Borrowed buffers work with blocking calls only; handing one to a
    nonblocking operation is rejected before any communication happens.
    """
    base = adapt(obj, kind)
    return DataBuffer(base.obj, base.view, base.kind, base.ctype, base.count,
                      borrowed=True)
