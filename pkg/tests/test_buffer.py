"""Buffer adapters: deduction, counting rules, windows, access modes."""

from __future__ import annotations

import array

import numpy as np
import pytest

from smpi.buffer import (
    adapt,
    adapt_counted,
    adapt_typed,
    borrow,
    irregular,
    single,
)
from smpi.datatype import FundamentalKind, commit
from smpi.errors import InvalidArgument, UsageError

from oracles import mixed_struct_tree

I32 = FundamentalKind.INT32
F64 = FundamentalKind.FLOAT64


class TestAdapt:
    def test_deduces_int32(self):
        buf = adapt(array.array("i", [1, 2, 3]))
        assert buf.count == 3
        assert buf.kind is I32

    def test_deduces_from_numpy(self):
        buf = adapt(np.zeros(5, dtype=np.float64))
        assert (buf.count, buf.kind) == (5, F64)
        buf = adapt(np.zeros(4, dtype=np.uint64))
        assert buf.kind is FundamentalKind.UINT64
        buf = adapt(np.ones(2, dtype=np.bool_))
        assert buf.kind is FundamentalKind.BOOL

    def test_empty_sequence(self):
        buf = adapt(array.array("i"))
        assert buf.count == 0

    def test_non_fundamental_rejected(self):
        with pytest.raises(InvalidArgument):
            adapt([1, 2, 3])
        with pytest.raises(InvalidArgument):
            adapt(np.zeros(2, dtype=[("a", np.int32), ("b", np.float64)]))

    def test_zero_copy(self):
        backing = bytearray(8)
        buf = adapt(backing, kind=FundamentalKind.UINT8)
        assert buf.obj is backing
        backing[3] = 0x7F
        assert buf.view[3] == 0x7F

    def test_bytes_is_readonly(self):
        buf = adapt(b"\x01\x02")
        assert buf.readonly
        with pytest.raises(InvalidArgument):
            buf.require_writable()

    def test_explicit_kind_override(self):
        buf = adapt(bytearray(4), kind=FundamentalKind.BYTE)
        assert buf.kind is FundamentalKind.BYTE
        assert buf.count == 4


class TestTypedAdapters:
    def test_count_from_capacity(self):
        ctype = commit(mixed_struct_tree())
        buf = adapt_typed(bytearray(64), ctype)
        assert buf.count == 2
        assert adapt_typed(bytearray(32), ctype).count == 1
        assert adapt_typed(bytearray(), ctype).count == 0

    def test_region_smaller_than_extent_rejected(self):
        ctype = commit(mixed_struct_tree())
        with pytest.raises(InvalidArgument):
            adapt_typed(bytearray(16), ctype)

    def test_slack_allowed_with_count(self):
        ctype = commit(mixed_struct_tree())
        assert adapt_counted(bytearray(96), ctype, 2).count == 2
        assert adapt_counted(bytearray(), ctype, 0).count == 0
        with pytest.raises(InvalidArgument):
            adapt_counted(bytearray(32), ctype, 2)

    def test_typed_overrides_fundamental_format(self):
        ctype = commit(mixed_struct_tree())
        buf = adapt_typed(np.zeros(16, dtype=np.int32), ctype)
        assert buf.kind is None
        assert buf.count == 2


class TestIrregular:
    def test_valid_windows(self):
        buf = irregular(array.array("i", range(10)), counts=[2, 3], displacements=[0, 5])
        assert buf.counts == (2, 3)
        assert buf.displacements == (0, 5)

    def test_overlapping_windows_allowed_at_construction(self):
        buf = irregular(array.array("i", range(10)), counts=[2, 3], displacements=[0, 1])
        assert not buf.windows_disjoint()

    def test_bounds_violation(self):
        with pytest.raises(InvalidArgument):
            irregular(array.array("i", range(10)), counts=[2, 3], displacements=[0, 9])

    def test_length_mismatch(self):
        with pytest.raises(InvalidArgument):
            irregular(array.array("i", range(10)), counts=[2], displacements=[0, 5])

    def test_window_views_alias_storage(self):
        data = array.array("i", range(10))
        buf = irregular(data, counts=[2, 3], displacements=[0, 5])
        buf.window(1)[0:4] = (123).to_bytes(4, "little")
        assert data[5] == 123


class TestSingle:
    def test_int_defaults_to_int64(self):
        buf = single(7)
        assert (buf.count, buf.kind, buf.value) == (1, FundamentalKind.INT64, 7)

    def test_explicit_kind(self):
        buf = single(7, I32)
        assert (buf.kind, buf.value) == (I32, 7)

    def test_float_and_bool(self):
        assert single(3.5).kind is F64
        assert single(3.5).value == 3.5
        assert single(True).kind is FundamentalKind.BOOL
        assert single(True).value is True


class TestOwnership:
    def test_claim_is_exclusive(self):
        buf = adapt(bytearray(4), kind=FundamentalKind.BYTE)
        buf.claim("req-a")
        with pytest.raises(UsageError):
            buf.claim("req-b")
        buf.release("req-a")
        buf.claim("req-b")

    def test_borrowed_cannot_transfer(self):
        buf = borrow(bytearray(4), kind=FundamentalKind.BYTE)
        with pytest.raises(UsageError):
            buf.claim("req")
