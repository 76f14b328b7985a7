"""Datatype trees: construction, commit, flattening, signatures, pack/unpack."""

from __future__ import annotations

import random
import struct

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from smpi.datatype import (
    CommittedDatatype,
    FundamentalKind,
    LayoutDescriptor,
    canonical_encoding,
    commit,
    contiguous,
    extent_of,
    flatten,
    fnv1a64,
    for_layout,
    fundamental,
    pack,
    signature,
    size_of,
    struct_type,
    unpack,
    vector,
)
from smpi.errors import InvalidArgument, UsageError

from oracles import fnv1a64_ref, mixed_struct_tree, oracle_layout, random_tree

I32 = FundamentalKind.INT32
F64 = FundamentalKind.FLOAT64
U8 = FundamentalKind.UINT8


class TestConstructors:
    def test_fundamental_sizes(self):
        assert size_of(fundamental(I32)) == 4
        assert size_of(fundamental(F64)) == 8
        assert size_of(fundamental(FundamentalKind.BYTE)) == 1

    def test_kind_codes_unique(self):
        codes = [k.code for k in FundamentalKind]
        assert codes == list(range(1, 13))
        assert [k.size for k in FundamentalKind] == [1, 1, 2, 2, 4, 4, 8, 8, 4, 8, 1, 1]

    def test_contiguous(self):
        t = contiguous(3, fundamental(I32))
        assert (size_of(t), extent_of(t)) == (12, 12)
        one = contiguous(1, fundamental(F64))
        assert (size_of(one), extent_of(one)) == (8, 8)

    def test_contiguous_of_struct(self):
        t = contiguous(2, mixed_struct_tree())
        assert (size_of(t), extent_of(t)) == (50, 64)

    def test_contiguous_zero_rejected(self):
        with pytest.raises(InvalidArgument):
            contiguous(0, fundamental(I32))

    def test_vector(self):
        t = vector(2, 1, 2, fundamental(I32))
        assert (size_of(t), extent_of(t)) == (8, 12)
        t = vector(1, 1, 1, fundamental(F64))
        assert (size_of(t), extent_of(t)) == (8, 8)
        t = vector(3, 2, 3, fundamental(U8))
        assert (size_of(t), extent_of(t)) == (6, 8)

    def test_vector_overlap_rejected(self):
        with pytest.raises(InvalidArgument):
            vector(2, 3, 2, fundamental(I32))

    def test_struct(self):
        t = mixed_struct_tree()
        assert (size_of(t), extent_of(t)) == (25, 32)
        single = struct_type([(0, fundamental(I32))], extent=4)
        assert (size_of(single), extent_of(single)) == (4, 4)

    def test_struct_overlap_rejected(self):
        with pytest.raises(InvalidArgument):
            struct_type([(0, fundamental(I32)), (2, fundamental(I32))], extent=8)

    def test_struct_field_outside_extent_rejected(self):
        with pytest.raises(InvalidArgument):
            struct_type([(4, fundamental(F64))], extent=8)

    def test_struct_empty_rejected(self):
        with pytest.raises(InvalidArgument):
            struct_type([], extent=0)


class TestLayoutDescriptor:
    def test_mixed_struct_equivalence(self):
        desc = LayoutDescriptor(
            fields=[
                (0, I32),
                (4, LayoutDescriptor(fields=[(0, I32), (4, I32), (8, I32)], extent=12)),
                (16, F64),
                (24, FundamentalKind.INT8),
            ],
            extent=32,
        )
        via_desc = CommittedDatatype(for_layout(desc))
        via_tree = CommittedDatatype(mixed_struct_tree())
        assert via_desc.size == via_tree.size == 25
        assert via_desc.extent == via_tree.extent == 32
        assert via_desc.segments == via_tree.segments

    def test_empty_descriptor_rejected(self):
        with pytest.raises(InvalidArgument):
            for_layout(LayoutDescriptor(fields=[], extent=0))

    def test_single_byte_descriptor(self):
        t = for_layout(LayoutDescriptor(fields=[(0, FundamentalKind.BYTE)], extent=1))
        assert (size_of(t), extent_of(t)) == (1, 1)


class TestCommit:
    def test_mixed_struct_commit(self):
        c = commit(mixed_struct_tree())
        assert c.size == 25
        assert c.extent == 32
        assert c.segments == ((0, 16), (16, 8), (24, 1))

    def test_fundamental_commit(self):
        c = commit(fundamental(I32))
        assert (c.size, c.extent, c.segments) == (4, 4, ((0, 4),))

    def test_vector_commit_segments(self):
        c = commit(vector(2, 1, 2, fundamental(I32)))
        assert c.segments == ((0, 4), (8, 4))

    def test_commit_consumes_tree(self):
        t = fundamental(I32)
        commit(t)
        with pytest.raises(UsageError):
            commit(t)
        with pytest.raises(UsageError):
            contiguous(2, t)

    def test_commit_deterministic_for_equal_trees(self):
        a = commit(vector(4, 2, 3, fundamental(F64)))
        b = commit(vector(4, 2, 3, fundamental(F64)))
        assert (a.size, a.extent, a.segments, a.signature) == (
            b.size,
            b.extent,
            b.segments,
            b.signature,
        )
        assert a == b

    def test_committed_immutable(self):
        c = commit(fundamental(I32))
        with pytest.raises(AttributeError):
            c.size = 99


class TestFlatten:
    def test_trivial_cases(self):
        assert flatten(fundamental(F64)) == [(0, 8)]
        assert flatten(contiguous(3, fundamental(I32))) == [(0, 12)]
        assert flatten(mixed_struct_tree()) == [(0, 16), (16, 8), (24, 1)]
        assert flatten(vector(3, 2, 3, fundamental(U8))) == [(0, 2), (3, 2), (6, 2)]

    def test_segments_cover_size_within_extent(self):
        rng = random.Random(2024)
        for _ in range(200):
            t = random_tree(rng)
            segs = flatten(t)
            assert sum(length for _, length in segs) == size_of(t)
            assert all(b[0] >= a[0] + a[1] for a, b in zip(segs, segs[1:]))
            assert max(off + length for off, length in segs) <= extent_of(t)

    def test_single_segment_iff_full_cover_for_uniform_kind(self):
        # full-extent coverage of one kind collapses to a single segment
        t = contiguous(4, contiguous(2, fundamental(I32)))
        assert flatten(t) == [(0, 32)]
        assert size_of(t) == extent_of(t)
        # a gap forces size < extent and more than one segment
        gappy = vector(2, 1, 2, fundamental(I32))
        assert size_of(gappy) < extent_of(gappy)
        assert len(flatten(gappy)) > 1

    def test_matches_oracle(self):
        rng = random.Random(99)
        for _ in range(300):
            t = random_tree(rng)
            size, extent, segments = oracle_layout(t)
            c = CommittedDatatype(t)
            assert (c.size, c.extent, list(c.segments)) == (size, extent, segments)


class TestSignature:
    def test_fnv_reference_vectors(self):
        assert fnv1a64(b"") == 0xCBF29CE484222325
        assert fnv1a64(b"a") == 0xAF63DC4C8601EC8C
        assert fnv1a64(b"foobar") == 0x85944171F73967E8

    def test_fnv_matches_reference_on_random_bytes(self):
        rng = random.Random(5)
        for _ in range(100):
            blob = rng.randbytes(rng.randint(0, 64))
            assert fnv1a64(blob) == fnv1a64_ref(blob)

    def test_canonical_encoding_of_fundamentals(self):
        assert canonical_encoding(fundamental(I32)) == bytes([0x01, 5]) + (4).to_bytes(4, "little")
        assert canonical_encoding(fundamental(FundamentalKind.UINT32)) == bytes(
            [0x01, 6]
        ) + (4).to_bytes(4, "little")

    def test_int32_uint32_distinct(self):
        enc_i = bytes([0x01, 5]) + (4).to_bytes(4, "little")
        enc_u = bytes([0x01, 6]) + (4).to_bytes(4, "little")
        assert signature(fundamental(I32)) == fnv1a64_ref(enc_i)
        assert signature(fundamental(FundamentalKind.UINT32)) == fnv1a64_ref(enc_u)
        assert signature(fundamental(I32)) != signature(fundamental(FundamentalKind.UINT32))

    def test_deterministic(self):
        t1 = mixed_struct_tree()
        t2 = mixed_struct_tree()
        assert signature(t1) == signature(t1) == signature(t2)

    def test_structural_equality_implies_hash_equality(self):
        rng = random.Random(11)
        for _ in range(100):
            seed = rng.getrandbits(32)
            a = random_tree(random.Random(seed))
            b = random_tree(random.Random(seed))
            assert a == b
            assert signature(a) == signature(b)


def _fill_pattern(n: int, seed: int) -> bytes:
    return bytes(random.Random(seed).getrandbits(8) for _ in range(n))


class TestPackUnpack:
    def test_identity_for_fundamental(self):
        c = commit(fundamental(I32))
        data = struct.pack("<i", -7)
        assert pack(data, c, 1) == data

    def test_strided_gather(self):
        c = commit(vector(2, 1, 2, fundamental(I32)))
        src = struct.pack("<6i", 1, 2, 3, 4, 5, 6)
        assert pack(src, c, 2) == struct.pack("<4i", 1, 3, 4, 6)

    def test_zero_count(self):
        c = commit(fundamental(I32))
        assert pack(b"", c, 0) == b""
        unpack(b"", c, 0, bytearray())  # no-op

    def test_capacity_shortfall(self):
        c = commit(mixed_struct_tree())
        with pytest.raises(InvalidArgument):
            pack(bytes(31), c, 1)

    def test_unpack_length_mismatch(self):
        c = commit(fundamental(I32))
        with pytest.raises(InvalidArgument):
            unpack(b"\x00" * 5, c, 1, bytearray(4))

    def test_unpack_leaves_gap_bytes(self):
        c = commit(vector(2, 1, 2, fundamental(U8)))
        dst = bytearray(b"\xee" * 3)
        unpack(b"\x01\x02", c, 1, dst)
        assert dst == bytearray(b"\x01\xee\x02")

    def test_roundtrip_random_trees(self):
        rng = random.Random(31337)
        for i in range(200):
            t = random_tree(rng)
            c = CommittedDatatype(t)
            count = rng.randint(0, 3)
            src = _fill_pattern(count * c.extent, seed=i)
            packed = pack(src, c, count)
            assert len(packed) == count * c.size
            dst = bytearray(count * c.extent)
            unpack(packed, c, count, dst)
            for e in range(count):
                base = e * c.extent
                for off, length in c.segments:
                    assert dst[base + off : base + off + length] == src[base + off : base + off + length]

    @settings(max_examples=60, deadline=None)
    @given(st.integers(0, 2**32 - 1), st.integers(1, 4))
    def test_roundtrip_property(self, seed, count):
        rng = random.Random(seed)
        t = random_tree(rng)
        c = CommittedDatatype(t)
        src = _fill_pattern(count * c.extent, seed=seed ^ 0xABCD)
        dst = bytearray(count * c.extent)
        unpack(pack(src, c, count), c, count, dst)
        for off, length in c.segments:
            for e in range(count):
                base = e * c.extent
                assert dst[base + off : base + off + length] == src[base + off : base + off + length]
