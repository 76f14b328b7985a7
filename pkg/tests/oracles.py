"""Independent oracles shared by the test suite.

Everything here recomputes expected values through a different route than
the library: the layout oracle materializes a per-byte kind map instead of
doing interval algebra, the hash reference is a second FNV-1a expression,
and the collective oracle folds gathered inputs single-threaded.
"""

from __future__ import annotations

import random

from smpi.datatype import (
    Contiguous,
    Fundamental,
    FundamentalKind,
    StructType,
    Vector,
    contiguous,
    fundamental,
    struct_type,
    vector,
)

KINDS = list(FundamentalKind)


def fnv1a64_ref(data: bytes) -> int:
    h = 0xCBF29CE484222325
    for b in data:
        h = ((h ^ b) * 0x100000001B3) % (1 << 64)
    return h


def byte_labels(tree):
    """Brute-force placement: (extent, per-byte kind codes, 0 = gap).

    Every covered byte of one element is materialized and labeled with the
    fundamental kind that owns it; overlap trips an assertion.
    """
    if isinstance(tree, Fundamental):
        return tree.kind.size, bytearray([tree.kind.code]) * tree.kind.size
    if isinstance(tree, Contiguous):
        inner_ext, inner_labels = byte_labels(tree.inner)
        return tree.count * inner_ext, inner_labels * tree.count
    if isinstance(tree, Vector):
        inner_ext, inner_labels = byte_labels(tree.inner)
        extent = ((tree.count - 1) * tree.stride + tree.blocklength) * inner_ext
        covered = [(k, c) for k, c in enumerate(inner_labels) if c]
        labels = bytearray(extent)
        for i in range(tree.count):
            for j in range(tree.blocklength):
                base = (i * tree.stride + j) * inner_ext
                for k, c in covered:
                    assert labels[base + k] == 0, "oracle: overlapping bytes"
                    labels[base + k] = c
        return extent, labels
    if isinstance(tree, StructType):
        labels = bytearray(tree.extent)
        for offset, inner in tree.fields:
            _, inner_labels = byte_labels(inner)
            for k, c in enumerate(inner_labels):
                if c:
                    assert labels[offset + k] == 0, "oracle: overlapping bytes"
                    labels[offset + k] = c
        return tree.extent, labels
    raise TypeError(f"not a tree: {tree!r}")


def oracle_layout(tree):
    """(size, extent, segments) from the per-byte map.

    Segments are the maximal runs of consecutive bytes carrying the same
    kind label.
    """
    extent, labels = byte_labels(tree)
    size = sum(1 for c in labels if c)
    segments = []
    start = None
    for pos in range(extent + 1):
        code = labels[pos] if pos < extent else 0
        if start is not None and (code == 0 or code != labels[start]):
            segments.append((start, pos - start))
            start = None
        if start is None and code != 0:
            start = pos
    return size, extent, segments


def mixed_struct_tree():
    """C-like record {int32; int32[3]; float64; int8} at natural alignment."""
    return struct_type(
        [
            (0, fundamental(FundamentalKind.INT32)),
            (4, contiguous(3, fundamental(FundamentalKind.INT32))),
            (16, fundamental(FundamentalKind.FLOAT64)),
            (24, fundamental(FundamentalKind.INT8)),
        ],
        extent=32,
    )


def random_tree(rng: random.Random, max_depth: int = 3,
                max_extent: int = 16384):
    """Random valid tree: depth <= max_depth, counts <= 8, bounded extent."""
    while True:
        tree = _random_node(rng, max_depth)
        if _quick_extent(tree) <= max_extent:
            return tree


def _random_node(rng: random.Random, depth: int):
    if depth <= 0:
        return fundamental(rng.choice(KINDS))
    roll = rng.random()
    if roll < 0.35:
        return fundamental(rng.choice(KINDS))
    if roll < 0.60:
        return contiguous(rng.randint(1, 8), _random_node(rng, depth - 1))
    if roll < 0.85:
        blocklength = rng.randint(1, 8)
        stride = blocklength + rng.randint(0, 8 - min(8, blocklength))
        return vector(rng.randint(1, 8), blocklength, stride,
                      _random_node(rng, depth - 1))
    nfields = rng.randint(1, 4)
    fields = []
    cursor = 0
    for _ in range(nfields):
        cursor += rng.randint(0, 6)
        inner = _random_node(rng, depth - 1)
        fields.append((cursor, inner))
        cursor += _quick_extent(inner)
    return struct_type(fields, cursor + rng.randint(0, 6))


def _quick_extent(tree) -> int:
    if isinstance(tree, Fundamental):
        return tree.kind.size
    if isinstance(tree, Contiguous):
        return tree.count * _quick_extent(tree.inner)
    if isinstance(tree, Vector):
        return ((tree.count - 1) * tree.stride + tree.blocklength) * _quick_extent(tree.inner)
    return tree.extent
