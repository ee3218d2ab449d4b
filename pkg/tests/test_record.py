import hashlib
import struct

import pytest
from hypothesis import given, strategies as st

from ensemblefuzz.record import (
    CoverageFormatError, ExecutionResult, FuzzRecord, bucket, crash_id, format_coverage,
    less_frequent_threshold, merge, normalize_frame, parse_coverage, path_id,
)


def oracle_bucket(n):
    for idx, (lo, hi) in enumerate([(1, 1), (2, 2), (3, 3), (4, 7), (8, 15), (16, 31), (32, 127)]):
        if lo <= n <= hi:
            return idx
    return 7


@given(st.integers(1, 5000))
def test_bucket_table(n):
    assert bucket(n) == oracle_bucket(n)


def test_bucket_rejects_zero():
    with pytest.raises(ValueError):
        bucket(0)


def test_path_id_layout():
    # independent recomputation of the pinned digest layout
    cov = {5: 9, 2: 1}
    raw = struct.pack("<QB", 2, 0) + struct.pack("<QB", 5, 4)
    assert path_id(cov) == hashlib.blake2b(raw, digest_size=16).hexdigest()


def test_path_id_examples():
    assert path_id({1: 5}) == path_id({1: 6})
    assert path_id({}) != path_id({1: 1})
    assert path_id({1: 2, 3: 4, 9: 1}) == path_id({9: 1, 3: 4, 1: 2})
    assert path_id({1: 3}) != path_id({1: 4})
    # zero counts are not coverage
    assert path_id({1: 1, 2: 0}) == path_id({1: 1})


def test_crash_id_top_three():
    assert crash_id(["a", "b", "c", "d"]) == crash_id(["a", "b", "c", "e"])
    assert crash_id(["a"]) == crash_id(["a"])
    assert crash_id(["a", "b", "c"]) != crash_id(["a", "b", "x"])
    expected = hashlib.blake2b(b"a\nb\nc", digest_size=16).hexdigest()
    assert crash_id(["a", "b", "c", "zzz"]) == expected
    with pytest.raises(ValueError):
        crash_id([])


@pytest.mark.parametrize("frame,norm", [
    ("parse_body", "parse_body"),
    ("parse+0x1a", "parse+0x1a"),
    ("#3 0x4005d2 in parse_body (target.c:12)", "parse_body"),
    ("0x7f00 in memcpy+0x10", "memcpy+0x10"),
    ("boom(int, char*)", "boom"),
    ("  ", "??"),
])
def test_normalize_frame(frame, norm):
    assert normalize_frame(frame) == norm


def test_addresses_do_not_split_crashes():
    a = ["#0 0x1111 in f (x.c:1)", "#1 0x2222 in g (x.c:2)", "#2 0x3333 in h (x.c:3)"]
    b = ["#0 0x9999 in f (x.c:1)", "#1 0x8888 in g (x.c:2)", "#2 0x7777 in h (x.c:3)"]
    assert crash_id(a) == crash_id(b)


def test_execution_result_validation():
    with pytest.raises(ValueError):
        ExecutionResult({1: 1}, crashed=False, stack_frames=("f",))
    with pytest.raises(ValueError):
        ExecutionResult({1: 1}, crashed=True)
    with pytest.raises(ValueError):
        ExecutionResult({1: -1})
    r = ExecutionResult({1: 2, 2: 0})
    assert r.edges == {1} and r.crash_id() is None


def test_merge_examples():
    m = FuzzRecord()
    r = ExecutionResult({1: 2, 2: 1})
    d = m.merge(r)
    assert d.new_edges == 2 and d.new_path
    d2 = m.merge(r)
    assert d2.new_edges == 0 and not d2.new_path and not d2.new_unique_crash
    assert m.global_coverage == {1: 4, 2: 2}


def test_merge_crashes():
    m = FuzzRecord()
    c1 = ExecutionResult({1: 1}, True, ("a", "b", "c", "d"))
    c2 = ExecutionResult({1: 1}, True, ("a", "b", "c", "e"))
    assert m.merge(c1).new_unique_crash
    assert not m.merge(c2).new_unique_crash
    assert m.stats() == {"edges": 1, "paths": 1, "crashes": 1, "crash_total": 2}


def test_functional_merge_leaves_input():
    m = FuzzRecord()
    out, delta = merge(m, ExecutionResult({3: 1}))
    assert m.global_coverage == {} and out.global_coverage == {3: 1} and delta.new_edges == 1


def test_threshold():
    assert less_frequent_threshold(FuzzRecord({1: 10, 2: 2, 3: 6})) == 3.0
    assert less_frequent_threshold(FuzzRecord({1: 4})) == 2.0
    assert less_frequent_threshold(FuzzRecord()) == 0.0


def test_coverage_format_roundtrip():
    r = parse_coverage("# comment\n1 2\n0x10 3\n1 1\n5 0\nCRASH f1; f2 ;f3\n")
    assert dict(r.coverage) == {1: 3, 16: 3} and r.crashed and r.stack_frames == ("f1", "f2", "f3")
    assert parse_coverage(format_coverage(r)) == r
    assert parse_coverage("CRASH").stack_frames == ("??",)
    for bad in ("1", "1 x", "1 -2", "CRASH a\n1 1", "CRASH a\nCRASH b"):
        with pytest.raises(CoverageFormatError):
            parse_coverage(bad)


@given(st.dictionaries(st.integers(0, 2**64 - 1), st.integers(1, 10**6), max_size=12))
def test_path_id_order_independent(cov):
    assert path_id(cov) == path_id(dict(reversed(list(cov.items()))))
