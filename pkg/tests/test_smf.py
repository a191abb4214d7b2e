import numpy as np
import pytest

from intersketch.ids import IdArray
from intersketch.smf import BloomFilter, bf_build, bf_query


def ids_of(values, bits=64):
    return IdArray.from_ints(values, bits)


def test_empty_filter_rejects_everything():
    filt = bf_build(ids_of([]), 0.01, seed=1)
    assert not bf_query(filt, ids_of([1, 2, 3])).any()


def test_no_false_negatives():
    rng = np.random.default_rng(2)
    members = ids_of(np.unique(rng.integers(1, 1 << 60, 5000, dtype=np.uint64)).tolist())
    filt = bf_build(members, 0.01, seed=7)
    assert bf_query(filt, members).all()


def test_false_positive_rate_band():
    rng = np.random.default_rng(3)
    pool = np.unique(rng.integers(1, 1 << 62, 1_020_000, dtype=np.uint64))
    members = IdArray(pool[:10_000, None], 64)
    others = IdArray(pool[10_000:1_010_000, None], 64)
    filt = bf_build(members, 0.01, seed=5)
    rate = float(bf_query(filt, others).mean())
    assert 0.005 <= rate <= 0.02


def test_serialization_bit_exact_and_query_stable():
    rng = np.random.default_rng(4)
    members = ids_of(rng.integers(1, 1 << 60, 500, dtype=np.uint64).tolist())
    filt = bf_build(members, 0.02, seed=9)
    wire = filt.to_bytes()
    back = BloomFilter.from_bytes(wire)
    assert back.to_bytes() == wire
    probes = ids_of(rng.integers(1, 1 << 60, 2000, dtype=np.uint64).tolist())
    assert np.array_equal(bf_query(filt, probes), bf_query(back, probes))


def test_wire_layout_size():
    filt = bf_build(ids_of([1, 2, 3]), 0.01, seed=0)
    assert filt.wire_size() == 13 + (filt.bit_count + 7) // 8
    assert len(filt.to_bytes()) == filt.wire_size()


def test_bad_fpp_rejected():
    with pytest.raises(ValueError):
        bf_build(ids_of([1]), 1.5)


def test_scalar_query_needs_width():
    filt = bf_build(ids_of([5]), 0.01)
    assert filt.query(5, universe_bits=64) is True
    with pytest.raises(ValueError):
        filt.query(5)
