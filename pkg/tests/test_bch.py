import numpy as np
import pytest

from intersketch import bch


def test_identical_vectors_no_flips():
    rng = np.random.default_rng(0)
    bits = rng.integers(0, 2, 5000).astype(np.uint8)
    syn = bch.bch_encode_parities(bits, 12)
    flips, failed = bch.bch_correct(bits, syn, 12)
    assert flips.size == 0 and not failed


def test_exact_correction_at_capacity():
    rng = np.random.default_rng(1)
    t = 20
    for trial in range(60):
        local = rng.integers(0, 2, 1023).astype(np.uint8)
        remote = local.copy()
        where = rng.choice(1023, t, replace=False)
        remote[where] ^= 1
        syn = bch.bch_encode_parities(remote, t)
        flips, failed = bch.bch_correct(local, syn, t)
        assert not failed
        assert np.array_equal(np.sort(flips), np.sort(where))


def test_overload_is_signaled():
    rng = np.random.default_rng(2)
    t = 20
    signaled = 0
    for trial in range(150):
        local = rng.integers(0, 2, 1023).astype(np.uint8)
        remote = local.copy()
        remote[rng.choice(1023, t + 3, replace=False)] ^= 1
        syn = bch.bch_encode_parities(remote, t)
        _, failed = bch.bch_correct(local, syn, t)
        signaled += bool(failed)
    assert signaled >= 0.99 * 150


def test_multi_chunk_correction():
    rng = np.random.default_rng(3)
    local = rng.integers(0, 2, 4096).astype(np.uint8)
    remote = local.copy()
    where = rng.choice(4096, 25, replace=False)
    remote[where] ^= 1
    syn = bch.bch_encode_parities(remote, 12)
    flips, failed = bch.bch_correct(local, syn, 12)
    assert not failed
    assert np.array_equal(np.sort(flips), np.sort(where))


def test_overloaded_chunk_does_not_poison_others():
    rng = np.random.default_rng(4)
    t = 8
    local = rng.integers(0, 2, 2046).astype(np.uint8)
    remote = local.copy()
    first = rng.choice(1023, t + 5, replace=False)  # over capacity
    second = 1023 + rng.choice(1023, 3, replace=False)  # fine
    remote[first] ^= 1
    remote[second] ^= 1
    syn = bch.bch_encode_parities(remote, t)
    flips, failed = bch.bch_correct(local, syn, t)
    assert failed == [0]
    assert np.array_equal(np.sort(flips), np.sort(second))


def test_length_and_parameter_validation():
    bits = np.zeros(100, dtype=np.uint8)
    syn = bch.bch_encode_parities(bits, 5)
    with pytest.raises(ValueError):
        bch.bch_correct(bits, syn + b"x", 5)
    with pytest.raises(ValueError):
        bch.bch_encode_parities(bits, 0)
    assert bch.syndrome_bytes_per_chunk(5) == (50 + 7) // 8
