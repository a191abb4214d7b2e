import numpy as np
import pytest

from intersketch.ids import IdArray

# column supports of the three-element worked example: a 7-row matrix whose
# columns pairwise share only row 0
TINY_SUPPORTS = np.array([[0, 1, 2], [0, 3, 4], [0, 5, 6]], dtype=np.int32)
TINY_MEASUREMENT = np.array([3, 1, 1, 1, 1, 1, 1], dtype=np.int64)


def make_pair(n_common, n_a_only, n_b_only, seed, bits=64):
    """Deterministic (A, B, common_words) with exact cardinalities."""
    rng = np.random.default_rng(seed)
    total = n_common + n_a_only + n_b_only
    w = (bits + 63) // 64
    rows = np.empty((0, w), dtype=np.uint64)
    while rows.shape[0] < total:
        fresh = rng.integers(0, 2**64, (total + 64, w), dtype=np.uint64)
        if bits < 64 * w:
            fresh[:, w - 1] &= np.uint64((1 << (bits - 64 * (w - 1))) - 1)
        rows = np.concatenate([rows, fresh])
        packed = np.ascontiguousarray(rows).view([("", np.uint64)] * w).reshape(-1)
        _, first = np.unique(packed, return_index=True)
        rows = rows[np.sort(first)]
    rows = rows[:total]
    common = rows[:n_common]
    a_only = rows[n_common : n_common + n_a_only]
    b_only = rows[n_common + n_a_only :]
    a = IdArray(np.concatenate([common, a_only]), bits)
    b = IdArray(np.concatenate([common, b_only]), bits)
    return a, b, common


def same_set(ids: IdArray, words: np.ndarray, bits: int = 64) -> bool:
    return bool(
        np.array_equal(np.sort(ids.packed()), np.sort(IdArray(words, bits).packed()))
    )


@pytest.fixture
def rng():
    return np.random.default_rng(0xC0FFEE)
