import itertools
import math

import numpy as np
import pytest
from scipy import stats

from intersketch.ids import IdArray
from intersketch.matrix import (
    EnumerationBudgetError,
    MatrixSpec,
    batch_supports,
    check_expander,
    check_rip1,
    column_support,
    unrank_combination,
)

from conftest import TINY_SUPPORTS


def test_column_support_deterministic():
    spec = MatrixSpec(rows=19, ones_per_column=4, seed=99, universe_bits=64)
    a = column_support(spec, 123456)
    b = column_support(spec, 123456)
    assert np.array_equal(a, b)
    assert len(set(a.tolist())) == 4
    assert all(0 <= r < 19 for r in a)


def test_column_support_wide_ids_deterministic():
    spec = MatrixSpec(rows=33, ones_per_column=3, seed=5, universe_bits=256)
    x = (1 << 200) + 12345
    assert np.array_equal(column_support(spec, x), column_support(spec, x))
    with pytest.raises(ValueError):
        column_support(spec, 1 << 300)


def test_unrank_lexicographic_convention():
    assert unrank_combination(0, 4, 2) == (0, 1)
    combos = list(itertools.combinations(range(5), 3))
    for rank, combo in enumerate(combos):
        assert unrank_combination(rank, 5, 3) == combo
    with pytest.raises(ValueError):
        unrank_combination(math.comb(5, 3), 5, 3)


def test_single_row_supports_uniform():
    # one one per column: row frequencies over many ids should be uniform
    spec = MatrixSpec(rows=7, ones_per_column=1, seed=21, universe_bits=64)
    ids = IdArray.from_ints(range(100_000), 64)
    rows = batch_supports(spec, ids).ravel()
    freq = np.bincount(rows, minlength=7)
    _, p_value = stats.chisquare(freq)
    assert p_value > 1e-3


def test_batch_matches_scalar_with_collisions():
    # small row count forces rejection-sampling retries in some rows
    spec = MatrixSpec(rows=8, ones_per_column=4, seed=7, universe_bits=64)
    values = list(range(500))
    batch = batch_supports(spec, IdArray.from_ints(values, 64))
    for i, v in enumerate(values):
        assert np.array_equal(batch[i], column_support(spec, v)), v
    # every support has distinct sorted entries
    assert (np.diff(batch, axis=1) > 0).all()


def test_tiny_matrix_expander_classification():
    assert check_expander(None, d=1, supports=TINY_SUPPORTS) is True
    assert check_expander(None, d=2, supports=TINY_SUPPORTS) is False


def test_single_one_columns_expand_for_any_d():
    supports = np.array([[0], [1], [2], [3]], dtype=np.int32)
    for d in (1, 2, 3, 4):
        assert check_expander(None, d=d, supports=supports) is True


def test_rip1_single_column_and_boundary():
    # one column: norm equals the column weight
    assert check_rip1(None, d=1, supports=TINY_SUPPORTS[:1]) is True
    # opposite signs on two columns sharing one row sit exactly on the bound
    assert check_rip1(None, d=1, supports=TINY_SUPPORTS[:2]) is True


def test_rip1_fails_on_identical_supports():
    supports = np.array([[0, 1, 2], [0, 1, 2]], dtype=np.int32)
    assert check_rip1(None, d=1, supports=supports) is False


def test_expander_implies_rip1_small_random():
    rng = np.random.default_rng(12)
    for _ in range(40):
        l = int(rng.integers(6, 25))
        m = int(rng.integers(1, min(5, l + 1)))
        n = int(rng.integers(2, 13))
        d = int(rng.integers(1, 3))
        spec = MatrixSpec(l, m, int(rng.integers(1 << 30)), 64)
        ids = IdArray.from_ints(rng.integers(1, 1 << 40, n).tolist(), 64)
        sup = batch_supports(spec, ids)
        if check_expander(None, d=d, supports=sup):
            assert check_rip1(None, d=d, supports=sup)


def test_enumeration_budget_enforced():
    supports = np.zeros((40, 2), dtype=np.int32)
    supports[:, 1] = 1
    with pytest.raises(EnumerationBudgetError):
        check_expander(None, d=10, supports=supports, subset_budget=100)
    with pytest.raises(EnumerationBudgetError):
        check_rip1(None, d=10, supports=supports, sign_budget=100)


def test_spec_level_wrappers():
    spec = MatrixSpec(rows=24, ones_per_column=3, seed=3, universe_bits=64)
    ids = IdArray.from_ints([5, 6, 7], 64)
    assert isinstance(check_expander(spec, ids, 1), bool)
    assert isinstance(check_rip1(spec, ids, 1), bool)


def test_spec_validation():
    with pytest.raises(ValueError):
        MatrixSpec(rows=0, ones_per_column=1, seed=0, universe_bits=64)
    with pytest.raises(ValueError):
        MatrixSpec(rows=4, ones_per_column=5, seed=0, universe_bits=64)
    with pytest.raises(ValueError):
        MatrixSpec(rows=4, ones_per_column=2, seed=0, universe_bits=300)
