"""Implicit sparse binary measurement matrix.

The matrix has ``rows`` rows and one column per id in a 2^u universe; each
column holds exactly ``ones_per_column`` ones at seeded pseudo-random rows.
Columns are never materialized: the support of a column is recomputed on
demand from the shared seed, so both ends of a session agree on the matrix by
exchanging only (rows, ones_per_column, seed, universe_bits).

Supports are drawn by rejection sampling from the element's keyed hash
stream: take 64-bit draws modulo ``rows``, keep first occurrences until
``ones_per_column`` distinct rows are collected.  The resulting set is
uniform over all row subsets of that size, which matches unranking a uniform
integer through a combinatorial number system without ever forming the
(astronomically large) subset count.

The module also provides exhaustive small-instance checkers for the two
structural properties the decoder relies on: vertex expansion of the
column-support bipartite graph, and approximate L1-norm preservation on
sparse sign vectors.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from . import hashing, ids

DEFAULT_SUBSET_BUDGET = 10**6
DEFAULT_SIGN_BUDGET = 10**7

# Minimum fraction of the maximal neighborhood size m*|S| that every small
# column subset S must reach for the graph to count as an expander.
EXPANSION_FRACTION = 5.0 / 6.0


class EnumerationBudgetError(ValueError):
    """Raised when an exhaustive property check would enumerate too much."""


@dataclass(frozen=True)
class MatrixSpec:
    """Implicit description of the measurement matrix."""

    rows: int
    ones_per_column: int
    seed: int
    universe_bits: int

    def __post_init__(self):
        if self.rows <= 0:
            raise ValueError("rows must be positive")
        if not 1 <= self.ones_per_column <= min(self.rows, 255):
            raise ValueError("ones_per_column must be in [1, min(rows, 255)]")
        if not 0 <= self.seed <= hashing.MASK64:
            raise ValueError("seed must be a 64-bit value")
        ids.words_for_bits(self.universe_bits)  # validates range

    @property
    def support_base(self) -> int:
        return hashing.domain_base(self.seed, hashing.DOMAIN_SUPPORT)


def column_support(spec: MatrixSpec, element_id: int) -> np.ndarray:
    """Sorted row indices of the ones in the element's column.

    Deterministic in (spec, element_id); total for every id in the universe.
    """
    k0, k1 = ids.single_key(element_id, spec.universe_bits, spec.seed)
    state = hashing.element_state(spec.support_base, k0, k1)
    return _support_from_state(state, spec.rows, spec.ones_per_column)


def _support_from_state(state: int, rows: int, m: int) -> np.ndarray:
    picked: list[int] = []
    t = 0
    while len(picked) < m:
        row = hashing.draw(state, t) % rows
        t += 1
        if row not in picked:
            picked.append(row)
    out = np.array(picked, dtype=np.int32)
    out.sort()
    return out


def batch_supports(spec: MatrixSpec, elements: ids.IdArray) -> np.ndarray:
    """(n, m) int32 array of sorted column supports for a batch of ids.

    Row-for-row identical to calling :func:`column_support` per element; the
    vectorized path covers elements whose first m draws are already distinct
    and the rare collision rows fall back to the sequential sampler.
    """
    if elements.bits != spec.universe_bits:
        raise ValueError("id width does not match spec.universe_bits")
    n = len(elements)
    m = spec.ones_per_column
    if n == 0:
        return np.empty((0, m), dtype=np.int32)
    k0, k1 = elements.keys(spec.seed)
    state = hashing.element_state_vec(spec.support_base, k0, k1)
    counters = np.arange(m, dtype=np.uint64)
    draws = hashing.draw_vec(state[:, None], counters[None, :])
    rows = (draws % np.uint64(spec.rows)).astype(np.int32)
    rows.sort(axis=1)
    if m > 1:
        collided = np.nonzero((rows[:, 1:] == rows[:, :-1]).any(axis=1))[0]
        for i in collided:
            rows[i] = _support_from_state(int(state[i]), spec.rows, m)
    return rows


def unrank_combination(rank: int, rows: int, m: int) -> tuple[int, ...]:
    """rank-th m-subset of {0..rows-1} in lexicographic order.

    Test utility pinning the combinatorial-number-system convention the
    implicit construction is distributionally equivalent to; rank 0 maps to
    (0, 1, ..., m-1).
    """
    import math

    total = math.comb(rows, m)
    if not 0 <= rank < total:
        raise ValueError(f"rank must be in [0, {total})")
    out = []
    next_row = 0
    remaining = m
    while remaining > 0:
        # count combinations starting with next_row
        block = math.comb(rows - next_row - 1, remaining - 1)
        if rank < block:
            out.append(next_row)
            remaining -= 1
        else:
            rank -= block
        next_row += 1
    return tuple(out)


def _resolve_supports(spec: MatrixSpec | None, candidates, supports) -> np.ndarray:
    if supports is not None:
        supports = np.asarray(supports, dtype=np.int32)
        if supports.ndim != 2:
            raise ValueError("supports must be a 2-D (n, m) array")
        return supports
    if spec is None or candidates is None:
        raise ValueError("either supports or (spec, candidates) is required")
    if not isinstance(candidates, ids.IdArray):
        candidates = ids.IdArray.from_ints(list(candidates), spec.universe_bits)
    return batch_supports(spec, candidates)


def check_expander(
    spec: MatrixSpec | None,
    candidate_ids=None,
    d: int = 1,
    *,
    supports: np.ndarray | None = None,
    subset_budget: int = DEFAULT_SUBSET_BUDGET,
) -> bool:
    """Exhaustively test vertex expansion on the candidate columns.

    True iff every subset S of candidate columns with |S| <= 2d touches at
    least ceil(5/6 * m * |S|) distinct rows.  Intended for small instances;
    raises EnumerationBudgetError when the subset count exceeds the budget.
    """
    sup = _resolve_supports(spec, candidate_ids, supports)
    n, m = sup.shape
    _check_budget_subsets(n, min(2 * d, n), subset_budget)
    row_sets = [frozenset(int(r) for r in row) for row in sup]
    for size in range(1, min(2 * d, n) + 1):
        need = EXPANSION_FRACTION * m * size
        for subset in itertools.combinations(range(n), size):
            neighbors = frozenset().union(*(row_sets[i] for i in subset))
            if len(neighbors) < need:
                return False
    return True


def check_rip1(
    spec: MatrixSpec | None,
    candidate_ids=None,
    d: int = 1,
    *,
    supports: np.ndarray | None = None,
    sign_budget: int = DEFAULT_SIGN_BUDGET,
) -> bool:
    """Exhaustively test L1 norm preservation on sparse sign vectors.

    Enumerates every v in {-1, 0, +1}^n with at most 2d nonzeros restricted
    to the candidate columns and checks

        (2/3) * m * ||v||_1  <=  ||M v||_1  <=  m * ||v||_1.

    The m scaling reflects that columns are unnormalized binary with exactly
    m ones (so ||M e_i||_1 = m); the upper bound is then the triangle
    inequality and the lower bound is the expansion guarantee.
    """
    sup = _resolve_supports(spec, candidate_ids, supports)
    n, m = sup.shape
    _check_budget_signs(n, min(2 * d, n), sign_budget)
    rows_max = int(sup.max()) + 1 if n else 1
    image = np.zeros(rows_max, dtype=np.int64)
    for size in range(1, min(2 * d, n) + 1):
        for subset in itertools.combinations(range(n), size):
            for signs in itertools.product((1, -1), repeat=size):
                image[:] = 0
                for idx, sign in zip(subset, signs):
                    image[sup[idx]] += sign
                norm = int(np.abs(image).sum())
                if not (2 * m * size <= 3 * norm and norm <= m * size):
                    return False
    return True


def _check_budget_subsets(n: int, max_size: int, budget: int):
    import math

    count = sum(math.comb(n, s) for s in range(1, max_size + 1))
    if count > budget:
        raise EnumerationBudgetError(f"{count} subsets exceeds budget {budget}")


def _check_budget_signs(n: int, max_size: int, budget: int):
    import math

    count = sum(math.comb(n, s) * 2**s for s in range(1, max_size + 1))
    if count > budget:
        raise EnumerationBudgetError(f"{count} sign vectors exceeds budget {budget}")
