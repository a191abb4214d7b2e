"""Independent brute-force reference for sparse binary recovery.

Enumerates, by depth-first search, every subset S of the candidate columns
whose support sum equals the measurement exactly.  The search branches on
the first row with remaining mass: some candidate covering that row is
either in the solution or not, giving a complete, duplicate-free case
split, and the nonnegative-residue prune cuts infeasible prefixes early.
Used to certify both the recovered set and its uniqueness; shares nothing
with the pursuit decoders.
"""

import numpy as np


def sparse_solutions(measurement, supports, max_solutions=2, node_budget=2_000_000):
    """All candidate subsets S with sum of columns == measurement.

    Returns a list of sorted index tuples, stopping once max_solutions have
    been found (two is enough to disprove uniqueness).  Raises RuntimeError
    if the search exceeds node_budget (never seen at test scales).
    """
    residue = np.array(measurement, dtype=np.int64)
    supports = np.asarray(supports, dtype=np.int64)
    n, m = supports.shape
    if (residue < 0).any():
        return []
    by_row: dict[int, list[int]] = {}
    for idx in range(n):
        for row in supports[idx]:
            by_row.setdefault(int(row), []).append(idx)
    solutions: list[tuple[int, ...]] = []
    state = np.zeros(n, dtype=np.int8)  # 0 free, 1 chosen, -1 excluded
    chosen: list[int] = []
    budget = [node_budget]

    def dfs():
        if budget[0] <= 0:
            raise RuntimeError("oracle budget exceeded")
        budget[0] -= 1
        if len(solutions) >= max_solutions:
            return
        rows_left = np.nonzero(residue)[0]
        if rows_left.size == 0:
            solutions.append(tuple(sorted(chosen)))
            return
        row = int(rows_left[0])
        pick = -1
        for idx in by_row.get(row, []):
            if state[idx] == 0 and not (residue[supports[idx]] < 1).any():
                pick = idx
                break
        if pick < 0:
            return  # row cannot be covered
        # case 1: pick is in the solution
        state[pick] = 1
        residue[supports[pick]] -= 1
        chosen.append(pick)
        dfs()
        chosen.pop()
        residue[supports[pick]] += 1
        # case 2: pick is not in the solution
        state[pick] = -1
        dfs()
        state[pick] = 0

    dfs()
    return solutions


def unique_solution(measurement, supports):
    """The single exact subset, or None if zero or several exist."""
    found = sparse_solutions(measurement, supports, max_solutions=2)
    if len(found) == 1:
        return np.array(found[0], dtype=np.int64)
    return None
