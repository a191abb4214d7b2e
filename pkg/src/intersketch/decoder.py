"""Binary-signal pursuit decoders.

Sparse recovery of a 0/1 indicator over a known candidate list from a
residue measurement.  Two pursuit rules share one state:

* mp_decode: greedy L2 pursuit.  The pursuit step for candidate i is
  (residue . column_i) / m; the candidate with the largest admissible step
  is flipped whenever the step clears +-1/2 (up-flips only from 0, down
  flips only from 1), which keeps the recovered signal binary.
* ssmp_decode: L1 pursuit.  The step is the median of the residue over the
  candidate's support, quantized against the same thresholds; medians shrug
  off grossly corrupted coordinates, so this is the fallback when the L2
  rule stalls on noisy residues.

Candidates testing positive in a peer's membership filter can be excluded
from up-flips (collision avoidance) or flipped tentatively for later
verification (collision resolution); exclusion never blocks down-flips,
which only undo this decoder's own prior updates.
"""

from __future__ import annotations

import enum
from typing import Sequence

import numpy as np

from . import _kernels
from .ids import IdArray
from .matrix import MatrixSpec, batch_supports, column_support
from .sketch import Residue


class Outcome(enum.Enum):
    ZERO_RESIDUE = "zero_residue"
    STALLED = "stalled"
    ITERATION_CAP = "iteration_cap"


_OUTCOME_BY_CODE = {
    _kernels.OUT_ZERO: Outcome.ZERO_RESIDUE,
    _kernels.OUT_STALL: Outcome.STALLED,
    _kernels.OUT_CAP: Outcome.ITERATION_CAP,
}


def delta(residue: Residue, element_id: int) -> float:
    """Optimal L2 pursuit step for one element: (residue . column) / m."""
    sup = column_support(residue.spec, element_id)
    return float(residue.values[sup].sum()) / residue.spec.ones_per_column


def median_delta(residue: Residue, element_id: int) -> float:
    """Optimal L1 pursuit step for one element: median of residue on its support."""
    sup = column_support(residue.spec, element_id)
    return float(np.median(residue.values[sup]))


class DecoderState:
    """Residue, candidate supports, recovered signal, and priority bookkeeping.

    The integer array ``dot`` always holds residue . column_i for every
    candidate (the pursuit step numerator), kept current incrementally by the
    kernels; ``update_log`` records every signal flip as (candidate_index,
    +1 | -1) in application order.
    """

    def __init__(
        self,
        residue_values: np.ndarray,
        supports: np.ndarray,
        candidates: IdArray | None = None,
        spec: MatrixSpec | None = None,
        prior_signal: np.ndarray | None = None,
        exclusions: np.ndarray | None = None,
    ):
        self.residue = np.array(residue_values, dtype=np.int64)
        self.supports = np.ascontiguousarray(supports, dtype=np.int32)
        n, m = self.supports.shape
        if self.supports.size and (self.supports.min() < 0 or self.supports.max() >= self.residue.size):
            raise ValueError("support rows out of range")
        self.candidates = candidates
        self.spec = spec
        self.m = m
        self.x = np.zeros(n, dtype=np.uint8)
        if prior_signal is not None:
            self.x[:] = np.asarray(prior_signal, dtype=np.uint8)
        self.exclusions = np.zeros(n, dtype=np.uint8)
        if exclusions is not None:
            self.exclusions[:] = np.asarray(exclusions, dtype=np.uint8)
        self.initial_residue = self.residue.copy()
        self.iteration_count = 0
        self.update_log: list[tuple[int, int]] = []
        self.wrap_range: tuple[int, int] | None = None
        self._version = np.zeros(n, dtype=np.int32)
        self._build_reverse_index()
        self._refresh_dots()

    @classmethod
    def create(
        cls,
        residue: Residue,
        candidates: IdArray,
        *,
        supports: np.ndarray | None = None,
        prior_signal: np.ndarray | None = None,
        exclusions: np.ndarray | None = None,
    ) -> "DecoderState":
        if supports is None:
            supports = batch_supports(residue.spec, candidates)
        return cls(
            residue.values,
            supports,
            candidates=candidates,
            spec=residue.spec,
            prior_signal=prior_signal,
            exclusions=exclusions,
        )

    # -- construction helpers -------------------------------------------------

    def _build_reverse_index(self):
        n, m = self.supports.shape
        rows = self.supports.ravel()
        order = np.argsort(rows, kind="stable")
        self.rev_indices = (order // m).astype(np.int32)
        counts = np.bincount(rows, minlength=self.residue.size)
        self.rev_indptr = np.zeros(self.residue.size + 1, dtype=np.int64)
        np.cumsum(counts, out=self.rev_indptr[1:])

    def _refresh_dots(self):
        if self.supports.size:
            self.dot = self.residue[self.supports].sum(axis=1)
        else:
            self.dot = np.zeros(0, dtype=np.int64)

    # -- queries ---------------------------------------------------------------

    @property
    def n_candidates(self) -> int:
        return self.supports.shape[0]

    def residue_l1(self) -> int:
        return int(np.abs(self.residue).sum())

    def recovered_indices(self) -> np.ndarray:
        return np.nonzero(self.x)[0]

    def recovered_ids(self) -> IdArray:
        if self.candidates is None:
            raise ValueError("state was built without candidate ids")
        return self.candidates.take(self.recovered_indices())

    def pursuit_steps(self) -> np.ndarray:
        """Current pursuit step of every candidate (dot / m), as floats."""
        return self.dot / self.m

    def check_consistency(self) -> None:
        """Assert the stored priorities and residue bookkeeping identity."""
        fresh = self.residue[self.supports].sum(axis=1) if self.supports.size else self.dot
        if not np.array_equal(fresh, self.dot):
            raise AssertionError("stored pursuit numerators diverge from residue")
        if self.wrap_range is None:
            replay = self.initial_residue.copy()
            for idx, direction in self.update_log:
                replay[self.supports[idx]] -= direction
            if not np.array_equal(replay, self.residue):
                raise AssertionError("residue does not match the update log replay")

    # -- mutations ---------------------------------------------------------------

    def set_exclusions(self, mask: np.ndarray | None) -> None:
        if mask is None:
            self.exclusions[:] = 0
        else:
            self.exclusions[:] = np.asarray(mask, dtype=np.uint8)

    def reset_residue(self, values: np.ndarray) -> None:
        """Replace the residue (new round) while keeping the signal beliefs."""
        values = np.asarray(values, dtype=np.int64)
        if values.shape != self.residue.shape:
            raise ValueError("residue length mismatch")
        self.residue[:] = values
        self.initial_residue = values.copy()
        self.update_log.clear()
        self._refresh_dots()

    def enable_wrap(self, lo: int, hi: int) -> None:
        """Snap the residue into [lo, hi] congruence classes and keep it there."""
        if not lo <= 0 <= hi or hi == lo:
            raise ValueError("wrap range must straddle zero")
        span = hi - lo + 1
        self.wrap_range = (lo, hi)
        self.residue[:] = (self.residue - lo) % span + lo
        self._refresh_dots()

    def apply_flip(self, index: int) -> None:
        """Flip one candidate by hand (tests and protocol replay)."""
        direction = 1 if self.x[index] == 0 else -1
        self.x[index] ^= 1
        self.residue[self.supports[index]] -= direction
        self._apply_row_deltas(self.supports[index])
        self.update_log.append((index, direction))
        self.iteration_count += 1

    def _apply_row_deltas(self, rows: np.ndarray):
        # dot is a linear image of the residue; recompute just the touched rows
        if self.wrap_range is not None:
            lo, hi = self.wrap_range
            span = hi - lo + 1
            self.residue[rows] = (self.residue[rows] - lo) % span + lo
        for row in rows:
            sl = self.rev_indices[self.rev_indptr[row] : self.rev_indptr[row + 1]]
            self.dot[sl] = self.residue[self.supports[sl]].sum(axis=1)
            self._version[sl] += 1


def _heap_capacity(n: int) -> int:
    return max(4096, 2 * n)


def _actionable_mask(state: DecoderState, tentative: bool):
    score = np.where(state.x == 0, state.dot, -state.dot)
    mask = 2 * score > state.m
    if not tentative:
        mask &= ~((state.x == 0) & (state.exclusions != 0))
    return mask, score


def mp_decode(state: DecoderState, max_iterations: int, *, tentative: bool = False) -> Outcome:
    """Run L2 pursuit until zero residue, stall, or the iteration cap."""
    n = state.n_candidates
    cap = _heap_capacity(n)
    heap_score = np.empty(cap, dtype=np.int64)
    heap_id = np.empty(cap, dtype=np.int32)
    remaining = max_iterations
    while True:
        mask, score = _actionable_mask(state, tentative)
        heap_size = _kernels.heap_fill(heap_score, heap_id, score, mask.view(np.uint8))
        budget = max(remaining, 0)
        log_id = np.empty(budget, dtype=np.int32)
        log_dir = np.empty(budget, dtype=np.int8)
        code, iters, _ = _kernels.mp_run(
            state.residue,
            state.x,
            state.dot,
            state.supports,
            state.rev_indptr,
            state.rev_indices,
            state.exclusions,
            1 if tentative else 0,
            budget,
            heap_score,
            heap_id,
            heap_size,
            log_id,
            log_dir,
        )
        state.iteration_count += iters
        remaining -= iters
        state.update_log.extend(zip(log_id[:iters].tolist(), log_dir[:iters].tolist()))
        if code == _kernels.OUT_HEAP_FULL:
            continue
        return _OUTCOME_BY_CODE[code]


def ssmp_decode(state: DecoderState, max_iterations: int, *, tentative: bool = False) -> Outcome:
    """Run median-step L1 pursuit; same contract as mp_decode."""
    n = state.n_candidates
    cap = _heap_capacity(n)
    heap_score = np.empty(cap, dtype=np.int64)
    heap_id = np.empty(cap, dtype=np.int32)
    heap_ver = np.empty(cap, dtype=np.int32)
    buf = np.empty(state.m, dtype=np.int64)
    wrap_on = 1 if state.wrap_range is not None else 0
    wrap_lo, wrap_hi = state.wrap_range if wrap_on else (0, 0)
    remaining = max_iterations
    while True:
        heap_size = _kernels.ssmp_fill(
            state.residue,
            state.x,
            state.supports,
            state.exclusions,
            1 if tentative else 0,
            state._version,
            heap_score,
            heap_id,
            heap_ver,
            buf,
        )
        budget = max(remaining, 0)
        log_id = np.empty(budget, dtype=np.int32)
        log_dir = np.empty(budget, dtype=np.int8)
        code, iters, _ = _kernels.ssmp_run(
            state.residue,
            state.x,
            state.dot,
            state.supports,
            state.rev_indptr,
            state.rev_indices,
            state.exclusions,
            1 if tentative else 0,
            budget,
            state._version,
            heap_score,
            heap_id,
            heap_ver,
            heap_size,
            log_id,
            log_dir,
            wrap_on,
            wrap_lo,
            wrap_hi,
        )
        state.iteration_count += iters
        remaining -= iters
        state.update_log.extend(zip(log_id[:iters].tolist(), log_dir[:iters].tolist()))
        if code == _kernels.OUT_HEAP_FULL:
            continue
        return _OUTCOME_BY_CODE[code]


def resolve_residual(state: DecoderState, node_budget: int = 200_000,
                     max_cluster: int = 50_000, *, tentative: bool = False,
                     flex_window: tuple[int, int] | None = None) -> Outcome:
    """Exactly solve the leftover residue as a constraint system.

    Greedy pursuit can park in mutual-cancellation minima: hallucinated
    candidates whose columns absorbed several true ones, each sitting just
    inside the +-1/2 no-update band.  The leftover system is tiny and
    integral, so it is finished exactly: every candidate may move by +1
    (currently unset) or -1 (currently set), each residue row must sum to
    zero, and sound interval propagation with a bounded depth-first search
    finds the unique completion when one exists.  Candidates barred by the
    exclusion mask are never raised unless tentative is set.

    With flex_window = (v, w) from the sketch truncation, rows whose
    start-of-round value escaped [v, w] are allowed to finish at any whole
    multiple of the modulus instead of exactly zero: those are the rows
    where a recovery glitch may hide, and their leftover phantom mass is
    snapped away once the set part of the system is solved.

    Returns ZERO_RESIDUE on success; STALLED when the system is
    unsatisfiable over these candidates or the budget runs out (the caller
    falls back to another round or reports failure).
    """
    if state.residue_l1() == 0:
        return Outcome.ZERO_RESIDUE
    sup = state.supports
    r = state.residue
    n_rows = r.size
    downs = np.nonzero(state.x == 1)[0]
    down_count = np.bincount(sup[downs].ravel(), minlength=n_rows) if downs.size else np.zeros(n_rows, dtype=np.int64)
    allowed = (state.x == 0)
    if not tentative:
        allowed &= state.exclusions == 0
    # a candidate can be raised only if every one of its rows could still
    # absorb a +1 given the sets that might drop out
    room = r + down_count
    if sup.size:
        up_ok = allowed & (room[sup].min(axis=1) >= 1)
    else:
        up_ok = allowed
    ups = np.nonzero(up_ok)[0]
    variables = np.concatenate([ups, downs]).astype(np.int64)
    if variables.size == 0 or variables.size > max_cluster:
        return Outcome.STALLED
    is_up = np.concatenate([np.ones(ups.size, bool), np.zeros(downs.size, bool)])
    flex_rows: set[int] = set()
    modulus = 0
    if flex_window is not None:
        lo, hi = flex_window
        modulus = hi - lo + 1
        if modulus > 1:
            init = state.initial_residue
            flex_rows = {int(j) for j in np.nonzero((init < lo) | (init > hi))[0]}
    solution = _search_residual(r, sup, variables, is_up, node_budget,
                                flex_rows, modulus)
    if solution is None:
        return Outcome.STALLED
    for v, val in solution:
        if val != 0:
            state.apply_flip(int(variables[v]))
    if state.residue_l1() == 0:
        return Outcome.ZERO_RESIDUE
    if flex_rows and modulus > 1 and state.wrap_range is None:
        left = state.residue[state.residue != 0]
        if (left % modulus == 0).all():
            # pure phantom leftovers on glitched rows; congruence-snap them
            state.enable_wrap(*flex_window)
    return Outcome.ZERO_RESIDUE if state.residue_l1() == 0 else Outcome.STALLED


def _search_residual(residue, sup, variables, is_up, node_budget,
                     flex_rows=frozenset(), modulus=0):
    """DFS with queue-driven interval propagation over the residual system.

    Variables take {0, +1} (ups) or {-1, 0} (downs); every row of the
    residue must be exactly cancelled, except rows in flex_rows which may
    finish at any multiple of the modulus.  Returns [(var_index, value)]
    or None on unsatisfiable / budget exhausted.  The budget counts row
    examinations, so pathological systems bail out quickly.
    """
    row_vars: dict[int, list[int]] = {}
    for v, cand in enumerate(variables):
        for row in sup[cand]:
            row_vars.setdefault(int(row), []).append(v)
    req: dict[int, int] = {}
    for row in np.nonzero(residue)[0]:
        row = int(row)
        req[row] = int(residue[row])
        if row not in row_vars:
            if row in flex_rows and req[row] % modulus == 0:
                continue  # phantom-only row; snapped after the solve
            return None
    for row in row_vars:
        req.setdefault(row, 0)
    var_rows = {v: [int(rr) for rr in sup[variables[v]]] for v in range(len(variables))}
    assign: dict[int, int] = {}
    budget = [node_budget]

    def _assign(v, val, trail):
        assign[v] = val
        trail.append(v)
        if val != 0:
            for row in var_rows[v]:
                req[row] -= val

    def undo(trail, mark):
        while len(trail) > mark:
            v = trail.pop()
            val = assign.pop(v)
            if val != 0:
                for row in var_rows[v]:
                    req[row] += val

    def propagate(trail, dirty):
        """Force moves reachable from the dirty rows; False on contradiction."""
        while dirty:
            if budget[0] <= 0:
                return False
            row = dirty.pop()
            members = row_vars.get(row)
            if members is None:
                continue
            budget[0] -= 1
            need = req[row]
            au = ad = 0
            for v in members:
                if v not in assign:
                    if is_up[v]:
                        au += 1
                    else:
                        ad += 1
            if row in flex_rows:
                # the row may finish at any multiple of the modulus
                k_lo = -(-(need - au) // modulus)  # ceil
                k_hi = (need + ad) // modulus
                if k_lo > k_hi:
                    return False
                if k_lo != k_hi:
                    continue
                need = need - k_lo * modulus
            if need > au or need < -ad:
                return False
            if (au or ad) and (need == au or need == -ad):
                forced_all_up = need == au
                for v in list(members):
                    if v in assign:
                        continue
                    if forced_all_up:
                        val = 1 if is_up[v] else 0
                    else:
                        val = -1 if not is_up[v] else 0
                    _assign(v, val, trail)
                    if val != 0:
                        dirty.update(var_rows[v])
        return True

    def pick_row():
        best, best_key = None, None
        for row, need in req.items():
            if need == 0 or (row in flex_rows and need % modulus == 0):
                continue
            free = sum(1 for v in row_vars[row] if v not in assign)
            key = (free, row)
            if best_key is None or key < best_key:
                best, best_key = row, key
        return best

    def dfs(trail, dirty, depth):
        if budget[0] <= 0 or depth > 400:
            return False
        if not propagate(trail, dirty):
            return False
        row = pick_row()
        if row is None:
            return True  # every row cancelled; leftovers stay zero
        free = [v for v in row_vars[row] if v not in assign]
        if not free:
            return False
        v = min(free)
        need = req[row]
        first = (1 if need > 0 else 0) if is_up[v] else (-1 if need < 0 else 0)
        second = 0 if first != 0 else (1 if is_up[v] else -1)
        for val in (first, second):
            mark = len(trail)
            _assign(v, val, trail)
            child_dirty = set(var_rows[v]) if val != 0 else {row}
            if dfs(trail, child_dirty, depth + 1):
                return True
            undo(trail, mark)
        return False

    trail: list[int] = []
    if not dfs(trail, set(req), 0):
        return None
    return list(assign.items())


def revert(state: DecoderState, indices: Sequence[int]) -> DecoderState:
    """Clear previously recovered candidates and re-credit the residue.

    Every index must currently be set in the signal; asking to revert an
    unset candidate is a protocol logic bug and raises.
    """
    for idx in indices:
        if state.x[idx] == 0:
            raise ValueError(f"candidate {idx} is not set; nothing to revert")
    for idx in indices:
        state.x[idx] = 0
        state.residue[state.supports[idx]] += 1
        state._apply_row_deltas(state.supports[idx])
        state.update_log.append((int(idx), -1))
    return state
