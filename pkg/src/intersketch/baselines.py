"""Comparison baselines: information-theoretic bounds and an invertible
Bloom lookup table.

The intersection bound counts how many ways each party could partition its
set into shared and unique parts; the reconciliation bound is the classic
d * log2(e * universe / d) bits.  The lookup table is the standard
three-field-cell design decoded by peeling pure cells, sized at a 1.36
hedge over the difference cardinality with four hash probes per element.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass

import numpy as np

from . import hashing
from .ids import IdArray

IBLT_HASH_COUNT = 4
IBLT_HEDGE = 1.36
_DOMAIN_CELL = 0x49424C54_43454C4C
_DOMAIN_FP = 0x49424C54_46505249


def setx_lower_bound(n_a: int, n_b: int, a_only: int, b_only: int) -> float:
    """Least bits any exact intersection protocol must move, given both
    unique-part cardinalities are known in advance."""
    if min(n_a, n_b, a_only, b_only) < 0 or a_only > n_a or b_only > n_b:
        raise ValueError("inconsistent cardinalities")
    return _log2_binom(n_a, a_only) + _log2_binom(n_b, b_only)


def setr_lower_bound(d: int, universe_bits: int) -> float:
    """Least bits for exact reconciliation of d differences over u-bit ids."""
    if d < 1:
        raise ValueError("d must be >= 1")
    return d * (math.log2(math.e) + universe_bits - math.log2(d))


def _log2_binom(n: int, k: int) -> float:
    if k in (0, n):
        return 0.0
    return (math.lgamma(n + 1) - math.lgamma(k + 1) - math.lgamma(n - k + 1)) / math.log(2)


@dataclass
class IbltParams:
    cell_count: int
    hash_count: int = IBLT_HASH_COUNT
    fingerprint_bits: int = 32
    seed: int = 0

    @classmethod
    def for_difference(cls, d: int, fingerprint_bits: int = 32, seed: int = 0) -> "IbltParams":
        cells = max(2 * IBLT_HASH_COUNT, math.ceil(IBLT_HEDGE * d))
        cells += (-cells) % IBLT_HASH_COUNT  # partitioned layout
        return cls(cells, IBLT_HASH_COUNT, fingerprint_bits, seed)


class IbltTable:
    """count / id-XOR / fingerprint-XOR cells supporting subtraction and peeling."""

    def __init__(self, params: IbltParams, universe_bits: int = 64):
        self.params = params
        self.universe_bits = universe_bits
        n = params.cell_count
        self.count = np.zeros(n, dtype=np.int64)
        self.id_sum = np.zeros(n, dtype=np.uint64)
        self.fp_sum = np.zeros(n, dtype=np.uint64)

    def _positions(self, keys64: np.ndarray) -> np.ndarray:
        """One probe cell per hash in its own subtable (standard partitioned
        layout; also guarantees the probes are distinct)."""
        base = hashing.domain_base(self.params.seed, _DOMAIN_CELL)
        state = hashing.element_state_vec(base, keys64, np.zeros_like(keys64))
        k = self.params.hash_count
        sub = self.params.cell_count // k
        counters = np.arange(k, dtype=np.uint64)
        draws = hashing.draw_vec(state[:, None], counters[None, :])
        offsets = (np.arange(k) * sub).astype(np.int64)
        return (draws % np.uint64(sub)).astype(np.int64) + offsets[None, :]

    def _fingerprints(self, keys64: np.ndarray) -> np.ndarray:
        base = hashing.domain_base(self.params.seed, _DOMAIN_FP)
        f = hashing.element_state_vec(base, keys64, np.zeros_like(keys64))
        return f & np.uint64((1 << self.params.fingerprint_bits) - 1)

    def insert_keys(self, keys64: np.ndarray, sign: int = 1) -> None:
        keys64 = np.asarray(keys64, dtype=np.uint64)
        pos = self._positions(keys64)
        fps = self._fingerprints(keys64)
        for k in range(self.params.hash_count):
            np.add.at(self.count, pos[:, k], sign)
            np.bitwise_xor.at(self.id_sum, pos[:, k], keys64)
            np.bitwise_xor.at(self.fp_sum, pos[:, k], fps)

    def is_empty(self) -> bool:
        return (
            not self.count.any() and not self.id_sum.any() and not self.fp_sum.any()
        )

    def copy(self) -> "IbltTable":
        out = IbltTable(self.params, self.universe_bits)
        out.count = self.count.copy()
        out.id_sum = self.id_sum.copy()
        out.fp_sum = self.fp_sum.copy()
        return out

    def serialized_size(self) -> int:
        """Bytes on the wire: count, id and fingerprint fields per cell."""
        fp_bytes = (self.params.fingerprint_bits + 7) // 8
        return self.params.cell_count * (4 + 8 + fp_bytes)


def iblt_encode(elements: IdArray, params: IbltParams) -> IbltTable:
    """Table of a set; ids wider than 64 bits enter by their 64-bit digest."""
    table = IbltTable(params, elements.bits)
    keys = _keys64(elements, params.seed)
    if len(elements):
        table.insert_keys(keys)
    return table


def _keys64(elements: IdArray, seed: int) -> np.ndarray:
    if elements.bits <= 64:
        return elements.words[:, 0].astype(np.uint64)
    k0, _ = elements.keys(seed)
    return k0


def iblt_subtract(t1: IbltTable, t2: IbltTable) -> IbltTable:
    if t1.params != t2.params:
        raise ValueError("tables built with different parameters")
    out = t1.copy()
    out.count -= t2.count
    out.id_sum ^= t2.id_sum
    out.fp_sum ^= t2.fp_sum
    return out


class PeelFailure(RuntimeError):
    """No pure cell remained before the table emptied."""


def iblt_peel(table: IbltTable) -> tuple[list[int], list[int]]:
    """Recover (keys only in t1, keys only in t2) from a subtracted table.

    A cell is pure when its count is +-1 and the fingerprint of its id-sum
    matches its fingerprint-sum; peeling it removes one key everywhere it
    was hashed.  Raises PeelFailure if the process strands mass, which the
    caller treats as an undersized table.
    """
    work = table.copy()
    pos_keys: list[int] = []
    neg_keys: list[int] = []
    queue = [i for i in range(work.params.cell_count) if _pure(work, i)]
    while queue:
        i = queue.pop()
        if not _pure(work, i):
            continue
        sign = int(work.count[i])
        key = np.uint64(work.id_sum[i])
        (pos_keys if sign > 0 else neg_keys).append(int(key))
        keys = np.array([key], dtype=np.uint64)
        pos = work._positions(keys)[0]
        fp = work._fingerprints(keys)[0]
        for cell in pos:
            work.count[cell] -= sign
            work.id_sum[cell] ^= key
            work.fp_sum[cell] ^= fp
            if _pure(work, cell):
                queue.append(int(cell))
    if not work.is_empty():
        raise PeelFailure("table did not peel to empty")
    return pos_keys, neg_keys


def _pure(table: IbltTable, i: int) -> bool:
    if table.count[i] not in (1, -1):
        return False
    key = np.array([table.id_sum[i]], dtype=np.uint64)
    return bool(table._fingerprints(key)[0] == table.fp_sum[i])


def iblt_reconcile_cost(params: IbltParams, universe_bits: int,
                        n_a: int, a_only: int) -> int:
    """Two-round reconciliation bytes: the table, then the initiator's
    unique elements identified back at log2(n_a) bits each."""
    fp_bytes = (params.fingerprint_bits + 7) // 8
    table_bytes = params.cell_count * (4 + 8 + fp_bytes)
    reply_bits = a_only * math.ceil(math.log2(max(n_a, 2)))
    return table_bytes + (reply_bits + 7) // 8
