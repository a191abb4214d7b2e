"""Set membership filter: a plain Bloom filter.

Used by the two-party protocol to tell the peer which candidates it has
already claimed (so the peer avoids claiming them too), and available as a
standalone utility.  No false negatives ever; the false positive rate is set
at build time and the sizing follows the standard optimum
L = ceil(n * log2(e) * log2(1/fpp)), k = ceil((L/n) * ln 2).
"""

from __future__ import annotations

import math
import struct

import numpy as np

from . import hashing
from .ids import IdArray

_HEADER = struct.Struct("<IBQ")  # bit count, hash count, seed


class BloomFilter:
    """Fixed-size bit array with k seeded probe positions per element."""

    __slots__ = ("bits", "hash_count", "seed", "inserted_count")

    def __init__(self, bit_count: int, hash_count: int, seed: int, inserted_count: int = 0,
                 bits: np.ndarray | None = None):
        if bit_count <= 0 or hash_count <= 0:
            raise ValueError("bit_count and hash_count must be positive")
        self.bits = np.zeros(bit_count, dtype=np.uint8) if bits is None else bits
        if self.bits.shape != (bit_count,):
            raise ValueError("bits array does not match bit_count")
        self.hash_count = hash_count
        self.seed = seed
        self.inserted_count = inserted_count

    @property
    def bit_count(self) -> int:
        return self.bits.size

    def _probes(self, elements: IdArray) -> np.ndarray:
        base = hashing.domain_base(self.seed, hashing.DOMAIN_FILTER)
        k0, k1 = elements.keys(self.seed)
        state = hashing.element_state_vec(base, k0, k1)
        counters = np.arange(self.hash_count, dtype=np.uint64)
        draws = hashing.draw_vec(state[:, None], counters[None, :])
        return (draws % np.uint64(self.bit_count)).astype(np.int64)

    def insert_many(self, elements: IdArray) -> None:
        if len(elements):
            self.bits[self._probes(elements).ravel()] = 1
        self.inserted_count += len(elements)

    def query_many(self, elements: IdArray) -> np.ndarray:
        """Boolean membership verdicts for a batch of ids."""
        if not len(elements):
            return np.zeros(0, dtype=bool)
        return self.bits[self._probes(elements)].all(axis=1)

    def query(self, elements: IdArray | int, universe_bits: int | None = None) -> np.ndarray | bool:
        if isinstance(elements, IdArray):
            return self.query_many(elements)
        if universe_bits is None:
            raise ValueError("querying a bare int id needs universe_bits")
        return bool(self.query_many(IdArray.from_ints([elements], universe_bits))[0])

    # -- wire format: bit count u32 LE, hash count u8, seed u64 LE, packed bits

    def to_bytes(self) -> bytes:
        packed = np.packbits(self.bits, bitorder="little").tobytes()
        return _HEADER.pack(self.bit_count, self.hash_count, self.seed) + packed

    @classmethod
    def from_bytes(cls, payload: bytes) -> "BloomFilter":
        bit_count, hash_count, seed = _HEADER.unpack_from(payload, 0)
        raw = np.frombuffer(payload, dtype=np.uint8, offset=_HEADER.size)
        if raw.size != (bit_count + 7) // 8:
            raise ValueError("filter payload length mismatch")
        bits = np.unpackbits(raw, count=bit_count, bitorder="little")
        return cls(bit_count, hash_count, seed, bits=bits)

    def wire_size(self) -> int:
        return _HEADER.size + (self.bit_count + 7) // 8


def bf_build(elements: IdArray, target_fpp: float, seed: int = 0) -> BloomFilter:
    """Build a filter sized for the element count at the target FPP.

    The empty set degenerates to an 8-bit always-false filter.
    """
    if not 0.0 < target_fpp < 1.0:
        raise ValueError("target_fpp must be in (0, 1)")
    n = len(elements)
    if n == 0:
        return BloomFilter(8, 1, seed)
    bit_count = math.ceil(n * math.log2(math.e) * math.log2(1.0 / target_fpp))
    bit_count = max(bit_count, 8)
    hash_count = max(1, math.ceil(bit_count / n * math.log(2)))
    filt = BloomFilter(bit_count, hash_count, seed)
    filt.insert_many(elements)
    return filt


def bf_query(filt: BloomFilter, elements: IdArray) -> np.ndarray:
    return filt.query_many(elements)
