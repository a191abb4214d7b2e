"""Element-id containers.

Element ids are u-bit values with u up to 256.  Internally a set of ids is an
(n, w) uint64 array of little-endian words, w = ceil(u / 64), which keeps
hashing and set arithmetic vectorized.  Ids of at most 64 bits key the hash
streams directly; longer ids are pre-digested to a 128-bit key with two
independent keyed hashes.
"""

from __future__ import annotations

from typing import Iterable, Iterator

import numpy as np

from . import hashing

MAX_UNIVERSE_BITS = 256


def words_for_bits(bits: int) -> int:
    if not 1 <= bits <= MAX_UNIVERSE_BITS:
        raise ValueError(f"universe_bits must be in [1, {MAX_UNIVERSE_BITS}], got {bits}")
    return (bits + 63) // 64


class IdArray:
    """Immutable batch of u-bit element ids."""

    __slots__ = ("words", "bits")

    def __init__(self, words: np.ndarray, bits: int):
        w = words_for_bits(bits)
        words = np.ascontiguousarray(words, dtype=np.uint64)
        if words.ndim != 2 or words.shape[1] != w:
            raise ValueError(f"expected shape (n, {w}) for {bits}-bit ids, got {words.shape}")
        self.words = words
        self.bits = bits
        self.words.setflags(write=False)

    def __len__(self) -> int:
        return self.words.shape[0]

    @classmethod
    def from_ints(cls, values: Iterable[int], bits: int) -> "IdArray":
        vals = list(values)
        w = words_for_bits(bits)
        out = np.zeros((len(vals), w), dtype=np.uint64)
        for i, v in enumerate(vals):
            if v < 0 or v >> bits:
                raise ValueError(f"id {v} does not fit in {bits} bits")
            for col in range(w):
                out[i, col] = (v >> (64 * col)) & hashing.MASK64
        return cls(out, bits)

    def to_ints(self) -> list[int]:
        shifts = [64 * c for c in range(self.words.shape[1])]
        return [
            sum(int(row[c]) << shifts[c] for c in range(len(shifts)))
            for row in self.words
        ]

    def __iter__(self) -> Iterator[int]:
        return iter(self.to_ints())

    def keys(self, seed: int) -> tuple[np.ndarray, np.ndarray]:
        """128-bit hash keys (k0, k1) for every id, as two uint64 arrays."""
        if self.bits <= 64:
            return self.words[:, 0], np.zeros(len(self), dtype=np.uint64)
        k0 = hashing.digest_words_vec(self.words, seed, hashing.DOMAIN_DIGEST_LO)
        k1 = hashing.digest_words_vec(self.words, seed, hashing.DOMAIN_DIGEST_HI)
        return k0, k1

    def packed(self) -> np.ndarray:
        """1-D void view usable with np.unique / np.isin for exact set algebra."""
        arr = np.ascontiguousarray(self.words)
        return arr.view([("", np.uint64)] * arr.shape[1]).reshape(-1)

    def take(self, index: np.ndarray) -> "IdArray":
        return IdArray(self.words[index], self.bits)

    def sorted(self) -> "IdArray":
        order = np.argsort(self.packed(), kind="stable")
        return self.take(order)

    def set_equal(self, other: "IdArray") -> bool:
        if self.bits != other.bits or len(self) != len(other):
            return False
        return bool(np.array_equal(np.sort(self.packed()), np.sort(other.packed())))

    def difference(self, other: "IdArray") -> "IdArray":
        mask = ~np.isin(self.packed(), other.packed())
        return self.take(np.nonzero(mask)[0])

    def intersection(self, other: "IdArray") -> "IdArray":
        mask = np.isin(self.packed(), other.packed())
        return self.take(np.nonzero(mask)[0])


def single_key(value: int, bits: int, seed: int) -> tuple[int, int]:
    """Hash key of one id, matching IdArray.keys row-wise."""
    if value < 0 or value >> bits:
        raise ValueError(f"id {value} does not fit in {bits} bits")
    if bits <= 64:
        return value, 0
    w = words_for_bits(bits)
    words = tuple((value >> (64 * c)) & hashing.MASK64 for c in range(w))
    k0 = hashing.digest_words(words, seed, hashing.DOMAIN_DIGEST_LO)
    k1 = hashing.digest_words(words, seed, hashing.DOMAIN_DIGEST_HI)
    return k0, k1
