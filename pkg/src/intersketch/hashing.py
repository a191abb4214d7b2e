"""Keyed 64-bit mixing hashes.

Every pseudo-random choice that must be reproducible across the two ends of a
session (matrix column supports, filter probes, element signatures, checksums)
is derived from the splitmix64 finalizer over a (seed, key, counter) tuple.
Scalar paths work on Python ints, vector paths on uint64 numpy arrays; both
produce identical streams.
"""

from __future__ import annotations

import numpy as np

MASK64 = (1 << 64) - 1

_GOLDEN = 0x9E3779B97F4A7C15
_MUL1 = 0xBF58476D1CE4E5B9
_MUL2 = 0x94D049BB133111EB

# Domain separation constants so independent uses of the same seed do not
# share hash streams.
DOMAIN_SUPPORT = 0x53555050_4F525431
DOMAIN_FILTER = 0x424C4F4F_4D464C54
DOMAIN_SIGNATURE = 0x5349474E_41545552
DOMAIN_DIGEST_LO = 0x44494745_53544C4F
DOMAIN_DIGEST_HI = 0x44494745_53544849
DOMAIN_CHECKSUM = 0x43484543_4B53554D

_U = np.uint64
_V_GOLDEN = _U(_GOLDEN)
_V_MUL1 = _U(_MUL1)
_V_MUL2 = _U(_MUL2)


def mix64(x: int) -> int:
    """splitmix64 finalizer on a 64-bit value."""
    x &= MASK64
    x ^= x >> 30
    x = (x * _MUL1) & MASK64
    x ^= x >> 27
    x = (x * _MUL2) & MASK64
    x ^= x >> 31
    return x


def mix64_vec(x: np.ndarray) -> np.ndarray:
    """Vectorized splitmix64 finalizer over a uint64 array."""
    x = x.astype(np.uint64, copy=True)
    x ^= x >> _U(30)
    x *= _V_MUL1
    x ^= x >> _U(27)
    x *= _V_MUL2
    x ^= x >> _U(31)
    return x


def domain_base(seed: int, domain: int) -> int:
    """Per-(seed, domain) hash-stream base."""
    return mix64((seed ^ domain) & MASK64)


def element_state(base: int, k0: int, k1: int) -> int:
    """Per-element hash state from a domain base and a 128-bit element key."""
    return mix64(mix64(base ^ k0) ^ k1)


def element_state_vec(base: int, k0: np.ndarray, k1: np.ndarray) -> np.ndarray:
    h = mix64_vec(np.bitwise_xor(_U(base), k0.astype(np.uint64)))
    return mix64_vec(np.bitwise_xor(h, k1.astype(np.uint64)))


def draw(state: int, counter: int) -> int:
    """counter-th 64-bit value of the stream rooted at ``state``."""
    return mix64(state ^ ((counter * _GOLDEN) & MASK64))


def draw_vec(state: np.ndarray, counter: np.ndarray) -> np.ndarray:
    """Broadcasting vector form of :func:`draw`."""
    c = counter.astype(np.uint64) * _V_GOLDEN
    return mix64_vec(np.bitwise_xor(state.astype(np.uint64), c))


def digest_words_vec(words: np.ndarray, seed: int, domain: int) -> np.ndarray:
    """Chain-hash each row of an (n, w) uint64 array down to one 64-bit lane."""
    h = np.full(words.shape[0], _U(domain_base(seed, domain)), dtype=np.uint64)
    for col in range(words.shape[1]):
        h = mix64_vec(np.bitwise_xor(h, words[:, col].astype(np.uint64)))
    return h


def digest_words(words: tuple[int, ...], seed: int, domain: int) -> int:
    h = domain_base(seed, domain)
    for w in words:
        h = mix64(h ^ w)
    return h
