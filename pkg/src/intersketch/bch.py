"""Syndrome-only BCH code over GF(2^10) for parity patching.

Rather than shipping a parity bit-vector, the sender ships only the BCH
syndromes of that vector (odd powers; even ones follow by squaring).  The
receiver XORs in the syndromes of its own locally computed vector: because
syndromes are linear over GF(2), the result is the syndrome of the
difference, and Berlekamp-Massey plus a Chien search pinpoint every
differing position as long as there are at most t of them.  More than t
differences yield a degree overflow or a root-count mismatch, which is
signaled (never silently mis-applied) except for the rare undetectable
miscorrection inherent to bounded-distance decoding.

Vectors longer than the 1023-bit block length are chunked; chunks decode
independently so one overloaded chunk does not poison the rest.

Field: GF(2^10), primitive polynomial x^10 + x^3 + 1; block length 1023;
syndromes are packed 10 bits each, t per chunk.
"""

from __future__ import annotations

import numpy as np

FIELD_BITS = 10
BLOCK_LEN = (1 << FIELD_BITS) - 1  # 1023
_PRIM_POLY = 0x409  # x^10 + x^3 + 1
MAX_T = 100  # beyond this the syndrome outgrows the parity vector itself


def _build_tables():
    alog = np.zeros(2 * BLOCK_LEN, dtype=np.int32)
    log = np.zeros(BLOCK_LEN + 1, dtype=np.int32)
    x = 1
    for i in range(BLOCK_LEN):
        alog[i] = x
        log[x] = i
        x <<= 1
        if x & (1 << FIELD_BITS):
            x ^= _PRIM_POLY | (1 << FIELD_BITS)
    alog[BLOCK_LEN:] = alog[:BLOCK_LEN]
    return alog, log

_ALOG, _LOG = _build_tables()


def _gf_mul(a: int, b: int) -> int:
    if a == 0 or b == 0:
        return 0
    return int(_ALOG[_LOG[a] + _LOG[b]])


def _gf_inv(a: int) -> int:
    if a == 0:
        raise ZeroDivisionError("GF inverse of zero")
    return int(_ALOG[BLOCK_LEN - _LOG[a]])


def _syndromes_odd(positions: np.ndarray, t: int) -> np.ndarray:
    """S_1, S_3, ..., S_{2t-1} of the bit vector with ones at ``positions``."""
    out = np.zeros(t, dtype=np.int32)
    if positions.size == 0:
        return out
    for j in range(t):
        k = 2 * j + 1
        idx = (k * positions.astype(np.int64)) % BLOCK_LEN
        out[j] = np.bitwise_xor.reduce(_ALOG[idx])
    return out


def _full_syndromes(odd: np.ndarray, t: int) -> list[int]:
    """S_1..S_2t from the odd ones, using S_2k = S_k^2 over GF(2^m)."""
    S = [0] * (2 * t + 1)  # 1-indexed
    for k in range(1, 2 * t + 1):
        if k % 2 == 1:
            S[k] = int(odd[(k - 1) // 2])
        else:
            S[k] = _gf_mul(S[k // 2], S[k // 2])
    return S[1:]


def _berlekamp_massey(S: list[int], t: int) -> list[int] | None:
    """Minimal LFSR (error locator) for the syndrome sequence; None if deg > t."""
    n2 = len(S)
    C = [0] * (n2 + 1)
    B = [0] * (n2 + 1)
    C[0] = B[0] = 1
    L, shift, b = 0, 1, 1
    for n in range(n2):
        d = S[n]
        for i in range(1, L + 1):
            d ^= _gf_mul(C[i], S[n - i])
        if d == 0:
            shift += 1
        elif 2 * L <= n:
            T = C.copy()
            coef = _gf_mul(d, _gf_inv(b))
            for i in range(n2 + 1 - shift):
                C[i + shift] ^= _gf_mul(coef, B[i])
            L = n + 1 - L
            B = T
            b = d
            shift = 1
        else:
            coef = _gf_mul(d, _gf_inv(b))
            for i in range(n2 + 1 - shift):
                C[i + shift] ^= _gf_mul(coef, B[i])
            shift += 1
    if L > t or any(c for c in C[L + 1 :]):
        return None
    return C[: L + 1]


def _chien_roots(locator: list[int], limit: int) -> np.ndarray | None:
    """Positions p < limit with locator(alpha^-p) = 0; None unless the count
    matches the locator degree exactly (that mismatch is the overload signal)."""
    degree = len(locator) - 1
    if degree == 0:
        return np.zeros(0, dtype=np.int64)
    p = np.arange(BLOCK_LEN, dtype=np.int64)
    acc = np.full(BLOCK_LEN, locator[0], dtype=np.int32)
    for i in range(1, degree + 1):
        ci = locator[i]
        if ci == 0:
            continue
        exp = (_LOG[ci] + (BLOCK_LEN - (p * i) % BLOCK_LEN) % BLOCK_LEN) % BLOCK_LEN
        acc ^= _ALOG[exp]
    roots = np.nonzero(acc == 0)[0]
    if roots.size != degree or (roots >= limit).any():
        return None
    return roots


def _pack10(values: np.ndarray) -> bytes:
    bits = ((values[:, None].astype(np.uint16) >> np.arange(FIELD_BITS)) & 1).astype(np.uint8)
    return np.packbits(bits.ravel(), bitorder="little").tobytes()


def _unpack10(raw: bytes, count: int) -> np.ndarray:
    bits = np.unpackbits(np.frombuffer(raw, dtype=np.uint8), bitorder="little")
    bits = bits[: count * FIELD_BITS].reshape(count, FIELD_BITS).astype(np.int32)
    return (bits << np.arange(FIELD_BITS)).sum(axis=1)


def syndrome_bytes_per_chunk(t: int) -> int:
    return (t * FIELD_BITS + 7) // 8


def chunk_count(n_bits: int) -> int:
    return max(1, (n_bits + BLOCK_LEN - 1) // BLOCK_LEN)


def bch_encode_parities(bits: np.ndarray, t: int) -> bytes:
    """Packed odd syndromes of a 0/1 vector, one group per 1023-bit chunk."""
    if not 1 <= t <= MAX_T:
        raise ValueError(f"t must be in [1, {MAX_T}]")
    bits = np.asarray(bits, dtype=np.uint8)
    parts = []
    for start in range(0, max(len(bits), 1), BLOCK_LEN):
        chunk = bits[start : start + BLOCK_LEN]
        positions = np.nonzero(chunk)[0]
        parts.append(_pack10(_syndromes_odd(positions, t)))
    return b"".join(parts)


def bch_correct(local_bits: np.ndarray, syndrome: bytes, t: int):
    """Positions where the remote vector differs from ``local_bits``.

    Returns (flip_positions, failed_chunks); positions from chunks that
    decode cleanly are exact whenever that chunk holds at most t
    differences of the true vectors, and overloaded chunks land in
    failed_chunks instead of producing corrupt flips.
    """
    local_bits = np.asarray(local_bits, dtype=np.uint8)
    per = syndrome_bytes_per_chunk(t)
    n_chunks = chunk_count(len(local_bits))
    if len(syndrome) != per * n_chunks:
        raise ValueError("syndrome length does not match vector length and t")
    flips: list[np.ndarray] = []
    failed: list[int] = []
    for c in range(n_chunks):
        start = c * BLOCK_LEN
        chunk = local_bits[start : start + BLOCK_LEN]
        remote = _unpack10(syndrome[c * per : (c + 1) * per], t)
        local = _syndromes_odd(np.nonzero(chunk)[0], t)
        diff = local ^ remote
        if not diff.any():
            continue
        locator = _berlekamp_massey(_full_syndromes(diff, t), t)
        roots = _chien_roots(locator, len(chunk)) if locator is not None else None
        if roots is None:
            failed.append(c)
            continue
        flips.append(roots + start)
    out = np.concatenate(flips) if flips else np.zeros(0, dtype=np.int64)
    out.sort()
    return out, failed
