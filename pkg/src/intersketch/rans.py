"""Range asymmetric-numeral-systems coder over quantized symbol models.

Stream construction (fixed constants, part of the wire contract):

* 32-bit state, byte-wise renormalization, lower bound L = 2^23;
* 12-bit quantized frequencies (the model's quantization_bits must match);
* symbols are consumed in reverse during encoding so decoding runs forward;
* the encoder starts at exactly L and the decoder checks it ends at L, which
  catches corrupt or truncated streams;
* out-of-alphabet values go through the model's escape symbol, their raw
  value appended as a 64-bit word in forward symbol order.

Blob layout, little-endian: count u32 | rans_len u32 | rans bytes |
escape_count u32 | escape values i64 each.
"""

from __future__ import annotations

import struct

import numpy as np
from numba import njit

from .skellam import SymbolModel

RANS_L = 1 << 23
PROB_BITS_REQUIRED = 12


class CodecError(ValueError):
    """Corrupt, truncated, or model-incompatible coded stream."""


@njit(cache=True)
def _encode_kernel(sym, freqs, cum, prob_bits, out):
    """Encode symbols back-to-front into the tail of ``out``; returns start offset."""
    x = RANS_L
    ptr = out.size
    for i in range(sym.size - 1, -1, -1):
        s = sym[i]
        f = freqs[s]
        x_max = ((RANS_L >> prob_bits) << 8) * f
        while x >= x_max:
            ptr -= 1
            out[ptr] = x & 0xFF
            x >>= 8
        x = ((x // f) << prob_bits) + (x % f) + cum[s]
    for k in range(4):
        ptr -= 1
        out[ptr] = (x >> (8 * k)) & 0xFF
    return ptr


@njit(cache=True)
def _decode_kernel(data, count, freqs, cum, slot2sym, prob_bits, out_sym):
    """Decode forward; returns 0 on success, 1 on corruption."""
    if data.size < 4:
        return 1
    x = 0
    for k in range(4):
        x = (x << 8) | data[k]
    p = 4
    mask = (1 << prob_bits) - 1
    for i in range(count):
        slot = x & mask
        s = slot2sym[slot]
        out_sym[i] = s
        x = freqs[s] * (x >> prob_bits) + slot - cum[s]
        while x < RANS_L:
            if p >= data.size:
                return 1
            x = (x << 8) | data[p]
            p += 1
    if x != RANS_L or p != data.size:
        return 1
    return 0


def encode(values: np.ndarray, model: SymbolModel) -> bytes:
    """Entropy-code integer values under the model; bit-exact round trip."""
    if model.quantization_bits != PROB_BITS_REQUIRED:
        raise CodecError(f"model must use {PROB_BITS_REQUIRED}-bit frequencies")
    values = np.asarray(values, dtype=np.int64)
    sym = model.symbol_indices(values)
    escapes = values[sym == model.escape_index]
    if escapes.size and model.freqs[model.escape_index] == 0:
        raise CodecError("value outside alphabet but model has no escape")
    out = np.empty(3 * values.size + 16, dtype=np.uint8)
    start = _encode_kernel(sym, model.freqs.astype(np.int64), model.cum,
                           model.quantization_bits, out)
    body = out[start:].tobytes()
    parts = [
        struct.pack("<II", values.size, len(body)),
        body,
        struct.pack("<I", escapes.size),
        escapes.astype("<i8").tobytes(),
    ]
    return b"".join(parts)


def decode(blob: bytes, model: SymbolModel) -> np.ndarray:
    """Inverse of :func:`encode`; raises CodecError on any inconsistency."""
    if model.quantization_bits != PROB_BITS_REQUIRED:
        raise CodecError(f"model must use {PROB_BITS_REQUIRED}-bit frequencies")
    if len(blob) < 12:
        raise CodecError("stream too short")
    count, body_len = struct.unpack_from("<II", blob, 0)
    off = 8
    if len(blob) < off + body_len + 4:
        raise CodecError("stream length mismatch")
    body = np.frombuffer(blob, dtype=np.uint8, offset=off, count=body_len)
    off += body_len
    (n_escape,) = struct.unpack_from("<I", blob, off)
    off += 4
    if len(blob) != off + 8 * n_escape:
        raise CodecError("stream length mismatch")
    raws = np.frombuffer(blob, dtype="<i8", offset=off, count=n_escape).astype(np.int64)
    sym = np.empty(count, dtype=np.int64)
    status = _decode_kernel(body, count, model.freqs.astype(np.int64), model.cum,
                            model.slot_to_symbol, model.quantization_bits, sym)
    if status != 0:
        raise CodecError("corrupt rANS stream")
    values = sym + model.k_min
    esc_positions = np.nonzero(sym == model.escape_index)[0]
    if esc_positions.size != n_escape:
        raise CodecError("escape count mismatch")
    values[esc_positions] = raws
    return values


def encoded_size(blob: bytes) -> int:
    return len(blob)
