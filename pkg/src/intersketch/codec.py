"""Payload codecs for the protocol messages.

Sketch payload (the big first message) uses statistical truncation: the two
parties' per-row counts differ by a Skellam-distributed amount that lands in
a small interval [v, w] with high probability, so the sender ships only each
count's remainder modulo (w - v + 1) plus a BCH syndrome of the quotient
parity bits.  The receiver reconstructs each count as the unique congruent
value whose difference from its own count lies in [v, w]; rows where the
true difference escaped the interval are patched back using the corrected
parity (choosing the congruent value the difference model likes best).
Residual glitches (whole moduli on a few rows) are left for the decoder,
which treats them as noise.

Residue payloads are plain Skellam-modeled rANS streams with the fitted
rates shipped as two doubles.

All layouts little-endian:

  SKETCH:  v i32 | w i32 | parity_levels u8 | bch_t u16 |
           mu1 f64 | mu2 f64 | rans_len u32 | rans | bch_len u32 | bch
  RESIDUE: mu1 f64 | mu2 f64 | rans_len u32 | rans
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from . import bch, rans, skellam
from .matrix import MatrixSpec
from .sketch import Sketch

DEFAULT_P_TRUNC = 1e-3

_TRUNC_HDR = struct.Struct("<iiBH")
_MODEL_HDR = struct.Struct("<dd")
_LEN = struct.Struct("<I")


@dataclass(frozen=True)
class TruncationParams:
    """Remainder range and parity-patch configuration."""

    v: int
    w: int
    parity_levels: int = 1
    bch_t: int = 12

    def __post_init__(self):
        if not self.v <= 0 <= self.w:
            raise ValueError("range must straddle zero")
        if self.parity_levels < 0 or not 1 <= self.bch_t <= bch.MAX_T:
            raise ValueError("bad parity configuration")

    @property
    def modulus(self) -> int:
        return self.w - self.v + 1


@dataclass(frozen=True)
class SketchPrior:
    """Cardinality estimates the sender compresses against.

    peer_only / self_only are the expected counts of elements unique to the
    receiver / sender; they set the rates of the difference model.
    """

    peer_only: int
    self_only: int


@dataclass
class RecoveryInfo:
    parity_ok: bool
    parity_corrections: int
    failed_chunks: int


def difference_rates(spec: MatrixSpec, prior: SketchPrior) -> tuple[float, float]:
    scale = spec.ones_per_column / spec.rows
    return prior.peer_only * scale, prior.self_only * scale


def _bch_capacity(p_out: float, rows: int, floor_p: float = 0.0) -> int:
    chunk_len = min(max(rows, 1), bch.BLOCK_LEN)
    expected = chunk_len * max(p_out, floor_p)
    return max(1, int(np.ceil(2.0 * expected + 10.0)))


def derive_truncation(
    mu1: float,
    mu2: float,
    rows: int,
    p_trunc: float | None = DEFAULT_P_TRUNC,
    parity_levels: int = 1,
    risk_budget: float = 0.05,
) -> TruncationParams:
    """Pick the remainder range and the BCH capacity.

    With an explicit p_trunc the range is the smallest interval whose tails
    each stay under p_trunc / 2, and the BCH capacity is twice the expected
    per-chunk escape count plus headroom.  With p_trunc=None the range is
    chosen to minimize the predicted payload: remainder bits shrink with the
    range while parity-patch bits grow with the escape probability, and the
    model prices both sides.
    """
    if p_trunc is not None:
        v, w, p_out = skellam.truncation_interval(mu1, mu2, p_trunc)
        t = min(bch.MAX_T, _bch_capacity(p_out, rows, p_trunc))
        return TruncationParams(v, w, parity_levels, t)
    k_min, pmf = skellam.skellam_pmf(mu1, mu2)
    chunks = bch.chunk_count(rows)
    best: tuple[float, TruncationParams] | None = None
    for width in range(1, 65):
        v, w, p_out = _best_window(k_min, pmf, width)
        if v is None:
            continue
        t = _bch_capacity(p_out, rows)
        if t > bch.MAX_T:
            continue
        if rows * _residual_risk(k_min, pmf, v, w, parity_levels) > risk_budget:
            continue  # more unrepairable escapes than the caller tolerates
        cost = rows * np.log2(width) / 8.0
        cost += parity_levels * chunks * bch.syndrome_bytes_per_chunk(t)
        if best is None or cost < best[0]:
            best = (cost, TruncationParams(v, w, parity_levels, t))
    if best is None:
        # escape rate unprotectable at any narrow range: fall back to wide quantiles
        return derive_truncation(mu1, mu2, rows, DEFAULT_P_TRUNC, parity_levels)
    return best[1]


def _residual_risk(k_min: int, pmf: np.ndarray, v: int, w: int, levels: int) -> float:
    """Probability that a coordinate's recovery error survives the parity patch.

    An out-of-window difference shifts the recovered count by j moduli.
    Parity planes see any j not divisible by 2^levels; of the visible ones,
    the patch restores the value only when the model ranks the true side of
    the +-1-modulus pair at least as high as the other.
    """
    modulus = w - v + 1

    def p(diff: int) -> float:
        i = diff - k_min
        return float(pmf[i]) if 0 <= i < pmf.size else 0.0

    risk = 0.0
    for i, mass in enumerate(pmf):
        k = k_min + i
        if v <= k <= w or mass == 0.0:
            continue
        # replay the recovery of a coordinate whose true difference is k
        x = 1024 * modulus * max(1, 1 << levels)
        y = x + k
        x_hat = y - ((k - v) % modulus + v)
        for plane in range(levels):
            stride = modulus << plane
            if ((x // modulus) >> plane) & 1 != ((x_hat // modulus) >> plane) & 1:
                down, up = x_hat - stride, x_hat + stride
                x_hat = down if p(y - down) >= p(y - up) else up
        if x_hat != x:
            risk += mass
    return risk


def _best_window(k_min: int, pmf: np.ndarray, width: int):
    """Highest-mass width-sized window [v, w] with v <= 0 <= w."""
    zero = -k_min
    lo_min = max(0, zero - (width - 1))
    lo_max = min(zero, pmf.size - width)
    if lo_min > lo_max:
        return None, None, None
    cum = np.concatenate(([0.0], np.cumsum(pmf)))
    masses = cum[lo_min + width : lo_max + width + 1] - cum[lo_min : lo_max + 1]
    best = int(np.argmax(masses))
    lo = lo_min + best
    return lo + k_min, lo + k_min + width - 1, float(max(0.0, 1.0 - masses[best]))


def compress_sketch(
    sk: Sketch,
    prior: SketchPrior,
    params: TruncationParams | None = None,
    p_trunc: float | None = DEFAULT_P_TRUNC,
) -> bytes:
    mu1, mu2 = difference_rates(sk.spec, prior)
    if params is None:
        params = derive_truncation(mu1, mu2, sk.spec.rows, p_trunc)
    modulus = params.modulus
    remainders = np.mod(sk.values, modulus)
    quotients = sk.values // modulus
    model = skellam.folded_uniform_model(modulus)
    rans_blob = rans.encode(remainders, model)
    planes = []
    for plane in range(params.parity_levels):
        bits = ((quotients >> plane) & 1).astype(np.uint8)
        planes.append(bch.bch_encode_parities(bits, params.bch_t))
    bch_blob = b"".join(planes)
    return b"".join(
        [
            _TRUNC_HDR.pack(params.v, params.w, params.parity_levels, params.bch_t),
            _MODEL_HDR.pack(mu1, mu2),
            _LEN.pack(len(rans_blob)),
            rans_blob,
            _LEN.pack(len(bch_blob)),
            bch_blob,
        ]
    )


def recover_sketch(
    bob: Sketch, payload: bytes, element_count: int = 0
) -> tuple[Sketch, RecoveryInfo]:
    """Reconstruct the sender's sketch against the local one.

    Per row the result X_hat satisfies v <= Y - X_hat <= w with the received
    congruence; parity-plane corrections then move rows whose true
    difference escaped [v, w] to the most likely congruent value.  A failed
    BCH chunk only disables the patch for its rows.
    """
    spec = bob.spec
    v, w, parity_levels, bch_t = _TRUNC_HDR.unpack_from(payload, 0)
    off = _TRUNC_HDR.size
    mu1, mu2 = _MODEL_HDR.unpack_from(payload, off)
    off += _MODEL_HDR.size
    (rans_len,) = _LEN.unpack_from(payload, off)
    off += _LEN.size
    rans_blob = payload[off : off + rans_len]
    off += rans_len
    (bch_len,) = _LEN.unpack_from(payload, off)
    off += _LEN.size
    bch_blob = payload[off : off + bch_len]

    modulus = w - v + 1
    model = skellam.folded_uniform_model(modulus)
    remainders = rans.decode(rans_blob, model)
    if remainders.size != spec.rows:
        raise rans.CodecError("sketch payload length does not match the matrix")
    y = bob.values
    x_hat = y - (np.mod(y - remainders - v, modulus) + v)

    k_min, pmf = skellam.skellam_pmf(mu1, mu2)

    def prob(diff: np.ndarray) -> np.ndarray:
        idx = diff - k_min
        ok = (idx >= 0) & (idx < pmf.size)
        return np.where(ok, pmf[np.clip(idx, 0, pmf.size - 1)], 0.0)

    corrections = 0
    failed_total = 0
    per_plane = bch.syndrome_bytes_per_chunk(bch_t) * bch.chunk_count(spec.rows)
    if bch_len != per_plane * parity_levels:
        raise rans.CodecError("parity payload length mismatch")
    for plane in range(parity_levels):
        stride = modulus << plane
        quotients = x_hat // modulus
        local_bits = ((quotients >> plane) & 1).astype(np.uint8)
        syn = bch_blob[plane * per_plane : (plane + 1) * per_plane]
        flips, failed = bch.bch_correct(local_bits, syn, bch_t)
        failed_total += len(failed)
        if flips.size:
            down = x_hat[flips] - stride
            up = x_hat[flips] + stride
            p_down = prob(y[flips] - down)
            p_up = prob(y[flips] - up)
            p_up = np.where(up < 0, 0.0, p_up)
            p_down = np.where(down < 0, 0.0, p_down)
            x_hat[flips] = np.where(p_down >= p_up, down, up)
            corrections += int(flips.size)
    info = RecoveryInfo(parity_ok=failed_total == 0, parity_corrections=corrections,
                        failed_chunks=failed_total)
    return Sketch(x_hat, spec, element_count), info


def sketch_truncation(payload: bytes) -> TruncationParams:
    """Parse just the truncation header of a sketch payload."""
    v, w, parity_levels, bch_t = _TRUNC_HDR.unpack_from(payload, 0)
    return TruncationParams(v, w, parity_levels, bch_t)


def compress_residue(values: np.ndarray) -> bytes:
    mu1, mu2 = skellam.skellam_fit(values)
    model = skellam.build_model(mu1, mu2)
    blob = rans.encode(values, model)
    return _MODEL_HDR.pack(mu1, mu2) + _LEN.pack(len(blob)) + blob


def decompress_residue(payload: bytes, expected_len: int) -> np.ndarray:
    mu1, mu2 = _MODEL_HDR.unpack_from(payload, 0)
    off = _MODEL_HDR.size
    (n,) = _LEN.unpack_from(payload, off)
    off += _LEN.size
    values = rans.decode(payload[off : off + n], skellam.build_model(mu1, mu2))
    if values.size != expected_len:
        raise rans.CodecError("residue length mismatch")
    return values
