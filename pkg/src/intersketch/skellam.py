"""Integer symbol models for residue coordinates.

Residue coordinates are differences of two binomial-thinned counts, which at
protocol scale are near-exactly the difference of two independent Poisson
variables with rates (positive_support * m / l, negative_support * m / l).
The model here builds that difference distribution by convolving two
truncated Poisson pmfs in plain float arithmetic (rates at play are small,
so the convolution is exact to machine precision and needs no special
functions), trims it to an alphabet whose tail mass is below 2^-20, and
quantizes to integer frequencies for the entropy coder.

Moment fitting inverts mean = mu1 - mu2, variance = mu1 + mu2:
mu1 = (variance + mean) / 2 and mu2 = (variance - mean) / 2, floored at a
tiny epsilon so degenerate inputs stay valid rates.
"""

from __future__ import annotations

import math

import numpy as np

FIT_EPSILON = 1e-6
DEFAULT_QUANTIZATION_BITS = 12
TAIL_MASS = 2.0**-20
_MAX_ALPHABET = 2048


def skellam_fit(values: np.ndarray) -> tuple[float, float]:
    """Method-of-moments rate estimates from observed integer symbols."""
    values = np.asarray(values)
    if values.size == 0:
        raise ValueError("cannot fit an empty sample")
    mean = float(values.mean())
    var = float(values.var())
    mu1 = max(FIT_EPSILON, (var + mean) / 2.0)
    mu2 = max(FIT_EPSILON, (var - mean) / 2.0)
    return mu1, mu2


def _poisson_window(mu: float) -> tuple[int, np.ndarray]:
    """(offset, pmf) covering all but ~2^-60 of a Poisson distribution."""
    if mu < 1e-12:
        return 0, np.array([1.0])
    spread = 12.0 * math.sqrt(mu) + 30.0
    lo = max(0, int(mu - spread))
    hi = int(mu + spread) + 1
    ks = np.arange(lo, hi + 1)
    logpmf = ks * math.log(mu) - mu - np.array([math.lgamma(k + 1.0) for k in ks])
    return lo, np.exp(logpmf)


def skellam_pmf(mu1: float, mu2: float) -> tuple[int, np.ndarray]:
    """(k_min, pmf) of the difference Poisson(mu1) - Poisson(mu2).

    The pmf is the full convolution window; callers trim it to an alphabet.
    """
    if mu1 < 0 or mu2 < 0:
        raise ValueError("rates must be nonnegative")
    lo1, p1 = _poisson_window(mu1)
    lo2, p2 = _poisson_window(mu2)
    conv = np.convolve(p1, p2[::-1])
    k_min = lo1 - (lo2 + p2.size - 1)
    return k_min, conv


def truncation_interval(mu1: float, mu2: float, p_out: float) -> tuple[int, int, float]:
    """Smallest [v, w] straddling 0 whose tails each hold at most p_out / 2.

    Returns (v, w, actual out-of-range probability).
    """
    if not 0.0 < p_out < 1.0:
        raise ValueError("p_out must be in (0, 1)")
    k_min, pmf = skellam_pmf(mu1, mu2)
    cdf = np.cumsum(pmf)
    total = cdf[-1]
    half = p_out / 2.0
    # largest v with P(X < v) <= half
    below = np.concatenate(([0.0], cdf[:-1]))
    v_idx = int(np.searchsorted(below, half, side="right")) - 1
    v_idx = max(v_idx, 0)
    # smallest w with P(X > w) <= half
    above = total - cdf
    w_idx = int(np.searchsorted(-above, -half, side="left"))
    w_idx = min(w_idx, pmf.size - 1)
    v = min(k_min + v_idx, 0)
    w = max(k_min + w_idx, 0)
    lo_i = max(v - k_min, 0)
    hi_i = min(w - k_min, pmf.size - 1)
    inside = float(pmf[lo_i : hi_i + 1].sum()) if hi_i >= lo_i else 0.0
    return v, w, max(0.0, 1.0 - inside)


class SymbolModel:
    """Quantized integer-alphabet model shared by coder and decoder.

    Symbols are k_min..k_max plus a final escape slot for out-of-alphabet
    values (coded separately as raw 64-bit words).  Quantized frequencies
    sum to exactly 2^quantization_bits and every in-alphabet symbol keeps a
    nonzero frequency; the escape frequency is zero only when escapes are
    impossible (for example the folded models, whose alphabet is exhaustive).
    """

    __slots__ = ("k_min", "k_max", "freqs", "cum", "probs", "quantization_bits", "_slot2sym")

    def __init__(self, k_min: int, probs: np.ndarray, escape_prob: float,
                 quantization_bits: int = DEFAULT_QUANTIZATION_BITS):
        probs = np.asarray(probs, dtype=np.float64)
        if probs.ndim != 1 or probs.size == 0:
            raise ValueError("probs must be a nonempty 1-D array")
        if probs.size > _MAX_ALPHABET:
            raise ValueError("alphabet too large; trim before building the model")
        self.k_min = int(k_min)
        self.k_max = int(k_min + probs.size - 1)
        self.quantization_bits = quantization_bits
        full = np.concatenate([probs, [max(escape_prob, 0.0)]])
        full = full / full.sum()
        self.probs = full
        self.freqs = _quantize(full, quantization_bits, escape_possible=escape_prob > 0)
        self.cum = np.zeros(self.freqs.size + 1, dtype=np.int64)
        np.cumsum(self.freqs, out=self.cum[1:])
        self._slot2sym = np.repeat(
            np.arange(self.freqs.size, dtype=np.int32), self.freqs.astype(np.int64)
        )

    @property
    def alphabet_size(self) -> int:
        return self.k_max - self.k_min + 1

    @property
    def escape_index(self) -> int:
        return self.alphabet_size

    @property
    def total(self) -> int:
        return 1 << self.quantization_bits

    @property
    def slot_to_symbol(self) -> np.ndarray:
        return self._slot2sym

    def symbol_indices(self, values: np.ndarray) -> np.ndarray:
        """Alphabet indices for integer values; out-of-range maps to escape."""
        values = np.asarray(values, dtype=np.int64)
        idx = values - self.k_min
        out = np.where((values >= self.k_min) & (values <= self.k_max), idx, self.escape_index)
        return out.astype(np.int64)

    def cross_entropy_bits(self, values: np.ndarray) -> float:
        """Ideal compressed size of the values under this model, in bits.

        Escapes are charged their symbol cost plus the 64 raw bits the coder
        spends on them.
        """
        idx = self.symbol_indices(values)
        p = self.probs[idx]
        if np.any(p <= 0):
            raise ValueError("value has zero model probability")
        bits = float(-np.log2(p).sum())
        bits += 64.0 * int((idx == self.escape_index).sum())
        return bits

    def entropy_bits_per_symbol(self) -> float:
        p = self.probs[self.probs > 0]
        return float(-(p * np.log2(p)).sum())


def _quantize(probs: np.ndarray, qbits: int, escape_possible: bool) -> np.ndarray:
    total = 1 << qbits
    n = probs.size
    floor_each = np.ones(n, dtype=np.int64)
    if not escape_possible:
        floor_each[-1] = 0
    budget = total - int(floor_each.sum())
    if budget < 0:
        raise ValueError("alphabet larger than quantization total")
    scaled = probs * budget
    base = np.floor(scaled).astype(np.int64)
    freqs = floor_each + base
    leftover = total - int(freqs.sum())
    if leftover > 0:
        remainders = scaled - base
        if not escape_possible:
            remainders = remainders.copy()
            remainders[-1] = -1.0  # never hand slots to an impossible escape
        order = np.lexsort((np.arange(n), -remainders))
        freqs[order[:leftover]] += 1
    return freqs.astype(np.uint32)


def build_model(mu1: float, mu2: float,
                quantization_bits: int = DEFAULT_QUANTIZATION_BITS) -> SymbolModel:
    """Skellam symbol model with tail mass below 2^-20 folded into escape."""
    k_min, pmf = skellam_pmf(mu1, mu2)
    lo, hi = _trim_window(pmf, TAIL_MASS)
    if hi - lo + 1 > _MAX_ALPHABET:
        center = int(np.argmax(pmf))
        lo = max(lo, center - _MAX_ALPHABET // 2 + 1)
        hi = lo + _MAX_ALPHABET - 1
    kept = pmf[lo : hi + 1]
    escape = max(0.0, 1.0 - float(kept.sum()))
    return SymbolModel(k_min + lo, kept, escape, quantization_bits)


def _trim_window(pmf: np.ndarray, tail: float) -> tuple[int, int]:
    half = tail / 2.0
    cdf = np.cumsum(pmf)
    below = np.concatenate(([0.0], cdf[:-1]))
    lo_ok = np.nonzero(below <= half)[0]
    lo = int(lo_ok[-1]) if lo_ok.size else 0
    above = cdf[-1] - cdf
    hi_ok = np.nonzero(above <= half)[0]
    hi = int(hi_ok[0]) if hi_ok.size else pmf.size - 1
    return min(lo, hi), max(lo, hi)


def folded_uniform_model(modulus: int,
                         quantization_bits: int = DEFAULT_QUANTIZATION_BITS) -> SymbolModel:
    """Uniform model over remainders [0, modulus).

    Sketch counts are huge relative to the truncation modulus, so their
    remainders are uniform to well below quantization resolution; a uniform
    table avoids shipping any extra parameters and can never escape.
    """
    if modulus < 1:
        raise ValueError("modulus must be >= 1")
    probs = np.full(modulus, 1.0 / modulus)
    return SymbolModel(0, probs, 0.0, quantization_bits)
