import math

import numpy as np
import pytest

from intersketch.skellam import (
    FIT_EPSILON,
    build_model,
    folded_uniform_model,
    skellam_fit,
    skellam_pmf,
    truncation_interval,
)


def test_fit_degenerate_all_zero():
    mu1, mu2 = skellam_fit(np.zeros(100, dtype=np.int64))
    assert mu1 == FIT_EPSILON and mu2 == FIT_EPSILON


def test_fit_recovers_rates_within_one_percent():
    rng = np.random.default_rng(0)
    sample = rng.poisson(3.0, 1_000_000) - rng.poisson(1.0, 1_000_000)
    mu1, mu2 = skellam_fit(sample)
    assert abs(mu1 - 3.0) / 3.0 < 0.01
    assert abs(mu2 - 1.0) / 1.0 < 0.01


def test_fit_one_sided_sample():
    rng = np.random.default_rng(1)
    mu1, mu2 = skellam_fit(rng.poisson(2.0, 1_000_000))
    assert abs(mu1 - 2.0) / 2.0 < 0.02
    assert mu2 < 0.05


def test_pmf_degenerates_to_poisson():
    k_min, pmf = skellam_pmf(1.5, 0.0)
    for k in range(6):
        expect = math.exp(-1.5) * 1.5**k / math.factorial(k)
        assert pmf[k - k_min] == pytest.approx(expect, rel=1e-9)
    # no mass below zero
    assert pmf[: -k_min].sum() < 1e-15


def test_pmf_symmetry_for_equal_rates():
    k_min, pmf = skellam_pmf(2.0, 2.0)
    center = -k_min
    for k in range(1, 8):
        assert abs(pmf[center + k] - pmf[center - k]) < 1e-12


@pytest.mark.parametrize("mu1", [0.1, 1.0, 5.0])
@pytest.mark.parametrize("mu2", [0.1, 1.0, 5.0])
def test_pmf_total_mass(mu1, mu2):
    _, pmf = skellam_pmf(mu1, mu2)
    assert abs(pmf.sum() - 1.0) < 1e-9


def test_quantized_model_invariants():
    for mu1, mu2 in [(0.5, 0.1), (3.0, 3.0), (0.01, 0.01)]:
        model = build_model(mu1, mu2)
        assert model.freqs.sum() == model.total == 4096
        assert (model.freqs[:-1] >= 1).all()  # every alphabet symbol coded
        assert model.slot_to_symbol.size == 4096
        # tail folded into escape keeps below the target mass plus rounding
        assert model.probs[-1] < 2**-18


def test_truncation_interval_straddles_zero():
    v, w, p_out = truncation_interval(0.9, 1e-6, 1e-3)
    assert v <= 0 <= w
    assert p_out <= 1e-3
    v2, w2, _ = truncation_interval(0.3, 0.3, 1e-2)
    assert v2 < 0 < w2


def test_folded_uniform_model():
    model = folded_uniform_model(7)
    assert model.alphabet_size == 7
    assert model.freqs[-1] == 0  # cannot escape
    assert model.freqs.sum() == 4096
    with pytest.raises(ValueError):
        folded_uniform_model(0)
