import numpy as np
import pytest

from intersketch.decoder import (
    DecoderState,
    Outcome,
    delta,
    median_delta,
    mp_decode,
    resolve_residual,
    revert,
    ssmp_decode,
)
from intersketch.ids import IdArray
from intersketch.matrix import MatrixSpec, batch_supports, column_support
from intersketch.protocol import rows_for
from intersketch.sketch import Residue, encode_set

from conftest import TINY_MEASUREMENT, TINY_SUPPORTS
from oracle import unique_solution


def tiny_state(**kwargs):
    return DecoderState(TINY_MEASUREMENT, TINY_SUPPORTS, **kwargs)


def test_pursuit_step_on_worked_example():
    spec = MatrixSpec(rows=64, ones_per_column=3, seed=2, universe_bits=64)
    res = Residue(np.zeros(64, dtype=np.int64), spec)
    assert delta(res, 77) == 0.0
    unit = np.zeros(64, dtype=np.int64)
    unit[column_support(spec, 77)] = 1
    assert delta(Residue(unit, spec), 77) == 1.0
    # the tiny example: average of rows (3,1,1) is 5/3, median is 1
    st = tiny_state()
    assert st.pursuit_steps()[0] == pytest.approx(5.0 / 3.0)


def test_median_step_is_outlier_resistant():
    spec = MatrixSpec(rows=7, ones_per_column=3, seed=0, universe_bits=64)
    res = Residue(TINY_MEASUREMENT.copy(), spec)
    sup = column_support(spec, 5)
    vals = np.zeros(7, dtype=np.int64)
    vals[sup] = (3, 1, 1)
    assert float(np.median(vals[sup])) == 1.0
    assert median_delta(Residue(vals, spec), 5) == 1.0


def test_worked_example_trace():
    st = tiny_state()
    out = mp_decode(st, 100)
    assert out is Outcome.ZERO_RESIDUE
    assert st.update_log == [(0, 1), (1, 1), (2, 1)]
    assert not st.residue.any()
    # replay the trace and confirm the greedy step sequence 5/3, 4/3, 1
    replay = TINY_MEASUREMENT.astype(float).copy()
    steps = []
    for idx, _ in st.update_log:
        steps.append(replay[TINY_SUPPORTS[idx]].sum() / 3)
        replay[TINY_SUPPORTS[idx]] -= 1
    assert steps == pytest.approx([5 / 3, 4 / 3, 1.0])
    st.check_consistency()


def test_ssmp_matches_on_worked_example():
    st = tiny_state()
    assert ssmp_decode(st, 100) is Outcome.ZERO_RESIDUE
    assert np.array_equal(st.x, [1, 1, 1])


def test_zero_residue_is_immediate():
    st = DecoderState(np.zeros(7, dtype=np.int64), TINY_SUPPORTS)
    assert mp_decode(st, 100) is Outcome.ZERO_RESIDUE
    assert st.iteration_count == 0
    st2 = DecoderState(np.zeros(7, dtype=np.int64), TINY_SUPPORTS)
    assert ssmp_decode(st2, 100) is Outcome.ZERO_RESIDUE


def test_iteration_cap():
    st = tiny_state()
    assert mp_decode(st, 1) is Outcome.ITERATION_CAP
    assert st.iteration_count == 1


def test_oracle_equivalence_small_instances():
    rng = np.random.default_rng(77)
    for _ in range(60):
        n_b = int(rng.integers(16, 257))
        d = int(rng.integers(1, 9))
        d = min(d, n_b - 1)
        pool = np.unique(rng.integers(1, 1 << 62, n_b + 32, dtype=np.uint64))[:n_b]
        b = IdArray(pool[:, None], 64)
        a = IdArray(pool[: n_b - d, None], 64)
        spec = MatrixSpec(rows_for(d, n_b, 1.0, 7), 7, int(rng.integers(1 << 40)), 64)
        sup = batch_supports(spec, b)
        measurement = encode_set(spec, b).values - encode_set(spec, a).values
        st = DecoderState(measurement.copy(), sup, candidates=b, spec=spec)
        if mp_decode(st, max(64, 4 * d)) is not Outcome.ZERO_RESIDUE:
            assert resolve_residual(st) is Outcome.ZERO_RESIDUE
        got = np.sort(st.recovered_indices())
        want = unique_solution(measurement, sup)
        assert want is not None, "instance unexpectedly ambiguous"
        assert np.array_equal(got, want)
        assert np.array_equal(np.sort(got), np.arange(n_b - d, n_b))


def test_ssmp_recovers_through_corrupted_coordinate():
    rng = np.random.default_rng(3)
    spec = MatrixSpec(rows=64, ones_per_column=5, seed=8, universe_bits=64)
    pool = np.unique(rng.integers(1, 1 << 62, 160, dtype=np.uint64))[:128]
    b = IdArray(pool[:, None], 64)
    planted = IdArray(pool[:2, None], 64)
    measurement = encode_set(spec, planted).values
    corrupt = measurement.copy()
    corrupt[int(rng.integers(64))] += 100
    st = DecoderState(corrupt, batch_supports(spec, b), candidates=b, spec=spec)
    ssmp_decode(st, 64)
    assert np.array_equal(np.sort(st.recovered_indices()), [0, 1])


def test_revert_is_exact_inverse():
    st = tiny_state()
    before = st.residue.copy()
    st.apply_flip(0)
    assert not np.array_equal(st.residue, before)
    revert(st, [0])
    assert np.array_equal(st.residue, before)
    st.check_consistency()
    # reverting nothing is the identity
    revert(st, [])
    assert np.array_equal(st.residue, before)


def test_revert_commutes_with_application():
    st1 = tiny_state()
    st1.apply_flip(0)
    st1.apply_flip(1)
    revert(st1, [0])
    st2 = tiny_state()
    st2.apply_flip(1)
    assert np.array_equal(st1.residue, st2.residue)
    assert np.array_equal(st1.x, st2.x)


def test_revert_of_unset_candidate_rejected():
    st = tiny_state()
    with pytest.raises(ValueError):
        revert(st, [1])


def test_exclusions_block_up_flips_only():
    st = tiny_state(exclusions=np.array([1, 1, 1], dtype=np.uint8))
    assert mp_decode(st, 100) is Outcome.STALLED
    assert not st.x.any()
    # a set candidate can still be cleared even while excluded
    st2 = tiny_state(exclusions=np.array([0, 1, 1], dtype=np.uint8))
    mp_decode(st2, 100)
    assert st2.x[0] == 1


def test_priority_bookkeeping_matches_recompute():
    rng = np.random.default_rng(5)
    spec = MatrixSpec(rows=48, ones_per_column=4, seed=31, universe_bits=64)
    pool = np.unique(rng.integers(1, 1 << 62, 200, dtype=np.uint64))[:150]
    b = IdArray(pool[:, None], 64)
    a = IdArray(pool[:140, None], 64)
    measurement = encode_set(spec, b).values - encode_set(spec, a).values
    st = DecoderState(measurement, batch_supports(spec, b), candidates=b, spec=spec)
    mp_decode(st, 100)
    st.check_consistency()
    ssmp_decode(st, 100)
    st.check_consistency()


def test_touched_candidates_scale():
    # candidates affected per flip ~ n * m^2 / rows
    rng = np.random.default_rng(6)
    spec = MatrixSpec(rows=400, ones_per_column=5, seed=1, universe_bits=64)
    pool = np.unique(rng.integers(1, 1 << 62, 4200, dtype=np.uint64))[:4000]
    b = IdArray(pool[:, None], 64)
    st = DecoderState(np.zeros(400, dtype=np.int64), batch_supports(spec, b), candidates=b, spec=spec)
    expected = 4000 * 25 / 400
    touched = []
    for idx in rng.integers(0, 4000, 20):
        before = st.dot.copy()
        st.apply_flip(int(idx))
        touched.append(int((st.dot != before).sum()))
    mean = float(np.mean(touched))
    assert expected / 3 < mean < 3 * expected


def test_resolver_finishes_threshold_deadlock():
    # dense instance where greedy pursuit parks in a mutual-cancellation
    # minimum; the exact finisher must complete it
    rng = np.random.default_rng(42)
    n_b, d = 5064, 64
    pool = np.unique(rng.integers(1, 1 << 62, n_b + 64, dtype=np.uint64))[:n_b]
    b = IdArray(pool[:, None], 64)
    a = IdArray(pool[: n_b - d, None], 64)
    spec = MatrixSpec(496, 7, 9, 64)
    measurement = encode_set(spec, b).values - encode_set(spec, a).values
    st = DecoderState(measurement, batch_supports(spec, b), candidates=b, spec=spec)
    out = mp_decode(st, 4 * d)
    if out is not Outcome.ZERO_RESIDUE:
        assert resolve_residual(st) is Outcome.ZERO_RESIDUE
    assert np.array_equal(np.sort(st.recovered_indices()), np.arange(n_b - d, n_b))


def test_wrap_mode_clears_whole_modulus_phantoms():
    st = tiny_state()
    mp_decode(st, 100)
    st.residue[3] += 10  # phantom: two moduli of width 5
    st.enable_wrap(-2, 2)
    assert st.residue_l1() == 0
