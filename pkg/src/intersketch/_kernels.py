"""Numba kernels for the pursuit decoders.

The decoder state lives in flat arrays owned by the Python wrapper
(decoder.py); the kernels only mutate them.  The priority structure is a
binary max-heap with lazy invalidation: every score change pushes a fresh
entry and pops discard entries whose recorded score (or version, for the
L1 pursuit) no longer matches.  The heap therefore always contains a
current entry for every actionable candidate, so an empty heap proves a
stall.  Heap order is (score desc, candidate index asc), which fixes the
iteration order deterministically.

All score arithmetic is integer.  For the L2 pursuit the score of candidate
i is the dot product of the residue with its column (the pursuit step times
the column weight m), oriented toward the only admissible flip direction:
dot for candidates at 0, -dot for candidates at 1.  A flip is admissible
iff 2 * score > m, i.e. |pursuit step| > 1/2 exactly, with no float
boundary issues.
"""

import numpy as np
from numba import njit

OUT_ZERO = 0
OUT_STALL = 1
OUT_CAP = 2
OUT_HEAP_FULL = 3


@njit(cache=True)
def _heap_better(s_a, i_a, s_b, i_b):
    return s_a > s_b or (s_a == s_b and i_a < i_b)


@njit(cache=True)
def _heap_push(heap_score, heap_id, size, score, cid):
    pos = size
    heap_score[pos] = score
    heap_id[pos] = cid
    while pos > 0:
        parent = (pos - 1) >> 1
        if _heap_better(heap_score[pos], heap_id[pos], heap_score[parent], heap_id[parent]):
            heap_score[pos], heap_score[parent] = heap_score[parent], heap_score[pos]
            heap_id[pos], heap_id[parent] = heap_id[parent], heap_id[pos]
            pos = parent
        else:
            break
    return size + 1


@njit(cache=True)
def _heap_pop(heap_score, heap_id, size):
    top_score = heap_score[0]
    top_id = heap_id[0]
    size -= 1
    heap_score[0] = heap_score[size]
    heap_id[0] = heap_id[size]
    pos = 0
    while True:
        left = 2 * pos + 1
        if left >= size:
            break
        best = left
        right = left + 1
        if right < size and _heap_better(heap_score[right], heap_id[right], heap_score[left], heap_id[left]):
            best = right
        if _heap_better(heap_score[best], heap_id[best], heap_score[pos], heap_id[pos]):
            heap_score[pos], heap_score[best] = heap_score[best], heap_score[pos]
            heap_id[pos], heap_id[best] = heap_id[best], heap_id[pos]
            pos = best
        else:
            break
    return top_score, top_id, size


@njit(cache=True)
def heap_fill(heap_score, heap_id, scores, mask):
    """Bulk-load (score, index) pairs where mask holds; returns heap size."""
    size = 0
    for i in range(scores.size):
        if mask[i]:
            size = _heap_push(heap_score, heap_id, size, scores[i], i)
    return size


@njit(cache=True)
def abs_sum(values):
    total = 0
    for i in range(values.size):
        v = values[i]
        total += v if v >= 0 else -v
    return total


@njit(cache=True)
def mp_run(
    residue,
    x,
    dot,
    support,
    rev_indptr,
    rev_indices,
    excluded,
    tentative_mode,
    max_new_iters,
    heap_score,
    heap_id,
    heap_size,
    log_id,
    log_dir,
):
    """One batch of L2-pursuit iterations.

    Returns (outcome, iterations_done, heap_size).  OUT_HEAP_FULL leaves the
    state consistent; the caller rebuilds the heap and re-enters.
    """
    m = support.shape[1]
    cap = heap_score.size
    l1 = abs_sum(residue)
    iters = 0
    hs = heap_size
    while True:
        if l1 == 0:
            return OUT_ZERO, iters, hs
        if iters >= max_new_iters:
            return OUT_CAP, iters, hs
        best = -1
        while hs > 0:
            sc, cid, hs = _heap_pop(heap_score, heap_id, hs)
            cur = dot[cid] if x[cid] == 0 else -dot[cid]
            if sc != cur:
                continue  # stale entry
            if 2 * cur <= m:
                continue
            if x[cid] == 0 and excluded[cid] != 0 and tentative_mode == 0:
                continue
            best = cid
            break
        if best < 0:
            return OUT_STALL, iters, hs
        if x[best] == 0:
            x[best] = 1
            sign = -1
            log_dir[iters] = 1
        else:
            x[best] = 0
            sign = 1
            log_dir[iters] = -1
        log_id[iters] = best
        iters += 1
        full = False
        for k in range(m):
            row = support[best, k]
            old = residue[row]
            new = old + sign
            residue[row] = new
            l1 += (new if new >= 0 else -new) - (old if old >= 0 else -old)
            for e in range(rev_indptr[row], rev_indptr[row + 1]):
                j = rev_indices[e]
                dot[j] += sign
                sj = dot[j] if x[j] == 0 else -dot[j]
                if 2 * sj > m:
                    if x[j] == 0 and excluded[j] != 0 and tentative_mode == 0:
                        continue
                    if hs >= cap:
                        full = True
                        continue
                    hs = _heap_push(heap_score, heap_id, hs, sj, j)
        if full:
            return OUT_HEAP_FULL, iters, hs


@njit(cache=True)
def _l1_score(residue, support, i, xi, m, buf):
    """Median-quantized L1 pursuit score.

    Returns (admissible, gain) where gain is the L1 residue reduction of the
    binary step implied by x[i]; the step direction is recoverable from
    x[i].  Admissibility quantizes the median pursuit step against the same
    +-1/2 thresholds as the L2 rule: for integer residues the doubled median
    beats 1 exactly when it reaches 2.
    """
    for k in range(m):
        buf[k] = residue[support[i, k]]
    for a in range(1, m):  # insertion sort, m is small
        v = buf[a]
        b = a - 1
        while b >= 0 and buf[b] > v:
            buf[b + 1] = buf[b]
            b -= 1
        buf[b + 1] = v
    med2 = buf[(m - 1) // 2] + buf[m // 2]
    if xi == 0:
        if med2 >= 2:
            cnt = 0
            for k in range(m):
                if buf[k] >= 1:
                    cnt += 1
            return True, 2 * cnt - m
    else:
        if med2 <= -2:
            cnt = 0
            for k in range(m):
                if buf[k] <= -1:
                    cnt += 1
            return True, 2 * cnt - m
    return False, 0


@njit(cache=True)
def _heap_push_v(heap_score, heap_id, heap_ver, size, score, cid, ver):
    pos = size
    heap_score[pos] = score
    heap_id[pos] = cid
    heap_ver[pos] = ver
    while pos > 0:
        parent = (pos - 1) >> 1
        if _heap_better(heap_score[pos], heap_id[pos], heap_score[parent], heap_id[parent]):
            heap_score[pos], heap_score[parent] = heap_score[parent], heap_score[pos]
            heap_id[pos], heap_id[parent] = heap_id[parent], heap_id[pos]
            heap_ver[pos], heap_ver[parent] = heap_ver[parent], heap_ver[pos]
            pos = parent
        else:
            break
    return size + 1


@njit(cache=True)
def ssmp_fill(
    residue, x, support, excluded, tentative_mode, version, heap_score, heap_id, heap_ver, buf
):
    size = 0
    n = support.shape[0]
    m = support.shape[1]
    for i in range(n):
        if x[i] == 0 and excluded[i] != 0 and tentative_mode == 0:
            continue
        ok, gain = _l1_score(residue, support, i, x[i], m, buf)
        if ok:
            size = _heap_push_v(heap_score, heap_id, heap_ver, size, gain, i, version[i])
    return size


@njit(cache=True)
def _wrap_value(v, lo, hi):
    span = hi - lo + 1
    return (v - lo) % span + lo


@njit(cache=True)
def ssmp_run(
    residue,
    x,
    dot,
    support,
    rev_indptr,
    rev_indices,
    excluded,
    tentative_mode,
    max_new_iters,
    version,
    heap_score,
    heap_id,
    heap_ver,
    heap_size,
    log_id,
    log_dir,
    wrap_on,
    wrap_lo,
    wrap_hi,
):
    """One batch of median-step L1-pursuit iterations.

    Heap entries carry the candidate's version; any residue change under a
    candidate's support bumps its version, so a matching version proves the
    stored gain is current.  With wrap_on the residue is kept congruent
    inside [wrap_lo, wrap_hi] after every coordinate update, which converts
    whole-modulus recovery glitches into small values the median ignores.
    """
    m = support.shape[1]
    cap = heap_score.size
    buf = np.empty(m, dtype=np.int64)
    l1 = abs_sum(residue)
    iters = 0
    hs = heap_size
    while True:
        if l1 == 0:
            return OUT_ZERO, iters, hs
        if iters >= max_new_iters:
            return OUT_CAP, iters, hs
        best = -1
        while hs > 0:
            # pop with the entry's version slot
            sc = heap_score[0]
            cid = heap_id[0]
            ver = heap_ver[0]
            hs -= 1
            heap_score[0] = heap_score[hs]
            heap_id[0] = heap_id[hs]
            heap_ver[0] = heap_ver[hs]
            pos = 0
            while True:
                left = 2 * pos + 1
                if left >= hs:
                    break
                b = left
                right = left + 1
                if right < hs and _heap_better(
                    heap_score[right], heap_id[right], heap_score[left], heap_id[left]
                ):
                    b = right
                if _heap_better(heap_score[b], heap_id[b], heap_score[pos], heap_id[pos]):
                    heap_score[pos], heap_score[b] = heap_score[b], heap_score[pos]
                    heap_id[pos], heap_id[b] = heap_id[b], heap_id[pos]
                    heap_ver[pos], heap_ver[b] = heap_ver[b], heap_ver[pos]
                    pos = b
                else:
                    break
            if ver != version[cid]:
                continue
            if x[cid] == 0 and excluded[cid] != 0 and tentative_mode == 0:
                continue
            best = cid
            break
        if best < 0:
            return OUT_STALL, iters, hs
        if x[best] == 0:
            x[best] = 1
            step = -1
            log_dir[iters] = 1
        else:
            x[best] = 0
            step = 1
            log_dir[iters] = -1
        log_id[iters] = best
        iters += 1
        full = False
        for k in range(m):
            row = support[best, k]
            old = residue[row]
            new = old + step
            if wrap_on != 0:
                new = _wrap_value(new, wrap_lo, wrap_hi)
            residue[row] = new
            l1 += (new if new >= 0 else -new) - (old if old >= 0 else -old)
            delta = new - old
            for e in range(rev_indptr[row], rev_indptr[row + 1]):
                j = rev_indices[e]
                dot[j] += delta
                version[j] += 1
        # repush affected candidates once per flip (their versions changed)
        for k in range(m):
            row = support[best, k]
            for e in range(rev_indptr[row], rev_indptr[row + 1]):
                j = rev_indices[e]
                if x[j] == 0 and excluded[j] != 0 and tentative_mode == 0:
                    continue
                ok, gain = _l1_score(residue, support, j, x[j], m, buf)
                if ok:
                    if hs >= cap:
                        full = True
                        continue
                    hs = _heap_push_v(heap_score, heap_id, heap_ver, hs, gain, j, version[j])
        if full:
            return OUT_HEAP_FULL, iters, hs
