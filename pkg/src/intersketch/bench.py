"""Deterministic instance generation and experiment orchestration.

Instances are drawn from a seeded generator (ids are uniform u-bit values,
deduplicated, split into shared and unique parts at exactly the requested
cardinalities), so a (config, seed) pair always reproduces the same sets,
byte counts, and CSV output.  Groups of trials run in a process pool;
results merge by trial index, keeping the output order independent of
scheduling.
"""

from __future__ import annotations

import csv
import io
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from . import baselines
from .ids import IdArray, words_for_bits
from .protocol import SessionConfig, rows_for, run_bidirectional, run_unidirectional

PROTOCOLS = ("commonsense-uni", "commonsense-bi", "iblt", "bounds")

CSV_COLUMNS = [
    "group", "protocol", "n_common", "n_a_only", "n_b_only", "universe_bits",
    "m", "alpha", "rows", "trials", "successes", "mean_bytes", "min_bytes",
    "max_bytes", "mean_rounds",
]


@dataclass(frozen=True)
class InstanceSpec:
    """Cardinalities and seed of one synthetic set pair."""

    n_common: int
    n_a_only: int
    n_b_only: int
    universe_bits: int = 64
    seed: int = 0

    def __post_init__(self):
        if min(self.n_common, self.n_a_only, self.n_b_only) < 0:
            raise ValueError("cardinalities must be nonnegative")
        total = self.n_common + self.n_a_only + self.n_b_only
        if self.universe_bits < 64 and total > (1 << self.universe_bits):
            raise ValueError("universe too small for the requested cardinalities")

    @property
    def d_total(self) -> int:
        return self.n_a_only + self.n_b_only


def gen_instance(spec: InstanceSpec) -> tuple[IdArray, IdArray]:
    """Draw (A, B) with exactly the requested shared and unique counts."""
    total = spec.n_common + spec.n_a_only + spec.n_b_only
    w = words_for_bits(spec.universe_bits)
    rng = np.random.default_rng(spec.seed)
    top_mask = np.uint64(
        (1 << (spec.universe_bits - 64 * (w - 1))) - 1
    )
    rows = np.empty((0, w), dtype=np.uint64)
    while rows.shape[0] < total:
        need = total - rows.shape[0]
        fresh = rng.integers(0, 2**64, (need + need // 8 + 16, w), dtype=np.uint64)
        fresh[:, w - 1] &= top_mask
        rows = np.concatenate([rows, fresh])
        packed = np.ascontiguousarray(rows).view([("", np.uint64)] * w).reshape(-1)
        _, first = np.unique(packed, return_index=True)
        rows = rows[np.sort(first)]
    rows = rows[:total]
    common = rows[: spec.n_common]
    a_only = rows[spec.n_common : spec.n_common + spec.n_a_only]
    b_only = rows[spec.n_common + spec.n_a_only :]
    a = IdArray(np.concatenate([common, a_only]), spec.universe_bits)
    b = IdArray(np.concatenate([common, b_only]), spec.universe_bits)
    return a, b


@dataclass(frozen=True)
class GroupConfig:
    """One experiment group: an instance shape, a protocol, and its knobs."""

    name: str
    protocol: str
    instance: InstanceSpec
    trials: int = 100
    m: int = 7
    alpha: float = 1.0
    smf_fpp: float = 0.01
    max_rounds: int = 10
    resolve_round: int = 4
    signature_bits: int = 64
    p_trunc: float | None = None
    parity_levels: int = 1
    fingerprint_bits: int = 32
    workers: int = 0  # 0 = number of CPUs

    def __post_init__(self):
        if self.protocol not in PROTOCOLS:
            raise ValueError(f"unknown protocol {self.protocol!r}")

    def session_config(self, seed: int) -> SessionConfig:
        inst = self.instance
        return SessionConfig(
            d_total=max(inst.d_total, 1),
            n_larger=inst.n_common + max(inst.n_a_only, inst.n_b_only),
            universe_bits=inst.universe_bits,
            m=self.m,
            alpha=self.alpha,
            seed=seed,
            d_split=(inst.n_a_only, inst.n_b_only),
            smf_fpp=self.smf_fpp,
            max_rounds=self.max_rounds,
            resolve_round=self.resolve_round,
            signature_bits=self.signature_bits,
            p_trunc=self.p_trunc,
            parity_levels=self.parity_levels,
        )


@dataclass
class TrialResult:
    ok: bool
    total_bytes: int
    rounds: int


@dataclass
class GroupResult:
    group: GroupConfig
    results: list[TrialResult] = field(default_factory=list)
    wall_seconds: float = 0.0

    @property
    def successes(self) -> int:
        return sum(r.ok for r in self.results)

    def row(self) -> dict:
        sizes = [r.total_bytes for r in self.results]
        inst = self.group.instance
        return {
            "group": self.group.name,
            "protocol": self.group.protocol,
            "n_common": inst.n_common,
            "n_a_only": inst.n_a_only,
            "n_b_only": inst.n_b_only,
            "universe_bits": inst.universe_bits,
            "m": self.group.m,
            "alpha": f"{self.group.alpha:g}",
            "rows": rows_for(max(inst.d_total, 1),
                             inst.n_common + max(inst.n_a_only, inst.n_b_only),
                             self.group.alpha, self.group.m),
            "trials": len(self.results),
            "successes": self.successes,
            "mean_bytes": f"{np.mean(sizes):.1f}" if sizes else "",
            "min_bytes": min(sizes) if sizes else "",
            "max_bytes": max(sizes) if sizes else "",
            "mean_rounds": f"{np.mean([r.rounds for r in self.results]):.2f}" if sizes else "",
        }


def _ground_truth(a: IdArray, b: IdArray) -> np.ndarray:
    return np.sort(a.intersection(b).packed())


def run_trial(group: GroupConfig, trial_index: int) -> TrialResult:
    inst = replace(group.instance, seed=group.instance.seed + trial_index)
    a, b = gen_instance(inst)
    want = _ground_truth(a, b)
    if group.protocol == "commonsense-uni":
        res = run_unidirectional(a, b, group.session_config(inst.seed))
        ok = (
            res.transcript.outcome == "ok"
            and res.intersection is not None
            and np.array_equal(np.sort(res.intersection.packed()), want)
        )
        return TrialResult(ok, res.transcript.total_bytes(), res.transcript.rounds)
    if group.protocol == "commonsense-bi":
        res = run_bidirectional(a, b, group.session_config(inst.seed))
        ok = (
            res.transcript.outcome == "ok"
            and res.alice_intersection is not None
            and np.array_equal(np.sort(res.alice_intersection.packed()), want)
            and np.array_equal(np.sort(res.bob_intersection.packed()), want)
        )
        return TrialResult(ok, res.transcript.total_bytes(), res.transcript.rounds)
    if group.protocol == "iblt":
        params = baselines.IbltParams.for_difference(
            max(inst.d_total, 1), group.fingerprint_bits, seed=inst.seed
        )
        ta = baselines.iblt_encode(a, params)
        tb = baselines.iblt_encode(b, params)
        cost = baselines.iblt_reconcile_cost(params, inst.universe_bits,
                                             len(a), inst.n_a_only)
        try:
            only_a, only_b = baselines.iblt_peel(baselines.iblt_subtract(ta, tb))
            ok = len(only_a) == inst.n_a_only and len(only_b) == inst.n_b_only
        except baselines.PeelFailure:
            ok = False
        return TrialResult(ok, cost, 2)
    raise ValueError(f"protocol {group.protocol} has no per-trial run")


def run_experiment(group: GroupConfig) -> GroupResult:
    """All trials of one group, in parallel, merged by trial index."""
    t0 = time.monotonic()
    out = GroupResult(group)
    if group.protocol == "bounds":
        out.wall_seconds = time.monotonic() - t0
        return out
    workers = group.workers or os.cpu_count() or 1
    if workers <= 1 or group.trials == 1:
        out.results = [run_trial(group, i) for i in range(group.trials)]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            futures = [pool.submit(run_trial, group, i) for i in range(group.trials)]
            out.results = [f.result() for f in futures]
    out.wall_seconds = time.monotonic() - t0
    return out


def bounds_rows(inst: InstanceSpec) -> list[dict]:
    """Analytic rows: the intersection and reconciliation lower bounds."""
    n_a = inst.n_common + inst.n_a_only
    n_b = inst.n_common + inst.n_b_only
    setx = baselines.setx_lower_bound(n_a, n_b, inst.n_a_only, inst.n_b_only)
    setr = baselines.setr_lower_bound(max(inst.d_total, 1), inst.universe_bits)
    base = {
        "n_common": inst.n_common, "n_a_only": inst.n_a_only,
        "n_b_only": inst.n_b_only, "universe_bits": inst.universe_bits,
        "m": "", "alpha": "", "rows": "", "trials": "", "successes": "",
        "min_bytes": "", "max_bytes": "", "mean_rounds": "",
    }
    return [
        dict(base, group="bound", protocol="setx-lower-bound",
             mean_bytes=f"{setx / 8:.1f}"),
        dict(base, group="bound", protocol="setr-lower-bound",
             mean_bytes=f"{setr / 8:.1f}"),
    ]


def write_csv(rows: list[dict], path: str | None) -> str:
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=CSV_COLUMNS, lineterminator="\n")
    writer.writeheader()
    for row in rows:
        writer.writerow({c: row.get(c, "") for c in CSV_COLUMNS})
    text = buf.getvalue()
    if path:
        with open(path, "w") as fh:
            fh.write(text)
    return text


def tune_alpha(group: GroupConfig, lo: float = 0.6, hi: float = 4.0,
               resolution: float = 0.05) -> tuple[float, list[tuple[float, int]]]:
    """Smallest alpha (on the resolution grid) with every trial exact.

    Doubles upward from the group's alpha until a fully lossless setting is
    found, then bisects down.  Returns (alpha, [(alpha, successes), ...]).
    """
    history: list[tuple[float, int]] = []

    def all_ok(alpha: float) -> bool:
        res = run_experiment(replace(group, alpha=round(alpha, 4)))
        history.append((round(alpha, 4), res.successes))
        return res.successes == group.trials

    good = None
    probe = max(group.alpha, lo)
    while probe <= hi:
        if all_ok(probe):
            good = probe
            break
        probe = round(probe * 1.3 + resolution, 4)
    if good is None:
        raise RuntimeError(f"no alpha up to {hi} decodes all trials")
    bad = lo
    while good - bad > resolution:
        mid = round((good + bad) / 2, 4)
        if all_ok(mid):
            good = mid
        else:
            bad = mid
    return good, history
