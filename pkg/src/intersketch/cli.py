"""Benchmark command line.

Subcommands:
  gen     write a seeded synthetic instance to an .npz file
  run     run an experiment group and emit a CSV row
  bounds  print the analytic lower bounds for an instance shape
  tune    search the smallest sketch multiplier that stays lossless

A config file of key=value lines (``--config``) provides defaults for any
long option; explicit flags win.  Reruns with the same configuration and
seed produce byte-identical CSV.
"""

from __future__ import annotations

import argparse
import sys

import numpy as np

from .bench import (
    GroupConfig,
    InstanceSpec,
    bounds_rows,
    gen_instance,
    run_experiment,
    tune_alpha,
    write_csv,
)


def _read_config(path: str) -> dict[str, str]:
    out: dict[str, str] = {}
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise ValueError(f"bad config line: {line!r}")
            key, value = line.split("=", 1)
            out[key.strip().replace("-", "_")] = value.strip()
    return out


def _add_instance_args(p: argparse.ArgumentParser):
    p.add_argument("--common", type=int, default=1000, help="shared element count")
    p.add_argument("--a-only", type=int, default=0, help="elements unique to A")
    p.add_argument("--b-only", type=int, default=100, help="elements unique to B")
    p.add_argument("--bits", type=int, default=64, help="id width in bits (<= 256)")
    p.add_argument("--seed", type=int, default=0)


def _add_protocol_args(p: argparse.ArgumentParser):
    p.add_argument("--protocol", choices=["commonsense-uni", "commonsense-bi", "iblt", "bounds"],
                   default="commonsense-uni")
    p.add_argument("--trials", type=int, default=100)
    p.add_argument("--m", type=int, default=None,
                   help="ones per matrix column (default 7 one-way, 5 two-way)")
    p.add_argument("--alpha", type=float, default=1.0, help="sketch length multiplier")
    p.add_argument("--smf-fpp", type=float, default=0.01)
    p.add_argument("--max-rounds", type=int, default=10)
    p.add_argument("--resolve-round", type=int, default=4)
    p.add_argument("--signature-bits", type=int, default=64)
    p.add_argument("--p-trunc", type=float, default=None,
                   help="per-row escape probability; omit to auto-minimize bytes")
    p.add_argument("--parity-levels", type=int, default=1)
    p.add_argument("--fingerprint-bits", type=int, default=32, help="lookup-table fingerprint width")
    p.add_argument("--workers", type=int, default=0, help="process pool size (0 = all cores)")
    p.add_argument("--csv", default=None, help="write the result table here")
    p.add_argument("--strict", action="store_true",
                   help="exit nonzero unless every trial is exact")
    p.add_argument("--group-name", default="group0")


def _apply_config_defaults(parser: argparse.ArgumentParser, argv: list[str]) -> argparse.Namespace:
    # peel --config first so file values become parser defaults
    probe = argparse.ArgumentParser(add_help=False)
    probe.add_argument("--config", default=None)
    known, _ = probe.parse_known_args(argv)
    if known.config:
        file_values = _read_config(known.config)
        valid = {a.dest for a in parser._actions}
        unknown = set(file_values) - valid
        if unknown:
            raise SystemExit(f"unknown config keys: {sorted(unknown)}")
        parser.set_defaults(**{
            k: _coerce(parser, k, v) for k, v in file_values.items()
        })
    return parser.parse_args(argv)


def _coerce(parser: argparse.ArgumentParser, dest: str, value: str):
    for action in parser._actions:
        if action.dest == dest:
            if isinstance(action, argparse._StoreTrueAction):
                return value.lower() in ("1", "true", "yes", "on")
            if action.type is not None:
                return action.type(value)
            return value
    return value


def _group_from_args(args) -> GroupConfig:
    inst = InstanceSpec(args.common, args.a_only, args.b_only, args.bits, args.seed)
    m = args.m if args.m is not None else (5 if args.protocol == "commonsense-bi" else 7)
    return GroupConfig(
        name=args.group_name,
        protocol=args.protocol,
        instance=inst,
        trials=args.trials,
        m=m,
        alpha=args.alpha,
        smf_fpp=args.smf_fpp,
        max_rounds=args.max_rounds,
        resolve_round=args.resolve_round,
        signature_bits=args.signature_bits,
        p_trunc=args.p_trunc,
        parity_levels=args.parity_levels,
        fingerprint_bits=args.fingerprint_bits,
        workers=args.workers,
    )


def cmd_gen(args) -> int:
    inst = InstanceSpec(args.common, args.a_only, args.b_only, args.bits, args.seed)
    a, b = gen_instance(inst)
    np.savez_compressed(args.out, a=a.words, b=b.words, bits=np.int64(inst.universe_bits),
                        seed=np.int64(inst.seed))
    print(f"wrote {args.out}: |A|={len(a)} |B|={len(b)} "
          f"|A&B|={inst.n_common} bits={inst.universe_bits}")
    return 0


def cmd_bounds(args) -> int:
    inst = InstanceSpec(args.common, args.a_only, args.b_only, args.bits, args.seed)
    rows = bounds_rows(inst)
    text = write_csv(rows, args.csv)
    sys.stdout.write(text)
    return 0


def cmd_run(args) -> int:
    group = _group_from_args(args)
    rows = []
    if group.protocol == "bounds":
        rows = bounds_rows(group.instance)
        ok = True
    else:
        result = run_experiment(group)
        rows = [result.row()]
        ok = result.successes == group.trials
        print(f"# group {group.name}: {result.successes}/{group.trials} exact, "
              f"wall {result.wall_seconds:.1f}s", file=sys.stderr)
    text = write_csv(rows, args.csv)
    sys.stdout.write(text)
    if args.strict and not ok:
        return 1
    return 0


def cmd_tune(args) -> int:
    group = _group_from_args(args)
    best, history = tune_alpha(group, lo=args.alpha_min, hi=args.alpha_max,
                               resolution=args.resolution)
    for alpha, successes in history:
        print(f"# alpha={alpha:g}: {successes}/{group.trials}", file=sys.stderr)
    print(f"alpha={best:g}")
    return 0


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = argparse.ArgumentParser(prog="intersketch", description=__doc__)
    parser.add_argument("--config", default=None, help="key=value defaults file")
    sub = parser.add_subparsers(dest="command", required=True)

    p_gen = sub.add_parser("gen", help="write a synthetic instance")
    _add_instance_args(p_gen)
    p_gen.add_argument("--out", required=True, help="output .npz path")
    p_gen.set_defaults(func=cmd_gen)

    p_run = sub.add_parser("run", help="run an experiment group")
    _add_instance_args(p_run)
    _add_protocol_args(p_run)
    p_run.set_defaults(func=cmd_run)

    p_bounds = sub.add_parser("bounds", help="print analytic lower bounds")
    _add_instance_args(p_bounds)
    p_bounds.add_argument("--csv", default=None)
    p_bounds.set_defaults(func=cmd_bounds)

    p_tune = sub.add_parser("tune", help="search the smallest lossless alpha")
    _add_instance_args(p_tune)
    _add_protocol_args(p_tune)
    p_tune.add_argument("--alpha-min", type=float, default=0.6)
    p_tune.add_argument("--alpha-max", type=float, default=4.0)
    p_tune.add_argument("--resolution", type=float, default=0.05)
    p_tune.set_defaults(func=cmd_tune)

    args = _apply_config_defaults(parser, argv)
    return args.func(args)


if __name__ == "__main__":
    raise SystemExit(main())
