"""Command line entry point: ``movecrdt {materialize,validity,fuzz,bench}``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import Optional, Sequence

from .bench import DEFAULT_VARIANTS, GRID, SCENARIOS, BenchDiverged, Scenario, emit_csv, run_scenario
from .engine import update_validity_naive
from .errors import CRDTError, MalformedRecord, MissingDependency
from .materialize import canonical_json, materialize
from .opset import OpSet, OpType, decode_log, encode_log
from .replica import DEFAULT_MIX, VARIANTS, FuzzConfig, FuzzReport, canonical_variant, fuzz_run, parse_mix

EXIT_DIVERGED = 1
EXIT_BAD_INPUT = 2


def _read_log(path: str) -> OpSet:
    data = sys.stdin.buffer.read() if path == "-" else Path(path).read_bytes()
    s = OpSet()
    s.add_many(decode_log(data))
    return s


def _load_or_exit(path: str) -> Optional[OpSet]:
    try:
        return _read_log(path)
    except (MissingDependency, MalformedRecord) as exc:
        print(f"error: {exc}", file=sys.stderr)
    except (CRDTError, ValueError) as exc:
        print(f"error: invalid op log: {exc}", file=sys.stderr)
    return None


def cmd_materialize(args: argparse.Namespace) -> int:
    s = _load_or_exit(args.log)
    if s is None:
        return EXIT_BAD_INPUT
    valid, _ = update_validity_naive(s.ops)
    sys.stdout.write(canonical_json(materialize(s, valid)) + "\n")
    return 0


def cmd_validity(args: argparse.Namespace) -> int:
    s = _load_or_exit(args.log)
    if s is None:
        return EXIT_BAD_INPUT
    valid, _ = update_validity_naive(s.ops)
    for op in s:
        if op.type is OpType.MOVE:
            ident = json.dumps([op.id.counter, str(op.id.actor)], separators=(",", ":"))
            print(f"{ident} {'true' if valid[op.id] else 'false'}")
    return 0


def _write_repro(report: FuzzReport, cfg: FuzzConfig, out: Path) -> None:
    out.mkdir(parents=True, exist_ok=True)
    for r in report.replicas:
        (out / f"replica-{r.actor}.oplog").write_bytes(encode_log(r.ops))
        for name, eng in r.engines().items():
            (out / f"replica-{r.actor}-{name}.json").write_text(canonical_json(eng.document()) + "\n")
    summary = {
        "seed": cfg.seed,
        "replicas": cfg.replicas,
        "ops": cfg.total_ops,
        "variant": cfg.variant,
        "converged": report.converged,
        "oracle_match": report.oracle_match,
        "variant_mismatches": report.variant_mismatches,
        "violations": report.violations,
        "digests": report.divergence_detail,
    }
    (out / "report.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")


def cmd_fuzz(args: argparse.Namespace) -> int:
    mix = parse_mix(args.mix) if args.mix else dict(DEFAULT_MIX)
    variant = canonical_variant(args.variant)
    shadows = () if args.no_shadows else tuple(v for v in VARIANTS if v != variant)
    failures = 0
    for seed in range(args.seed, args.seed + args.cases):
        cfg = FuzzConfig(
            replicas=args.replicas,
            total_ops=args.ops,
            op_mix=mix,
            sync_rounds=args.rounds,
            seed=seed,
            variant=variant,
            shadows=shadows,
            check_every_insert=args.check_every_insert,
        )
        report = fuzz_run(cfg)
        status = "ok" if report.ok else "DIVERGED"
        print(
            f"seed={seed} {status} ops={report.ops_generated} moves={report.moves_generated} "
            f"invalid_moves={report.invalid_moves} restore_steps={report.counters['restore_steps']}"
        )
        if not report.ok:
            failures += 1
            out = Path(args.out_dir) / f"seed-{seed}"
            _write_repro(report, cfg, out)
            print(f"  repro files written to {out}", file=sys.stderr)
    return EXIT_DIVERGED if failures else 0


def cmd_bench(args: argparse.Namespace) -> int:
    sizes = list(GRID) if args.grid else [args.n]
    variants = args.variant or list(DEFAULT_VARIANTS[args.scenario])
    rows = []
    try:
        for v in variants:
            for n in sizes:
                sc = Scenario(args.scenario, n, v, args.seed, args.repeats, time_limit=args.time_limit)
                got = run_scenario(sc)
                rows.extend(got)
                if not all(r.complete for r in got):
                    print(f"{args.scenario}/{v} n={n}: stopped at the time limit", file=sys.stderr)
    except BenchDiverged as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    emit_csv(rows, args.out if args.out else sys.stdout)
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="movecrdt", description="JSON CRDT with a move operation")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    m = sub.add_parser("materialize", help="render an op-log file as canonical JSON")
    m.add_argument("log", help="op-log file, or - for stdin")
    m.set_defaults(func=cmd_materialize)

    v = sub.add_parser("validity", help="print the validity of every move in an op-log file")
    v.add_argument("log", help="op-log file, or - for stdin")
    v.set_defaults(func=cmd_validity)

    f = sub.add_parser("fuzz", help="randomized multi-replica convergence check")
    f.add_argument("--replicas", type=int, default=3)
    f.add_argument("--ops", type=int, default=200)
    f.add_argument("--seed", type=int, default=0)
    f.add_argument("--cases", type=int, default=1, help="run seeds seed..seed+cases-1")
    f.add_argument("--variant", default="rar", help="|".join(VARIANTS))
    f.add_argument("--mix", default="", help="weights, e.g. put:4,make:2,insert:2,delete:1,move:3")
    f.add_argument("--rounds", type=int, default=6)
    f.add_argument("--no-shadows", action="store_true", help="skip the other engine variants")
    f.add_argument("--check-every-insert", action="store_true", help="cycle walk after every insertion")
    f.add_argument("--out-dir", default="fuzz-repro")
    f.set_defaults(func=cmd_fuzz)

    b = sub.add_parser("bench", help="two-actor convergence benchmark, CSV output")
    b.add_argument("--scenario", choices=SCENARIOS, default="diverge-moves")
    b.add_argument("--n", type=int, default=100)
    b.add_argument("--variant", action="append", help="repeatable; default: every variant of the scenario")
    b.add_argument("--seed", type=int, default=0)
    b.add_argument("--repeats", type=int, default=3)
    b.add_argument("--out", help="CSV path (default: stdout)")
    b.add_argument("--grid", action="store_true", help="run n over " + ",".join(map(str, GRID)))
    b.add_argument("--time-limit", type=float, help="seconds per merge before giving up (row marked on stderr)")
    b.set_defaults(func=cmd_bench)
    return p


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_BAD_INPUT


if __name__ == "__main__":
    sys.exit(main())
