"""Acceptance criteria 1-9, one test each.

Each test records a PASS/FAIL line that is printed in the terminal summary
(and immediately, when run with ``-s``).
"""

import itertools
import random
import time

import pytest
from conftest import ACCEPTANCE, cross_move_ops, sample_ops, make, move, oid
from oplog_gen import causal_shuffle, random_log

from movecrdt import ROOT, MapKey, ObjType, OpSet, OpType
from movecrdt.bench import GRID, Scenario, median_ns, run_scenario
from movecrdt.engine import RarEngine, check_acyclic, update_validity_naive
from movecrdt.materialize import canonical_json, materialize
from movecrdt.replica import VARIANTS, FuzzConfig, Move, Replica, fuzz_run, make_engine, push

CORPUS_SIZE = 1000
CORPUS_BUDGET_S = 300.0


@pytest.fixture
def record():
    def _record(number, passed, detail):
        ACCEPTANCE[number] = (passed, detail)
        print(f"criterion {number}: {'PASS' if passed else 'FAIL'} - {detail}")

    return _record


def test_c1_sample_golden(record):
    out = canonical_json(materialize(OpSet(sample_ops()), {}))
    ok = out == '{"A":"a","B":["b2","b3"],"C":{"D":"d"}}'
    record(1, ok, f"worked example renders {out}")
    assert ok


def test_c2_cross_moves_cross_moves(record):
    expected = '{"a":{"b":{}}}'
    base, m1, m2 = cross_move_ops()
    failures = []
    for variant in VARIANTS:
        # raw engine, both delivery orders
        for order in ([m1, m2], [m2, m1]):
            eng = make_engine(variant)
            eng.insert_batch(base)
            for op in order:
                eng.insert(op)
            doc = canonical_json(eng.document())
            valid = dict(eng.valid)
            if doc != expected or valid != {m1.id: True, m2.id: False}:
                failures.append(f"{variant} engine {[o.id for o in order]}: {doc} {valid}")
        # replicas, both sync directions
        for first in (0, 1):
            r = [Replica(1, variant), Replica(2, variant)]
            for x in r:
                x.receive(base)
            r[0].local_edit(Move(ROOT, "b", oid(1), "b"))
            r[1].local_edit(Move(ROOT, "a", oid(2), "a"))
            push(r[first], r[1 - first])
            push(r[1 - first], r[first])
            docs = [canonical_json(x.document()) for x in r]
            dup = any(x.index().duplicates for x in r)
            cyc = not all(check_acyclic(x.engine.tree) for x in r if variant != "naive")
            if docs != [expected, expected] or dup or cyc:
                failures.append(f"{variant} replicas, first push from {first}: {docs}")
    record(2, not failures, "single nesting, lower move wins, on every variant and order" if not failures else "; ".join(failures))
    assert not failures


def test_c3_winner_rule(record):
    failures = []
    for k in (2, 3, 5):
        e = make(1, 0, ROOT, MapKey("e"), ObjType.MAP)
        dsts = [make(2, a, ROOT, MapKey(f"d{a}"), ObjType.MAP) for a in range(1, k + 1)]
        rivals = [move(3, a, dsts[a - 1].id, MapKey("e"), e.id, pred=[e.id]) for a in range(1, k + 1)]
        greatest = max(m.id for m in rivals)
        for variant in VARIANTS:
            docs = set()
            for perm in itertools.permutations(rivals):
                eng = make_engine(variant)
                eng.insert_batch([e] + dsts)
                for op in perm:
                    eng.insert(op)
                winners = [m.id for m in rivals if eng.valid[m.id]]
                if winners != [greatest]:
                    failures.append(f"k={k} {variant} {[m.id for m in perm]}: winners {winners}")
                docs.add(canonical_json(eng.document()))
            if len(docs) != 1:
                failures.append(f"k={k} {variant}: {len(docs)} different documents")
    record(3, not failures, "greatest id wins for k in 2,3,5, all permutations" if not failures else failures[0])
    assert not failures


def _corpus_config(seed: int) -> FuzzConfig:
    rng = random.Random(f"corpus:{seed}")
    return FuzzConfig(
        seed=seed,
        replicas=rng.randint(2, 4),
        total_ops=rng.randint(20, 500),
        sync_rounds=rng.randint(2, 8),
        variant=VARIANTS[seed % len(VARIANTS)],
        shadows=VARIANTS,
        check_every_insert=True,
    )


@pytest.fixture(scope="module")
def corpus():
    start = time.perf_counter()
    reports = [fuzz_run(_corpus_config(seed)) for seed in range(CORPUS_SIZE)]
    return reports, time.perf_counter() - start


def test_c4_oracle_equivalence(record, corpus):
    reports, elapsed = corpus
    bad = [r.seed for r in reports if not (r.converged and r.oracle_match and not r.variant_mismatches)]
    census = {}
    for r in reports:
        for k, v in r.census.items():
            census[k] = census.get(k, 0) + v
    missing = [k for k, v in census.items() if v == 0]
    ok = not bad and not missing and elapsed < CORPUS_BUDGET_S
    detail = (
        f"{len(reports)} cases, {len(bad)} divergent {bad[:5]}, {elapsed:.0f}s (budget {CORPUS_BUDGET_S:.0f}s), "
        f"moves {sum(r.moves_generated for r in reports)} of which invalid {sum(r.invalid_moves for r in reports)}, "
        f"census {census}"
    )
    record(4, ok, detail)
    assert not bad
    assert not missing
    assert elapsed < CORPUS_BUDGET_S


def test_c5_structural_safety(record, corpus):
    reports, _ = corpus
    bad = [(r.seed, r.violations[:2]) for r in reports if r.violations]
    record(5, not bad, f"no duplicates or cycles across {len(reports)} cases" if not bad else str(bad[:3]))
    assert not bad


def test_c6_restore_round_trip(record):
    failures = 0
    checked = 0
    for seed in range(200):
        rng = random.Random(f"round-trip:{seed}")
        ops = random_log(rng, rng.randint(1, 80))
        eng = RarEngine()
        eng.insert_batch(ops)
        full = eng.snapshot()
        for i in range(len(eng.ops) + 1):
            eng.restore_suffix(i)
            prefix_valid, prefix_tree = update_validity_naive(eng.ops.ops[:i])
            if (eng.tree, eng.valid) != (prefix_tree, prefix_valid):
                failures += 1
            eng.apply_forward(i)
            checked += 1
            if eng.snapshot() != full:
                failures += 1
    record(6, failures == 0, f"{checked} restore/apply pairs over 200 states, {failures} mismatches")
    assert failures == 0


def test_c7_adds_ordering(record):
    n = 10_000
    lc = run_scenario(Scenario("diverge-adds", n, "rar-lifecycle", repeats=3))
    off = run_scenario(Scenario("diverge-adds", n, "moves-disabled", repeats=3))
    t_lc, t_off = median_ns(lc), median_ns(off)
    # Per-op RAR is quadratic here.  It is stopped once it has provably taken
    # long enough; its elapsed time is then a lower bound on the full run.
    limit = max(5.0, 60 * t_lc / 1e9)
    rar = run_scenario(Scenario("diverge-adds", n, "rar", repeats=1, time_limit=limit))
    t_rar = median_ns(rar)
    bound = "" if rar[0].complete else " (lower bound, stopped early)"
    ok = t_lc * 50 <= t_rar and t_lc <= 10 * t_off
    record(
        7,
        ok,
        f"N={n}: lifecycle {t_lc / 1e6:.1f} ms, moves-disabled {t_off / 1e6:.1f} ms, "
        f"rar {t_rar / 1e6:.0f} ms{bound}; rar/lifecycle {t_rar / t_lc:.0f}x, lifecycle/disabled {t_lc / t_off:.2f}x",
    )
    assert ok


def test_c8_moves_ceiling(record):
    rows = run_scenario(Scenario("diverge-moves", 100, "rar-batch", repeats=5))
    med_ms = median_ns(rows) / 1e6
    steps = []
    for n in GRID:
        batch = run_scenario(Scenario("diverge-moves", n, "rar-batch", repeats=1))[0]
        per_op = run_scenario(Scenario("diverge-moves", n, "rar", repeats=1, time_limit=2.0))[0]
        # a stopped per-op run has done at least this many restore steps
        steps.append((n, batch.restore_steps, per_op.restore_steps, per_op.complete))
    steps_ok = all(b <= p for _, b, p, _ in steps)
    ok = med_ms <= 100 and steps_ok
    listing = ", ".join(f"N={n}: {b}<={p}{'' if c else '+'}" for n, b, p, c in steps)
    record(8, ok, f"N=100 batch merge median {med_ms:.1f} ms (ceiling 100); restore steps batch<=per-op: {listing}")
    assert ok


def test_c9_zero_restore_adds(record):
    counts = []
    for n in GRID:
        rows = run_scenario(Scenario("diverge-adds", n, "rar-lifecycle", repeats=1))
        counts.append(rows[0].restore_steps)
    for seed in range(50):
        rng = random.Random(f"adds:{seed}")
        s = OpSet()
        for op in random_log(rng, 120):
            if op.type is not OpType.MOVE and all(r == ROOT or r in s for r in op.references()):
                s.insert(op)
        eng = make_engine("rar-lifecycle")
        for op in causal_shuffle(rng, s.ops):
            eng.insert(op)
        counts.append(eng.restore_steps)
    ok = all(c == 0 for c in counts)
    record(9, ok, f"lifecycle restore_steps on {len(counts)} add-only workloads: max {max(counts)}")
    assert ok

