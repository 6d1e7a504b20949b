import itertools
import random

import pytest
from conftest import delete, cross_move_ops, sample_ops, make, move, oid, put
from hypothesis import given, settings
from hypothesis import strategies as st
from oplog_gen import causal_shuffle, random_log

from movecrdt import ROOT, MapKey, ObjType, OpId, OpSet, Scalar
from movecrdt.engine import NaiveEngine, RarEngine, check_acyclic, is_ancestor, update_validity_naive
from movecrdt.errors import ConflictingDuplicate, MissingDependency
from movecrdt.materialize import canonical_json, materialize


def test_is_ancestor_examples():
    a, b, x = oid(1), oid(2), oid(5)
    assert is_ancestor({}, x, x)
    assert not is_ancestor({x: ROOT}, x, oid(6))
    assert is_ancestor({b: a, a: ROOT}, b, a)
    assert not is_ancestor({b: None}, b, a)
    assert not is_ancestor({}, b, a)  # missing entries end the walk


def test_naive_cross_moves():
    base, m1, m2 = cross_move_ops()
    valid, tree = update_validity_naive(OpSet(base + [m1, m2]).ops)
    assert valid == {m1.id: True, m2.id: False}
    assert tree == {oid(1): ROOT, oid(2): oid(1)}
    assert materialize(OpSet(base + [m1, m2]), valid) == {"a": {"b": {}}}


def test_naive_without_moves(sample):
    valid, tree = update_validity_naive(sample.ops)
    assert valid == {}
    assert tree == {oid(2): ROOT, oid(6): ROOT}


def _rivals():
    e = make(1, 0, ROOT, MapKey("e"), ObjType.MAP)
    dst = make(2, 0, ROOT, MapKey("d"), ObjType.MAP)
    m1 = move(5, 1, ROOT, MapKey("x"), e.id, pred=[e.id])
    m2 = move(5, 2, dst.id, MapKey("y"), e.id, pred=[e.id])
    return [e, dst], m1, m2


def test_naive_rival_moves():
    base, m1, m2 = _rivals()
    valid, _ = update_validity_naive(OpSet(base + [m1, m2]).ops)
    assert valid == {m1.id: False, m2.id: True}


def test_rar_cross_moves_out_of_order():
    base, m1, m2 = cross_move_ops()
    eng = RarEngine()
    for op in base + [m2, m1]:
        eng.insert(op)
    assert eng.valid == {m1.id: True, m2.id: False}
    assert eng.tree == {oid(1): ROOT, oid(2): oid(1)}


def test_rar_append_runs_no_restore(sample):
    eng = RarEngine()
    for op in sample_ops():
        eng.insert(op)
    assert eng.restore_steps == 0
    assert eng.reapply_steps == 0


def test_rar_rivals_stack_and_revalidation():
    base, m1, m2 = _rivals()
    eng = RarEngine()
    for op in base + [m2]:
        eng.insert(op)
    assert eng.valid == {m2.id: True}
    eng.insert(m1)
    assert eng.moves[oid(1)] == [m1.id, m2.id]
    assert eng.valid == {m1.id: False, m2.id: True}
    assert eng.restore_steps == 1 and eng.reapply_steps == 1


def test_rar_rejects_bad_inserts(sample):
    eng = RarEngine()
    for op in sample_ops()[:3]:
        eng.insert(op)
    with pytest.raises(MissingDependency):
        eng.insert(sample_ops()[4])
    with pytest.raises(ConflictingDuplicate):
        eng.insert(put(1, 0, ROOT, MapKey("A"), "no"))
    assert eng.insert(sample_ops()[0]) == 0  # identical duplicate is a no-op
    assert eng.applied == 3


def test_restore_to_full_length_is_identity(sample):
    eng = RarEngine()
    eng.insert_batch(sample_ops())
    before = eng.snapshot()
    eng.restore_suffix(len(eng.ops))
    assert eng.snapshot() == before


def test_restore_last_move_revalidates_previous_top():
    base, m1, m2 = _rivals()
    eng = RarEngine()
    eng.insert_batch(base + [m1, m2])
    eng.restore_suffix(len(eng.ops) - 1)
    valid, tree = update_validity_naive(eng.ops.ops[:-1])
    assert eng.valid == valid == {m1.id: True}
    assert eng.tree == tree
    assert eng.tree[oid(1)] == ROOT


def test_restore_across_make_removes_entry():
    eng = RarEngine()
    x = make(1, 0, ROOT, MapKey("x"), ObjType.MAP)
    eng.insert(x)
    assert eng.tree == {x.id: ROOT}
    assert x.id in eng.parents[0]  # previous parent recorded: none
    eng.restore_suffix(0)
    assert eng.tree == {}


def test_forward_over_cycle_invalid_move():
    base, m1, m2 = cross_move_ops()
    eng = RarEngine()
    eng.insert_batch(base + [m1])
    tree, moves = dict(eng.tree), dict(eng.moves)
    eng.insert(m2)
    assert eng.valid[m2.id] is False
    assert eng.tree == tree
    assert eng.moves == moves
    assert eng.parents[-1] == {}


def test_forward_over_scalar_move(sample):
    eng = RarEngine()
    eng.insert_batch(sample_ops())
    tree = dict(eng.tree)
    sm = move(9, 0, oid(2), sample_ops()[2].key, oid(7), pred=[oid(7)], value=Scalar("d"))
    eng.insert(sm)
    assert eng.valid == {sm.id: True}
    assert eng.moves == {oid(7): [sm.id]}
    assert eng.tree == tree


def test_move_concurrent_with_delete_resurrects():
    x = make(1, 0, ROOT, MapKey("x"), ObjType.MAP)
    d = make(2, 0, ROOT, MapKey("d"), ObjType.MAP)
    for del_id, move_id in ((OpId(3, 1), OpId(3, 2)), (OpId(3, 2), OpId(3, 1))):
        rm = delete(del_id.counter, del_id.actor, [x.id])
        mv = move(move_id.counter, move_id.actor, d.id, MapKey("x"), x.id, pred=[x.id])
        s = OpSet([x, d, rm, mv])
        valid, tree = update_validity_naive(s.ops)
        assert valid == {mv.id: True}
        assert tree[x.id] == d.id
        assert materialize(s, valid) == {"d": {"x": {}}}


@pytest.mark.parametrize("k", [2, 3, 5])
def test_winner_is_greatest_move_in_any_order(k):
    e = make(1, 0, ROOT, MapKey("e"), ObjType.MAP)
    dst = [make(2, a, ROOT, MapKey(f"d{a}"), ObjType.MAP) for a in range(k)]
    rivals = [move(3, a + 1, dst[a].id, MapKey("e"), e.id, pred=[e.id]) for a in range(k)]
    perms = list(itertools.permutations(rivals))
    docs = set()
    for perm in perms[:24]:
        eng = RarEngine()
        eng.insert_batch([e] + dst)
        for op in perm:
            eng.insert(op)
        assert [m for m in rivals if eng.valid[m.id]] == [rivals[-1]]
        docs.add(canonical_json(eng.document()))
    assert len(docs) == 1


@settings(max_examples=120, deadline=None)
@given(st.integers(0, 10**6))
def test_rar_matches_oracle_in_any_causal_order(seed):
    rng = random.Random(seed)
    ops = random_log(rng, rng.randint(1, 200))
    valid, tree = update_validity_naive(OpSet(ops).ops)
    eng = RarEngine()
    for op in causal_shuffle(rng, ops):
        eng.insert(op)
        assert check_acyclic(eng.tree)
    assert eng.valid == valid
    assert eng.tree == tree


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 10**6))
def test_confluence_and_batches(seed):
    rng = random.Random(seed)
    ops = random_log(rng, 120)
    a, b = RarEngine(), RarEngine()
    for op in causal_shuffle(rng, ops):
        a.insert(op)
    order = causal_shuffle(rng, ops)
    cuts = sorted(rng.sample(range(1, len(order)), min(3, len(order) - 1)))
    for lo, hi in zip([0] + cuts, cuts + [len(order)]):
        b.insert_batch(order[lo:hi])
    assert (a.valid, a.tree) == (b.valid, b.tree)
    assert canonical_json(a.document()) == canonical_json(b.document())


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 10**6))
def test_winner_uniqueness(seed):
    ops = random_log(random.Random(seed), 150)
    eng = RarEngine()
    eng.insert_batch(ops)
    by_element = {}
    for op in eng.ops:
        if op.is_move:
            by_element.setdefault(op.move_id, []).append(op.id)
    for element, ids in by_element.items():
        winners = [m for m in ids if eng.valid[m]]
        pushed = eng.moves.get(element, [])
        if pushed:
            assert winners == [pushed[-1]] == [max(pushed)]
            assert pushed == sorted(pushed)
        else:
            assert winners == []


def test_naive_engine_is_lazy(sample):
    eng = NaiveEngine()
    for op in sample_ops():
        eng.insert(op)
    assert eng.reapply_steps == 0
    assert eng.valid == {}
    steps = eng.reapply_steps
    assert eng.tree == {oid(2): ROOT, oid(6): ROOT}
    assert eng.reapply_steps == steps
