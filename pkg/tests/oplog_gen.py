"""Random causally closed op logs, independent of the replica edit API.

Unlike the fuzzer, predecessors are picked freely among earlier ops, so the
engines also see logs no well-behaved replica would produce (moves that list
unrelated ops as predecessors, deletes of stale values, and so on).
"""

from __future__ import annotations

import random

from movecrdt.opset import HEAD, ROOT, ElemRef, MapKey, ObjType, OpId, Operation, OpType, Scalar

KEYS = ("x", "y", "z")


def random_log(rng: random.Random, n_ops: int, actors: int = 3) -> list[Operation]:
    ops: list[Operation] = []
    objects = {ROOT: ObjType.MAP}
    slots: dict[OpId, list[OpId]] = {}
    scalars: list[OpId] = []
    placeable: list[OpId] = []  # make/put/move ops, usable as predecessors
    counter = 0
    for _ in range(n_ops):
        # Lamport rule: strictly above everything the new op can reference
        counter += rng.choice((1, 1, 2))
        op_id = OpId(counter, rng.randrange(1, actors + 1))
        pred = tuple(sorted(set(rng.sample(placeable, min(len(placeable), rng.choice((0, 0, 1, 1, 2)))))))
        obj = rng.choice(list(objects))
        kind = objects[obj]
        roll = rng.random()
        if kind is ObjType.MAP:
            key, insert = MapKey(rng.choice(KEYS)), False
        else:
            elems = slots.setdefault(obj, [])
            if elems and rng.random() < 0.3 and roll < 0.6:
                key, insert = ElemRef(rng.choice(elems)), False
            else:
                key, insert = (ElemRef(rng.choice(elems)) if elems and rng.random() < 0.7 else HEAD), True
        if roll < 0.2 and objects:
            movable = [o for o in objects if o != ROOT]
            use_scalar = scalars and (not movable or rng.random() < 0.3)
            if not movable and not use_scalar:
                continue
            mid = rng.choice(scalars) if use_scalar else rng.choice(movable)
            value = next(o.value for o in ops if o.id == mid) if use_scalar else None
            if kind is ObjType.LIST:
                key = ElemRef(rng.choice(slots[obj])) if slots.get(obj) and rng.random() < 0.7 else HEAD
            op = Operation(op_id, OpType.MOVE, obj, key, value, pred, move_id=mid)
        elif roll < 0.3 and pred:
            op = Operation(op_id, OpType.DEL, pred=pred)
        elif roll < 0.5:
            kind_new = rng.choice((ObjType.MAP, ObjType.LIST))
            op = Operation(op_id, OpType.MAKE, obj, key, kind_new, () if insert else pred, insert=insert)
        else:
            op = Operation(op_id, OpType.PUT, obj, key, Scalar(f"s{len(ops)}"), () if insert else pred, insert=insert)
        ops.append(op)
        if op.type is OpType.MAKE:
            objects[op.id] = op.value
        if op.type is OpType.PUT:
            scalars.append(op.id)
        if op.creates_slot():
            slots.setdefault(op.obj, []).append(op.id)
        if op.type is not OpType.DEL:
            placeable.append(op.id)
    return ops


def causal_shuffle(rng: random.Random, ops: list[Operation]) -> list[Operation]:
    """A random order in which each op comes after everything it references."""
    remaining = list(ops)
    seen: set[OpId] = {ROOT}
    out = []
    while remaining:
        ready = [o for o in remaining if all(r in seen for r in o.references())]
        pick = rng.choice(ready)
        remaining.remove(pick)
        seen.add(pick.id)
        out.append(pick)
    return out
