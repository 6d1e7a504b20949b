"""Move validity: full replay (the oracle) and Restore-Apply-Reapply.

Both paths apply operations in ascending id order with the same per-op rules:

* ``make`` parents the new object under ``obj``;
* an object move is rejected if its destination lies inside the moved object;
  otherwise it re-parents the object, and it displaces the previous winning
  move of the same element.  Scalar moves skip the cycle check and the tree;
* predecessors are then sent to the trash, but only when the predecessor is
  the element's current placement.  A valid move is a placement by definition;
  a make is a placement only while no valid move carries its object.  This
  keeps a delete of a stale location from trashing an object that has already
  been moved elsewhere, and keeps a move from trashing the object it just
  placed;
* a rejected move touches nothing else.

The tree only holds objects (maps and lists); ``None`` means trashed.
"""

from __future__ import annotations

from typing import Iterable, Mapping, Optional, Sequence

from .materialize import DocumentIndex, JsonValue
from .opset import ROOT, OpId, Operation, OpSet, OpType

__all__ = [
    "is_ancestor",
    "update_validity_naive",
    "Engine",
    "NaiveEngine",
    "RarEngine",
    "NoMoveEngine",
    "check_acyclic",
]

Tree = dict[OpId, Optional[OpId]]

_ABSENT = object()  # parents-log marker: the object had no tree entry


def is_ancestor(tree: Mapping[OpId, Optional[OpId]], node: Optional[OpId], ancestor: OpId) -> bool:
    """True if ``ancestor`` is ``node`` or lies on its parent chain."""
    while True:
        if node == ancestor:
            return True
        if node is None or node == ROOT:
            return False
        node = tree.get(node)


def update_validity_naive(ops: Sequence[Operation]) -> tuple[dict[OpId, bool], Tree]:
    """Replay ``ops`` (ascending, causally closed) from scratch."""
    by_id = {op.id: op for op in ops}
    tree: Tree = {}
    winners: dict[OpId, OpId] = {}
    valid: dict[OpId, bool] = {}
    for op in ops:
        if op.type is OpType.MAKE:
            tree[op.id] = op.obj
        elif op.type is OpType.MOVE:
            mid = op.move_id
            if op.value is None:
                if is_ancestor(tree, op.obj, mid):
                    valid[op.id] = False
                    continue
                tree[mid] = op.obj
            valid[op.id] = True
            prev = winners.get(mid)
            if prev is not None:
                valid[prev] = False
            winners[mid] = op.id
        for p in op.pred:
            pred = by_id[p]
            if pred.type is OpType.MOVE:
                if pred.value is None and valid[p]:
                    tree[pred.move_id] = None
            elif pred.type is OpType.MAKE and p not in winners:
                tree[p] = None
    return valid, tree


def check_acyclic(tree: Mapping[OpId, Optional[OpId]]) -> bool:
    """Walk every parent chain; False if any of them loops."""
    done: set[OpId] = set()
    get = tree.get
    for start in tree:
        if start in done:
            continue
        path = set()
        node = start
        while node is not None and node not in done and node != ROOT:
            if node in path:
                return False
            path.add(node)
            node = get(node)
        done |= path
    return True


class Engine:
    """Common surface of the engine variants."""

    name = "base"

    def __init__(self) -> None:
        self.ops = OpSet()
        self.restore_steps = 0
        self.reapply_steps = 0
        self.timeline_touches = 0

    @property
    def valid(self) -> Mapping[OpId, bool]:
        raise NotImplementedError

    @property
    def tree(self) -> Tree:
        raise NotImplementedError

    def insert(self, op: Operation) -> int:
        raise NotImplementedError

    def insert_batch(self, ops: Iterable[Operation]) -> None:
        for op in sorted(ops, key=lambda o: o.id):
            self.insert(op)

    def counters(self) -> dict[str, int]:
        return {
            "restore_steps": self.restore_steps,
            "reapply_steps": self.reapply_steps,
            "timeline_touches": self.timeline_touches,
        }

    def index(self) -> DocumentIndex:
        return DocumentIndex(self.ops, self.valid)

    def document(self) -> JsonValue:
        return self.index().doc


class NaiveEngine(Engine):
    """Replays the whole OpSet whenever validity is asked for after a change."""

    name = "naive"

    def __init__(self) -> None:
        super().__init__()
        self._cache: Optional[tuple[dict, Tree]] = None

    def insert(self, op: Operation) -> int:
        i, fresh = self.ops.add(op)
        if fresh:
            self._cache = None
        return i

    def insert_batch(self, ops: Iterable[Operation]) -> None:
        if self.ops.add_many(ops):
            self._cache = None

    def _replay(self) -> tuple[dict, Tree]:
        if self._cache is None:
            self._cache = update_validity_naive(self.ops.ops)
            self.reapply_steps += len(self.ops)
        return self._cache

    @property
    def valid(self) -> dict[OpId, bool]:
        return self._replay()[0]

    @property
    def tree(self) -> Tree:
        return self._replay()[1]


class NoMoveEngine(Engine):
    """Plain OpSet with validity tracking switched off; every move stays hidden."""

    name = "moves-disabled"

    def insert(self, op: Operation) -> int:
        return self.ops.insert(op)

    def insert_batch(self, ops: Iterable[Operation]) -> None:
        self.ops.add_many(ops)

    @property
    def valid(self) -> dict[OpId, bool]:
        return {}

    @property
    def tree(self) -> Tree:
        return {}


class RarEngine(Engine):
    """Restore-Apply-Reapply.

    ``parents[k]`` records, for ``ops[k]``, the tree entries that op changed and
    their previous values, so the suffix of the log can be rewound exactly.
    ``moves[e]`` is the stack of accepted moves of element ``e``; its top is
    the valid one.
    """

    name = "rar"

    def __init__(self) -> None:
        super().__init__()
        self._tree: Tree = {}
        self._valid: dict[OpId, bool] = {}
        self.moves: dict[OpId, list[OpId]] = {}
        self.parents: list[dict] = []
        self.applied = 0  # ops[:applied] are reflected in tree/valid/moves

    @property
    def valid(self) -> dict[OpId, bool]:
        return self._valid

    @property
    def tree(self) -> Tree:
        return self._tree

    def insert(self, op: Operation) -> int:
        existing = self.ops.get(op.id)
        if existing is not None:
            return self.ops.insert(op)  # no-op or ConflictingDuplicate
        self.ops.check(op)
        i = self.ops.position(op.id)
        self.restore_suffix(i)
        self.ops.add(op)
        self.parents.insert(i, {})
        self.apply_forward(i, fresh={op.id})
        return i

    def insert_batch(self, ops: Iterable[Operation]) -> None:
        ops = list(ops)
        trial = self.ops.copy()
        fresh = trial.add_many(ops)
        if not fresh:
            return
        i = self.ops.position(fresh[0].id)
        self.restore_suffix(i)
        self.ops.add_many(fresh)
        self.parents = [{} for _ in self.ops] if not self.parents else self._merge_parents(fresh)
        self.apply_forward(i, fresh={op.id for op in fresh})

    def _merge_parents(self, fresh: list[Operation]) -> list[dict]:
        new = set(op.id for op in fresh)
        old = iter(self.parents)
        return [{} if op_id in new else next(old) for op_id in self.ops.ids]

    def restore_suffix(self, i: int) -> None:
        """Rewind so that exactly ``ops[:i]`` are applied."""
        ops = self.ops.ops
        tree, valid, moves, parents = self._tree, self._valid, self.moves, self.parents
        for k in range(self.applied - 1, i - 1, -1):
            op = ops[k]
            entry = parents[k]
            for obj, old in entry.items():
                if old is _ABSENT:
                    del tree[obj]
                else:
                    tree[obj] = old
            parents[k] = {}
            if op.type is OpType.MOVE and valid.pop(op.id, False):
                stack = moves.get(op.move_id)
                if stack and stack[-1] == op.id:
                    stack.pop()
                    if stack:
                        valid[stack[-1]] = True
                    else:
                        del moves[op.move_id]
            self.restore_steps += 1
        self.applied = min(self.applied, i)

    def apply_forward(self, i: int, fresh: frozenset | set = frozenset()) -> None:
        """Apply ``ops[i:]`` on top of a state reflecting exactly ``ops[:i]``."""
        if self.applied != i:
            raise RuntimeError(f"state reflects {self.applied} ops, cannot apply from {i}")
        ops = self.ops.ops
        by_id = self.ops.by_id
        tree, valid, moves, parents = self._tree, self._valid, self.moves, self.parents
        for k in range(i, len(ops)):
            op = ops[k]
            parent: dict = {}
            t = op.type
            if t is OpType.MAKE:
                parent[op.id] = tree.get(op.id, _ABSENT)
                tree[op.id] = op.obj
            elif t is OpType.MOVE:
                mid = op.move_id
                if op.value is None:
                    if is_ancestor(tree, op.obj, mid):
                        valid[op.id] = False
                        parents[k] = parent
                        continue
                    parent[mid] = tree.get(mid, _ABSENT)
                    tree[mid] = op.obj
                valid[op.id] = True
                stack = moves.get(mid)
                if stack is None:
                    stack = moves[mid] = []
                elif stack:
                    valid[stack[-1]] = False
                stack.append(op.id)
            # The winner swap above must precede this loop: a move's own
            # predecessor is the placement it just replaced.
            for p in op.pred:
                pred = by_id[p]
                if pred.type is OpType.MOVE:
                    if pred.value is None and valid[p]:
                        target = pred.move_id
                    else:
                        continue
                elif pred.type is OpType.MAKE and p not in moves:
                    target = p
                else:
                    continue
                if target not in parent:
                    parent[target] = tree.get(target, _ABSENT)
                tree[target] = None
            parents[k] = parent
        # every op in the range was either fresh or a re-application
        self.reapply_steps += len(ops) - i - sum(1 for f in fresh if self.ops.position(f) >= i)
        self.applied = len(ops)

    def snapshot(self) -> tuple[Tree, dict, dict]:
        """Copy of (tree, valid, moves) for comparisons."""
        return dict(self._tree), dict(self._valid), {k: list(v) for k, v in self.moves.items()}
