"""Lifecycle tracking: Restore-Apply-Reapply over move operations only.

Every element keeps a timeline of the operations that put it somewhere
(its make/put and the moves that carry it) and of the operations that sent one
of those placements to the trash.  From the timeline the parent of an object at
any logical time can be read back with a binary search, so creating, deleting
and overwriting never have to be rewound and replayed; only moves do.

A move event counts as present while the move sits on its element's move
stack, i.e. while it was not rejected by the cycle check.  A trash event only
takes effect if the operation it names is the placement in force at that time,
and, when it comes from a move, only if that move was accepted.
"""

from __future__ import annotations

import bisect
from typing import Iterable, Iterator, Optional

from .engine import Engine, Tree
from .errors import UnknownObject
from .opset import ROOT, OpId, Operation, OpType

__all__ = ["LifecycleList", "LifecycleEngine"]

_END = OpId(float("inf"), 0)


class LifecycleList:
    """Timeline of one element.

    ``present`` holds ``(op id, parent, is_move)`` for the ops that create or
    move the element; ``trash`` maps a placement op id to the sorted ids of
    the ops that deleted or overwrote that placement.
    """

    __slots__ = ("present", "present_ids", "trash")

    def __init__(self) -> None:
        self.present: list[tuple[OpId, OpId, bool]] = []
        self.present_ids: list[OpId] = []
        self.trash: dict[OpId, list[OpId]] = {}

    def add_present(self, op_id: OpId, parent: OpId, is_move: bool) -> bool:
        i = bisect.bisect_left(self.present_ids, op_id)
        if i < len(self.present_ids) and self.present_ids[i] == op_id:
            return False
        self.present_ids.insert(i, op_id)
        self.present.insert(i, (op_id, parent, is_move))
        return True

    def add_trash(self, placement: OpId, op_id: OpId) -> bool:
        ids = self.trash.setdefault(placement, [])
        i = bisect.bisect_left(ids, op_id)
        if i < len(ids) and ids[i] == op_id:
            return False
        ids.insert(i, op_id)
        return True

    def events(self) -> list[tuple[OpId, str, OpId]]:
        """Merged, id-sorted view: ``(id, "present", parent)`` / ``(id, "trash", placement)``."""
        out = [(i, "present", loc) for i, loc, _ in self.present]
        out += [(e, "trash", p) for p, ids in self.trash.items() for e in ids]
        return sorted(out)


class LifecycleEngine(Engine):
    name = "rar-lifecycle"

    def __init__(self) -> None:
        super().__init__()
        self.lifecycles: dict[OpId, LifecycleList] = {}
        self.objects: list[OpId] = []
        self.move_ids: list[OpId] = []
        self.pushed: set[OpId] = set()
        self._move_set: set[OpId] = set()
        self.moves: dict[OpId, list[OpId]] = {}
        self._valid: dict[OpId, bool] = {}

    @property
    def valid(self) -> dict[OpId, bool]:
        return self._valid

    @property
    def tree(self) -> Tree:
        return {x: self.parent_at(x, _END) for x in self.objects}

    # -- timelines -------------------------------------------------------------

    def record_lifecycle(self, op: Operation) -> None:
        by_id = self.ops.by_id
        t = op.type
        if t is OpType.MAKE or t is OpType.PUT:
            lc = self.lifecycles.get(op.id)
            if lc is None:
                lc = self.lifecycles[op.id] = LifecycleList()
                if t is OpType.MAKE:
                    self.objects.append(op.id)
            self.timeline_touches += lc.add_present(op.id, op.obj, False)
        elif t is OpType.MOVE:
            self._move_set.add(op.id)
            self.timeline_touches += self.lifecycles[op.move_id].add_present(op.id, op.obj, True)
        for p in op.pred:
            pred = by_id[p]
            if pred.type is OpType.DEL:
                continue
            self.timeline_touches += self.lifecycles[pred.element].add_trash(p, op.id)

    def parent_at(self, element: OpId, t: OpId) -> Optional[OpId]:
        """Parent ``element`` has once every op with id < ``t`` is applied."""
        lc = self.lifecycles.get(element)
        if lc is None:
            raise UnknownObject(element)
        j = bisect.bisect_left(lc.present_ids, t)
        pushed = self.pushed
        while j:
            j -= 1
            op_id, loc, is_move = lc.present[j]
            if is_move and op_id not in pushed:
                continue
            for e in lc.trash.get(op_id, ()):
                if e >= t:
                    break
                # a move only trashes its predecessors if it was accepted
                if e in pushed or e not in self._move_set:
                    return None
            return loc
        return None

    def _is_ancestor_at(self, node: Optional[OpId], ancestor: OpId, t: OpId) -> bool:
        while True:
            if node == ancestor:
                return True
            if node is None or node == ROOT:
                return False
            node = self.parent_at(node, t)

    def _trashes_objects(self, op: Operation) -> bool:
        by_id = self.ops.by_id
        for p in op.pred:
            pred = by_id[p]
            if pred.type is OpType.MAKE or (pred.type is OpType.MOVE and pred.value is None):
                return True
        return False

    # -- insertion -------------------------------------------------------------

    def insert(self, op: Operation) -> int:
        i, fresh = self.ops.add(op)
        if not fresh:
            return i
        self.record_lifecycle(op)
        if op.type is OpType.MOVE:
            self._move_rar(op.id, [op.id])
        elif self.move_ids and self.move_ids[-1] > op.id and self._trashes_objects(op):
            # conservative: the trash event may change a later cycle check
            self._move_rar(op.id, [])
        return i

    def insert_batch(self, ops: Iterable[Operation]) -> None:
        fresh = self.ops.add_many(ops)
        for op in fresh:
            self.record_lifecycle(op)
        new_moves = [op.id for op in fresh if op.type is OpType.MOVE]
        starts = list(new_moves)
        if self.move_ids:
            last = self.move_ids[-1]
            starts += [op.id for op in fresh if op.id < last and op.type is not OpType.MOVE and self._trashes_objects(op)]
        if starts:
            self._move_rar(min(starts), new_moves)

    def _move_rar(self, t: OpId, new_moves: list[OpId]) -> None:
        j = bisect.bisect_left(self.move_ids, t)
        self._restore_moves(j)
        for m in new_moves:
            bisect.insort(self.move_ids, m)
        self._apply_moves(j, set(new_moves))

    def _restore_moves(self, j: int) -> None:
        valid, moves = self._valid, self.moves
        for m in reversed(self.move_ids[j:]):
            if valid.pop(m, False):
                mid = self.ops.by_id[m].move_id
                stack = moves[mid]
                stack.pop()
                if stack:
                    valid[stack[-1]] = True
                else:
                    del moves[mid]
            self.pushed.discard(m)
            self.restore_steps += 1

    def _apply_moves(self, j: int, fresh: set[OpId]) -> None:
        by_id = self.ops.by_id
        valid, moves = self._valid, self.moves
        for m in self.move_ids[j:]:
            op = by_id[m]
            mid = op.move_id
            if m not in fresh:
                self.reapply_steps += 1
            if op.value is None and self._is_ancestor_at(op.obj, mid, m):
                valid[m] = False
                continue
            valid[m] = True
            stack = moves.get(mid)
            if stack is None:
                stack = moves[mid] = []
            elif stack:
                valid[stack[-1]] = False
            stack.append(m)
            self.pushed.add(m)

    def timeline(self, element: OpId) -> Iterator[tuple[OpId, str, OpId]]:
        if element not in self.lifecycles:
            raise UnknownObject(element)
        return iter(self.lifecycles[element].events())
