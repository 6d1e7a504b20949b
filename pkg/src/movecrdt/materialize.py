"""Render an OpSet plus move validity into a JSON document.

Visibility rules:

* an operation is hidden once it has a successor, unless every successor is an
  invalid move;
* invalid moves and deletes are never shown;
* an element that has a valid move is shown only at that move's destination,
  so a put/make whose element was moved away is hidden even when the move did
  not list it as a predecessor.

Lists follow RGA insert-after: each new element is anchored to the element it
was inserted after, siblings of one anchor are ordered by descending id, and
deleted elements stay behind as anchors.  Concurrent values at one location
are all kept; the one with the greatest id is rendered.
"""

from __future__ import annotations

import json
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Any, Iterator, Mapping, Optional, Union

from .errors import NoVisibleValue, NotAList
from .opset import HEAD, ROOT, ElemRef, KeyRef, MapKey, ObjType, OpId, Operation, OpSet, OpType

JsonValue = Union[str, dict, list]
ValidityMap = Mapping[OpId, bool]

__all__ = [
    "VisibilityIndex",
    "DocumentIndex",
    "build_visibility",
    "is_visible",
    "list_order",
    "conflict_values",
    "materialize",
    "canonical_json",
]


@dataclass
class VisibilityIndex:
    successors: dict[OpId, list[OpId]] = field(default_factory=dict)
    # element id -> ids of the moves that carry it
    moves_of: dict[OpId, list[OpId]] = field(default_factory=dict)
    move_ids: set[OpId] = field(default_factory=set)


def build_visibility(s: OpSet) -> VisibilityIndex:
    vis = VisibilityIndex()
    succ = vis.successors
    for op in s:
        for p in op.pred:
            succ.setdefault(p, []).append(op.id)
        if op.type is OpType.MOVE:
            vis.moves_of.setdefault(op.move_id, []).append(op.id)
            vis.move_ids.add(op.id)
    return vis


def is_visible(op: Operation, vis: VisibilityIndex, valid: ValidityMap) -> bool:
    t = op.type
    if t is OpType.DEL:
        return False
    if t is OpType.MOVE:
        if not valid.get(op.id, False):
            return False
    elif any(valid.get(m, False) for m in vis.moves_of.get(op.id, ())):
        return False
    for s in vis.successors.get(op.id, ()):
        if s not in vis.move_ids or valid.get(s, False):
            return False
    return True


def canonical_json(doc: Any) -> str:
    return json.dumps(doc, sort_keys=True, separators=(",", ":"), ensure_ascii=False)


class DocumentIndex:
    """All the lookups needed to render a document, plus the rendered result.

    After construction, ``doc`` is the materialized JSON value and ``objects``
    maps every rendered object id to its type.  ``parent`` gives the rendered
    parent object of each non-root object.  ``duplicates`` lists any object
    that was reached twice; it stays empty for engine-computed validity.
    """

    def __init__(self, s: OpSet, valid: ValidityMap, vis: Optional[VisibilityIndex] = None) -> None:
        self.ops = s
        self.valid = valid
        self._vis = vis
        self.map_writers: dict[OpId, dict[str, list[OpId]]] = defaultdict(dict)
        self.slot_writers: dict[OpId, list[OpId]] = defaultdict(list)
        self.children: dict[OpId, dict[OpId, list[OpId]]] = defaultdict(dict)
        # Same outcome as calling is_visible on every op, in one pass.
        hidden: set[OpId] = set()
        move, delete = OpType.MOVE, OpType.DEL
        for op in s:
            t = op.type
            if t is delete:
                hidden.add(op.id)
                hidden.update(op.pred)
                continue
            if t is move:
                if valid.get(op.id, False):
                    hidden.add(op.move_id)
                    hidden.update(op.pred)
                else:
                    hidden.add(op.id)
            else:
                hidden.update(op.pred)
            key = op.key
            if type(key) is MapKey:
                self.map_writers[op.obj].setdefault(key.name, []).append(op.id)
            elif op.insert or t is move:
                self.children[op.obj].setdefault(key.elem, []).append(op.id)
                self.slot_writers[op.id].append(op.id)
            else:
                self.slot_writers[key.elem].append(op.id)
        self.hidden = hidden

        self.objects: dict[OpId, ObjType] = {}
        self.parent: dict[OpId, OpId] = {}
        self.duplicates: list[OpId] = []
        self.doc = self._render_object(ROOT, ObjType.MAP)

    # -- queries -------------------------------------------------------------

    @property
    def vis(self) -> VisibilityIndex:
        if self._vis is None:
            self._vis = build_visibility(self.ops)
        return self._vis

    def visible(self, op_id: OpId) -> bool:
        return op_id not in self.hidden

    def object_type(self, obj: OpId) -> Optional[ObjType]:
        if obj == ROOT:
            return ObjType.MAP
        op = self.ops.get(obj)
        if op is None or op.type is not OpType.MAKE:
            return None
        return op.value

    def writers(self, obj: OpId, key: KeyRef) -> list[OpId]:
        """Every op that wrote the location, visible or not, ascending."""
        if isinstance(key, MapKey):
            return self.map_writers.get(obj, {}).get(key.name, [])
        return self.slot_writers.get(key.elem, [])

    def visible_writers(self, obj: OpId, key: KeyRef) -> list[OpId]:
        return [w for w in self.writers(obj, key) if w not in self.hidden]

    def map_keys(self, obj: OpId) -> list[str]:
        """Keys of a map that currently hold at least one visible value."""
        hidden = self.hidden
        return sorted(k for k, ws in self.map_writers.get(obj, {}).items() if any(w not in hidden for w in ws))

    def all_slots(self, list_id: OpId) -> Iterator[OpId]:
        """Every element of a list in document order, tombstones included."""
        children = self.children.get(list_id, {})
        stack = list(children.get(HEAD.elem, ()))
        while stack:
            slot = stack.pop()
            yield slot
            stack.extend(children.get(slot, ()))

    def list_elements(self, list_id: OpId) -> list[OpId]:
        if self.object_type(list_id) is not ObjType.LIST:
            raise NotAList(f"{list_id} is not a list")
        hidden = self.hidden
        return [s for s in self.all_slots(list_id) if any(w not in hidden for w in self.slot_writers[s])]

    def element_of(self, op_id: OpId) -> OpId:
        return self.ops.by_id[op_id].element

    def value_of(self, op_id: OpId) -> JsonValue:
        """Render the value written by one op, whether or not it is the default."""
        op = self.ops.by_id[op_id]
        if op.type is OpType.PUT or (op.type is OpType.MOVE and op.value is not None):
            return op.value.text
        obj = op.id if op.type is OpType.MAKE else op.move_id
        saved = self.objects, self.parent, self.duplicates
        self.objects, self.parent, self.duplicates = {}, {}, []
        try:
            return self._render_object(obj, self.object_type(obj))
        finally:
            self.objects, self.parent, self.duplicates = saved

    def rendered_ids(self) -> list[OpId]:
        return list(self.objects)

    def descendants(self, obj: OpId) -> set[OpId]:
        kids: dict[OpId, list[OpId]] = defaultdict(list)
        for child, par in self.parent.items():
            kids[par].append(child)
        out, todo = set(), [obj]
        while todo:
            for c in kids.get(todo.pop(), ()):
                if c not in out:
                    out.add(c)
                    todo.append(c)
        return out

    def ancestors(self, obj: OpId) -> list[OpId]:
        out = []
        while obj in self.parent:
            obj = self.parent[obj]
            out.append(obj)
        return out

    # -- rendering -------------------------------------------------------------

    def _render_op(self, op_id: OpId, container: OpId) -> JsonValue:
        op = self.ops.by_id[op_id]
        if op.type is OpType.PUT or (op.type is OpType.MOVE and op.value is not None):
            return op.value.text
        obj = op.id if op.type is OpType.MAKE else op.move_id
        if obj in self.objects:
            self.duplicates.append(obj)
            return None
        self.parent[obj] = container
        return self._render_object(obj, self.object_type(obj))

    def _render_object(self, obj: OpId, kind: ObjType) -> JsonValue:
        self.objects[obj] = kind
        if kind is ObjType.MAP:
            out = {}
            for name in sorted(self.map_writers.get(obj, {})):
                shown = [w for w in self.map_writers[obj][name] if w not in self.hidden]
                if shown:
                    out[name] = self._render_op(shown[-1], obj)
            return out
        items = []
        for slot in self.all_slots(obj):
            shown = [w for w in self.slot_writers[slot] if w not in self.hidden]
            if shown:
                items.append(self._render_op(shown[-1], obj))
        return items


def list_order(s: OpSet, vis: Optional[VisibilityIndex], valid: ValidityMap, list_id: OpId) -> list[OpId]:
    """Visible element ids of a list, in document order."""
    return DocumentIndex(s, valid, vis).list_elements(list_id)


def conflict_values(
    s: OpSet, vis: Optional[VisibilityIndex], valid: ValidityMap, obj: OpId, key: KeyRef
) -> list[tuple[OpId, JsonValue]]:
    """All visible values at one location, ascending by id; the last is the default."""
    index = DocumentIndex(s, valid, vis)
    shown = index.visible_writers(obj, key)
    if not shown:
        raise NoVisibleValue(f"nothing visible at {obj} {key}")
    return [(w, index.value_of(w)) for w in shown]


def materialize(s: OpSet, valid: ValidityMap) -> JsonValue:
    return DocumentIndex(s, valid).doc
