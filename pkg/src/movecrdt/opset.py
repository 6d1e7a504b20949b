"""Operation identifiers, operation records and the append-only OpSet.

An :class:`OpSet` is the whole replicated state: every replica derives its
document from the set of operations it holds, and two replicas merge by taking
the union of their sets.  Operations are kept sorted by :class:`OpId`, which is
a Lamport pair ``(counter, actor)``.

Op-log records are line-delimited JSON with a fixed field order::

    {"id":[7,"0"],"type":"put","obj":[6,"0"],"key":{"map":"D"},"val":{"s":"d"},"pred":[]}

Actors are unsigned integers but are written as decimal strings.
"""

from __future__ import annotations

import bisect
import enum
import heapq
import json
from dataclasses import dataclass
from typing import Iterable, Iterator, NamedTuple, Optional, Union

from .errors import ConflictingDuplicate, InvalidOperation, MalformedRecord, MissingDependency

__all__ = [
    "OpId",
    "ROOT",
    "MapKey",
    "ElemRef",
    "HEAD",
    "KeyRef",
    "Scalar",
    "ObjType",
    "Value",
    "OpType",
    "Operation",
    "OpSet",
    "compare",
    "insert_op",
    "merge",
    "causal_closure_check",
    "encode_op",
    "decode_op",
    "encode_log",
    "decode_log",
]


class OpId(NamedTuple):
    """Lamport timestamp. Tuple ordering gives counter first, then actor."""

    counter: int
    actor: int

    def __repr__(self) -> str:
        return f"<{self.counter},{self.actor}>"


ROOT = OpId(0, 0)


def compare(a: OpId, b: OpId) -> int:
    """Three-way comparison: -1, 0 or 1."""
    return (a > b) - (a < b)


@dataclass(frozen=True, slots=True)
class MapKey:
    name: str


@dataclass(frozen=True, slots=True)
class ElemRef:
    elem: OpId


# The list head anchor shares its id with the root object.
HEAD = ElemRef(ROOT)

KeyRef = Union[MapKey, ElemRef]


@dataclass(frozen=True, slots=True)
class Scalar:
    text: str


class ObjType(enum.Enum):
    MAP = "map"
    LIST = "list"


Value = Union[Scalar, ObjType]


class OpType(enum.Enum):
    MAKE = "make"
    PUT = "put"
    DEL = "del"
    MOVE = "move"


@dataclass(frozen=True, slots=True)
class Operation:
    """One record of the operation log.

    ``insert`` only applies to list destinations of put/make: true means a new
    element is created after ``key``, false means the element named by ``key``
    is overwritten.  A move whose destination is a list always creates a new
    element, identified afterwards by the move's own id.
    """

    id: OpId
    type: OpType
    obj: Optional[OpId] = None
    key: Optional[KeyRef] = None
    value: Optional[Value] = None
    pred: tuple[OpId, ...] = ()
    move_id: Optional[OpId] = None
    insert: bool = False

    def __post_init__(self) -> None:
        pred = tuple(sorted(OpId(*p) for p in self.pred))
        if len(set(pred)) != len(pred):
            raise InvalidOperation(f"{self.id}: duplicate predecessor")
        object.__setattr__(self, "pred", pred)
        t = self.type
        if self.id == ROOT:
            raise InvalidOperation("<0,0> is reserved for the root object")
        if t is OpType.DEL:
            if self.obj is not None or self.key is not None or self.value is not None:
                raise InvalidOperation(f"{self.id}: delete carries only id and pred")
            if not pred:
                raise InvalidOperation(f"{self.id}: delete needs at least one predecessor")
        else:
            if self.obj is None or self.key is None:
                raise InvalidOperation(f"{self.id}: {t.value} needs obj and key")
        if t is OpType.MAKE and not isinstance(self.value, ObjType):
            raise InvalidOperation(f"{self.id}: make needs a map or list value")
        if t is OpType.PUT and not isinstance(self.value, Scalar):
            raise InvalidOperation(f"{self.id}: put needs a scalar value")
        if t is OpType.MOVE:
            if self.move_id is None:
                raise InvalidOperation(f"{self.id}: move needs move_id")
            if self.value is not None and not isinstance(self.value, Scalar):
                raise InvalidOperation(f"{self.id}: a move can only carry a scalar value")
            if self.insert:
                raise InvalidOperation(f"{self.id}: moves never set the insert flag")
        elif self.move_id is not None:
            raise InvalidOperation(f"{self.id}: only moves carry move_id")
        if self.insert:
            if pred:
                raise InvalidOperation(f"{self.id}: an inserted element has no predecessors")
            if not isinstance(self.key, ElemRef):
                raise InvalidOperation(f"{self.id}: insert needs an element key")
        if any(p >= self.id for p in pred):
            raise InvalidOperation(f"{self.id}: predecessors must have smaller ids")

    @property
    def is_move(self) -> bool:
        return self.type is OpType.MOVE

    @property
    def is_object_move(self) -> bool:
        return self.type is OpType.MOVE and self.value is None

    @property
    def element(self) -> OpId:
        """Id of the element this op places: itself, or the element a move carries."""
        return self.move_id if self.type is OpType.MOVE else self.id

    def references(self) -> Iterator[OpId]:
        if self.obj is not None:
            yield self.obj
        if isinstance(self.key, ElemRef):
            yield self.key.elem
        yield from self.pred
        if self.move_id is not None:
            yield self.move_id

    def creates_slot(self) -> bool:
        """True if this op adds a new element to a list (insert or move into a list)."""
        if self.insert:
            return True
        return self.type is OpType.MOVE and isinstance(self.key, ElemRef)


class OpSet:
    """Append-only collection of operations sorted by id."""

    __slots__ = ("_ops", "_ids", "_by_id")

    def __init__(self, ops: Iterable[Operation] = ()) -> None:
        self._ops: list[Operation] = []
        self._ids: list[OpId] = []
        self._by_id: dict[OpId, Operation] = {}
        for op in sorted(ops, key=lambda o: o.id):
            self.insert(op)

    def __len__(self) -> int:
        return len(self._ops)

    def __iter__(self) -> Iterator[Operation]:
        return iter(self._ops)

    def __contains__(self, op_id: object) -> bool:
        return op_id in self._by_id

    def __getitem__(self, k: int) -> Operation:
        return self._ops[k]

    def __eq__(self, other: object) -> bool:
        return isinstance(other, OpSet) and self._ops == other._ops

    def __repr__(self) -> str:
        return f"OpSet({len(self)} ops)"

    @property
    def ops(self) -> list[Operation]:
        return self._ops

    @property
    def ids(self) -> list[OpId]:
        return self._ids

    @property
    def by_id(self) -> dict[OpId, Operation]:
        return self._by_id

    def get(self, op_id: OpId) -> Optional[Operation]:
        return self._by_id.get(op_id)

    def position(self, op_id: OpId) -> int:
        """Index at which ``op_id`` is, or would be inserted."""
        return bisect.bisect_left(self._ids, op_id)

    def max_counter(self) -> int:
        # ids sort by counter first, so the last one carries the maximum
        return self._ids[-1].counter if self._ids else 0

    def copy(self) -> "OpSet":
        new = OpSet()
        new._ops = list(self._ops)
        new._ids = list(self._ids)
        new._by_id = dict(self._by_id)
        return new

    def check(self, op: Operation) -> None:
        """Raise unless ``op`` can be admitted (duplicates aside)."""
        missing = [r for r in op.references() if r != ROOT and r not in self._by_id]
        if missing:
            raise MissingDependency(f"{op.id} references unknown ops {missing}")
        _check_reference_kinds(self, op)

    def add(self, op: Operation) -> tuple[int, bool]:
        """Insert ``op``; returns ``(index, fresh)``. Identical duplicates are no-ops."""
        existing = self._by_id.get(op.id)
        if existing is not None:
            if existing != op:
                raise ConflictingDuplicate(f"two different operations with id {op.id}")
            return self.position(op.id), False
        self.check(op)
        i = bisect.bisect_left(self._ids, op.id)
        self._ops.insert(i, op)
        self._ids.insert(i, op.id)
        self._by_id[op.id] = op
        return i, True

    def insert(self, op: Operation) -> int:
        return self.add(op)[0]

    def add_many(self, ops: Iterable[Operation]) -> list[Operation]:
        """Admit a batch; references may point at other ops in the batch.

        Returns the fresh ops in ascending order.  Nothing is inserted if any op
        fails its checks.
        """
        incoming: dict[OpId, Operation] = {}
        for op in ops:
            known = self._by_id.get(op.id) or incoming.get(op.id)
            if known is not None and known != op:
                raise ConflictingDuplicate(f"two different operations with id {op.id}")
            if op.id not in self._by_id:
                incoming[op.id] = op
        fresh = sorted(incoming.values(), key=lambda o: o.id)
        if not fresh:
            return []
        # Checks run against the union, so they see ops of the same batch.
        trial = _UnionView(self._by_id, incoming)
        for op in fresh:
            missing = [r for r in op.references() if r != ROOT and r not in trial]
            if missing:
                raise MissingDependency(f"{op.id} references unknown ops {missing}")
            _check_reference_kinds(trial, op)
        if len(fresh) > 8 and fresh[0].id > (self._ids[-1] if self._ids else ROOT):
            self._ops.extend(fresh)
            self._ids.extend(op.id for op in fresh)
        elif len(fresh) > 8:
            self._ops = list(heapq.merge(self._ops, fresh, key=lambda o: o.id))
            self._ids = [o.id for o in self._ops]
        else:
            for op in fresh:
                i = bisect.bisect_left(self._ids, op.id)
                self._ops.insert(i, op)
                self._ids.insert(i, op.id)
        self._by_id.update(incoming)
        return fresh


class _UnionView:
    """Read-only id lookup over an OpSet plus a pending batch."""

    def __init__(self, base: dict[OpId, Operation], extra: dict[OpId, Operation]) -> None:
        self.base = base
        self.extra = extra

    def __contains__(self, op_id: object) -> bool:
        return op_id in self.base or op_id in self.extra

    def get(self, op_id: OpId) -> Optional[Operation]:
        op = self.base.get(op_id)
        return op if op is not None else self.extra.get(op_id)


def _object_type(ops, obj: OpId) -> ObjType:
    if obj == ROOT:
        return ObjType.MAP
    target = ops.get(obj)
    if target.type is not OpType.MAKE:
        raise InvalidOperation(f"{obj} is not an object")
    return target.value


def _check_reference_kinds(ops, op: Operation) -> None:
    """Check that ``op`` points at the right kinds of operations."""
    if op.type is OpType.DEL:
        return
    kind = _object_type(ops, op.obj)
    if kind is ObjType.MAP:
        if not isinstance(op.key, MapKey):
            raise InvalidOperation(f"{op.id}: map destinations take a map key")
    else:
        if not isinstance(op.key, ElemRef):
            raise InvalidOperation(f"{op.id}: list destinations take an element key")
        if not op.creates_slot() and op.key == HEAD:
            raise InvalidOperation(f"{op.id}: the list head cannot be overwritten")
        if op.key != HEAD:
            anchor = ops.get(op.key.elem)
            if not anchor.creates_slot() or anchor.obj != op.obj:
                raise InvalidOperation(f"{op.id}: {op.key.elem} is not an element of {op.obj}")
    if op.type is OpType.MOVE:
        source = ops.get(op.move_id)
        if source is None or source.type not in (OpType.MAKE, OpType.PUT):
            raise InvalidOperation(f"{op.id}: move_id must name a make or put")
        if (source.type is OpType.PUT) != (op.value is not None):
            raise InvalidOperation(f"{op.id}: scalar moves carry a value, object moves do not")


def insert_op(s: OpSet, op: Operation) -> int:
    return s.insert(op)


def merge(a: OpSet, b: OpSet) -> OpSet:
    """Union of two OpSets."""
    out = a.copy()
    out.add_many(b)
    return out


def causal_closure_check(s: OpSet, op: Operation) -> bool:
    return all(r == ROOT or r in s for r in op.references())


# -- encoding ---------------------------------------------------------------


def _enc_id(i: OpId) -> list:
    return [i.counter, str(i.actor)]


def _dec_id(raw) -> OpId:
    if (
        not isinstance(raw, list)
        or len(raw) != 2
        or isinstance(raw[0], bool)
        or not isinstance(raw[0], int)
        or raw[0] < 0
    ):
        raise MalformedRecord(f"bad op id {raw!r}")
    actor = raw[1]
    if isinstance(actor, str) and actor.isdigit() and actor.isascii():
        return OpId(raw[0], int(actor))
    raise MalformedRecord(f"bad actor {actor!r}")


def encode_op(op: Operation) -> bytes:
    rec: dict = {"id": _enc_id(op.id), "type": op.type.value}
    if op.obj is not None:
        rec["obj"] = _enc_id(op.obj)
    if op.key is not None:
        if isinstance(op.key, MapKey):
            rec["key"] = {"map": op.key.name}
        elif op.key == HEAD:
            rec["key"] = "head"
        else:
            rec["key"] = {"elem": _enc_id(op.key.elem)}
    if op.value is not None:
        rec["val"] = op.value.value if isinstance(op.value, ObjType) else {"s": op.value.text}
    rec["pred"] = [_enc_id(p) for p in op.pred]
    if op.move_id is not None:
        rec["mov"] = _enc_id(op.move_id)
    if op.insert:
        rec["ins"] = True
    return json.dumps(rec, separators=(",", ":"), ensure_ascii=False).encode("utf-8")


_FIELDS = {"id", "type", "obj", "key", "val", "pred", "mov", "ins"}


def decode_op(data: Union[bytes, str]) -> Operation:
    try:
        if isinstance(data, bytes):
            data = data.decode("utf-8")
        rec = json.loads(data)
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise MalformedRecord(str(exc)) from exc
    if not isinstance(rec, dict) or "id" not in rec or "type" not in rec:
        raise MalformedRecord("record needs id and type")
    if set(rec) - _FIELDS:
        raise MalformedRecord(f"unknown fields {sorted(set(rec) - _FIELDS)}")
    try:
        op_type = OpType(rec["type"])
    except (ValueError, TypeError) as exc:
        raise MalformedRecord(f"bad type {rec['type']!r}") from exc

    key = rec.get("key")
    if key is not None:
        if key == "head":
            key = HEAD
        elif isinstance(key, dict) and set(key) == {"map"} and isinstance(key["map"], str):
            key = MapKey(key["map"])
        elif isinstance(key, dict) and set(key) == {"elem"}:
            key = ElemRef(_dec_id(key["elem"]))
        else:
            raise MalformedRecord(f"bad key {key!r}")
    val = rec.get("val")
    if val is not None:
        if val in ("map", "list"):
            val = ObjType(val)
        elif isinstance(val, dict) and set(val) == {"s"} and isinstance(val["s"], str):
            val = Scalar(val["s"])
        else:
            raise MalformedRecord(f"bad value {val!r}")
    pred = rec.get("pred", [])
    if not isinstance(pred, list):
        raise MalformedRecord("pred must be a list")
    ins = rec.get("ins", False)
    if not isinstance(ins, bool):
        raise MalformedRecord("ins must be a boolean")
    try:
        return Operation(
            id=_dec_id(rec["id"]),
            type=op_type,
            obj=_dec_id(rec["obj"]) if "obj" in rec else None,
            key=key,
            value=val,
            pred=tuple(_dec_id(p) for p in pred),
            move_id=_dec_id(rec["mov"]) if "mov" in rec else None,
            insert=ins,
        )
    except InvalidOperation as exc:
        raise MalformedRecord(str(exc)) from exc


def encode_log(ops: Iterable[Operation]) -> bytes:
    return b"".join(encode_op(op) + b"\n" for op in ops)


def decode_log(data: Union[bytes, str]) -> list[Operation]:
    if isinstance(data, bytes):
        data = data.decode("utf-8")
    return [decode_op(line) for line in data.splitlines() if line.strip()]
