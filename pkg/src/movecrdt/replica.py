"""Replicas, state exchange, and the randomized convergence fuzzer."""

from __future__ import annotations

import hashlib
import logging
import random
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence, Union

from .engine import Engine, NaiveEngine, NoMoveEngine, RarEngine, check_acyclic, update_validity_naive
from .errors import InvalidTarget
from .lifecycle import LifecycleEngine
from .materialize import DocumentIndex, JsonValue, canonical_json
from .opset import HEAD, ElemRef, KeyRef, MapKey, ObjType, OpId, Operation, OpSet, OpType, Scalar

log = logging.getLogger(__name__)

__all__ = [
    "VARIANTS",
    "make_engine",
    "Put",
    "Make",
    "Insert",
    "Delete",
    "Move",
    "Replica",
    "push",
    "sync",
    "FuzzConfig",
    "FuzzReport",
    "fuzz_run",
    "parse_mix",
    "op_census",
]

_ENGINES = {
    "naive": NaiveEngine,
    "rar": RarEngine,
    "rar-batch": RarEngine,
    "rar-lifecycle": LifecycleEngine,
    "moves-disabled": NoMoveEngine,
}
_ALIASES = {"rar-no-lifecycle": "rar", "lifecycle": "rar-lifecycle", "batch": "rar-batch"}
VARIANTS = ("naive", "rar", "rar-batch", "rar-lifecycle")
BATCH_VARIANTS = {"rar-batch"}


def canonical_variant(name: str) -> str:
    name = _ALIASES.get(name, name)
    if name not in _ENGINES:
        raise ValueError(f"unknown engine variant {name!r}")
    return name


def make_engine(variant: str) -> Engine:
    return _ENGINES[canonical_variant(variant)]()


# -- edit intents ----------------------------------------------------------------
# Map locations are addressed by key (str), list locations by visible index (int).


@dataclass(frozen=True)
class Put:
    obj: OpId
    key: Union[str, int]
    value: str


@dataclass(frozen=True)
class Make:
    obj: OpId
    key: Union[str, int]
    kind: ObjType


@dataclass(frozen=True)
class Insert:
    obj: OpId
    index: int
    value: Union[str, ObjType]


@dataclass(frozen=True)
class Delete:
    obj: OpId
    key: Union[str, int]


@dataclass(frozen=True)
class Move:
    src_obj: OpId
    src_key: Union[str, int]
    dst_obj: OpId
    dst_key: Union[str, int]  # map key, or insertion index for a list


Intent = Union[Put, Make, Insert, Delete, Move]


class Replica:
    """One actor's copy of the document.

    ``shadows`` names extra engine variants that receive every operation this
    replica sees; they exist for differential testing and never influence the
    edits the replica makes.
    """

    def __init__(self, actor: int, variant: str = "rar", shadows: Iterable[str] = ()) -> None:
        self.actor = actor
        self.variant = canonical_variant(variant)
        self.engine = make_engine(self.variant)
        self.shadows = {canonical_variant(v): make_engine(v) for v in shadows}
        self.shadows.pop(self.variant, None)
        self._index: Optional[DocumentIndex] = None
        self.check_every_insert = False
        self.violations: list[str] = []

    @property
    def ops(self) -> OpSet:
        return self.engine.ops

    def engines(self) -> dict[str, Engine]:
        return {self.variant: self.engine, **self.shadows}

    def index(self) -> DocumentIndex:
        if self._index is None:
            self._index = self.engine.index()
            if self._index.duplicates:
                self.violations.append(f"actor {self.actor}: duplicated objects {self._index.duplicates}")
        return self._index

    def document(self) -> JsonValue:
        return self.index().doc

    def next_id(self) -> OpId:
        return OpId(self.ops.max_counter() + 1, self.actor)

    # -- applying ops ----------------------------------------------------------

    def apply_local(self, op: Operation) -> None:
        for eng in self.engines().values():
            eng.insert(op)
        self._after_insert()

    def receive(self, ops: Sequence[Operation]) -> None:
        """Apply a causally ordered delta from a peer."""
        if not ops:
            return
        for name, eng in self.engines().items():
            if name in BATCH_VARIANTS:
                eng.insert_batch(ops)
            else:
                for op in ops:
                    eng.insert(op)
                    if self.check_every_insert:
                        self._check_tree(name, eng)
            if name in BATCH_VARIANTS and self.check_every_insert:
                self._check_tree(name, eng)
        self._index = None

    def _after_insert(self) -> None:
        self._index = None
        if self.check_every_insert:
            for name, eng in self.engines().items():
                self._check_tree(name, eng)

    def _check_tree(self, name: str, eng: Engine) -> None:
        if not isinstance(eng, NaiveEngine) and not check_acyclic(eng.tree):
            self.violations.append(f"actor {self.actor}/{name}: parent cycle after {len(eng.ops)} ops")

    # -- local edits -------------------------------------------------------------

    def _kind(self, obj: OpId) -> ObjType:
        kind = self.index().objects.get(obj)
        if kind is None:
            raise InvalidTarget(f"{obj} is not a visible object")
        return kind

    def _location(self, obj: OpId, key: Union[str, int]) -> KeyRef:
        kind = self._kind(obj)
        if kind is ObjType.MAP:
            if not isinstance(key, str):
                raise InvalidTarget(f"map {obj} needs a string key")
            return MapKey(key)
        if isinstance(key, bool) or not isinstance(key, int):
            raise InvalidTarget(f"list {obj} needs an integer index")
        elems = self.index().list_elements(obj)
        if not 0 <= key < len(elems):
            raise InvalidTarget(f"index {key} out of range for list {obj}")
        return ElemRef(elems[key])

    def _anchor(self, obj: OpId, index: int) -> ElemRef:
        if self._kind(obj) is not ObjType.LIST:
            raise InvalidTarget(f"{obj} is not a list")
        elems = self.index().list_elements(obj)
        if isinstance(index, bool) or not isinstance(index, int) or not 0 <= index <= len(elems):
            raise InvalidTarget(f"insertion index {index} out of range for list {obj}")
        return HEAD if index == 0 else ElemRef(elems[index - 1])

    def _destination(self, obj: OpId, key: Union[str, int]) -> KeyRef:
        if self._kind(obj) is ObjType.MAP:
            if not isinstance(key, str):
                raise InvalidTarget(f"map {obj} needs a string key")
            return MapKey(key)
        return self._anchor(obj, key)

    def build_op(self, intent: Intent) -> Operation:
        """Turn an intent into an operation against the current visible state."""
        idx = self.index()
        op_id = self.next_id()
        if isinstance(intent, (Put, Make)):
            key = self._location(intent.obj, intent.key)
            pred = tuple(idx.visible_writers(intent.obj, key))
            if isinstance(intent, Put):
                return Operation(op_id, OpType.PUT, intent.obj, key, Scalar(intent.value), pred)
            return Operation(op_id, OpType.MAKE, intent.obj, key, intent.kind, pred)
        if isinstance(intent, Insert):
            anchor = self._anchor(intent.obj, intent.index)
            if isinstance(intent.value, ObjType):
                return Operation(op_id, OpType.MAKE, intent.obj, anchor, intent.value, insert=True)
            return Operation(op_id, OpType.PUT, intent.obj, anchor, Scalar(intent.value), insert=True)
        if isinstance(intent, Delete):
            key = self._location(intent.obj, intent.key)
            pred = tuple(idx.visible_writers(intent.obj, key))
            if not pred:
                raise InvalidTarget(f"nothing to delete at {intent.obj} {intent.key!r}")
            return Operation(op_id, OpType.DEL, pred=pred)
        if isinstance(intent, Move):
            key = self._location(intent.src_obj, intent.src_key)
            shown = idx.visible_writers(intent.src_obj, key)
            if not shown:
                raise InvalidTarget(f"nothing to move at {intent.src_obj} {intent.src_key!r}")
            source = self.ops.by_id[shown[-1]]
            dest = self._destination(intent.dst_obj, intent.dst_key)
            value = source.value if isinstance(source.value, Scalar) else None
            return Operation(
                op_id, OpType.MOVE, intent.dst_obj, dest, value, pred=(source.id,), move_id=source.element
            )
        raise TypeError(f"unknown intent {intent!r}")

    def local_edit(self, intent: Intent) -> Operation:
        op = self.build_op(intent)
        self.apply_local(op)
        return op


def missing_ops(src: Replica, dst: Replica) -> list[Operation]:
    have = dst.ops.by_id
    return [op for op in src.ops if op.id not in have]


def _shuffled_causal(ops: list[Operation], rng: random.Random) -> list[Operation]:
    """Random delivery order in which every op follows the ops it references."""
    ids = {op.id for op in ops}
    waiting: dict[OpId, list[Operation]] = {}
    blockers: dict[OpId, int] = {}
    ready = []
    for op in ops:
        deps = {r for r in op.references() if r in ids}
        blockers[op.id] = len(deps)
        for d in deps:
            waiting.setdefault(d, []).append(op)
        if not deps:
            ready.append(op)
    out = []
    while ready:
        op = ready.pop(rng.randrange(len(ready)))
        out.append(op)
        for nxt in waiting.get(op.id, ()):
            blockers[nxt.id] -= 1
            if blockers[nxt.id] == 0:
                ready.append(nxt)
    return out


def push(src: Replica, dst: Replica, rng: Optional[random.Random] = None) -> int:
    """Send ``dst`` every op it lacks from ``src``; returns how many were sent."""
    delta = missing_ops(src, dst)
    if rng is not None:
        delta = _shuffled_causal(delta, rng)
    dst.receive(delta)
    return len(delta)


def sync(a: Replica, b: Replica, rng: Optional[random.Random] = None) -> None:
    push(a, b, rng)
    push(b, a, rng)


# -- fuzzing -------------------------------------------------------------------

OP_KINDS = ("put", "make-map", "make-list", "insert", "delete", "move-object", "move-scalar", "overwrite")
DEFAULT_MIX = {
    "put": 4,
    "make-map": 1.5,
    "make-list": 1.5,
    "insert": 3,
    "delete": 1,
    "move-object": 3,
    "move-scalar": 1.5,
    "overwrite": 1.5,
}
KEYS = ("a", "b", "c", "d", "e")


def parse_mix(text: str) -> dict[str, float]:
    """Parse ``put:4,make:2,move:3``; ``make`` and ``move`` split evenly into their two kinds."""
    mix = {k: 0.0 for k in OP_KINDS}
    for part in text.split(","):
        if not part.strip():
            continue
        name, _, weight = part.partition(":")
        name, w = name.strip(), float(weight or 1)
        if name == "make":
            mix["make-map"] += w / 2
            mix["make-list"] += w / 2
        elif name == "move":
            mix["move-object"] += w / 2
            mix["move-scalar"] += w / 2
        elif name in mix:
            mix[name] += w
        else:
            raise ValueError(f"unknown op kind {name!r}")
    return mix


@dataclass
class FuzzConfig:
    replicas: int = 3
    total_ops: int = 200
    op_mix: dict[str, float] = field(default_factory=lambda: dict(DEFAULT_MIX))
    sync_rounds: int = 6
    seed: int = 0
    variant: str = "rar"
    shadows: tuple[str, ...] = ()
    move_bias: float = 0.1  # share of object moves aimed at an ancestor or descendant
    shuffle_delivery: bool = True
    check_every_insert: bool = False

    def __post_init__(self) -> None:
        if self.replicas < 2:
            raise ValueError("need at least two replicas")
        unknown = set(self.op_mix) - set(OP_KINDS)
        if unknown:
            raise ValueError(f"unknown op kinds {sorted(unknown)}")
        if any(w < 0 for w in self.op_mix.values()) or not any(w > 0 for w in self.op_mix.values()):
            raise ValueError("op weights must be non-negative with at least one positive")
        if self.total_ops < 0 or self.sync_rounds < 1:
            raise ValueError("total_ops must be >= 0 and sync_rounds >= 1")
        self.variant = canonical_variant(self.variant)


@dataclass
class FuzzReport:
    seed: int
    converged: bool
    oracle_match: bool
    final_doc: JsonValue
    valid: dict[OpId, bool]
    counters: dict[str, int]
    divergence_detail: dict[str, str] = field(default_factory=dict)
    variant_mismatches: list[str] = field(default_factory=list)
    violations: list[str] = field(default_factory=list)
    ops_generated: int = 0
    moves_generated: int = 0
    invalid_moves: int = 0
    census: dict[str, int] = field(default_factory=dict)
    # kept only when the run failed, for writing repro files
    replicas: list = field(default_factory=list, repr=False, compare=False)

    @property
    def ok(self) -> bool:
        return self.converged and self.oracle_match and not self.variant_mismatches and not self.violations


def _digest(text: str) -> str:
    return hashlib.sha256(text.encode("utf-8")).hexdigest()[:16]


def _is_object_op(op: Operation) -> bool:
    return op.type is OpType.MAKE or (op.type is OpType.MOVE and op.value is None)


def _scalar_text(rng: random.Random) -> str:
    return f"v{rng.randrange(1000)}"


def random_intent(rng: random.Random, idx: DocumentIndex, kind: str, move_bias: float = 0.1) -> Optional[Intent]:
    """Draw one intent of ``kind`` against the rendered state, or None if impossible."""
    maps = [o for o, k in idx.objects.items() if k is ObjType.MAP]
    lists = [o for o, k in idx.objects.items() if k is ObjType.LIST]

    def locations(want_object: Optional[bool]) -> list[tuple[OpId, Union[str, int]]]:
        out: list[tuple[OpId, Union[str, int]]] = []
        for m in maps:
            for key in idx.map_keys(m):
                out.append((m, key))
        for lst in lists:
            out.extend((lst, i) for i in range(len(idx.list_elements(lst))))
        if want_object is None:
            return out
        keep = []
        for obj, key in out:
            ref = MapKey(key) if isinstance(key, str) else ElemRef(idx.list_elements(obj)[key])
            top = idx.ops.by_id[idx.visible_writers(obj, ref)[-1]]
            if _is_object_op(top) == want_object:
                keep.append((obj, key))
        return keep

    def dest_key(container: OpId) -> Union[str, int]:
        if idx.objects[container] is ObjType.MAP:
            return rng.choice(KEYS)
        return rng.randint(0, len(idx.list_elements(container)))

    if kind == "put":
        return Put(rng.choice(maps), rng.choice(KEYS), _scalar_text(rng))
    if kind in ("make-map", "make-list"):
        obj_kind = ObjType.MAP if kind == "make-map" else ObjType.LIST
        container = rng.choice(maps + lists)
        if idx.objects[container] is ObjType.MAP:
            return Make(container, rng.choice(KEYS), obj_kind)
        return Insert(container, dest_key(container), obj_kind)
    if kind == "insert":
        if not lists:
            return None
        lst = rng.choice(lists)
        return Insert(lst, dest_key(lst), _scalar_text(rng))
    if kind in ("delete", "overwrite"):
        locs = locations(None)
        if not locs:
            return None
        obj, key = rng.choice(locs)
        if kind == "delete":
            return Delete(obj, key)
        return Put(obj, key, _scalar_text(rng))
    if kind in ("move-object", "move-scalar"):
        locs = locations(kind == "move-object")
        if not locs:
            return None
        obj, key = rng.choice(locs)
        containers = maps + lists
        if kind == "move-object" and rng.random() < move_bias:
            ref = MapKey(key) if isinstance(key, str) else ElemRef(idx.list_elements(obj)[key])
            moved = idx.element_of(idx.visible_writers(obj, ref)[-1])
            related = sorted(idx.descendants(moved) | set(idx.ancestors(moved)) | {moved})
            related = [c for c in related if c in idx.objects]
            if related:
                containers = related
        dst = rng.choice(containers)
        return Move(obj, key, dst, dest_key(dst))
    raise ValueError(f"unknown op kind {kind!r}")


def op_census(s: OpSet) -> dict[str, int]:
    """Count the interesting shapes of operation in a log."""
    by_id = s.by_id
    out = dict.fromkeys(
        ("scalar-move", "object-move", "list-reorder", "map-to-list", "list-to-map", "overwrite-of-moved"), 0
    )
    for op in s:
        moved_pred = any(by_id[p].type is OpType.MOVE for p in op.pred)
        if op.type is not OpType.MOVE:
            out["overwrite-of-moved"] += moved_pred
            continue
        out["scalar-move" if op.value is not None else "object-move"] += 1
        if not op.pred:
            continue
        src = by_id[op.pred[0]].obj
        src_is_list = src is not None and isinstance(by_id[op.pred[0]].key, ElemRef)
        dst_is_list = isinstance(op.key, ElemRef)
        if src_is_list and dst_is_list and src == op.obj:
            out["list-reorder"] += 1
        elif dst_is_list and not src_is_list:
            out["map-to-list"] += 1
        elif src_is_list and not dst_is_list:
            out["list-to-map"] += 1
    return out


def fuzz_run(cfg: FuzzConfig) -> FuzzReport:
    """Random edits on several replicas with random partial syncs, then full sync.

    Deterministic for a given config.  The final state of every replica (and
    of every shadow engine) is compared, and also checked against a from-scratch
    replay of the union OpSet.
    """
    rng = random.Random(cfg.seed)
    replicas = [Replica(i + 1, cfg.variant, cfg.shadows) for i in range(cfg.replicas)]
    for r in replicas:
        r.check_every_insert = cfg.check_every_insert
    kinds = [k for k in OP_KINDS if cfg.op_mix.get(k, 0) > 0]
    weights = [cfg.op_mix[k] for k in kinds]
    delivery = rng if cfg.shuffle_delivery else None

    generated = moves = 0
    per_round = [cfg.total_ops // cfg.sync_rounds] * cfg.sync_rounds
    for i in range(cfg.total_ops % cfg.sync_rounds):
        per_round[i] += 1
    for budget in per_round:
        while budget > 0:
            r = rng.choice(replicas)
            for _ in range(min(budget, rng.randint(1, 6))):
                for _attempt in range(20):
                    kind = rng.choices(kinds, weights)[0]
                    intent = random_intent(rng, r.index(), kind, cfg.move_bias)
                    if intent is not None:
                        break
                else:
                    intent = Put(OpId(0, 0), rng.choice(KEYS), _scalar_text(rng))
                op = r.local_edit(intent)
                generated += 1
                moves += op.type is OpType.MOVE
                budget -= 1
        for _ in range(rng.randint(0, cfg.replicas)):
            a, b = rng.sample(replicas, 2)
            if rng.random() < 0.5:
                push(a, b, delivery)
            else:
                sync(a, b, delivery)

    hub = replicas[0]
    for r in replicas[1:]:
        push(r, hub, delivery)
    for r in replicas[1:]:
        push(hub, r, delivery)

    docs: dict[str, str] = {}
    valids: dict[str, dict] = {}
    counters = {"restore_steps": 0, "reapply_steps": 0, "timeline_touches": 0}
    violations: list[str] = []
    for r in replicas:
        for name, eng in r.engines().items():
            label = f"{r.actor}/{name}"
            index = eng.index()
            if index.duplicates:
                violations.append(f"{label}: duplicated objects {index.duplicates}")
            if not isinstance(eng, NaiveEngine) and not check_acyclic(eng.tree):
                violations.append(f"{label}: parent cycle in final tree")
            docs[label] = canonical_json(index.doc)
            valids[label] = dict(eng.valid)
            for k, v in eng.counters().items():
                counters[k] += v
        violations.extend(r.violations)

    primary = {f"{r.actor}/{r.variant}": docs[f"{r.actor}/{r.variant}"] for r in replicas}
    converged = len(set(primary.values())) == 1
    reference = docs[f"{hub.actor}/{hub.variant}"]
    mismatches = [
        label for label in docs if docs[label] != reference or valids[label] != valids[f"{hub.actor}/{hub.variant}"]
    ]

    union = hub.ops
    oracle_valid, oracle_tree = update_validity_naive(union.ops)
    oracle_doc = canonical_json(DocumentIndex(union, oracle_valid).doc)
    oracle_match = oracle_doc == reference and oracle_valid == valids[f"{hub.actor}/{hub.variant}"]
    if not check_acyclic(oracle_tree):
        violations.append("oracle tree has a cycle")

    report = FuzzReport(
        seed=cfg.seed,
        converged=converged,
        oracle_match=oracle_match,
        final_doc=hub.document(),
        valid=dict(hub.engine.valid),
        counters=counters,
        variant_mismatches=mismatches,
        violations=violations,
        ops_generated=generated,
        moves_generated=moves,
        invalid_moves=sum(1 for v in oracle_valid.values() if not v),
        census=op_census(union),
    )
    if not report.ok:
        report.divergence_detail = {label: _digest(text) for label, text in docs.items()}
        report.divergence_detail["oracle"] = _digest(oracle_doc)
        report.replicas = replicas
        log.warning("fuzz seed %d failed: %s", cfg.seed, report.divergence_detail)
    return report
