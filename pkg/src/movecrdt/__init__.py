"""JSON CRDT with a move operation for subtrees, list elements and scalars."""

from .engine import NaiveEngine, NoMoveEngine, RarEngine, is_ancestor, update_validity_naive
from .errors import (
    ConflictingDuplicate,
    CRDTError,
    InvalidOperation,
    InvalidTarget,
    MalformedRecord,
    MissingDependency,
    NoVisibleValue,
    NotAList,
    UnknownObject,
)
from .lifecycle import LifecycleEngine
from .materialize import canonical_json, materialize
from .opset import HEAD, ROOT, ElemRef, MapKey, ObjType, OpId, Operation, OpSet, OpType, Scalar
from .replica import Delete, FuzzConfig, Insert, Make, Move, Put, Replica, fuzz_run, make_engine, sync

__version__ = "0.1.0"
