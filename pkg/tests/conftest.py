import sys
from pathlib import Path

import pytest

from movecrdt import HEAD, ROOT, ElemRef, MapKey, ObjType, OpId, Operation, OpSet, OpType, Scalar

sys.path.insert(0, str(Path(__file__).parent))


def oid(c, a=0):
    return OpId(c, a)


def put(c, a, obj, key, text, pred=(), insert=False):
    return Operation(oid(c, a), OpType.PUT, obj, key, Scalar(text), tuple(pred), insert=insert)


def make(c, a, obj, key, kind, pred=(), insert=False):
    return Operation(oid(c, a), OpType.MAKE, obj, key, kind, tuple(pred), insert=insert)


def move(c, a, obj, key, move_id, pred=(), value=None):
    return Operation(oid(c, a), OpType.MOVE, obj, key, value, tuple(pred), move_id=move_id)


def delete(c, a, pred):
    return Operation(oid(c, a), OpType.DEL, pred=tuple(pred))


def sample_ops():
    """The eight rows of the worked example document."""
    b, c = oid(2), oid(6)
    return [
        put(1, 0, ROOT, MapKey("A"), "a"),
        make(2, 0, ROOT, MapKey("B"), ObjType.LIST),
        put(3, 0, b, HEAD, "b1", insert=True),
        put(4, 0, b, ElemRef(oid(3)), "b2", insert=True),
        put(5, 0, b, ElemRef(oid(4)), "b3", insert=True),
        make(6, 0, ROOT, MapKey("C"), ObjType.MAP),
        put(7, 0, c, MapKey("D"), "d"),
        delete(8, 0, [oid(3)]),
    ]


def cross_move_ops():
    """Two maps under the root, then two concurrent moves nesting each in the other."""
    a, b = oid(1), oid(2)
    base = [make(1, 0, ROOT, MapKey("a"), ObjType.MAP), make(2, 0, ROOT, MapKey("b"), ObjType.MAP)]
    m1 = move(3, 1, a, MapKey("b"), b, pred=[b])  # replica 1: B under A
    m2 = move(3, 2, b, MapKey("a"), a, pred=[a])  # replica 2: A under B
    return base, m1, m2


@pytest.fixture
def sample():
    return OpSet(sample_ops())


# criterion number -> (passed, detail); filled by test_acceptance.py
ACCEPTANCE: dict = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE):
        passed, detail = ACCEPTANCE[number]
        terminalreporter.write_line(f"criterion {number}: {'PASS' if passed else 'FAIL'} - {detail}")
