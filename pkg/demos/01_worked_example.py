"""Build a small document through the edit API and show the op log behind it.

Run: python demos/01_worked_example.py
"""

from movecrdt import ROOT, ObjType, Replica
from movecrdt.opset import encode_op
from movecrdt.replica import Delete, Insert, Make, Put

r = Replica(actor=0)
r.local_edit(Put(ROOT, "A", "a"))
b = r.local_edit(Make(ROOT, "B", ObjType.LIST)).id
for i, text in enumerate(["b1", "b2", "b3"]):
    r.local_edit(Insert(b, i, text))
c = r.local_edit(Make(ROOT, "C", ObjType.MAP)).id
r.local_edit(Put(c, "D", "d"))
r.local_edit(Delete(b, 0))

print("operation log:")
for op in r.ops:
    print("  " + encode_op(op).decode())
print()
print("document:", r.document())
print()
print("The deleted element b1 is still in the log. It is hidden because the")
print("delete names it as a predecessor, and it still anchors b2 in the list.")
