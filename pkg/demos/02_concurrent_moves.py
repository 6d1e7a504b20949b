"""Two replicas move two folders into each other while offline.

A naive tree would end up with a cycle (A inside B inside A) or with both
folders duplicated.  Here both replicas apply the moves in id order; the second
move would create a cycle, so it is rejected everywhere.

Run: python demos/02_concurrent_moves.py
"""

from movecrdt import ROOT, ObjType, Replica
from movecrdt.replica import Make, Move, sync

alice, bob = Replica(1), Replica(2)
a = alice.local_edit(Make(ROOT, "a", ObjType.MAP)).id
b = alice.local_edit(Make(ROOT, "b", ObjType.MAP)).id
sync(alice, bob)

m1 = alice.local_edit(Move(ROOT, "b", a, "b"))
m2 = bob.local_edit(Move(ROOT, "a", b, "a"))
print("alice, offline:", alice.document())
print("bob, offline:  ", bob.document())

sync(alice, bob)
print()
print("after sync, alice:", alice.document())
print("after sync, bob:  ", bob.document())
print()
for m in (m1, m2):
    state = "valid" if alice.engine.valid[m.id] else "rejected (would form a cycle)"
    print(f"move {m.id}: {state}")
