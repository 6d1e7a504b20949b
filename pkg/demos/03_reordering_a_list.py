"""Concurrent reordering of a to-do list.

Alice moves "milk" to the top while Bob moves it to the bottom and edits
"eggs".  Moves of the same element are resolved by id (the larger one wins),
so "milk" appears exactly once and no edit is lost.

Run: python demos/03_reordering_a_list.py
"""

from movecrdt import ROOT, ObjType, Replica
from movecrdt.replica import Insert, Make, Move, Put, sync

alice, bob = Replica(1), Replica(2)
todo = alice.local_edit(Make(ROOT, "todo", ObjType.LIST)).id
for i, item in enumerate(["bread", "eggs", "milk", "tea"]):
    alice.local_edit(Insert(todo, i, item))
sync(alice, bob)
print("start:", alice.document()["todo"])

alice.local_edit(Move(todo, 2, todo, 0))
bob.local_edit(Move(todo, 2, todo, 4))
bob.local_edit(Put(todo, 1, "free-range eggs"))
print("alice:", alice.document()["todo"])
print("bob:  ", bob.document()["todo"])

sync(alice, bob)
print("merged:", alice.document()["todo"])
assert alice.document() == bob.document()
