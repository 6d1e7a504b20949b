"""Two-actor convergence benchmarks.

Both scenarios start from a shared document of ``initial_objects`` maps under
the root.  Two actors then diverge: in ``diverge-moves`` each makes ``n``
random moves (random object into a random destination object), in
``diverge-adds`` each adds ``n`` new objects.  The timed part is actor 1
receiving actor 2's operations and rendering the merged document.

Workloads depend only on ``(scenario, n, seed)``, so every variant merges the
same operations and the counter columns are reproducible.
"""

from __future__ import annotations

import csv
import io
import random
import statistics
import time
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path
from typing import Iterable, Optional, Sequence, TextIO, Union

from .engine import Engine, RarEngine
from .materialize import canonical_json
from .opset import ROOT, MapKey, ObjType, OpId, Operation, OpType
from .replica import canonical_variant, make_engine

__all__ = [
    "SCENARIOS",
    "GRID",
    "Scenario",
    "BenchRow",
    "run_scenario",
    "run_diverge_moves",
    "run_diverge_adds",
    "emit_csv",
    "median_ns",
    "BenchDiverged",
]

SCENARIOS = ("diverge-moves", "diverge-adds")
GRID = (10, 50, 100, 500, 1000, 10000)
DEFAULT_VARIANTS = {
    "diverge-moves": ("naive", "rar", "rar-batch", "rar-lifecycle"),
    "diverge-adds": ("moves-disabled", "rar", "rar-lifecycle"),
}
CSV_HEADER = ("scenario", "variant", "n", "repeat", "ns", "restore_steps", "reapply_steps")

BASE_ACTOR = 0
ACTORS = (1, 2)


class BenchDiverged(RuntimeError):
    """The two actors rendered different documents after merging."""


@dataclass(frozen=True)
class Scenario:
    name: str
    n: int
    variant: str
    seed: int = 0
    repeats: int = 3
    initial_objects: int = 100
    # Stop a per-op merge once it has run this long; the row then holds lower bounds.
    time_limit: Optional[float] = None

    def __post_init__(self) -> None:
        if self.name not in SCENARIOS:
            raise ValueError(f"unknown scenario {self.name!r}")
        if self.n < 0:
            raise ValueError("n must be non-negative")
        if self.repeats < 1:
            raise ValueError("repeats must be >= 1")
        if self.initial_objects < 1:
            raise ValueError("initial_objects must be >= 1")
        object.__setattr__(self, "variant", canonical_variant(self.variant))


@dataclass(frozen=True)
class BenchRow:
    scenario: str
    variant: str
    n: int
    repeat: int
    ns: int
    restore_steps: int
    reapply_steps: int
    complete: bool = True

    def as_csv(self) -> tuple:
        return (self.scenario, self.variant, self.n, self.repeat, self.ns, self.restore_steps, self.reapply_steps)


# -- workloads -------------------------------------------------------------------


def _base_ops(count: int) -> list[Operation]:
    return [
        Operation(OpId(i, BASE_ACTOR), OpType.MAKE, ROOT, MapKey(f"o{i}"), ObjType.MAP) for i in range(1, count + 1)
    ]


def _gen_moves(base: list[Operation], actor: int, n: int, seed: int) -> list[Operation]:
    """``n`` moves by one actor, each built against that actor's own state."""
    rng = random.Random(f"moves:{seed}:{actor}")
    eng = RarEngine()
    eng.insert_batch(base)
    objects = [op.id for op in base]
    placement = {x: x for x in objects}
    counter = len(base)
    out = []
    for _ in range(n):
        counter += 1
        x, dst = rng.choice(objects), rng.choice(objects)
        op = Operation(
            OpId(counter, actor), OpType.MOVE, dst, MapKey(f"m{x.counter}"), pred=(placement[x],), move_id=x
        )
        eng.insert(op)
        if eng.valid[op.id]:
            placement[x] = op.id
        out.append(op)
    return out


def _gen_adds(base: list[Operation], actor: int, n: int, seed: int) -> list[Operation]:
    rng = random.Random(f"adds:{seed}:{actor}")
    parents = [op.id for op in base]
    counter = len(base)
    out = []
    for i in range(n):
        counter += 1
        op = Operation(OpId(counter, actor), OpType.MAKE, rng.choice(parents), MapKey(f"n{actor}.{i}"), ObjType.MAP)
        parents.append(op.id)
        out.append(op)
    return out


@lru_cache(maxsize=8)
def _workload(name: str, n: int, seed: int, initial: int) -> tuple[tuple, tuple, tuple]:
    base = _base_ops(initial)
    gen = _gen_moves if name == "diverge-moves" else _gen_adds
    a, b = (tuple(gen(base, actor, n, seed)) for actor in ACTORS)
    return tuple(base), a, b


# -- measurement -----------------------------------------------------------------


def _fresh_actor(variant: str, base: Sequence[Operation], local: Sequence[Operation]) -> Engine:
    eng = make_engine(variant)
    eng.insert_batch(list(base) + list(local))
    eng.restore_steps = eng.reapply_steps = eng.timeline_touches = 0
    return eng


def _merge(eng: Engine, remote: Sequence[Operation], batch: bool, deadline: Optional[float]) -> bool:
    """Apply ``remote`` and render; False if the deadline cut it short."""
    if batch:
        eng.insert_batch(remote)
    else:
        for k, op in enumerate(remote):
            eng.insert(op)
            if deadline is not None and k % 16 == 15 and time.perf_counter() > deadline:
                return False
    eng.document()
    return True


def run_scenario(sc: Scenario) -> list[BenchRow]:
    """One warm-up merge (discarded) followed by ``sc.repeats`` timed merges.

    Convergence with the other actor is checked once, after the warm-up.  If a
    time limit cuts a merge short, that single incomplete row is returned.
    """
    base, mine, theirs = _workload(sc.name, sc.n, sc.seed, sc.initial_objects)
    batch = sc.variant in ("rar-batch", "naive") and sc.name == "diverge-moves"
    rows = []
    for rep in range(-1, sc.repeats):
        eng = _fresh_actor(sc.variant, base, mine)
        start = time.perf_counter_ns()
        deadline = None if sc.time_limit is None else start / 1e9 + sc.time_limit
        complete = _merge(eng, theirs, batch, deadline)
        ns = max(1, time.perf_counter_ns() - start)
        row = BenchRow(sc.name, sc.variant, sc.n, max(rep, 0), ns, eng.restore_steps, eng.reapply_steps, complete)
        if not complete:
            return [row]  # later repeats would be cut short the same way
        if rep < 0:
            _check_converged(sc, eng, base, mine, theirs, batch)
        else:
            rows.append(row)
    return rows


def _check_converged(sc: Scenario, eng: Engine, base, mine, theirs, batch: bool) -> None:
    other = _fresh_actor(sc.variant, base, theirs)
    if batch:
        other.insert_batch(mine)
    else:
        for op in mine:
            other.insert(op)
    if canonical_json(eng.document()) != canonical_json(other.document()):
        raise BenchDiverged(f"{sc.name}/{sc.variant} n={sc.n} seed={sc.seed}: actors diverged")


def run_diverge_moves(sc: Scenario) -> list[BenchRow]:
    if sc.name != "diverge-moves":
        sc = Scenario("diverge-moves", sc.n, sc.variant, sc.seed, sc.repeats, sc.initial_objects, sc.time_limit)
    if sc.variant == "moves-disabled":
        raise ValueError("diverge-moves needs a variant that supports moves")
    return run_scenario(sc)


def run_diverge_adds(sc: Scenario) -> list[BenchRow]:
    if sc.name != "diverge-adds":
        sc = Scenario("diverge-adds", sc.n, sc.variant, sc.seed, sc.repeats, sc.initial_objects, sc.time_limit)
    return run_scenario(sc)


def median_ns(rows: Iterable[BenchRow]) -> float:
    return statistics.median(r.ns for r in rows)


def emit_csv(rows: Iterable[BenchRow], out: Union[str, Path, TextIO, None] = None) -> str:
    """Write rows sorted by (scenario, variant, n, repeat); returns the CSV text."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_HEADER)
    for r in sorted(rows, key=lambda r: (r.scenario, r.variant, r.n, r.repeat)):
        w.writerow(r.as_csv())
    text = buf.getvalue()
    if isinstance(out, (str, Path)):
        Path(out).write_text(text, encoding="utf-8")
    elif out is not None:
        out.write(text)
    return text
