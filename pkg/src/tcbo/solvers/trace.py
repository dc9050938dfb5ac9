"""Solver configuration, schedules and per-sweep traces."""
from __future__ import annotations

import csv
import io
import time
from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np

from ..exceptions import InvalidInputError

TRACE_COLUMNS = ("sweep", "bound", "admissibility_residual", "consistency_residual", "elapsed_ms")
SCHEDULE_KINDS = ("forward_backward", "forward_only", "edge_sweep", "intersection_sweep")


@dataclass(frozen=True)
class SolverConfig:
    """Run settings shared by every solver.

    ``order`` optionally permutes the schedule's update units (edges,
    intersections or nodes); ``None`` keeps the structure's natural order.
    """

    mode: str = "max"
    max_iters: int = 1000
    bound_tol: float = 1e-8
    consistency_tol: float = 1e-6
    seed: int = 0
    order: tuple[int, ...] | None = None

    def __post_init__(self):
        if self.mode not in ("sum", "max"):
            raise InvalidInputError(f"mode must be 'sum' or 'max', got {self.mode!r}")
        if self.max_iters < 1:
            raise InvalidInputError("max_iters must be >= 1")
        if not (self.bound_tol > 0 and self.consistency_tol > 0):
            raise InvalidInputError("tolerances must be positive")


@dataclass(frozen=True)
class Schedule:
    kind: str
    node_order: tuple[int, ...]

    def __post_init__(self):
        if self.kind not in SCHEDULE_KINDS:
            raise InvalidInputError(f"unknown schedule kind {self.kind!r}")
        if sorted(self.node_order) != list(range(len(self.node_order))):
            raise InvalidInputError("node_order must be a permutation")


class SweepRecord(NamedTuple):
    sweep: int
    bound: float
    admissibility_residual: float
    consistency_residual: float
    elapsed_ms: float


@dataclass
class SolverTrace:
    algorithm: str
    mode: str
    structure: str
    records: list[SweepRecord] = field(default_factory=list)
    beliefs: list[np.ndarray] = field(default_factory=list)
    assignment: tuple[int, ...] | None = None
    assignment_energy: float | None = None
    termination: str = ""

    @property
    def bounds(self) -> np.ndarray:
        return np.array([r.bound for r in self.records])

    @property
    def final_bound(self) -> float:
        return self.records[-1].bound

    def increases(self, tol: float = 1e-9) -> list[tuple[int, float]]:
        """(sweep, increase) for every sweep whose bound rose by more than tol."""
        b = self.bounds
        return [(self.records[k + 1].sweep, float(d))
                for k, d in enumerate(np.diff(b)) if d > tol]

    def is_monotone(self, tol: float = 1e-9) -> bool:
        return not self.increases(tol)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(TRACE_COLUMNS)
        for r in self.records:
            w.writerow([r.sweep] + [repr(float(v)) for v in r[1:]])
        return buf.getvalue()

    def to_dict(self) -> dict:
        return {
            "algorithm": self.algorithm,
            "mode": self.mode,
            "structure": self.structure,
            "termination": self.termination,
            "columns": list(TRACE_COLUMNS),
            "records": [list(r) for r in self.records],
            "assignment": list(self.assignment) if self.assignment is not None else None,
            "assignment_energy": self.assignment_energy,
        }


def read_trace_csv(text: str) -> list[SweepRecord]:
    rows = list(csv.reader(io.StringIO(text)))
    if not rows or tuple(rows[0]) != TRACE_COLUMNS:
        raise InvalidInputError("trace CSV header mismatch")
    return [SweepRecord(int(r[0]), *(float(v) for v in r[1:])) for r in rows[1:] if r]


class _Clock:
    def __init__(self):
        self.start = time.perf_counter()

    def ms(self) -> float:
        return (time.perf_counter() - self.start) * 1e3


def run_loop(trace: SolverTrace, config: SolverConfig, sweep, diagnose, message_tol=None):
    """Drive ``sweep()`` until convergence or ``max_iters``.

    ``diagnose()`` returns (bound, admissibility, consistency).  Convergence
    means the bound dropped by less than ``bound_tol`` over the last sweep and
    the consistency residual is within ``consistency_tol``.  With
    ``message_tol`` set (non-monotone schedules) the run instead stops once the
    largest message change returned by ``sweep()`` falls below it.
    """
    clock = _Clock()
    b, adm, cons = diagnose()
    trace.records.append(SweepRecord(0, b, adm, cons, clock.ms()))
    trace.termination = "max_iters"
    for t in range(1, config.max_iters + 1):
        change = sweep()
        prev = b
        b, adm, cons = diagnose()
        trace.records.append(SweepRecord(t, b, adm, cons, clock.ms()))
        if message_tol is not None:
            if change is not None and change < message_tol:
                trace.termination = "messages_converged"
                break
        elif prev - b < config.bound_tol and cons <= config.consistency_tol:
            trace.termination = "converged"
            break
    return trace


def ordered(units: Sequence, order) -> list:
    if order is None:
        return list(units)
    if sorted(order) != list(range(len(units))):
        raise InvalidInputError("config.order must permute the schedule units")
    return [units[k] for k in order]
