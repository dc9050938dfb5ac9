"""Discrete factor models in log-potential (energy) form.

A model is a list of factors, each a scope of variable indices plus a dense
table of log-potentials theta_a(x_a).  Tables are stored as C-ordered arrays
shaped by the scope cardinalities, so the flat order is row-major with the
last scope variable varying fastest.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from os import PathLike
from typing import Iterable, Sequence

import numpy as np

from .exceptions import DimensionMismatchError, InvalidInputError, ModelParseError

FORMAT_HEADER = "tcbo-model v1"


@dataclass(frozen=True, eq=False)
class Factor:
    scope: tuple[int, ...]
    table: np.ndarray

    def __repr__(self):
        return f"Factor(scope={self.scope}, shape={self.table.shape})"


class DiscreteModel:
    """Variables with finite domains and a list of log-potential factors.

    Parameters
    ----------
    cardinalities : sequence of int
        Domain size of each variable (all >= 2).
    factors : iterable of (scope, table)
        ``table`` is either flat (row-major, last scope variable fastest) or
        already shaped by the scope cardinalities.  Factors over the same
        variable set are merged, so at most one factor exists per scope set.
    """

    def __init__(self, cardinalities: Sequence[int], factors: Iterable = ()):
        cards = tuple(int(k) for k in cardinalities)
        if any(k < 2 for k in cards):
            raise InvalidInputError("every cardinality must be >= 2")
        self.cardinalities = cards
        self.var_count = len(cards)

        merged: dict[frozenset, list] = {}
        order: list[frozenset] = []
        for item in factors:
            scope, table = item if not isinstance(item, Factor) else (item.scope, item.table)
            scope = tuple(int(v) for v in scope)
            table = self._check_table(scope, table)
            key = frozenset(scope)
            if key in merged:
                first_scope, acc = merged[key]
                perm = [scope.index(v) for v in first_scope]
                merged[key][1] = acc + np.transpose(table, perm)
            else:
                merged[key] = [scope, table]
                order.append(key)

        built = []
        for key in order:
            scope, table = merged[key]
            table = np.ascontiguousarray(table, dtype=np.float64)
            table.setflags(write=False)
            built.append(Factor(scope, table))
        self.factors: tuple[Factor, ...] = tuple(built)

    def _check_table(self, scope, table):
        if len(set(scope)) != len(scope):
            raise InvalidInputError(f"scope {scope} contains duplicate variables")
        for v in scope:
            if not 0 <= v < self.var_count:
                raise InvalidInputError(f"scope index {v} out of range [0, {self.var_count})")
        shape = tuple(self.cardinalities[v] for v in scope)
        arr = np.asarray(table, dtype=np.float64)
        if arr.size != math.prod(shape):
            raise DimensionMismatchError(
                f"table for scope {scope} has {arr.size} entries, expected {math.prod(shape)}"
            )
        if arr.shape != shape:
            if arr.ndim > 1:
                raise DimensionMismatchError(f"table shape {arr.shape} does not match {shape}")
            arr = arr.reshape(shape)
        if not np.all(np.isfinite(arr)):
            raise InvalidInputError(f"table for scope {scope} has non-finite entries")
        return arr.copy()

    def __repr__(self):
        return f"DiscreteModel(var_count={self.var_count}, factors={len(self.factors)})"

    # structural helpers used by the region-graph builders and solvers

    @property
    def max_arity(self) -> int:
        return max((len(f.scope) for f in self.factors), default=0)

    def edges(self) -> list[tuple[int, int]]:
        """Sorted variable pairs of the pairwise factors, in factor order."""
        return [tuple(sorted(f.scope)) for f in self.factors if len(f.scope) == 2]

    def unary(self, i: int) -> np.ndarray:
        """Unary log-potential of variable ``i`` (zeros when it has none)."""
        for f in self.factors:
            if f.scope == (i,):
                return f.table.copy()
        return np.zeros(self.cardinalities[i])

    def pairwise(self, i: int, j: int) -> np.ndarray:
        """Pairwise table indexed ``[x_i, x_j]``."""
        for f in self.factors:
            if f.scope == (i, j):
                return f.table.copy()
            if f.scope == (j, i):
                return f.table.T.copy()
        raise KeyError((i, j))

    def neighbors(self) -> list[list[int]]:
        nbrs = [[] for _ in range(self.var_count)]
        for i, j in self.edges():
            nbrs[i].append(j)
            nbrs[j].append(i)
        return [sorted(n) for n in nbrs]

    def state_space_size(self) -> int:
        return math.prod(self.cardinalities)


def check_assignment(model: DiscreteModel, x) -> np.ndarray:
    x = np.asarray(x)
    if x.shape != (model.var_count,):
        raise InvalidInputError(f"assignment must have length {model.var_count}")
    if not np.issubdtype(x.dtype, np.integer):
        if not np.all(np.equal(np.mod(x, 1), 0)):
            raise InvalidInputError("assignment values must be integers")
        x = x.astype(np.int64)
    if np.any(x < 0) or np.any(x >= np.asarray(model.cardinalities)):
        raise InvalidInputError("assignment value out of range")
    return x


def energy(model: DiscreteModel, x) -> float:
    """Total energy theta(x): the sum of each factor's table entry at x."""
    x = check_assignment(model, x)
    total = 0.0
    for f in model.factors:
        total += f.table[tuple(x[list(f.scope)])]
    return float(total)


def energies(model: DiscreteModel, X) -> np.ndarray:
    """Vectorised :func:`energy` over the rows of ``X`` (no validation)."""
    X = np.asarray(X, dtype=np.int64)
    out = np.zeros(len(X))
    for f in model.factors:
        out += f.table[tuple(X[:, v] for v in f.scope)]
    return out


def _spin(state):
    return 2.0 * state - 1.0


def grid_edges(rows: int, cols: int) -> list[tuple[int, int]]:
    """4-neighbour grid edges; per node in row-major order, right then down."""
    out = []
    for r in range(rows):
        for c in range(cols):
            v = r * cols + c
            if c + 1 < cols:
                out.append((v, v + 1))
            if r + 1 < rows:
                out.append((v, v + cols))
    return out


def gen_spin_glass(
    rows: int,
    cols: int,
    coupling_half_width: float = 9.0,
    field_half_width: float = 1.0,
    seed: int = 0,
) -> DiscreteModel:
    """Binary Ising spin glass on a ``rows x cols`` grid.

    theta_ij(x_i, x_j) = J_ij s(x_i) s(x_j) and theta_i(x_i) = h_i s(x_i) with
    s(0) = -1, s(1) = +1.  Couplings and fields are drawn uniformly from
    NumPy's PCG64 stream (``default_rng(seed)``): all couplings first, in
    :func:`grid_edges` order, then all fields in variable order.  Factors are
    listed in the same order (pairwise, then unary).
    """
    if rows < 1 or cols < 1:
        raise InvalidInputError("rows and cols must be >= 1")
    rng = np.random.default_rng(seed)
    edges = grid_edges(rows, cols)
    J = rng.uniform(-coupling_half_width, coupling_half_width, size=len(edges))
    h = rng.uniform(-field_half_width, field_half_width, size=rows * cols)
    s = _spin(np.arange(2))
    factors = [((i, j), Jij * np.outer(s, s)) for (i, j), Jij in zip(edges, J)]
    factors += [((i,), hi * s) for i, hi in enumerate(h)]
    return DiscreteModel([2] * (rows * cols), factors)


def save_model(model: DiscreteModel, path: str | PathLike) -> None:
    lines = [
        FORMAT_HEADER,
        str(model.var_count),
        " ".join(str(k) for k in model.cardinalities),
        str(len(model.factors)),
    ]
    for f in model.factors:
        lines.append("scope: " + " ".join(str(v) for v in f.scope))
        lines.append(" ".join(f"{v:.17g}" for v in f.table.ravel()))
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def load_model(path: str | PathLike) -> DiscreteModel:
    with open(path) as fh:
        lines = fh.read().splitlines()
    return parse_model(lines)


def parse_model(lines: Sequence[str]) -> DiscreteModel:
    def line(k):
        if k >= len(lines):
            raise ModelParseError("unexpected end of file", k + 1)
        return lines[k].strip()

    def ints(text, k):
        try:
            return [int(t) for t in text.split()]
        except ValueError as exc:
            raise ModelParseError(f"expected integers: {exc}", k + 1) from None

    if line(0) != FORMAT_HEADER:
        raise ModelParseError(f"expected header {FORMAT_HEADER!r}", 1)
    header = ints(line(1), 1)
    if len(header) != 1:
        raise ModelParseError("expected a single variable count", 2)
    n = header[0]
    cards = ints(line(2), 2)
    if len(cards) != n:
        raise DimensionMismatchError(f"line 3: {len(cards)} cardinalities for {n} variables")
    counts = ints(line(3), 3)
    if len(counts) != 1:
        raise ModelParseError("expected a single factor count", 4)
    factors = []
    k = 4
    for _ in range(counts[0]):
        head = line(k)
        if not head.startswith("scope:"):
            raise ModelParseError("expected 'scope:' line", k + 1)
        scope = ints(head[len("scope:"):], k)
        try:
            values = [float(t) for t in line(k + 1).split()]
        except ValueError as exc:
            raise ModelParseError(f"bad table value: {exc}", k + 2) from None
        expected = math.prod(cards[v] for v in scope if 0 <= v < n)
        if len(values) != expected:
            raise DimensionMismatchError(
                f"line {k + 2}: table has {len(values)} values, expected {expected}"
            )
        factors.append((scope, np.array(values)))
        k += 2
    if any(t.strip() for t in lines[k:]):
        raise ModelParseError("trailing content after last factor", k + 1)
    return DiscreteModel(cards, factors)
