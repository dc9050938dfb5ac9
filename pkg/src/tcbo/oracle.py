"""Exact reference computations: enumeration and tree dynamic programming."""
from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np
from ._lse import logsumexp

from .exceptions import NotATreeError, StateSpaceTooLargeError
from .model import DiscreteModel, energies

MAX_STATES = 2**20
_BLOCK = 2**16


@dataclass(frozen=True)
class ExactResult:
    log_partition: float
    map_value: float
    map_assignment: tuple[int, ...]
    marginals: list[np.ndarray]


def _blocks(cards):
    total = int(np.prod(cards, dtype=np.int64)) if cards else 1
    for start in range(0, total, _BLOCK):
        flat = np.arange(start, min(start + _BLOCK, total))
        if cards:
            yield np.stack(np.unravel_index(flat, cards), axis=1)
        else:
            yield np.zeros((len(flat), 0), dtype=np.int64)


def brute_force(model: DiscreteModel) -> ExactResult:
    """Exact log Z, MAP and single-variable marginals by full enumeration.

    Assignments are visited lexicographically with the last variable fastest;
    the MAP tie-break keeps the first (lowest) assignment.
    """
    size = model.state_space_size()
    if size > MAX_STATES:
        raise StateSpaceTooLargeError(
            f"state space has {size} assignments, limit is {MAX_STATES}"
        )
    cards = model.cardinalities

    best, best_x = -np.inf, None
    for X in _blocks(cards):
        e = energies(model, X)
        k = int(np.argmax(e))
        if e[k] > best:
            best, best_x = float(e[k]), X[k]

    total = 0.0
    marg = [np.zeros(k) for k in cards]
    for X in _blocks(cards):
        w = np.exp(energies(model, X) - best)
        total += w.sum()
        for v in range(model.var_count):
            marg[v] += np.bincount(X[:, v], weights=w, minlength=cards[v])
    marginals = [m / total for m in marg]
    return ExactResult(
        log_partition=best + float(np.log(total)),
        map_value=best,
        map_assignment=tuple(int(v) for v in best_x),
        marginals=marginals,
    )


class TreeDPResult(NamedTuple):
    value: float
    assignment: np.ndarray | None


def _components(n, tree_edges):
    """Root-first BFS orders per component; raises on cycles."""
    parent = list(range(n))

    def find(a):
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    adj = [[] for _ in range(n)]
    for k, (i, j) in enumerate(tree_edges):
        ri, rj = find(i), find(j)
        if ri == rj:
            raise NotATreeError(f"edge ({i}, {j}) closes a cycle")
        parent[ri] = rj
        adj[i].append((j, k, False))
        adj[j].append((i, k, True))

    seen = [False] * n
    orders = []
    for root in range(n):
        if seen[root]:
            continue
        seen[root] = True
        order, up = [root], {root: None}
        head = 0
        while head < len(order):
            v = order[head]
            head += 1
            for w, k, flipped in adj[v]:
                if not seen[w]:
                    seen[w] = True
                    # (edge index, True if the table is indexed [x_w, x_v])
                    up[w] = (v, k, flipped)
                    order.append(w)
        orders.append((order, up))
    return orders


def _oriented(table, child_first):
    # returns table indexed [x_child, x_parent]
    return table if child_first else table.T


def tree_dp(
    node_potentials: Sequence[np.ndarray],
    edge_potentials: Sequence[np.ndarray],
    tree_edges: Sequence[tuple[int, int]],
    mode: str = "sum",
) -> TreeDPResult:
    """Exact log-partition (``mode='sum'``) or max (``mode='max'``) of a forest.

    ``edge_potentials[k]`` is indexed ``[x_i, x_j]`` for ``tree_edges[k] = (i, j)``.
    In max mode the result also carries a maximising assignment, recovered by
    backtracking from each component's root.
    """
    if mode not in ("sum", "max"):
        raise ValueError(f"mode must be 'sum' or 'max', got {mode!r}")
    n = len(node_potentials)
    orders = _components(n, tree_edges)
    reduce = (lambda a, axis: logsumexp(a, axis=axis)) if mode == "sum" else (
        lambda a, axis: np.max(a, axis=axis))

    total = 0.0
    x = np.zeros(n, dtype=np.int64) if mode == "max" else None
    for order, up in orders:
        h = {v: np.asarray(node_potentials[v], dtype=float).copy() for v in order}
        argbest = {}
        for v in reversed(order[1:]):
            p, k, child_first = up[v]
            t = _oriented(np.asarray(edge_potentials[k], dtype=float), child_first)
            scores = t + h[v][:, None]
            h[p] = h[p] + reduce(scores, 0)
            if mode == "max":
                argbest[v] = np.argmax(scores, axis=0)
        root = order[0]
        total += float(reduce(h[root], 0))
        if mode == "max":
            x[root] = int(np.argmax(h[root]))
            for v in order[1:]:
                p = up[v][0]
                x[v] = argbest[v][x[p]]
    return TreeDPResult(total, x)


def tree_marginals(node_potentials, edge_potentials, tree_edges) -> list[np.ndarray]:
    """Exact single-variable marginals of a forest by two-pass sum-product."""
    n = len(node_potentials)
    marg = [None] * n
    for order, up in _components(n, tree_edges):
        node = {v: np.asarray(node_potentials[v], dtype=float) for v in order}
        inbox = {v: [] for v in order}
        to_parent = {}
        for v in reversed(order[1:]):
            p, k, cf = up[v]
            t = _oriented(np.asarray(edge_potentials[k], dtype=float), cf)
            h = node[v] + sum(inbox[v], np.zeros_like(node[v]))
            to_parent[v] = logsumexp(t + h[:, None], axis=0)
            inbox[p].append(to_parent[v])
        down = {order[0]: np.zeros_like(node[order[0]])}
        for v in order[1:]:
            p, k, cf = up[v]
            t = _oriented(np.asarray(edge_potentials[k], dtype=float), cf)
            hp = node[p] + down[p] + sum(inbox[p], np.zeros_like(node[p])) - to_parent[v]
            down[v] = logsumexp(t + hp[None, :], axis=1)
        for v in order:
            lb = node[v] + down[v] + sum(inbox[v], np.zeros_like(node[v]))
            marg[v] = np.exp(lb - logsumexp(lb))
    return marg


def model_tree_terms(model: DiscreteModel):
    """(node potentials, edge potentials, edges) of a pairwise model."""
    nodes = [model.unary(i) for i in range(model.var_count)]
    edges = model.edges()
    return nodes, [model.pairwise(i, j) for i, j in edges], edges
