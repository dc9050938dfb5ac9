"""Region graphs, counting numbers, potential splits and chain decompositions."""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .exceptions import (
    InvalidCountingNumbersError,
    InvalidInputError,
    NotATreeError,
    UnsupportedStructureError,
)
from .model import DiscreteModel, energies, grid_edges


@dataclass(frozen=True, eq=False)
class Region:
    scope: tuple[int, ...]
    counting: float
    theta0: np.ndarray


@dataclass(frozen=True, eq=False)
class RegionGraph:
    """Regions with counting numbers plus parent -> child sub-region edges.

    ``kind`` names the builder that produced the graph ("pair_singleton" or
    "star_edge"); solvers use it to reject structures they do not handle.
    """

    regions: tuple[Region, ...]
    edges: tuple[tuple[int, int], ...]
    cardinalities: tuple[int, ...]
    kind: str = "custom"

    def __post_init__(self):
        for r in self.regions:
            if r.counting < 0:
                raise InvalidCountingNumbersError("counting numbers must be non-negative")
            shape = tuple(self.cardinalities[v] for v in r.scope)
            if r.theta0.shape != shape:
                raise InvalidInputError(f"theta0 shape {r.theta0.shape} != {shape}")
        for a, b in self.edges:
            if a == b or not set(self.regions[b].scope) <= set(self.regions[a].scope):
                raise InvalidInputError(f"edge ({a}, {b}) is not a sub-region edge")

    @property
    def counting(self) -> np.ndarray:
        return np.array([r.counting for r in self.regions])

    def parents(self, beta: int) -> list[int]:
        return [e for e, (_, b) in enumerate(self.edges) if b == beta]

    def intersections(self) -> list[int]:
        """Regions that are a child of at least one edge, in first-seen order."""
        return list(dict.fromkeys(b for _, b in self.edges))


def embed(table, sub_scope, scope, cardinalities) -> np.ndarray:
    """Broadcast a table over ``sub_scope`` to the full ``scope`` shape."""
    axes = [scope.index(v) for v in sub_scope]
    perm = np.argsort(axes)
    t = np.transpose(np.asarray(table, dtype=float), perm)
    shape = [1] * len(scope)
    for v in sub_scope:
        shape[scope.index(v)] = cardinalities[v]
    full = tuple(cardinalities[v] for v in scope)
    return np.broadcast_to(t.reshape(shape), full)


def _require_pairwise(model):
    if model.max_arity > 2:
        raise UnsupportedStructureError(
            f"unsupported-structure: factor arity {model.max_arity} > 2"
        )


def build_pair_singleton(
    model: DiscreteModel,
    c_pair: float = 1.0,
    c_singleton: float = 1.0,
    unary: str = "shared",
) -> RegionGraph:
    """One region per pairwise factor plus one per variable.

    With ``unary="shared"`` each unary table is split equally among the pair
    regions touching the variable (isolated variables keep theirs); with
    ``unary="singleton"`` unaries stay on the singleton regions.
    """
    _require_pairwise(model)
    if not c_pair > 0 or c_singleton < 0:
        raise InvalidCountingNumbersError(
            "invalid-counting-numbers: need c_pair > 0 and c_singleton >= 0")
    if unary not in ("shared", "singleton"):
        raise ValueError(f"unknown unary placement {unary!r}")
    cards = model.cardinalities
    edges = model.edges()
    degree = np.zeros(model.var_count, dtype=int)
    for i, j in edges:
        degree[i] += 1
        degree[j] += 1

    regions, rg_edges = [], []
    n_pairs = len(edges)
    for k, (i, j) in enumerate(edges):
        t = model.pairwise(i, j)
        if unary == "shared":
            t = t + model.unary(i)[:, None] / degree[i] + model.unary(j)[None, :] / degree[j]
        regions.append(Region((i, j), float(c_pair), t))
        rg_edges += [(k, n_pairs + i), (k, n_pairs + j)]
    for i in range(model.var_count):
        keep = unary == "singleton" or degree[i] == 0
        t = model.unary(i) if keep else np.zeros(cards[i])
        regions.append(Region((i,), float(c_singleton), t))
    return RegionGraph(tuple(regions), tuple(rg_edges), cards, "pair_singleton")


def build_star_edge(model: DiscreteModel) -> RegionGraph:
    """Star regions S_i (c=1) over the edge regions <ij> (c=0).

    theta0(S_i) = theta_i(x_i) + 1/2 sum_j theta_ij(x_i, x_j); edge regions
    start at zero.  Region-graph edges are grouped per edge region, S_i first.
    """
    _require_pairwise(model)
    cards = model.cardinalities
    nbrs = model.neighbors()
    regions = []
    for i in range(model.var_count):
        scope = tuple(sorted([i, *nbrs[i]]))
        t = embed(model.unary(i), (i,), scope, cards).copy()
        for j in nbrs[i]:
            t += 0.5 * embed(model.pairwise(i, j), (i, j), scope, cards)
        regions.append(Region(scope, 1.0, t))
    rg_edges = []
    for i, j in model.edges():
        regions.append(Region((i, j), 0.0, np.zeros((cards[i], cards[j]))))
        e = len(regions) - 1
        rg_edges += [(i, e), (j, e)]
    return RegionGraph(tuple(regions), tuple(rg_edges), cards, "star_edge")


def split_residual(graph: RegionGraph, model: DiscreteModel, n_samples=256, seed=0) -> float:
    """max_x |sum_a theta0_a(x_a) - theta(x)|, exhaustive when feasible."""
    if model.state_space_size() <= 2**16:
        X = np.array(list(itertools.product(*[range(k) for k in model.cardinalities])))
    else:
        rng = np.random.default_rng(seed)
        X = rng.integers(0, model.cardinalities, size=(n_samples, model.var_count))
    total = np.zeros(len(X))
    for r in graph.regions:
        total += r.theta0[tuple(X[:, v] for v in r.scope)]
    return float(np.max(np.abs(total - energies(model, X))))


@dataclass(frozen=True, eq=False)
class TreeDecomposition:
    trees: tuple[tuple[tuple[tuple[int, int], ...], float], ...]
    node_order: tuple[int, ...]
    rho_edge: dict = field(default_factory=dict)

    def __post_init__(self):
        weights = [w for _, w in self.trees]
        if any(w <= 0 for w in weights) or not math.isclose(sum(weights), 1.0, abs_tol=1e-12):
            raise InvalidInputError("tree weights must be positive and sum to 1")
        if sorted(self.node_order) != list(range(len(self.node_order))):
            raise InvalidInputError("node_order must be a permutation")
        for tree_edges, _ in self.trees:
            _assert_forest(len(self.node_order), tree_edges)
        if not self.rho_edge:
            rho = {}
            for tree_edges, w in self.trees:
                for e in tree_edges:
                    e = tuple(sorted(e))
                    rho[e] = rho.get(e, 0.0) + w
            object.__setattr__(self, "rho_edge", rho)


def _assert_forest(n, tree_edges):
    parent = list(range(n))

    def find(a):
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    for i, j in tree_edges:
        ri, rj = find(i), find(j)
        if ri == rj:
            raise NotATreeError(f"tree edge ({i}, {j}) closes a cycle")
        parent[ri] = rj


def _check_covers(model, decomp):
    missing = [e for e in model.edges() if e not in decomp.rho_edge]
    if missing:
        raise UnsupportedStructureError(f"unsupported-structure: edges {missing} in no tree")


def build_grid_chain_decomposition(model: DiscreteModel, rows: int, cols: int) -> TreeDecomposition:
    """Two forests with weight 1/2 each: all horizontal and all vertical chains.

    Degenerate grids (one row or one column) give a single chain with weight 1.
    """
    _require_pairwise(model)
    if model.var_count != rows * cols or set(model.edges()) != set(grid_edges(rows, cols)):
        raise UnsupportedStructureError(f"unsupported-structure: model is not a {rows}x{cols} grid")
    horizontal = tuple((v, v + 1) for v, w in grid_edges(rows, cols) if w == v + 1 and cols > 1)
    vertical = tuple(e for e in grid_edges(rows, cols) if e not in set(horizontal))
    # a single-row or single-column grid is one chain; keeping an empty second
    # forest would halve rho and lose exactness on what is already a tree
    forests = [f for f in (horizontal, vertical) if f] or [()]
    decomp = TreeDecomposition(
        trees=tuple((f, 1.0 / len(forests)) for f in forests),
        node_order=tuple(range(rows * cols)),
    )
    _check_covers(model, decomp)
    return decomp


def build_forest_decomposition(model: DiscreteModel, node_order=None) -> TreeDecomposition:
    """The model graph itself as the single tree (rho = 1); needs an acyclic model."""
    _require_pairwise(model)
    order = tuple(range(model.var_count)) if node_order is None else tuple(node_order)
    return TreeDecomposition(trees=((tuple(model.edges()), 1.0),), node_order=order)


def infer_grid_shape(model: DiscreteModel) -> tuple[int, int]:
    """Smallest ``rows`` such that the model is a ``rows x cols`` grid."""
    n = model.var_count
    edges = set(model.edges())
    for rows in range(1, n + 1):
        if n % rows == 0 and edges == set(grid_edges(rows, n // rows)):
            return rows, n // rows
    raise UnsupportedStructureError("unsupported-structure: model is not a grid")


def check_monotonic(decomp: TreeDecomposition) -> bool:
    """True iff every chain, read from its earliest endpoint, follows node_order."""
    pos = {v: k for k, v in enumerate(decomp.node_order)}
    for tree_edges, _ in decomp.trees:
        adj: dict[int, list[int]] = {}
        for i, j in tree_edges:
            adj.setdefault(i, []).append(j)
            adj.setdefault(j, []).append(i)
        if any(len(n) > 2 for n in adj.values()):
            raise UnsupportedStructureError("unsupported-structure: tree is not a chain")
        seen = set()
        for start in sorted((v for v, n in adj.items() if len(n) == 1), key=pos.get):
            if start in seen:
                continue
            prev, v, last = None, start, -1
            while v is not None:
                if pos[v] <= last:
                    return False
                seen.add(v)
                last = pos[v]
                nxt = [w for w in adj[v] if w != prev]
                prev, v = v, (nxt[0] if nxt else None)
    return True


def decomposition_from_chains(chains: Sequence[Sequence[Sequence[int]]], weights, node_order):
    """Build a decomposition from explicit chains given as node sequences."""
    trees = []
    for forest, w in zip(chains, weights):
        edges = tuple((a, b) for chain in forest for a, b in zip(chain, chain[1:]))
        trees.append((edges, float(w)))
    return TreeDecomposition(tuple(trees), tuple(node_order))
