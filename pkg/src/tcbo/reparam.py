"""Reparameterizations held as message ledgers, beliefs, bounds and residuals.

The ledger stores one log-domain message per region-graph edge (parent ->
child).  A message is added to the child's potential and subtracted from the
parent's, so the regional potentials always sum to the original energy no
matter what the messages are.
"""
from __future__ import annotations

from typing import Sequence

import numpy as np
from ._lse import logsumexp

from .exceptions import NotAReparameterizationError
from .model import DiscreteModel, energies
from .oracle import tree_dp
from .region_graph import RegionGraph, TreeDecomposition


def _strides(shape):
    out, acc = [], 1
    for k in reversed(shape):
        out.append(acc)
        acc *= k
    return tuple(reversed(out))


class MessageLedger:
    """Log-domain messages on every edge of a region graph.

    All region tables and messages are kept in flat float64 buffers (region
    ``r`` occupies ``reg_off[r]:reg_off[r+1]``, message ``e`` occupies
    ``msg_off[e]:msg_off[e+1]``) so solver kernels can work on them directly.
    """

    def __init__(self, graph: RegionGraph):
        self.graph = graph
        cards = graph.cardinalities
        shapes = [r.theta0.shape for r in graph.regions]
        sizes = np.array([int(np.prod(s)) for s in shapes], dtype=np.int64)
        self.reg_off = np.concatenate([[0], np.cumsum(sizes)]).astype(np.int64)
        self.reg_c = graph.counting.astype(np.float64)
        self.theta0 = np.concatenate([r.theta0.ravel() for r in graph.regions] or [np.zeros(0)])

        E = len(graph.edges)
        self.edge_parent = np.array([a for a, _ in graph.edges], dtype=np.int64)
        self.edge_child = np.array([b for _, b in graph.edges], dtype=np.int64)
        msg_sizes = sizes[self.edge_child] if E else np.zeros(0, dtype=np.int64)
        self.msg_off = np.concatenate([[0], np.cumsum(msg_sizes)]).astype(np.int64)

        # proj[proj_off[e] + k] = flat child index of the parent's k-th entry
        maps = []
        for a, b in graph.edges:
            pa, pb = graph.regions[a].scope, graph.regions[b].scope
            grid = np.indices(shapes[a]).reshape(len(pa), -1)
            strides = _strides(shapes[b])
            idx = np.zeros(grid.shape[1], dtype=np.int64)
            for v, s in zip(pb, strides):
                idx += grid[pa.index(v)] * s
            maps.append(idx)
        self.proj = np.concatenate(maps) if maps else np.zeros(0, dtype=np.int64)
        self.proj_off = np.concatenate([[0], np.cumsum([len(m) for m in maps])]).astype(np.int64)

        # scatter plans for reconstruction and vectorised projections
        self._child_target = np.concatenate(
            [self.reg_off[b] + np.arange(msg_sizes[e]) for e, b in enumerate(self.edge_child)]
            or [np.zeros(0, dtype=np.int64)]
        ).astype(np.int64)
        self._parent_target = np.concatenate(
            [self.reg_off[a] + np.arange(sizes[a]) for a in self.edge_parent]
            or [np.zeros(0, dtype=np.int64)]
        ).astype(np.int64)
        self._edge_of_proj = np.repeat(np.arange(E), np.diff(self.proj_off))
        self._proj_target = self.msg_off[self._edge_of_proj] + self.proj if E else self.proj
        self._region_of_entry = np.repeat(np.arange(len(sizes)), sizes)
        self._region_strides = [np.array(_strides(s), dtype=np.int64) for s in shapes]

        self.messages = np.zeros(int(self.msg_off[-1]))

    @property
    def n_regions(self) -> int:
        return len(self.graph.regions)

    def message(self, e: int) -> np.ndarray:
        b = self.graph.edges[e][1]
        return self.messages[self.msg_off[e]:self.msg_off[e + 1]].reshape(
            self.graph.regions[b].theta0.shape)

    def set_message(self, e: int, table) -> None:
        self.messages[self.msg_off[e]:self.msg_off[e + 1]] = np.asarray(table, dtype=float).ravel()

    def theta_tilde_flat(self) -> np.ndarray:
        n = len(self.theta0)
        added = np.bincount(self._child_target, weights=self.messages, minlength=n)
        taken = np.bincount(
            self._parent_target, weights=self.messages[self._proj_target], minlength=n)
        return self.theta0 + added - taken

    def split(self, flat: np.ndarray) -> list[np.ndarray]:
        return [flat[self.reg_off[r]:self.reg_off[r + 1]].reshape(reg.theta0.shape)
                for r, reg in enumerate(self.graph.regions)]

    def gather_index(self, X: np.ndarray) -> np.ndarray:
        """(len(X), n_regions) flat indices of each region's entry at each row of X."""
        X = np.atleast_2d(np.asarray(X, dtype=np.int64))
        cols = []
        for r, reg in enumerate(self.graph.regions):
            if reg.scope:
                cols.append(self.reg_off[r] + X[:, list(reg.scope)] @ self._region_strides[r])
        return np.stack(cols, axis=1) if cols else np.zeros((len(X), 0), dtype=np.int64)

    def region_values(self, flat: np.ndarray, X: np.ndarray) -> np.ndarray:
        """Sum over regions of ``flat`` evaluated at the rows of assignment matrix X."""
        return flat[self.gather_index(X)].sum(axis=1)


def reconstruct_theta_tilde(ledger: MessageLedger) -> list[np.ndarray]:
    """theta~_b = theta0_b + sum_{a > b} m_{a->b} - sum_{g < b} m_{b->g}."""
    return ledger.split(ledger.theta_tilde_flat())


def belief(theta_tilde_table, c: float) -> np.ndarray:
    """b(x) ~ exp(theta~(x)/c); for c = 0 the uniform distribution on the argmax."""
    t = np.asarray(theta_tilde_table, dtype=float)
    if c < 0:
        raise ValueError("counting number must be non-negative")
    if c == 0:
        support = t == t.max()
        return support / support.sum()
    z = t / c
    return np.exp(z - logsumexp(z))


def _segment_max(values, off):
    out = np.maximum.reduceat(values, off[:-1]) if len(values) else np.zeros(0)
    out[np.diff(off) == 0] = 0.0
    return out


def _region_terms(flat, off, c):
    """Per-region c*log sum exp(theta~/c), with the max for c = 0."""
    sizes = np.diff(off)
    m = _segment_max(flat, off)
    out = m.copy()
    pos = c > 0
    if np.any(pos):
        scale = np.repeat(np.where(pos, c, 1.0), sizes)
        z = flat / scale
        zm = np.repeat(m / np.where(pos, c, 1.0), sizes)
        s = np.add.reduceat(np.exp(z - zm), off[:-1])
        out[pos] = (c * (m / np.where(pos, c, 1.0) + np.log(s)))[pos]
    return out


def bound_sum(ledger: MessageLedger, flat: np.ndarray | None = None) -> float:
    """sum_a c_a ln Z(theta~_a); regions with c_a = 0 contribute max theta~_a."""
    flat = ledger.theta_tilde_flat() if flat is None else flat
    return float(np.sum(_region_terms(flat, ledger.reg_off, ledger.reg_c)))


def bound_max(ledger: MessageLedger, flat: np.ndarray | None = None) -> float:
    """sum_a max_x theta~_a(x_a)."""
    flat = ledger.theta_tilde_flat() if flat is None else flat
    return float(np.sum(_segment_max(flat, ledger.reg_off)))


def admissibility_residual(
    ledger: MessageLedger, model: DiscreteModel, probes, flat: np.ndarray | None = None
) -> float:
    """max over probe assignments of |sum_a theta~_a(x_a) - theta(x)|."""
    X = np.atleast_2d(np.asarray(probes, dtype=np.int64))
    if len(X) == 0:
        raise ValueError("need at least one probe")
    flat = ledger.theta_tilde_flat() if flat is None else flat
    return float(np.max(np.abs(ledger.region_values(flat, X) - energies(model, X))))


def random_probes(model: DiscreteModel, k: int = 32, seed: int = 0) -> np.ndarray:
    rng = np.random.default_rng(seed)
    return rng.integers(0, model.cardinalities, size=(k, model.var_count))


def _log_beliefs(flat, off, c):
    """Flat log-beliefs of every region: exp(theta~/c) normalised, uniform over the argmax at c = 0."""
    sizes = np.diff(off)
    cc = np.repeat(c, sizes)
    m = np.repeat(_segment_max(flat, off), sizes)
    z = np.where(cc > 0, (flat - m) / np.where(cc > 0, cc, 1.0), np.where(flat == m, 0.0, -np.inf))
    norm = np.log(np.add.reduceat(np.exp(z), off[:-1])) if len(z) else np.zeros(0)
    return z - np.repeat(norm, sizes)


def _scatter_logproject(ledger, values, mode):
    """Project per-parent-entry log values onto each edge's child table (log domain)."""
    n = int(ledger.msg_off[-1])
    tgt = ledger._proj_target
    top = np.full(n, -np.inf)
    np.maximum.at(top, tgt, values)
    if mode == "max":
        return top
    safe = np.where(np.isfinite(top), top, 0.0)
    s = np.bincount(tgt, weights=np.exp(values - safe[tgt]), minlength=n)
    with np.errstate(divide="ignore"):
        return safe + np.log(s)


def child_reference_log_beliefs(ledger, flat, mode, counting=None):
    """Per-edge log reference belief of the child (flat, message layout).

    A child with c > 0 uses its own exp(theta~/c) belief.  A child with c = 0
    carries no entropy, so its belief is the normalised geometric combination of its
    parents' projections, exp((theta~_b + sum_a phi_a) / sum_a c_a).
    """
    c = ledger.reg_c if counting is None else np.asarray(counting, dtype=float)
    lb = _log_beliefs(flat, ledger.reg_off, c)
    E = len(ledger.edge_child)
    out = lb[ledger._child_target]
    n_reg = len(ledger.reg_c)
    zero = np.zeros(n_reg, dtype=bool)
    zero[ledger.edge_child] = True
    zero &= c == 0
    if not np.any(zero):
        return out
    parent_c = c[ledger.edge_parent]
    denom = np.bincount(ledger.edge_child, weights=parent_c, minlength=n_reg)
    zero &= denom > 0
    scale = np.repeat(np.where(parent_c > 0, parent_c, 1.0), np.diff(ledger.proj_off))
    theta_par = flat[ledger._parent_target]
    phi = _scatter_logproject(ledger, theta_par / scale, mode)
    phi *= np.repeat(np.where(parent_c > 0, parent_c, 1.0), np.diff(ledger.msg_off))
    u = flat + np.bincount(ledger._child_target, weights=phi, minlength=len(flat))
    u /= np.repeat(np.where(zero, denom, 1.0), np.diff(ledger.reg_off))
    u = _log_beliefs(u, ledger.reg_off, np.ones(n_reg))
    use = np.repeat(zero[ledger.edge_child], np.diff(ledger.msg_off))
    out[use] = u[ledger._child_target][use]
    return out


def consistency_residual(
    ledger: MessageLedger, mode: str = "sum", counting=None, flat: np.ndarray | None = None
) -> float:
    """L-inf gap between projected parent beliefs and child beliefs over all edges.

    Sum mode marginalises the parent belief; max mode max-marginalises and
    renormalises.  ``counting`` overrides the graph's counting numbers.
    """
    if mode not in ("sum", "max"):
        raise ValueError(f"mode must be 'sum' or 'max', got {mode!r}")
    if len(ledger.edge_child) == 0:
        return 0.0
    flat = ledger.theta_tilde_flat() if flat is None else flat
    c = ledger.reg_c if counting is None else np.asarray(counting, dtype=float)
    lb = _log_beliefs(flat, ledger.reg_off, c)
    proj = _scatter_logproject(ledger, lb[ledger._parent_target], mode)
    proj = np.exp(proj)
    if mode == "max":
        proj /= np.repeat(np.add.reduceat(proj, ledger.msg_off[:-1]), np.diff(ledger.msg_off))
    ref = np.exp(child_reference_log_beliefs(ledger, flat, mode, c))
    return float(np.max(np.abs(proj - ref)))


def trw_tree_terms(log_node, log_edge, tree_edges):
    """Node and edge log-potentials of one tree built from beliefs."""
    pots = []
    for i, j in tree_edges:
        if (i, j) in log_edge:
            t = log_edge[(i, j)]
        else:
            t = log_edge[(j, i)].T
        pots.append(t - log_node[i][:, None] - log_node[j][None, :])
    return pots


def trw_bound_from_log(
    log_node: Sequence[np.ndarray],
    log_edge: dict,
    decomp: TreeDecomposition,
    model: DiscreteModel,
    mode: str = "sum",
    n_probes: int = 32,
    seed: int = 0,
    tol: float = 1e-6,
) -> tuple[float, float]:
    """Tree-reweighted bound and probe deviation from log-domain beliefs.

    Returns ``(bound, deviation)``; raises NotAReparameterizationError when the
    probe constant is not constant to within ``tol``.
    """
    X = random_probes(model, n_probes, seed)
    mixed = np.zeros(len(X))
    per_tree = []
    node_sum = sum(ln[X[:, i]] for i, ln in enumerate(log_node))
    for tree_edges, w in decomp.trees:
        pots = trw_tree_terms(log_node, log_edge, tree_edges)
        val = node_sum.copy()
        for (i, j), p in zip(tree_edges, pots):
            val += p[X[:, i], X[:, j]]
        mixed += w * val
        per_tree.append((tree_edges, w, pots))
    gap = energies(model, X) - mixed
    C = float(np.mean(gap))
    deviation = float(np.max(np.abs(gap - C)))
    if deviation > tol:
        raise NotAReparameterizationError(
            f"not-a-reparameterization: probe constant deviates by {deviation:.3g}")
    total = C
    for tree_edges, w, pots in per_tree:
        total += w * tree_dp(log_node, pots, tree_edges, mode).value
    return total, deviation


def trw_bound(beliefs_node, beliefs_edge, decomp, model, mode="sum", n_probes=32, seed=0) -> float:
    """C + sum_tau rho_tau V_tau with per-tree potentials read off the beliefs.

    ``beliefs_edge`` maps a model edge ``(i, j)`` to a table indexed
    ``[x_i, x_j]``; all beliefs must be strictly positive.
    """
    log_node = [np.log(np.asarray(b, dtype=float)) for b in beliefs_node]
    log_edge = {k: np.log(np.asarray(v, dtype=float)) for k, v in beliefs_edge.items()}
    return trw_bound_from_log(log_node, log_edge, decomp, model, mode, n_probes, seed)[0]
