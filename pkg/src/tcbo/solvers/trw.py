"""Tree-reweighted message passing over monotonic chains.

Messages follow the sequential TRW update with edge appearance
probabilities rho_ij.  ``run_trws`` scans the node order forward then
backward, each time sending only in the scan direction; ``run_trw_forward``
keeps the same equations but sends every outgoing message on a single
forward scan, which is the classic non-convergent schedule.
"""
from __future__ import annotations

import numpy as np

from ..exceptions import NotAReparameterizationError, ScheduleError, UnsupportedStructureError
from ..model import DiscreteModel, energies
from ..oracle import _components
from ..region_graph import TreeDecomposition, check_monotonic
from ..reparam import random_probes
from . import _kernels
from .decode import decode_map
from .trace import SolverConfig, SolverTrace, run_loop


class TRWState:
    """Flat TRW message state for a pairwise model and a tree decomposition."""

    def __init__(self, model: DiscreteModel, decomp: TreeDecomposition):
        if model.max_arity > 2:
            raise UnsupportedStructureError("unsupported-structure: TRW needs a pairwise model")
        if len(decomp.node_order) != model.var_count:
            raise UnsupportedStructureError("unsupported-structure: decomposition size mismatch")
        self.model = model
        self.decomp = decomp
        n = model.var_count
        self.card = np.array(model.cardinalities, dtype=np.int64)
        self.node_off = np.concatenate([[0], np.cumsum(self.card)]).astype(np.int64)
        self.theta_node = np.concatenate([model.unary(i) for i in range(n)] or [np.zeros(0)])
        self.edges = model.edges()
        missing = [e for e in self.edges if e not in decomp.rho_edge]
        if missing:
            raise UnsupportedStructureError(f"unsupported-structure: edges {missing} in no tree")
        self.eu = np.array([i for i, _ in self.edges], dtype=np.int64)
        self.ev = np.array([j for _, j in self.edges], dtype=np.int64)
        self.rho = np.array([decomp.rho_edge[e] for e in self.edges], dtype=np.float64)
        tables = [model.pairwise(i, j) for i, j in self.edges]
        sizes = [t.size for t in tables]
        self.edge_off = np.concatenate([[0], np.cumsum(sizes)]).astype(np.int64)
        self.theta_edge = np.concatenate([t.ravel() for t in tables] or [np.zeros(0)])
        self.tables = tables

        msg_sizes = []
        for i, j in self.edges:
            msg_sizes += [self.card[j], self.card[i]]  # 2e: i->j, 2e+1: j->i
        self.msg_off = np.concatenate([[0], np.cumsum(msg_sizes)]).astype(np.int64)
        self.msgs = np.zeros(int(self.msg_off[-1]))

        slots = [[] for _ in range(n)]
        for e, (i, j) in enumerate(self.edges):
            slots[i].append((j, e, 2 * e, 2 * e + 1))
            slots[j].append((i, e, 2 * e + 1, 2 * e))
        for s in slots:
            s.sort()
        flat = [s for ss in slots for s in ss]
        self.adj_ptr = np.concatenate([[0], np.cumsum([len(s) for s in slots])]).astype(np.int64)
        self.adj_nbr = np.array([s[0] for s in flat], dtype=np.int64)
        self.adj_edge = np.array([s[1] for s in flat], dtype=np.int64)
        self.adj_out = np.array([s[2] for s in flat], dtype=np.int64)
        self.adj_in = np.array([s[3] for s in flat], dtype=np.int64)
        self.set_order(decomp.node_order)

        # entry -> node-belief index of each endpoint, for edge potentials
        self.ent_i = np.concatenate(
            [self.node_off[i] + np.repeat(np.arange(self.card[i]), self.card[j])
             for i, j in self.edges] or [np.zeros(0, dtype=np.int64)]).astype(np.int64)
        self.ent_j = np.concatenate(
            [self.node_off[j] + np.tile(np.arange(self.card[j]), self.card[i])
             for i, j in self.edges] or [np.zeros(0, dtype=np.int64)]).astype(np.int64)
        index = {e: k for k, e in enumerate(self.edges)}
        self.forests = []
        for tree_edges, w in decomp.trees:
            keys = [tuple(sorted(e)) for e in tree_edges]
            if any(k not in index for k in keys):
                raise UnsupportedStructureError("unsupported-structure: tree edge not in the model")
            seq_v, seq_p, seq_e = [], [], []
            for order, up in _components(n, keys):
                for v in order:
                    seq_v.append(v)
                    seq_p.append(-1 if up[v] is None else up[v][0])
                    seq_e.append(-1 if up[v] is None else index[keys[up[v][1]]])
            self.forests.append((w, np.array(seq_v, dtype=np.int64),
                                 np.array(seq_p, dtype=np.int64), np.array(seq_e, dtype=np.int64)))

    def set_order(self, order):
        self.order = np.array(order, dtype=np.int64)
        self.pos = np.empty_like(self.order)
        self.pos[self.order] = np.arange(len(self.order))

    def message(self, d: int) -> np.ndarray:
        return self.msgs[self.msg_off[d]:self.msg_off[d + 1]]

    def sweep(self, mode: str, forward_only: bool = False) -> float:
        return _kernels.trw_sweep(
            self.order, self.pos, forward_only, self.node_off, self.card, self.theta_node,
            self.eu, self.edge_off, self.theta_edge, self.rho, self.adj_ptr, self.adj_nbr,
            self.adj_edge, self.adj_out, self.adj_in, self.msg_off, self.msgs, mode == "sum")

    def flat_log_beliefs(self):
        log_node = np.empty_like(self.theta_node)
        log_edge = np.empty_like(self.theta_edge)
        _kernels.trw_log_beliefs(self.theta_node, self.node_off, self.card, self.eu, self.ev,
                                 self.edge_off, self.theta_edge, self.rho, self.msg_off,
                                 self.msgs, log_node, log_edge)
        return log_node, log_edge

    def log_beliefs(self):
        """Normalised log node beliefs and log edge beliefs keyed by (i, j)."""
        ln, le = self.flat_log_beliefs()
        log_node = [ln[self.node_off[v]:self.node_off[v + 1]] for v in range(len(self.card))]
        log_edge = {(i, j): le[self.edge_off[e]:self.edge_off[e + 1]].reshape(self.card[i], self.card[j])
                    for e, (i, j) in enumerate(self.edges)}
        return log_node, log_edge

    def consistency(self, log_node, log_edge, mode) -> float:
        return _kernels.trw_consistency(log_node, log_edge, self.node_off, self.card, self.eu,
                                        self.ev, self.edge_off, mode == "sum")

    def bound(self, log_node, log_edge, mode, probes, probe_energy, tol=1e-6):
        """(bound, probe deviation) of the tree-reweighted bound from flat log beliefs."""
        edge_pot = log_edge - log_node[self.ent_i] - log_node[self.ent_j]
        X = probes
        mixed = log_node[self.node_off[:-1] + X].sum(axis=1)
        if len(self.edges):
            idx = self.edge_off[:-1] + X[:, self.eu] * self.card[self.ev] + X[:, self.ev]
            mixed += (edge_pot[idx] * self.rho).sum(axis=1)
        gap = probe_energy - mixed
        C = float(np.mean(gap))
        deviation = float(np.max(np.abs(gap - C)))
        if deviation > tol:
            raise NotAReparameterizationError(
                f"not-a-reparameterization: probe constant deviates by {deviation:.3g}")
        total = C
        for w, seq_v, seq_p, seq_e in self.forests:
            total += w * _kernels.forest_value(log_node, self.node_off, self.card, edge_pot,
                                               self.edge_off, self.eu, seq_v, seq_p, seq_e,
                                               mode == "sum")
        return total, deviation


def _run(model, decomp, config, forward_only, callback):
    order = decomp.node_order if config.order is None else tuple(config.order)
    if order != decomp.node_order:
        decomp = TreeDecomposition(decomp.trees, order, dict(decomp.rho_edge))
    if not check_monotonic(decomp):
        raise ScheduleError("schedule-invalid: chains are not monotonic in the node order")
    state = TRWState(model, decomp)
    counter = {"t": 0}
    probes = random_probes(model, 32, config.seed)
    probe_energy = energies(model, probes)

    def diagnose():
        log_node, log_edge = state.flat_log_beliefs()
        bound, dev = state.bound(log_node, log_edge, config.mode, probes, probe_energy)
        cons = state.consistency(log_node, log_edge, config.mode)
        if callback is not None:
            callback(counter["t"], state)
        counter["t"] += 1
        return bound, dev, cons

    name = "trw-forward" if forward_only else "trws"
    rhos = sorted({round(float(r), 12) for r in state.rho})
    trace = SolverTrace(name, config.mode, f"trw(rho={','.join(f'{r:g}' for r in rhos)})")
    run_loop(trace, config, lambda: state.sweep(config.mode, forward_only), diagnose,
             message_tol=1e-10 if forward_only else None)
    log_node, _ = state.log_beliefs()
    trace.beliefs = [np.exp(ln) for ln in log_node]
    if config.mode == "max":
        trace.assignment, trace.assignment_energy = decode_map(trace.beliefs, model)
    return trace


def run_trws(model: DiscreteModel, decomp: TreeDecomposition, config: SolverConfig,
             callback=None) -> SolverTrace:
    """Sequential TRW (sum or max) with the forward-backward schedule."""
    return _run(model, decomp, config, False, callback)


def run_trw_forward(model: DiscreteModel, decomp: TreeDecomposition, config: SolverConfig,
                    callback=None) -> SolverTrace:
    """Same message equations on a forward-only, all-outgoing schedule (no descent guarantee)."""
    return _run(model, decomp, config, True, callback)
