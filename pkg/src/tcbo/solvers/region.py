"""Region-graph solvers: max-sum diffusion, Heskes' star updates and MPLP.

All three keep their state in a :class:`~tcbo.reparam.MessageLedger`, so the
reparameterization holds by construction and only the update rule differs.
"""
from __future__ import annotations

from typing import Callable

import numpy as np
from .._lse import logsumexp

from ..exceptions import InvalidCountingNumbersError, UnsupportedStructureError
from ..model import DiscreteModel, energies
from ..region_graph import RegionGraph, build_pair_singleton
from ..reparam import (
    MessageLedger,
    _log_beliefs,
    _region_terms,
    _scatter_logproject,
    admissibility_residual,
    bound_max,
    bound_sum,
    child_reference_log_beliefs,
    consistency_residual,
)
from . import _kernels
from .decode import decode_map
from .trace import SolverConfig, SolverTrace, ordered, run_loop

Callback = Callable[[int, MessageLedger], None]


def _probes(cards, k, seed):
    return np.random.default_rng(seed).integers(0, cards, size=(k, len(cards)))


def _graph_energy(ledger, X):
    return ledger.region_values(ledger.theta0, np.atleast_2d(X))


def _admissibility_check(ledger, model, probes):
    """flat -> max probe gap to the model energy (or to theta0 without a model)."""
    idx = ledger.gather_index(probes)
    target = energies(model, probes) if model is not None else ledger.theta0[idx].sum(axis=1)
    return lambda flat: float(np.max(np.abs(flat[idx].sum(axis=1) - target)))


def _label(graph: RegionGraph) -> str:
    cs = sorted({float(r.counting) for r in graph.regions})
    return f"{graph.kind}(c={','.join(f'{c:g}' for c in cs)})"


def variable_beliefs(ledger: MessageLedger, mode: str, counting=None, flat=None) -> list[np.ndarray]:
    """One belief table per variable, read off the region graph.

    Singleton regions give their reference belief (see
    :func:`~tcbo.reparam.child_reference_log_beliefs`); star graphs project
    the centre star's belief onto its centre variable.
    """
    graph = ledger.graph
    flat = ledger.theta_tilde_flat() if flat is None else flat
    c = ledger.reg_c if counting is None else np.asarray(counting, dtype=float)
    n = len(graph.cardinalities)
    lb = _log_beliefs(flat, ledger.reg_off, c)
    out: list = [None] * n
    if graph.kind == "star_edge":
        for v in range(n):
            table = np.exp(lb[ledger.reg_off[v]:ledger.reg_off[v + 1]]).reshape(
                graph.regions[v].theta0.shape)
            axis = graph.regions[v].scope.index(v)
            others = tuple(k for k in range(table.ndim) if k != axis)
            p = table.sum(axis=others) if mode == "sum" else table.max(axis=others)
            out[v] = p / p.sum()
        return out
    ref = None
    first_edge = {}
    for e, b in enumerate(ledger.edge_child):
        first_edge.setdefault(int(b), e)
    for r, reg in enumerate(graph.regions):
        if len(reg.scope) != 1:
            continue
        v = reg.scope[0]
        if r in first_edge:
            if ref is None:
                ref = child_reference_log_beliefs(ledger, flat, mode, c)
            e = first_edge[r]
            out[v] = np.exp(ref[ledger.msg_off[e]:ledger.msg_off[e + 1]])
        else:
            out[v] = np.exp(lb[ledger.reg_off[r]:ledger.reg_off[r + 1]])
    return out


def _finish(trace, ledger, config, counting, model):
    flat = ledger.theta_tilde_flat()
    trace.beliefs = variable_beliefs(ledger, config.mode, counting, flat)
    if config.mode == "max":
        x, _ = decode_map(trace.beliefs)
        trace.assignment = x
        trace.assignment_energy = float(_graph_energy(ledger, np.array(x))[0])
    return trace


def _run_star_units(ledger, units, c_par, c_child, config, model, counting, algorithm,
                    callback):
    E = ledger.edge_child
    unit_ptr = np.concatenate([[0], np.cumsum([len(u) for u in units])]).astype(np.int64)
    unit_edges = np.array([e for u in units for e in u], dtype=np.int64)
    unit_cpar = np.array([c for cs in c_par for c in cs], dtype=np.float64)
    unit_cchild = np.asarray(c_child, dtype=np.float64)
    sum_mode = config.mode == "sum"
    probes = _probes(ledger.graph.cardinalities, 32, config.seed)
    admissibility = _admissibility_check(ledger, model, probes)
    theta = ledger.theta_tilde_flat()
    state = {"t": 0}

    def sweep():
        _kernels.ledger_sweep(theta, ledger.messages, ledger.reg_off, ledger.msg_off,
                              ledger.proj, ledger.proj_off, ledger.edge_parent, E,
                              unit_ptr, unit_edges, unit_cpar, unit_cchild, sum_mode)
        theta[:] = ledger.theta_tilde_flat()

    def diagnose():
        flat = theta
        b = bound_sum(ledger, flat) if sum_mode else bound_max(ledger, flat)
        adm = admissibility(flat)
        cons = consistency_residual(ledger, config.mode, counting, flat)
        if callback is not None:
            callback(state["t"], ledger)
        state["t"] += 1
        return b, adm, cons

    trace = SolverTrace(algorithm, config.mode, _label(ledger.graph))
    run_loop(trace, config, sweep, diagnose)
    return _finish(trace, ledger, config, counting, model)


def run_msd(graph: RegionGraph, config: SolverConfig, model: DiscreteModel | None = None,
            callback: Callback | None = None) -> SolverTrace:
    """Max-sum diffusion (and its sum-product twin) on a pair/singleton graph.

    Each update touches one region-graph edge and moves potential between the
    pair and the singleton until their beliefs agree on that edge.  In max
    mode the move is the equal-weight half step regardless of the graph's
    counting numbers; in sum mode the counting numbers set the split.
    """
    if graph.kind != "pair_singleton":
        raise UnsupportedStructureError("unsupported-structure: MSD needs a pair/singleton graph")
    ledger = MessageLedger(graph)
    c = ledger.reg_c
    edges = ordered(list(range(len(graph.edges))), config.order)
    units = [[e] for e in edges]
    if config.mode == "max":
        c_par = [[1.0] for _ in edges]
        c_child = [1.0] * len(edges)
        counting = np.ones_like(c)
    else:
        c_par = [[c[graph.edges[e][0]]] for e in edges]
        c_child = [c[graph.edges[e][1]] for e in edges]
        counting = c
        if any(p[0] + q <= 0 for p, q in zip(c_par, c_child)):
            raise InvalidCountingNumbersError("edge with zero total counting number")
    return _run_star_units(ledger, units, c_par, c_child, config, model, counting, "msd",
                           callback)


def run_heskes(graph: RegionGraph, config: SolverConfig, model: DiscreteModel | None = None,
               callback: Callback | None = None) -> SolverTrace:
    """Heskes' algorithm: per intersection region, update it with all its parents.

    The intersection's new belief is the geometric combination of its parents'
    projections with exponents c_a / c_hat, c_hat = c_b + sum_a c_a; sum or
    max projections per ``config.mode``.
    """
    ledger = MessageLedger(graph)
    c = ledger.reg_c
    inters = ordered(graph.intersections(), config.order)
    units, c_par, c_child = [], [], []
    for b in inters:
        parents = graph.parents(b)
        cp = [c[graph.edges[e][0]] for e in parents]
        if c[b] + sum(cp) <= 0:
            raise InvalidCountingNumbersError(
                f"invalid-counting-numbers: c_hat = 0 for intersection region {b}")
        units.append(parents)
        c_par.append(cp)
        c_child.append(c[b])
    return _run_star_units(ledger, units, c_par, c_child, config, model, c, "heskes", callback)


def heskes_to_mplp_transform(mu, theta_ij, mode: str = "max") -> np.ndarray:
    """m_{ij->i}(x_i) = agg_{x_j} (1/2 theta_ij(x_i, x_j) + mu_{ij->S_i}(x_i, x_j)).

    ``agg`` is max in max mode and log-sum-exp in sum mode; both tables are
    indexed ``[x_i, x_j]``.
    """
    z = 0.5 * np.asarray(theta_ij, dtype=float) + np.asarray(mu, dtype=float)
    return z.max(axis=1) if mode == "max" else logsumexp(z, axis=1)


class _MPLPLayout:
    def __init__(self, model):
        self.graph = build_pair_singleton(model, 1.0, 1.0, unary="singleton")
        self.ledger = MessageLedger(self.graph)
        n_pairs = len(model.edges())
        self.n_pairs = n_pairs
        self.pairs = model.edges()
        self.pair_reg = np.arange(n_pairs, dtype=np.int64)
        self.ei = np.arange(0, 2 * n_pairs, 2, dtype=np.int64)
        self.ej = self.ei + 1
        self.si = np.array([n_pairs + i for i, _ in self.pairs], dtype=np.int64)
        self.sj = np.array([n_pairs + j for _, j in self.pairs], dtype=np.int64)
        # for every pair-table entry, the flat index of the matching singleton entries
        L = self.ledger
        n_pair_entries = int(L.reg_off[n_pairs])
        child_of_entry = L.reg_off[L.edge_child[L._edge_of_proj]] + L.proj
        first = (L._edge_of_proj % 2) == 0
        self.ent_i = np.empty(n_pair_entries, dtype=np.int64)
        self.ent_j = np.empty(n_pair_entries, dtype=np.int64)
        self.ent_i[L._parent_target[first]] = child_of_entry[first]
        self.ent_j[L._parent_target[~first]] = child_of_entry[~first]


def mplp_pair_consistency(layout: _MPLPLayout, flat, mode) -> float:
    """Gap between b_ij ~ exp((theta~_i + theta~_j + theta~_ij)/2) and b_i, b_j."""
    L = layout.ledger
    if layout.n_pairs == 0:
        return 0.0
    n_pe = len(layout.ent_i)
    u = np.full(len(flat), -np.inf)
    u[:n_pe] = 0.5 * (flat[layout.ent_i] + flat[layout.ent_j] + flat[:n_pe])
    n_reg = L.n_regions
    lb = _log_beliefs(u[:n_pe], L.reg_off[:layout.n_pairs + 1], np.ones(layout.n_pairs))
    proj = np.exp(_scatter_logproject(L, lb[L._parent_target], mode))
    if mode == "max":
        proj /= np.repeat(np.add.reduceat(proj, L.msg_off[:-1]), np.diff(L.msg_off))
    ref = np.exp(_log_beliefs(flat, L.reg_off, np.ones(n_reg))[L._child_target])
    return float(np.max(np.abs(proj - ref)))


def run_mplp(model: DiscreteModel, config: SolverConfig,
             callback: Callback | None = None) -> SolverTrace:
    """MPLP over model edges, written as a ledger on pairs and singletons.

    The ledger message on (pair ij -> singleton i) is MPLP's m_{ij->i}.
    Messages start at the transform of all-zero star messages, so the state
    always equals Heskes' algorithm on the star/edge graph and the bound
    (sum over variables of max, or log-sum-exp, of theta~_i) is that graph's
    bound.  Messages are recomputed rather than accumulated, so they are not
    renormalised.
    """
    if model.max_arity > 2:
        raise UnsupportedStructureError("unsupported-structure: MPLP needs a pairwise model")
    lay = _MPLPLayout(model)
    L = lay.ledger
    for p, (i, j) in enumerate(lay.pairs):
        t = model.pairwise(i, j)
        L.set_message(lay.ei[p], heskes_to_mplp_transform(np.zeros_like(t), t, config.mode))
        L.set_message(lay.ej[p], heskes_to_mplp_transform(np.zeros_like(t.T), t.T, config.mode))
    order = ordered(list(range(lay.n_pairs)), config.order)
    sel = np.array(order, dtype=np.int64)
    sum_mode = config.mode == "sum"
    probes = _probes(model.cardinalities, 32, config.seed)
    theta = L.theta_tilde_flat()
    theta_pair = L.theta0.copy()
    single = np.arange(lay.n_pairs, L.n_regions)
    s_off = L.reg_off[lay.n_pairs:] - L.reg_off[lay.n_pairs]
    s_c = np.full(len(single), 1.0 if sum_mode else 0.0)
    admissibility = _admissibility_check(L, model, probes)
    state = {"t": 0}

    def sweep():
        _kernels.mplp_sweep(theta, L.messages, L.reg_off, L.msg_off, lay.pair_reg[sel],
                            lay.ei[sel], lay.ej[sel], lay.si[sel], lay.sj[sel],
                            theta_pair, sum_mode)
        theta[:] = L.theta_tilde_flat()

    def diagnose():
        b = float(np.sum(_region_terms(theta[L.reg_off[lay.n_pairs]:], s_off, s_c)))
        adm = admissibility(theta)
        cons = mplp_pair_consistency(lay, theta, config.mode)
        if callback is not None:
            callback(state["t"], L)
        state["t"] += 1
        return b, adm, cons

    trace = SolverTrace("mplp", config.mode, "star_edge(c=0,1) via pair/singleton messages")
    run_loop(trace, config, sweep, diagnose)
    flat = L.theta_tilde_flat()
    trace.beliefs = [np.exp(flat[L.reg_off[r]:L.reg_off[r + 1]]
                            - logsumexp(flat[L.reg_off[r]:L.reg_off[r + 1]])) for r in single]
    if config.mode == "max":
        x, energy = decode_map(trace.beliefs, model)
        trace.assignment, trace.assignment_energy = x, energy
    return trace
