"""Compiled inner loops.  One call = one full sweep over a schedule.

The updates are inherently sequential (each one reads what the previous one
wrote), so they are written as plain loops and compiled with numba.
"""
import numpy as np
from numba import njit


@njit(cache=True)
def _project(theta, a_off, proj, p_off, p_len, nb, c, sum_mode, out):
    # out[x_b] = c * log sum_{x_a -> x_b} exp(theta_a / c)   (sum_mode, c > 0)
    #          = max_{x_a -> x_b} theta_a                      (otherwise)
    for k in range(nb):
        out[k] = -np.inf
    if sum_mode and c > 0:
        for k in range(p_len):
            v = theta[a_off + k] / c
            t = proj[p_off + k]
            if v > out[t]:
                out[t] = v
        acc = np.zeros(nb)
        for k in range(p_len):
            t = proj[p_off + k]
            acc[t] += np.exp(theta[a_off + k] / c - out[t])
        for k in range(nb):
            out[k] = c * (out[k] + np.log(acc[k]))
    else:
        for k in range(p_len):
            v = theta[a_off + k]
            t = proj[p_off + k]
            if v > out[t]:
                out[t] = v


@njit(cache=True)
def ledger_sweep(theta, msgs, reg_off, msg_off, proj, proj_off, edge_parent, edge_child,
                 unit_ptr, unit_edges, unit_cpar, unit_cchild, sum_mode):
    """Star updates: for each unit, make every listed parent consistent with the child.

    With parent weights c_a and child weight c_b, the child's new potential is
    c_b * u and each parent's projection becomes c_a * u, where
    u = (theta_b + sum_a phi_a) / (c_b + sum_a c_a).
    """
    n_units = len(unit_ptr) - 1
    for u_i in range(n_units):
        lo = unit_ptr[u_i]
        hi = unit_ptr[u_i + 1]
        b = edge_child[unit_edges[lo]]
        b_off = reg_off[b]
        nb = reg_off[b + 1] - b_off
        c_b = unit_cchild[u_i]
        chat = c_b
        phis = np.empty((hi - lo, nb))
        for s in range(lo, hi):
            e = unit_edges[s]
            a = edge_parent[e]
            _project(theta, reg_off[a], proj, proj_off[e], proj_off[e + 1] - proj_off[e],
                     nb, unit_cpar[s], sum_mode, phis[s - lo])
            chat += unit_cpar[s]
        u = np.empty(nb)
        for k in range(nb):
            acc = theta[b_off + k]
            for s in range(hi - lo):
                acc += phis[s, k]
            u[k] = acc / chat
        for s in range(lo, hi):
            e = unit_edges[s]
            a = edge_parent[e]
            m_off = msg_off[e]
            ca = unit_cpar[s]
            top = -np.inf
            for k in range(nb):
                v = msgs[m_off + k] + phis[s - lo, k] - ca * u[k]
                if v > top:
                    top = v
            delta = np.empty(nb)
            for k in range(nb):
                newm = msgs[m_off + k] + phis[s - lo, k] - ca * u[k] - top
                delta[k] = newm - msgs[m_off + k]
                msgs[m_off + k] = newm
                theta[b_off + k] += delta[k]
            a_off = reg_off[a]
            p_off = proj_off[e]
            for k in range(proj_off[e + 1] - p_off):
                theta[a_off + k] -= delta[proj[p_off + k]]


@njit(cache=True)
def mplp_sweep(theta, msgs, reg_off, msg_off, pair_reg, pair_ei, pair_ej, single_i, single_j,
               theta_pair, sum_mode):
    """MPLP edge updates on a pair/singleton ledger whose pairs hold theta_ij.

    m_{ij->i}(x_i) <- -1/2 lam_i(x_i) + agg_{x_j} 1/2 (theta_ij + lam_j(x_j)),
    lam_i = theta~_i - m_{ij->i}; agg is max or log-sum-exp.
    """
    for p_i in range(len(pair_reg)):
        p = pair_reg[p_i]
        ei = pair_ei[p_i]
        ej = pair_ej[p_i]
        ri = single_i[p_i]
        rj = single_j[p_i]
        ni = reg_off[ri + 1] - reg_off[ri]
        nj = reg_off[rj + 1] - reg_off[rj]
        lam_i = np.empty(ni)
        lam_j = np.empty(nj)
        for a in range(ni):
            lam_i[a] = theta[reg_off[ri] + a] - msgs[msg_off[ei] + a]
        for b in range(nj):
            lam_j[b] = theta[reg_off[rj] + b] - msgs[msg_off[ej] + b]
        t_off = reg_off[p]
        new_i = np.empty(ni)
        new_j = np.empty(nj)
        for a in range(ni):
            top = -np.inf
            for b in range(nj):
                v = 0.5 * (theta_pair[t_off + a * nj + b] + lam_j[b])
                if v > top:
                    top = v
            if sum_mode:
                acc = 0.0
                for b in range(nj):
                    acc += np.exp(0.5 * (theta_pair[t_off + a * nj + b] + lam_j[b]) - top)
                top += np.log(acc)
            new_i[a] = -0.5 * lam_i[a] + top
        for b in range(nj):
            top = -np.inf
            for a in range(ni):
                v = 0.5 * (theta_pair[t_off + a * nj + b] + lam_i[a])
                if v > top:
                    top = v
            if sum_mode:
                acc = 0.0
                for a in range(ni):
                    acc += np.exp(0.5 * (theta_pair[t_off + a * nj + b] + lam_i[a]) - top)
                top += np.log(acc)
            new_j[b] = -0.5 * lam_j[b] + top
        for a in range(ni):
            d = new_i[a] - msgs[msg_off[ei] + a]
            msgs[msg_off[ei] + a] = new_i[a]
            theta[reg_off[ri] + a] += d
            for b in range(nj):
                theta[t_off + a * nj + b] -= d
        for b in range(nj):
            d = new_j[b] - msgs[msg_off[ej] + b]
            msgs[msg_off[ej] + b] = new_j[b]
            theta[reg_off[rj] + b] += d
            for a in range(ni):
                theta[t_off + a * nj + b] -= d


@njit(cache=True)
def _trw_update(i, slot, node_off, card, theta_node, eu, edge_off, theta_edge, rho,
                adj_ptr, adj_nbr, adj_edge, adj_out, adj_in, msg_off, msgs, sum_mode):
    """Recompute message i -> adj_nbr[slot]; returns the L-inf change."""
    j = adj_nbr[slot]
    e = adj_edge[slot]
    ni = card[i]
    nj = card[j]
    h = np.empty(ni)
    back = msg_off[adj_in[slot]]
    for a in range(ni):
        h[a] = theta_node[node_off[i] + a] - msgs[back + a]
    for s in range(adj_ptr[i], adj_ptr[i + 1]):
        m = msg_off[adj_in[s]]
        r = rho[adj_edge[s]]
        for a in range(ni):
            h[a] += r * msgs[m + a]
    inv = 1.0 / rho[e]
    i_first = eu[e] == i
    t_off = edge_off[e]
    out = np.empty(nj)
    for b in range(nj):
        top = -np.inf
        for a in range(ni):
            t = theta_edge[t_off + a * nj + b] if i_first else theta_edge[t_off + b * ni + a]
            v = h[a] + t * inv
            if v > top:
                top = v
        if sum_mode:
            acc = 0.0
            for a in range(ni):
                t = theta_edge[t_off + a * nj + b] if i_first else theta_edge[t_off + b * ni + a]
                acc += np.exp(h[a] + t * inv - top)
            top += np.log(acc)
        out[b] = top
    top = out.max()
    m = msg_off[adj_out[slot]]
    change = 0.0
    for b in range(nj):
        v = out[b] - top
        d = abs(v - msgs[m + b])
        if d > change:
            change = d
        msgs[m + b] = v
    return change


@njit(cache=True)
def trw_sweep(order, pos, forward_only, node_off, card, theta_node, eu, edge_off, theta_edge,
              rho, adj_ptr, adj_nbr, adj_edge, adj_out, adj_in, msg_off, msgs, sum_mode):
    """One TRW sweep; returns the largest message change.

    forward_backward: forward scan sends only to later nodes, backward scan
    only to earlier ones.  forward_only: one forward scan, all outgoing.
    """
    change = 0.0
    n = len(order)
    for k in range(n):
        i = order[k]
        for s in range(adj_ptr[i], adj_ptr[i + 1]):
            if forward_only or pos[adj_nbr[s]] > pos[i]:
                c = _trw_update(i, s, node_off, card, theta_node, eu, edge_off, theta_edge, rho,
                                adj_ptr, adj_nbr, adj_edge, adj_out, adj_in, msg_off, msgs,
                                sum_mode)
                change = max(change, c)
    if not forward_only:
        for k in range(n - 1, -1, -1):
            i = order[k]
            for s in range(adj_ptr[i], adj_ptr[i + 1]):
                if pos[adj_nbr[s]] < pos[i]:
                    c = _trw_update(i, s, node_off, card, theta_node, eu, edge_off, theta_edge,
                                    rho, adj_ptr, adj_nbr, adj_edge, adj_out, adj_in, msg_off,
                                    msgs, sum_mode)
                    change = max(change, c)
    return change


@njit(cache=True)
def _normalise_log(v, lo, hi):
    top = -np.inf
    for k in range(lo, hi):
        if v[k] > top:
            top = v[k]
    acc = 0.0
    for k in range(lo, hi):
        acc += np.exp(v[k] - top)
    z = top + np.log(acc)
    for k in range(lo, hi):
        v[k] -= z


@njit(cache=True)
def trw_log_beliefs(theta_node, node_off, card, eu, ev, edge_off, theta_edge, rho, msg_off, msgs,
                    log_node, log_edge):
    """Normalised log node beliefs and log edge beliefs (edge e laid out [x_i, x_j])."""
    n = len(card)
    S = theta_node.copy()
    for e in range(len(eu)):
        i = eu[e]
        j = ev[e]
        for b in range(card[j]):
            S[node_off[j] + b] += rho[e] * msgs[msg_off[2 * e] + b]
        for a in range(card[i]):
            S[node_off[i] + a] += rho[e] * msgs[msg_off[2 * e + 1] + a]
    for e in range(len(eu)):
        i = eu[e]
        j = ev[e]
        ni = card[i]
        nj = card[j]
        inv = 1.0 / rho[e]
        for a in range(ni):
            hi = S[node_off[i] + a] - msgs[msg_off[2 * e + 1] + a]
            for b in range(nj):
                hj = S[node_off[j] + b] - msgs[msg_off[2 * e] + b]
                log_edge[edge_off[e] + a * nj + b] = hi + hj + theta_edge[edge_off[e] + a * nj + b] * inv
        _normalise_log(log_edge, edge_off[e], edge_off[e + 1])
    for k in range(len(S)):
        log_node[k] = S[k]
    for v in range(n):
        _normalise_log(log_node, node_off[v], node_off[v + 1])


@njit(cache=True)
def trw_consistency(log_node, log_edge, node_off, card, eu, ev, edge_off, sum_mode):
    """Largest gap between a projected edge belief and the node belief."""
    worst = 0.0
    for e in range(len(eu)):
        i = eu[e]
        j = ev[e]
        ni = card[i]
        nj = card[j]
        for side in range(2):
            n_out = ni if side == 0 else nj
            n_in = nj if side == 0 else ni
            v = i if side == 0 else j
            p = np.zeros(n_out)
            for a in range(n_out):
                for b in range(n_in):
                    k = a * nj + b if side == 0 else b * nj + a
                    w = np.exp(log_edge[edge_off[e] + k])
                    if sum_mode:
                        p[a] += w
                    elif w > p[a]:
                        p[a] = w
            z = p.sum()
            for a in range(n_out):
                d = abs(p[a] / z - np.exp(log_node[node_off[v] + a]))
                if d > worst:
                    worst = d
    return worst


@njit(cache=True)
def forest_value(node_pot, node_off, card, edge_pot, edge_off, eu, seq_v, seq_p, seq_e,
                 sum_mode):
    """Log-partition or max of a forest given in BFS order (seq_p = -1 at roots).

    Edge potentials are laid out [x_i, x_j] with i = eu[e].
    """
    h = node_pot.copy()
    total = 0.0
    for k in range(len(seq_v) - 1, -1, -1):
        v = seq_v[k]
        p = seq_p[k]
        nv = card[v]
        if p < 0:
            top = -np.inf
            for a in range(nv):
                if h[node_off[v] + a] > top:
                    top = h[node_off[v] + a]
            if sum_mode:
                acc = 0.0
                for a in range(nv):
                    acc += np.exp(h[node_off[v] + a] - top)
                top += np.log(acc)
            total += top
            continue
        e = seq_e[k]
        npar = card[p]
        v_first = eu[e] == v
        for b in range(npar):
            top = -np.inf
            for a in range(nv):
                t = edge_pot[edge_off[e] + a * npar + b] if v_first else edge_pot[edge_off[e] + b * nv + a]
                s = h[node_off[v] + a] + t
                if s > top:
                    top = s
            if sum_mode:
                acc = 0.0
                for a in range(nv):
                    t = edge_pot[edge_off[e] + a * npar + b] if v_first else edge_pot[edge_off[e] + b * nv + a]
                    acc += np.exp(h[node_off[v] + a] + t - top)
                top += np.log(acc)
            h[node_off[p] + b] += top
    return total
