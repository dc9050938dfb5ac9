import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tcbo.exceptions import NotAReparameterizationError
from tcbo.model import DiscreteModel, energy, gen_spin_glass
from tcbo.oracle import brute_force, tree_marginals, model_tree_terms
from tcbo.region_graph import (
    Region,
    RegionGraph,
    build_forest_decomposition,
    build_grid_chain_decomposition,
    build_pair_singleton,
    build_star_edge,
)
from tcbo.reparam import (
    MessageLedger,
    admissibility_residual,
    belief,
    bound_max,
    bound_sum,
    consistency_residual,
    random_probes,
    reconstruct_theta_tilde,
    trw_bound,
)
from tcbo.solvers import SolverConfig, run_msd, run_trws

from conftest import single_edge

# bound_sum of the 2x2 (seed 7) pair/singleton graph, c = 1 everywhere, zero messages
PS227_BOUND_SUM = 25.63266320171924


def all_states(model):
    return np.array(list(itertools.product(*[range(k) for k in model.cardinalities])))


def total_theta_tilde(ledger, x):
    tables = reconstruct_theta_tilde(ledger)
    return sum(t[tuple(x[list(r.scope)])] for t, r in zip(tables, ledger.graph.regions))


def randomise(ledger, seed, scale=3.0):
    ledger.messages[:] = scale * np.random.default_rng(seed).normal(size=ledger.messages.shape)


class TestReconstruct:
    def test_zero_messages_identity(self):
        g = build_pair_singleton(gen_spin_glass(2, 2, 9, 1, seed=0))
        L = MessageLedger(g)
        for t, r in zip(reconstruct_theta_tilde(L), g.regions):
            assert np.array_equal(t, r.theta0)

    def test_single_message_telescopes(self, rng):
        m = gen_spin_glass(2, 2, 9, 1, seed=0)
        g = build_pair_singleton(m)
        L = MessageLedger(g)
        a, b = g.edges[3]
        t = rng.normal(size=g.regions[b].theta0.shape)
        L.set_message(3, t)
        tables = reconstruct_theta_tilde(L)
        assert np.allclose(tables[b], g.regions[b].theta0 + t)
        proj = np.zeros_like(g.regions[a].theta0)
        axis = g.regions[a].scope.index(g.regions[b].scope[0])
        proj += np.expand_dims(t, 1 - axis)
        assert np.allclose(tables[a], g.regions[a].theta0 - proj)
        for x in rng.integers(0, 2, size=(5, 4)):
            assert total_theta_tilde(L, x) == pytest.approx(energy(m, x), abs=1e-12)

    def test_after_ten_msd_sweeps(self):
        m = gen_spin_glass(2, 2, 9, 1, seed=7)
        holder = {}
        run_msd(build_pair_singleton(m), SolverConfig(max_iters=10, bound_tol=1e-300,
                                                      consistency_tol=1e-300),
                callback=lambda t, L: holder.update(L=L))
        L = holder["L"]
        X = all_states(m)
        assert admissibility_residual(L, m, X) <= 1e-9
        assert max(abs(total_theta_tilde(L, x) - energy(m, x)) for x in X) <= 1e-9

    @settings(max_examples=40, deadline=None)
    @given(seed=st.integers(0, 100_000), star=st.booleans(), scale=st.floats(0.1, 50))
    def test_admissible_for_any_messages(self, seed, star, scale):
        m = gen_spin_glass(3, 3, 9, 1, seed=seed % 97)
        L = MessageLedger(build_star_edge(m) if star else build_pair_singleton(m))
        randomise(L, seed, scale)
        assert admissibility_residual(L, m, random_probes(m, 32, seed)) <= 1e-9

    def test_requires_a_probe(self):
        m = gen_spin_glass(2, 2, 9, 1, seed=0)
        with pytest.raises(ValueError):
            admissibility_residual(MessageLedger(build_star_edge(m)), m, np.zeros((0, 4), int))


class TestBelief:
    def test_uniform(self):
        assert np.allclose(belief([0.0, 0.0], 1.0), [0.5, 0.5])

    def test_exponentiation(self):
        assert np.allclose(belief([math.log(3), 0.0], 1.0), [0.75, 0.25], atol=1e-15)

    def test_zero_temperature(self):
        assert np.array_equal(belief([2.0, 5.0, 5.0], 0.0), [0.0, 0.5, 0.5])

    def test_negative_c(self):
        with pytest.raises(ValueError):
            belief([0.0], -1.0)

    def test_large_values_are_stable(self):
        b = belief([1000.0, 999.0], 1.0)
        assert np.all(np.isfinite(b)) and b[0] == pytest.approx(1 / (1 + math.exp(-1)))

    @settings(max_examples=50, deadline=None)
    @given(st.lists(st.integers(-3, 3), min_size=1, max_size=8))
    def test_zero_temperature_support_is_argmax(self, values):
        t = np.array(values, dtype=float)
        b = belief(t, 0.0)
        assert set(np.flatnonzero(b)) == set(np.flatnonzero(t == t.max()))
        assert b.sum() == pytest.approx(1.0)

    @pytest.mark.parametrize("c", [1e-2, 1e-4, 1e-6])
    def test_small_c_limit(self, c, rng):
        from tcbo._lse import logsumexp
        t = rng.normal(size=6)
        gap = c * logsumexp(t / c) - t.max()
        assert 0 <= gap <= c * math.log(6) + 1e-12


def single_region(theta, c):
    theta = np.asarray(theta, dtype=float)
    g = RegionGraph((Region(tuple(range(theta.ndim)), c, theta),), (), theta.shape)
    return MessageLedger(g)


class TestBounds:
    def test_sum_uniform_entropy(self):
        assert bound_sum(single_region(np.zeros(4), 1.0)) == pytest.approx(math.log(4))

    def test_sum_zero_counting_is_max(self):
        assert bound_sum(single_region([1.0, -1.0], 0.0)) == 1.0

    def test_sum_counting_scales(self):
        t = np.array([0.3, -1.2, 2.0])
        from tcbo._lse import logsumexp
        assert bound_sum(single_region(t, 2.5)) == pytest.approx(2.5 * logsumexp(t / 2.5))

    def test_sum_2x2_fixture(self):
        m = gen_spin_glass(2, 2, 9, 1, seed=7)
        b = bound_sum(MessageLedger(build_pair_singleton(m, 1.0, 1.0)))
        assert b == pytest.approx(PS227_BOUND_SUM, abs=1e-10)
        assert b > brute_force(m).log_partition

    def test_max_of_zeros(self):
        assert bound_max(single_region(np.zeros((2, 3)), 1.0)) == 0.0

    def test_max_single_edge_star_edge(self):
        m = single_edge(table=[[1.0, -2.0], [0.5, 3.0]], unary=([0.2, 0.0], [0.0, -0.4]))
        g = build_star_edge(m)
        expected = g.regions[0].theta0.max() + g.regions[1].theta0.max()
        assert bound_max(MessageLedger(g)) == pytest.approx(expected, abs=1e-15)

    def test_max_dominates_map_at_random_messages(self):
        m = gen_spin_glass(2, 2, 9, 1, seed=7)
        target = brute_force(m).map_value
        for builder in (build_pair_singleton, build_star_edge):
            L = MessageLedger(builder(m))
            for k in range(20):
                randomise(L, k)
                assert bound_max(L) > target - 1e-9

    @settings(max_examples=25, deadline=None)
    @given(seed=st.integers(0, 10_000))
    def test_sum_dominates_max(self, seed):
        m = gen_spin_glass(2, 3, 9, 1, seed=seed)
        L = MessageLedger(build_pair_singleton(m, 1.0, 0.5))
        randomise(L, seed)
        assert bound_sum(L) >= bound_max(L) - 1e-12


def loop_consistency(ledger, mode):
    """Consistency residual with explicit per-edge loops (second implementation path)."""
    g = ledger.graph
    tables = reconstruct_theta_tilde(ledger)
    c = g.counting
    beliefs = [belief(t, ci) for t, ci in zip(tables, c)]
    worst = 0.0
    for a, b in g.edges:
        sa, sb = g.regions[a].scope, g.regions[b].scope
        keep = tuple(sa.index(v) for v in sb)
        drop = tuple(k for k in range(len(sa)) if k not in keep)
        ba = np.moveaxis(beliefs[a], keep, tuple(range(len(keep))))
        axes = tuple(range(len(keep), len(sa)))
        p = ba.sum(axis=axes) if mode == "sum" else ba.max(axis=axes)
        if mode == "max":
            p = p / p.sum()
        worst = max(worst, float(np.max(np.abs(p - beliefs[b]))))
    return worst


class TestConsistency:
    @pytest.mark.parametrize("mode", ["sum", "max"])
    def test_symmetric_split_is_consistent(self, mode):
        m = single_edge(table=[[0.3, -1.0], [2.0, 0.1]])
        L = MessageLedger(build_star_edge(m))
        assert consistency_residual(L, mode) <= 1e-12

    @pytest.mark.parametrize("mode", ["sum", "max"])
    def test_one_sweep_on_two_region_graph(self, mode):
        theta = np.array([[0.5, -1.0], [2.0, 0.25]])
        g = RegionGraph((Region((0, 1), 1.0, theta), Region((0,), 1.0, np.zeros(2))),
                        ((0, 1),), (2, 2), "pair_singleton")
        holder = {}
        run_msd(g, SolverConfig(mode=mode, max_iters=1), callback=lambda t, L: holder.update(L=L))
        L = holder["L"]
        assert consistency_residual(L, mode, counting=np.ones(2)) <= 1e-9
        assert loop_consistency(L, mode) <= 1e-9

    @pytest.mark.parametrize("mode", ["sum", "max"])
    @pytest.mark.parametrize("builder", [build_pair_singleton, build_star_edge])
    def test_random_messages_match_loop_version(self, mode, builder):
        m = gen_spin_glass(2, 2, 9, 1, seed=7)
        g = builder(m) if builder is build_star_edge else builder(m, 1.0, 1.0)
        L = MessageLedger(g)
        randomise(L, 3)
        r = consistency_residual(L, mode)
        assert r > 0
        if builder is build_pair_singleton:
            assert r == pytest.approx(loop_consistency(L, mode), abs=1e-12)

    def test_zero_counting_child_uses_parent_combination(self):
        # star/edge graph: the c = 0 edge region's reference belief is the
        # geometric combination of its two parents' projections
        m = gen_spin_glass(1, 2, 9, 1, seed=2)
        L = MessageLedger(build_star_edge(m))
        randomise(L, 1)
        tables = reconstruct_theta_tilde(L)
        from tcbo._lse import logsumexp
        # stars and the edge region share a scope, so each projection is the star table
        u = (tables[2] + tables[0] + tables[1]) / 2.0
        ref = np.exp(u - logsumexp(u))
        expected = max(np.abs(belief(tables[k], 1.0) - ref).max() for k in (0, 1))
        assert consistency_residual(L, "sum") == pytest.approx(expected, abs=1e-12)

    def test_bad_mode(self):
        L = MessageLedger(build_star_edge(single_edge()))
        with pytest.raises(ValueError):
            consistency_residual(L, "min")


def exact_pair_beliefs(model):
    nodes, edges, tree = model_tree_terms(model)
    exact = brute_force(model)
    X = all_states(model)
    from tcbo.model import energies
    p = np.exp(energies(model, X) - exact.log_partition)
    pair = {}
    for i, j in tree:
        t = np.zeros((model.cardinalities[i], model.cardinalities[j]))
        np.add.at(t, (X[:, i], X[:, j]), p)
        pair[(i, j)] = t
    return exact.marginals, pair


class TestTRWBound:
    def test_uniform_beliefs_zero_model(self):
        m = DiscreteModel((2,) * 4, [((i, j), np.zeros((2, 2))) for i, j in
                                     [(0, 1), (0, 2), (1, 3), (2, 3)]])
        d = build_grid_chain_decomposition(m, 2, 2)
        nodes = [np.full(2, 0.5)] * 4
        pairs = {e: np.full((2, 2), 0.25) for e in m.edges()}
        for mode, expected in (("sum", 4 * math.log(2)), ("max", 0.0)):
            assert trw_bound(nodes, pairs, d, m, mode) == pytest.approx(expected, abs=1e-12)

    def test_exact_marginals_on_a_tree(self):
        m = gen_spin_glass(1, 2, 9, 1, seed=4)
        nodes, pairs = exact_pair_beliefs(m)
        d = build_grid_chain_decomposition(m, 1, 2)
        assert trw_bound(nodes, pairs, d, m, "sum") == pytest.approx(
            brute_force(m).log_partition, abs=1e-9)

    def test_exact_marginals_on_a_longer_chain(self):
        m = gen_spin_glass(1, 6, 9, 1, seed=8)
        nodes, pairs = exact_pair_beliefs(m)
        assert trw_bound(nodes, pairs, build_forest_decomposition(m), m, "sum") == pytest.approx(
            brute_force(m).log_partition, abs=1e-9)

    def test_not_a_reparameterization(self, rng):
        m = gen_spin_glass(2, 2, 9, 1, seed=0)
        d = build_grid_chain_decomposition(m, 2, 2)
        nodes = [rng.dirichlet(np.ones(2)) for _ in range(4)]
        pairs = {e: rng.dirichlet(np.ones(4)).reshape(2, 2) for e in m.edges()}
        with pytest.raises(NotAReparameterizationError):
            trw_bound(nodes, pairs, d, m, "sum")

    def test_converged_trws_4x4_dominates(self):
        m = gen_spin_glass(4, 4, 9, 1, seed=0)
        d = build_grid_chain_decomposition(m, 4, 4)
        holder = {}
        trace = run_trws(m, d, SolverConfig(mode="sum", max_iters=300),
                         callback=lambda t, s: holder.update(s=s))
        log_node, log_edge = holder["s"].log_beliefs()
        value = trw_bound([np.exp(v) for v in log_node],
                          {k: np.exp(v) for k, v in log_edge.items()}, d, m, "sum")
        assert value == pytest.approx(trace.final_bound, abs=1e-9)
        assert value >= brute_force(m).log_partition

    @pytest.mark.parametrize("shape", [(2, 2), (3, 3), (4, 4)])
    def test_sum_bound_dominates_log_z_every_sweep(self, shape):
        m = gen_spin_glass(*shape, 9, 1, seed=sum(shape))
        trace = run_trws(m, build_grid_chain_decomposition(m, *shape),
                         SolverConfig(mode="sum", max_iters=100))
        assert np.all(trace.bounds >= brute_force(m).log_partition - 1e-9)
