"""Convergent message passing on discrete graphical models.

Region-graph reparameterizations with upper bounds on the log-partition
function and on the MAP value, the solvers that decrease them, and exact
oracles for checking them on small instances.
"""
from .estimators import MPLP, TRWS, Heskes, MaxSumDiffusion, check_model
from .model import DiscreteModel, energy, gen_spin_glass, load_model, save_model
from .oracle import brute_force, tree_dp
from .region_graph import (
    RegionGraph,
    TreeDecomposition,
    build_forest_decomposition,
    build_grid_chain_decomposition,
    build_pair_singleton,
    build_star_edge,
    check_monotonic,
)
from .reparam import (
    MessageLedger,
    admissibility_residual,
    belief,
    bound_max,
    bound_sum,
    consistency_residual,
    reconstruct_theta_tilde,
    trw_bound,
)
from .solvers import (
    SolverConfig,
    SolverTrace,
    decode_map,
    heskes_to_mplp_transform,
    run_heskes,
    run_mplp,
    run_msd,
    run_trw_forward,
    run_trws,
)

__version__ = "0.1.0"
