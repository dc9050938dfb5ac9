"""scikit-learn style wrappers around the solvers.

Each estimator is configured by constructor keywords (so ``get_params`` and
``set_params`` come from :class:`sklearn.base.BaseEstimator`), fitted on a
:class:`~tcbo.model.DiscreteModel`, and exposes the run through trailing
underscore attributes.  ``predict`` returns the decoded MAP assignment.
"""
from __future__ import annotations

from os import PathLike

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .exceptions import InvalidInputError
from .model import DiscreteModel, load_model
from .region_graph import (
    build_forest_decomposition,
    build_grid_chain_decomposition,
    build_pair_singleton,
    build_star_edge,
    infer_grid_shape,
)
from .solvers import SolverConfig, run_heskes, run_mplp, run_msd, run_trw_forward, run_trws


def check_model(model) -> DiscreteModel:
    """Accept a DiscreteModel or a path to a model file; reject anything else."""
    if isinstance(model, DiscreteModel):
        return model
    if isinstance(model, (str, PathLike)):
        return load_model(model)
    raise InvalidInputError(f"expected a DiscreteModel or a model path, got {type(model).__name__}")


def check_choice(name: str, value, allowed) -> None:
    if value not in allowed:
        raise InvalidInputError(f"{name} must be one of {sorted(allowed)}, got {value!r}")


class _BoundSolver(BaseEstimator):
    def __init__(self, mode="max", max_iters=1000, bound_tol=1e-8, consistency_tol=1e-6,
                 seed=0, order=None):
        self.mode = mode
        self.max_iters = max_iters
        self.bound_tol = bound_tol
        self.consistency_tol = consistency_tol
        self.seed = seed
        self.order = order

    def _config(self) -> SolverConfig:
        order = None if self.order is None else tuple(int(k) for k in self.order)
        return SolverConfig(mode=self.mode, max_iters=int(self.max_iters),
                            bound_tol=float(self.bound_tol),
                            consistency_tol=float(self.consistency_tol),
                            seed=int(self.seed), order=order)

    def _solve(self, model: DiscreteModel, config: SolverConfig):
        raise NotImplementedError

    def fit(self, X, y=None, callback=None):
        """Run the solver on model ``X``; ``y`` is ignored."""
        model = check_model(X)
        trace = self._solve(model, self._config(), callback)
        self.model_ = model
        self.trace_ = trace
        self.bound_ = trace.final_bound
        self.beliefs_ = trace.beliefs
        self.assignment_ = None if trace.assignment is None else np.asarray(trace.assignment)
        self.termination_ = trace.termination
        self.n_sweeps_ = trace.records[-1].sweep
        return self

    def predict(self, X=None):
        """Decoded MAP assignment (max mode only)."""
        check_is_fitted(self, "trace_")
        if X is not None and check_model(X) is not self.model_:
            raise InvalidInputError("predict only answers for the fitted model; call fit first")
        if self.assignment_ is None:
            raise InvalidInputError("no assignment is decoded in sum mode")
        return self.assignment_

    def score(self, X=None, y=None) -> float:
        """Negated final bound, so that higher is better (a tighter bound)."""
        check_is_fitted(self, "trace_")
        return -self.bound_


class MaxSumDiffusion(_BoundSolver):
    """Max-sum diffusion (or its sum twin) on the pair/singleton region graph."""

    def __init__(self, mode="max", c_pair=1.0, c_singleton=1.0, max_iters=1000,
                 bound_tol=1e-8, consistency_tol=1e-6, seed=0, order=None):
        super().__init__(mode, max_iters, bound_tol, consistency_tol, seed, order)
        self.c_pair = c_pair
        self.c_singleton = c_singleton

    def _solve(self, model, config, callback=None):
        graph = build_pair_singleton(model, self.c_pair, self.c_singleton)
        return run_msd(graph, config, model, callback)


class Heskes(_BoundSolver):
    """Heskes' intersection updates on a star/edge or pair/singleton graph."""

    def __init__(self, mode="max", structure="star_edge", c_pair=1.0, c_singleton=0.0,
                 max_iters=1000, bound_tol=1e-8, consistency_tol=1e-6, seed=0, order=None):
        super().__init__(mode, max_iters, bound_tol, consistency_tol, seed, order)
        self.structure = structure
        self.c_pair = c_pair
        self.c_singleton = c_singleton

    def _solve(self, model, config, callback=None):
        check_choice("structure", self.structure, {"star_edge", "pair_singleton"})
        if self.structure == "star_edge":
            graph = build_star_edge(model)
        else:
            graph = build_pair_singleton(model, self.c_pair, self.c_singleton)
        return run_heskes(graph, config, model, callback)


class MPLP(_BoundSolver):
    """MPLP edge updates (max mode, or the log-sum-exp variant in sum mode)."""

    def _solve(self, model, config, callback=None):
        return run_mplp(model, config, callback)


class TRWS(_BoundSolver):
    """Tree-reweighted message passing over chains.

    ``chains='grid'`` splits a grid model into row and column chains with
    weight 1/2 each; ``chains='tree'`` uses the model itself as a single
    forest.  ``schedule='forward_only'`` is the non-monotone baseline.
    """

    def __init__(self, mode="max", schedule="forward_backward", chains="grid", max_iters=1000,
                 bound_tol=1e-8, consistency_tol=1e-6, seed=0, order=None):
        super().__init__(mode, max_iters, bound_tol, consistency_tol, seed, order)
        self.schedule = schedule
        self.chains = chains

    def _solve(self, model, config, callback=None):
        check_choice("schedule", self.schedule, {"forward_backward", "forward_only"})
        check_choice("chains", self.chains, {"grid", "tree"})
        if self.chains == "grid":
            decomp = build_grid_chain_decomposition(model, *infer_grid_shape(model))
        else:
            decomp = build_forest_decomposition(model)
        run = run_trws if self.schedule == "forward_backward" else run_trw_forward
        return run(model, decomp, config, callback)
