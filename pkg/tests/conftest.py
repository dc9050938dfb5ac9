import itertools
import math

import numpy as np
import pytest

from tcbo.model import DiscreteModel, Factor, energy


def enumerate_exact(model):
    """Independent enumeration: (log Z, MAP value, per-variable marginals)."""
    states = list(itertools.product(*[range(k) for k in model.cardinalities]))
    vals = np.array([energy(model, x) for x in states])
    top = vals.max()
    logz = top + math.log(np.exp(vals - top).sum())
    p = np.exp(vals - logz)
    marg = [np.zeros(k) for k in model.cardinalities]
    for x, w in zip(states, p):
        for v, s in enumerate(x):
            marg[v][s] += w
    return logz, float(top), marg


def random_chain(rng, length, max_card=3, scale=2.0):
    cards = tuple(int(k) for k in rng.integers(2, max_card + 1, size=length))
    factors = [Factor((i,), scale * rng.normal(size=cards[i])) for i in range(length)]
    factors += [Factor((i, i + 1), scale * rng.normal(size=(cards[i], cards[i + 1])))
                for i in range(length - 1)]
    return DiscreteModel(cards, factors)


def single_edge(table=((0.0, 1.0), (1.0, 0.0)), unary=None):
    factors = [Factor((0, 1), np.array(table, dtype=float))]
    if unary is not None:
        factors += [Factor((0,), np.array(unary[0], dtype=float)),
                    Factor((1,), np.array(unary[1], dtype=float))]
    return DiscreteModel((2, 2), factors)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
