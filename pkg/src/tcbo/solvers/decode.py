"""Decoding a MAP assignment from per-variable beliefs."""
from __future__ import annotations

from typing import NamedTuple, Sequence

import numpy as np

from ..model import DiscreteModel, energy


class Decoded(NamedTuple):
    assignment: tuple[int, ...]
    energy: float | None


def decode_map(beliefs: Sequence, model: DiscreteModel | None = None) -> Decoded:
    """Per-variable argmax; ties go to the lowest state (``np.argmax`` semantics)."""
    x = tuple(int(np.argmax(np.asarray(b))) for b in beliefs)
    return Decoded(x, energy(model, x) if model is not None else None)
