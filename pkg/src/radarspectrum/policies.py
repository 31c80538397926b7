"""Baseline subband-selection policies: random and modified myopic."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


def random_policy(n_subbands: int, rng: np.random.Generator) -> int:
    """Uniform draw over [0, M)."""
    if n_subbands < 1:
        raise ValueError("need at least one subband")
    return int(rng.integers(0, n_subbands))


@dataclass
class MyopicState:
    last_subband: int = 0


def myopic_policy(state: MyopicState, eta: float, eta0: float, n_subbands: int,
                  rng: np.random.Generator, exclude_current: bool = False):
    """Keep the subband on success, re-draw at random on failure.

    The re-draw includes the current subband by default; set
    ``exclude_current=True`` to force a switch (only meaningful for M >= 2).
    Returns (subband, state).
    """
    if n_subbands < 1:
        raise ValueError("need at least one subband")
    if eta < eta0:
        return state.last_subband, state
    if exclude_current and n_subbands > 1:
        choices = [u for u in range(n_subbands) if u != state.last_subband]
        new = int(choices[rng.integers(0, len(choices))])
    else:
        new = int(rng.integers(0, n_subbands))
    state.last_subband = new
    return new, state
