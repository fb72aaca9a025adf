"""Perturbed action observations and seeded random streams.

Every random draw in a run comes from a PCG64 generator keyed by
``(seed, agent, purpose)`` through :class:`numpy.random.SeedSequence`
spawn keys.  A run's draws therefore depend only on its own seed, never on
what else is executing, which keeps sweeps reproducible under any worker count.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import Sequence

import numpy as np

PURPOSES = {"channel": 0, "tiebreak": 1, "xi": 2}


def substream(seed: int, agent: int, purpose: str) -> np.random.Generator:
    ss = np.random.SeedSequence(int(seed), spawn_key=(int(agent), PURPOSES[purpose]))
    return np.random.Generator(np.random.PCG64(ss))


class DegenerateChannelError(ValueError):
    """A wrong observation was requested for a player with a single action."""


@dataclass(frozen=True)
class ObservationChannel:
    eps: float
    action_counts: tuple[int, ...]

    def __post_init__(self):
        if not 0 <= self.eps <= 1:
            raise ValueError(f"eps must lie in [0, 1], got {self.eps}")
        object.__setattr__(self, "action_counts", tuple(int(n) for n in self.action_counts))
        if self.eps > 0 and min(self.action_counts) < 2:
            raise DegenerateChannelError(
                "eps > 0 needs at least two actions for every observed player")

    def perturb(self, true_joint: Sequence[int], rng: np.random.Generator) -> tuple[int, ...]:
        """Observe each component correctly w.p. 1-eps, else a uniform other action."""
        true_joint = np.asarray(true_joint, dtype=int)
        if true_joint.shape != (len(self.action_counts),):
            raise ValueError("joint action does not match the channel's players")
        counts = np.asarray(self.action_counts)
        if np.any(true_joint < 0) or np.any(true_joint >= counts):
            raise IndexError(f"action out of range: {true_joint.tolist()}")
        flip = rng.random(len(counts))
        pick = rng.random(len(counts))
        return tuple(int(a) for a in perturb_arrays(true_joint, counts, self.eps, flip, pick))

    def likelihood(self, observed: int, true: int, num_actions: int) -> float:
        return likelihood(self.eps, observed, true, num_actions)


def perturb_arrays(true, counts, eps, flip, pick):
    """Vectorised perturbation from pre-drawn uniforms.

    ``flip < eps`` selects a wrong observation; ``pick`` chooses which of the
    ``counts - 1`` other actions is reported.
    """
    true = np.asarray(true)
    counts = np.asarray(counts)
    wrong = flip < eps
    offset = 1 + np.floor(pick * np.maximum(counts - 1, 1)).astype(true.dtype)
    offset = np.minimum(offset, np.maximum(counts - 1, 1))
    return np.where(wrong, (true + offset) % counts, true)


def likelihood(eps: float, observed: int, true: int, num_actions: int) -> float:
    if num_actions < 2:
        if eps > 0:
            raise DegenerateChannelError("eps > 0 with a single action")
        return 1.0
    return 1.0 - eps if observed == true else eps / (num_actions - 1)


@lru_cache(maxsize=256)
def likelihood_matrix(eps: float, num_actions: int) -> np.ndarray:
    """``L[observed, true]``; every column sums to one.  Cached and read-only."""
    if num_actions < 2:
        if eps > 0:
            raise DegenerateChannelError("eps > 0 with a single action")
        return np.ones((1, 1))
    out = np.full((num_actions, num_actions), eps / (num_actions - 1))
    np.fill_diagonal(out, 1.0 - eps)
    out.flags.writeable = False
    return out
