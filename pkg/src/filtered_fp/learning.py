"""Fictitious-play learners under perturbed action observations.

GWFP and filtered fictitious play differ only in the filter applied to each
observation before the belief step: the identity filter steps toward a point
mass on what was seen, the Bayes filter steps toward the posterior over what
was actually played given a model of the channel noise.

Runs are simulated in batches over seeds.  All per-seed arithmetic is
elementwise, so a seed's trajectory is bit-identical whether it runs alone or
alongside others.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .channel import likelihood_matrix, perturb_arrays, substream
from .games import TOL, NormalFormGame, check_strategy, is_nash, pure_nash

BELIEF_FLOOR = 1e-6


@dataclass(frozen=True)
class StepSchedule:
    """Step sizes ``(c + t) ** -rho``."""

    c: float = 0.0
    rho: float = 1.0

    def __post_init__(self):
        if self.c < 0:
            raise ValueError("c must be nonnegative")
        if not 0 < self.rho <= 1:
            raise ValueError("rho must lie in (0, 1]")

    def step(self, t: float) -> float:
        if self.c + t <= 0:
            raise ValueError(f"step size undefined at t={t} with c={self.c}")
        return float((self.c + t) ** -self.rho)

    @classmethod
    def parse(cls, text: str) -> "StepSchedule":
        c, rho = (float(x) for x in text.split(","))
        return cls(c, rho)


CLASSICAL = StepSchedule(0.0, 1.0)
# Heavier weight on recent filtered observations; the Bayes filter's fixed
# point is approached far faster than under 1/t.
BOOSTED = StepSchedule(0.0, 0.6)


def step_size(schedule: StepSchedule, t: int) -> float:
    return schedule.step(t)


@dataclass(frozen=True)
class FilterSpec:
    kind: str = "bayes"
    assumed_eps: float = 0.0

    def __post_init__(self):
        if self.kind not in ("identity", "bayes"):
            raise ValueError(f"unknown filter kind {self.kind!r}")
        if not 0 <= self.assumed_eps <= 1:
            raise ValueError("assumed_eps must lie in [0, 1]")


IDENTITY = FilterSpec("identity")


class FilterDegenerateError(ArithmeticError):
    """The observation has zero probability under the prior."""


def filter_posterior(filt: FilterSpec, prior, observed: int, num_actions: int) -> np.ndarray:
    prior = check_strategy(prior, num_actions)
    if not 0 <= observed < num_actions:
        raise IndexError(f"observed action {observed} out of range")
    if filt.kind == "identity":
        out = np.zeros(num_actions)
        out[observed] = 1.0
        return out
    weights = likelihood_matrix(filt.assumed_eps, num_actions)[observed] * prior
    total = weights.sum()
    if total <= 0:
        raise FilterDegenerateError(
            f"observation {observed} impossible under prior {prior}")
    return weights / total


def _posterior_rows(filt: FilterSpec, prior: np.ndarray, observed: np.ndarray) -> np.ndarray:
    """Row-wise posterior for a stack of priors ``(B, A)`` and observations ``(B,)``."""
    n = prior.shape[-1]
    if filt.kind == "identity":
        return np.eye(n)[observed]
    weights = likelihood_matrix(filt.assumed_eps, n)[observed] * prior
    total = weights.sum(axis=-1, keepdims=True)
    if np.any(total <= 0):
        raise FilterDegenerateError("observation impossible under prior")
    return weights / total


def apply_floor(beliefs: np.ndarray, floor: float = BELIEF_FLOOR) -> np.ndarray:
    beliefs = np.maximum(beliefs, floor)
    return beliefs / beliefs.sum(axis=-1, keepdims=True)


@dataclass(frozen=True)
class LearnerState:
    """One agent's beliefs about every other agent; ``beliefs[self]`` is None."""

    beliefs: tuple
    t: int = 0

    @classmethod
    def uniform(cls, action_counts: Sequence[int], agent: int) -> "LearnerState":
        return cls(tuple(None if j == agent else np.full(n, 1.0 / n)
                         for j, n in enumerate(action_counts)))


def belief_update(state: LearnerState, observed_joint: Sequence[int], filt: FilterSpec,
                  schedule: StepSchedule, alpha: Optional[float] = None) -> LearnerState:
    """Move each opponent belief toward the filtered posterior of its observed action.

    ``alpha`` overrides the schedule's step size for this update.
    """
    if alpha is None:
        alpha = schedule.step(state.t + 1)
    new = []
    for belief, obs in zip(state.beliefs, observed_joint):
        if belief is None:
            new.append(None)
            continue
        post = filter_posterior(filt, belief, int(obs), len(belief))
        new.append(apply_floor((1 - alpha) * belief + alpha * post))
    return LearnerState(tuple(new), state.t + 1)


@dataclass(frozen=True)
class Verdict:
    kind: str  # "pure" | "mixed" | "none"
    joint: Optional[tuple[int, ...]] = None
    profile: Optional[tuple[np.ndarray, ...]] = None

    @property
    def converged(self) -> bool:
        return self.kind != "none"

    def label(self, game: Optional[NormalFormGame] = None) -> str:
        if self.kind == "pure":
            return game.label(self.joint) if game is not None else "-".join(map(str, self.joint))
        if self.kind == "mixed":
            return "mixed:" + "|".join(
                ",".join(f"{p:.3f}" for p in s) for s in self.profile)
        return "none"


@dataclass
class RunTrace:
    seed: int
    true_actions: np.ndarray          # (T, N)
    observed: np.ndarray              # (T, N, N); [t, i, j] is i's view of j
    snapshot_t: np.ndarray            # (K,)
    snapshots: dict                   # (i, j) -> (K, A_j)
    final_beliefs: dict               # (i, j) -> (A_j,)
    verdict: Optional[Verdict] = None

    @property
    def iterations(self) -> int:
        return len(self.true_actions)


def default_window(iterations: int) -> int:
    return max(1, min(1000, iterations // 10))


def run_fp(game: NormalFormGame, true_eps: float, filt: FilterSpec,
           schedule: StepSchedule = CLASSICAL, iterations: int = 10_000, seed: int = 0,
           snapshot_stride: int = 100, initial_beliefs: Optional[dict] = None,
           window: Optional[int] = None, tol: float = 0.05) -> RunTrace:
    return run_fp_batch(game, true_eps, filt, schedule, iterations, [seed],
                        snapshot_stride, initial_beliefs, window, tol)[0]


def run_fp_batch(game: NormalFormGame, true_eps: float, filt: FilterSpec,
                 schedule: StepSchedule, iterations: int, seeds: Sequence[int],
                 snapshot_stride: int = 100, initial_beliefs: Optional[dict] = None,
                 window: Optional[int] = None, tol: float = 0.05) -> list[RunTrace]:
    """Simulate repeated play for several seeds at once.

    Each iteration every agent best-responds to its beliefs (uniform draw among
    tied actions), each observer sees every other agent's action through the
    perturbation channel, and beliefs step toward the filtered observation.
    """
    if iterations < 1:
        raise ValueError("iterations must be >= 1")
    if snapshot_stride < 1:
        raise ValueError("snapshot_stride must be >= 1")
    n = game.num_players
    counts = np.array(game.action_counts)
    if true_eps > 0 and counts.min() < 2:
        raise ValueError("eps > 0 needs at least two actions per player")
    seeds = [int(s) for s in seeds]
    b = len(seeds)

    # pre-drawn randomness, one substream per (seed, agent, purpose)
    tie_u = np.empty((iterations, b, n))
    flip = np.empty((iterations, b, n, n))
    pick = np.empty((iterations, b, n, n))
    for k, s in enumerate(seeds):
        for i in range(n):
            tie_u[:, k, i] = substream(s, i, "tiebreak").random(iterations)
            ch = substream(s, i, "channel")
            flip[:, k, i, :] = ch.random((iterations, n))
            pick[:, k, i, :] = ch.random((iterations, n))

    beliefs = {}
    for i in range(n):
        for j in range(n):
            if i == j:
                continue
            start = np.full(counts[j], 1.0 / counts[j])
            if initial_beliefs is not None and (i, j) in initial_beliefs:
                start = check_strategy(initial_beliefs[(i, j)], counts[j])
            beliefs[i, j] = np.tile(start, (b, 1))

    # payoff tensors with a leading batch axis, player's own axis kept
    payoffs = [game.payoffs[i][None] for i in range(n)]

    true_hist = np.empty((iterations, b, n), dtype=np.int16)
    obs_hist = np.empty((iterations, b, n, n), dtype=np.int16)
    snap_t = []
    snaps = {key: [] for key in beliefs}

    for t in range(1, iterations + 1):
        actions = np.empty((b, n), dtype=np.int64)
        for i in range(n):
            values = payoffs[i]
            for j in reversed(range(n)):
                if j == i:
                    continue
                shape = [b] + [1] * n
                shape[j + 1] = counts[j]
                values = (values * beliefs[i, j].reshape(shape)).sum(axis=j + 1)
            values = np.broadcast_to(values, (b, counts[i]))
            ties = values >= values.max(axis=1, keepdims=True) - TOL
            k = np.floor(tie_u[t - 1, :, i] * ties.sum(axis=1)).astype(np.int64)
            actions[:, i] = np.argmax(ties & (np.cumsum(ties, axis=1) == (k + 1)[:, None]),
                                      axis=1)
        true_hist[t - 1] = actions

        alpha = schedule.step(t)
        for i in range(n):
            seen = perturb_arrays(actions, counts, true_eps, flip[t - 1, :, i], pick[t - 1, :, i])
            seen[:, i] = actions[:, i]
            obs_hist[t - 1, :, i] = seen
            for j in range(n):
                if j == i:
                    continue
                post = _posterior_rows(filt, beliefs[i, j], seen[:, j])
                beliefs[i, j] = apply_floor((1 - alpha) * beliefs[i, j] + alpha * post)

        if t % snapshot_stride == 0 or t == iterations:
            snap_t.append(t)
            for key in beliefs:
                snaps[key].append(beliefs[key].copy())

    traces = []
    snap_t = np.array(snap_t)
    for k, s in enumerate(seeds):
        trace = RunTrace(
            seed=s,
            true_actions=true_hist[:, k].copy(),
            observed=obs_hist[:, k].copy(),
            snapshot_t=snap_t,
            snapshots={key: np.array([v[k] for v in vals]) for key, vals in snaps.items()},
            final_beliefs={key: beliefs[key][k].copy() for key in beliefs},
        )
        w = window if window is not None else default_window(iterations)
        trace.verdict = detect_convergence(trace, w, tol, game)
        traces.append(trace)
    return traces


def belief_profile(trace: RunTrace, num_players: int) -> tuple[np.ndarray, ...]:
    """Each player's strategy as estimated by the others (averaged over observers)."""
    profile = []
    for j in range(num_players):
        views = [v for (i, jj), v in trace.final_beliefs.items() if jj == j]
        profile.append(np.mean(views, axis=0))
    return tuple(profile)


def detect_convergence(trace: RunTrace, window: int, tol: float,
                       game: NormalFormGame) -> Verdict:
    """Pure verdict if one pure NE takes >= 1 - tol of the final window's play,
    mixed verdict if the final belief profile is a tol-Nash profile."""
    if not 1 <= window <= trace.iterations:
        raise ValueError("window must lie in [1, iterations]")
    tail = trace.true_actions[-window:]
    joints, freq = np.unique(tail, axis=0, return_counts=True)
    best = int(np.argmax(freq))
    top = tuple(int(a) for a in joints[best])
    if freq[best] >= (1 - tol) * window and top in {e.actions for e in pure_nash(game)}:
        return Verdict("pure", joint=top)
    profile = belief_profile(trace, game.num_players)
    if is_nash(game, profile, tol=tol):
        return Verdict("mixed", profile=profile)
    return Verdict("none")


def precision_estimate(trace: RunTrace, agent: int, opponent: int) -> float:
    """L-inf gap between the opponent's true play frequency and the agent's belief."""
    belief = trace.final_beliefs[agent, opponent]
    played = np.bincount(trace.true_actions[:, opponent], minlength=len(belief))
    return float(np.abs(played / played.sum() - belief).max())


def write_trace_csv(trace: RunTrace, path) -> None:
    with open(path, "w", newline="") as fh:
        out = csv.writer(fh, lineterminator="\n")
        out.writerow(["t", "agent", "opponent", "action", "belief"])
        for k, t in enumerate(trace.snapshot_t):
            for (i, j), snaps in sorted(trace.snapshots.items()):
                for a, p in enumerate(snaps[k]):
                    out.writerow([int(t), i, j, a, repr(float(p))])
