"""Online lookahead planning on filtered fictitious-play beliefs.

Each agent keeps a distribution over the current state and, for every state,
beliefs over what the others play there.  Actions come from a depth-limited
expectimax over the known transition table.  Every non-root node is valued
either by its expected value under current beliefs or, with a probability that
decays like ``t ** -0.5``, optimistically (the others assumed to pick the joint
action that is best for this agent).

Beliefs about what the others play in state ``s`` are running averages
over the (responsibility-weighted) visits to ``s``, so rarely seen states are
not frozen by the first observation made there.

Depth counts remaining levels: leaves sit at ``d = 0`` and score myopic
reward; the root is evaluated at ``d = depth - 1``, so ``depth = 1`` is a
myopic best response.  Node values are memoised per ``(d, state)`` within one
planning call by evaluating every state of a level at once.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from .channel import perturb_arrays, substream
from .games import TOL
from .learning import CLASSICAL, FilterSpec, StepSchedule, _posterior_rows
from .posg import (POSG, PlayerView, per_state_belief_update, point_belief,
                   state_belief_update, uniform_state_beliefs)


@dataclass(frozen=True)
class LFFPConfig:
    depth: int = 4
    xi0: float = 1.0
    filter: FilterSpec = field(default_factory=FilterSpec)
    schedule: StepSchedule = CLASSICAL
    state_mode: str = "distribution"
    learn: bool = True
    clock: str = "state"

    def __post_init__(self):
        if self.depth < 1:
            raise ValueError("depth must be >= 1")
        if self.xi0 < 0:
            raise ValueError("xi0 must be nonnegative")
        if self.state_mode not in ("distribution", "point"):
            raise ValueError("state_mode must be 'distribution' or 'point'")
        if self.clock not in ("state", "global"):
            raise ValueError("clock must be 'state' or 'global'")


def xi_schedule(xi0: float, t: int) -> float:
    if t < 1:
        raise ValueError("t must be >= 1")
    return min(1.0, xi0 / np.sqrt(t))


def _backup(view: PlayerView, gamma: float, child: Optional[np.ndarray]) -> np.ndarray:
    """``Q[s, a_i, m]``: reward plus discounted child value, for every state."""
    if child is None:
        return view.rewards
    return view.rewards + gamma * child[view.next_state]


def v_star(posg: POSG, player: int, d: int, state: int, beliefs: dict,
           child_values: Optional[np.ndarray] = None, view: Optional[PlayerView] = None) -> float:
    """Best own action's expected value at ``state`` under per-state beliefs."""
    view = view or PlayerView(posg, player)
    probs = view.joint_others(beliefs)[state]
    q = view.rewards[state]
    if d > 0:
        q = q + posg.gamma * np.asarray(child_values)[view.next_state[state]]
    return float((q * probs).sum(axis=1).max())


def v_opt(posg: POSG, player: int, d: int, state: int,
          child_values: Optional[np.ndarray] = None, view: Optional[PlayerView] = None) -> float:
    """Best value at ``state`` if the others pick the joint action best for ``player``."""
    view = view or PlayerView(posg, player)
    q = view.rewards[state]
    if d > 0:
        q = q + posg.gamma * np.asarray(child_values)[view.next_state[state]]
    return float(q.max())


@dataclass
class Plan:
    action: int
    root_values: np.ndarray        # (A_i,) value of each own action at the root
    optimistic: np.ndarray         # (depth - 1, S) which non-root nodes used the optimistic value
    level_values: list             # V(d, .) for d = 0 .. depth - 2


def plan(view: PlayerView, tracking: np.ndarray, beliefs: dict, config: LFFPConfig,
         t: int, rng: np.random.Generator, probs: Optional[np.ndarray] = None) -> Plan:
    posg = view.posg
    gamma = posg.gamma
    if probs is None:
        probs = view.joint_others(beliefs)
    xi = xi_schedule(config.xi0, t)
    levels = config.depth - 1
    num_states = posg.num_states
    optimistic = (rng.random((levels, num_states)) < xi if xi > 0
                  else np.zeros((levels, num_states), dtype=bool))

    child = None
    level_values = []
    for d in range(levels):
        q = _backup(view, gamma, child)
        child = np.einsum("sam,sm->sa", q, probs).max(axis=1)
        flagged = np.flatnonzero(optimistic[d])
        if flagged.size:
            child[flagged] = q[flagged].reshape(flagged.size, -1).max(axis=1)
        level_values.append(child)

    tracking = np.asarray(tracking, dtype=float)
    if config.state_mode == "point":
        states = np.array([int(np.argmax(tracking))])
        weights = np.ones(1)
    else:
        states = np.flatnonzero(tracking > 0)
        weights = tracking[states]
    q = view.rewards[states]
    if child is not None:
        q = q + gamma * child[view.next_state[states]]
    per_state = np.einsum("sam,sm->sa", q, probs[states])
    root = weights @ per_state
    ties = np.flatnonzero(root >= root.max() - TOL)
    action = int(ties[0] if len(ties) == 1 else ties[rng.integers(len(ties))])
    return Plan(action, root, optimistic, level_values)


def select_action(posg: POSG, player: int, tracking, beliefs: dict, config: LFFPConfig,
                  t: int, rng: np.random.Generator, view: Optional[PlayerView] = None) -> int:
    view = view or PlayerView(posg, player)
    return plan(view, tracking, beliefs, config, t, rng).action


@dataclass
class LFFPTrace:
    episode_rewards: np.ndarray     # (E,) undiscounted team reward per episode
    steps_elapsed: np.ndarray       # (E,) global step count at each episode's end
    tracking_resets: np.ndarray     # (N,) times each agent's state evidence was contradictory
    optimistic_nodes: np.ndarray    # (N,) non-root nodes valued optimistically
    total_nodes: np.ndarray         # (N,)
    tracking_hits: np.ndarray       # (N,) steps whose tracked mode equalled the true state
    seed: int = 0

    def final_quartile_mean(self) -> float:
        e = len(self.episode_rewards)
        return float(self.episode_rewards[e - max(1, e // 4):].mean())


def _step_sizes(config: LFFPConfig, agent, responsibility: np.ndarray, t: int):
    """Per-state step sizes for the belief update that follows step ``t``.

    With the ``state`` clock each state keeps its own responsibility-weighted
    visit count ``n_s`` and steps by ``(c + n_s) ** -rho`` (capped at one), so
    ``sigma^s`` is a running average of what was seen in ``s``.  The
    ``global`` clock uses ``(c + t) ** -rho`` everywhere.
    """
    sched = config.schedule
    if config.clock == "global":
        return sched.step(t)
    agent.visits += responsibility
    live = responsibility > 0
    out = np.zeros_like(agent.visits)
    out[live] = np.minimum(1.0, (sched.c + agent.visits[live]) ** -sched.rho)
    return out


class _Agent:
    def __init__(self, posg, player, config, seed):
        self.view = PlayerView(posg, player)
        self.player = player
        self.config = config
        self.beliefs = uniform_state_beliefs(posg, player)
        self.tracking = point_belief(posg, posg.initial_state)
        self.visits = np.zeros(posg.num_states)
        self.rng = substream(seed, player, "xi")
        self.resets = 0
        self.optimistic = 0
        self.nodes = 0


def terminal_states(posg: POSG) -> np.ndarray:
    """States that loop to themselves under every joint action and pay nothing."""
    s = posg.num_states
    loops = (posg.transition.reshape(s, -1) == np.arange(s)[:, None]).all(axis=1)
    idle = (posg.payoffs.reshape(s, -1) == 0).all(axis=1)
    return loops & idle


def run_lffp(posg: POSG, true_eps: float, config: LFFPConfig, total_steps: int,
             episode_horizon: int, seed: int = 0, end_on_terminal: bool = True) -> LFFPTrace:
    """Learn online over repeated episodes that restart from the initial state.

    Every agent plans with :func:`plan`, the joint action moves the true
    state, and each agent then sees the others' actions through the noisy
    channel plus its local signal.  The filtered posterior over each
    opponent's action drives both state tracking and the per-state belief
    step.  The global step counter anneals optimism; step sizes follow
    ``config.clock`` (see :func:`_step_sizes`).

    An episode lasts ``episode_horizon`` steps, or less when
    ``end_on_terminal`` is set and the true state becomes terminal (see
    :func:`terminal_states`).  Episodes repeat until ``total_steps`` steps
    have been played; a final episode cut short by the budget is dropped.
    """
    if total_steps < 1 or episode_horizon < 1:
        raise ValueError("total_steps and episode_horizon must be >= 1")
    n = posg.num_players
    counts = np.array(posg.action_counts)
    if true_eps > 0 and counts.min() < 2:
        raise ValueError("eps > 0 needs at least two actions per player")
    agents = [_Agent(posg, i, config, seed) for i in range(n)]
    channels = [substream(seed, i, "channel") for i in range(n)]
    terminal = terminal_states(posg) if end_on_terminal else np.zeros(posg.num_states, bool)
    if terminal[posg.initial_state]:
        raise ValueError("the initial state is terminal; nothing to learn")
    rewards, elapsed = [], []
    hits = np.zeros(n, dtype=np.int64)
    filt = config.filter
    team = posg.payoffs.mean(axis=1)

    t = 0
    while t < total_steps:
        state = posg.initial_state
        for agent in agents:
            agent.tracking = point_belief(posg, state)
        total = 0.0
        length = 0
        while length < episode_horizon and t < total_steps and not terminal[state]:
            t += 1
            length += 1
            joint = np.empty(n, dtype=np.int64)
            for agent in agents:
                probs = agent.view.joint_others(agent.beliefs)
                p = plan(agent.view, agent.tracking, agent.beliefs, config, t,
                         agent.rng, probs=probs)
                joint[agent.player] = p.action
                agent.optimistic += int(p.optimistic.sum())
                agent.nodes += p.optimistic.size
                if int(np.argmax(agent.tracking)) == state:
                    hits[agent.player] += 1
            key = (state,) + tuple(joint)
            total += float(team[key])
            state = int(posg.transition[key])

            for agent, ch in zip(agents, channels):
                i = agent.player
                flip, pick = ch.random(n), ch.random(n)
                seen = perturb_arrays(joint, counts, true_eps, flip, pick)
                posteriors = {}
                for j in agent.view.others:
                    prior = agent.tracking @ agent.beliefs[j]
                    posteriors[j] = _posterior_rows(filt, prior[None], seen[j:j + 1])[0]
                signal = None if posg.signals is None else int(posg.signals[state, i])
                before = agent.tracking
                agent.tracking, reset = state_belief_update(
                    posg, before, i, int(joint[i]), posteriors, signal, view=agent.view)
                agent.resets += int(reset)
                if config.learn:
                    alpha = _step_sizes(config, agent, before, t)
                    agent.beliefs = per_state_belief_update(
                        agent.beliefs, before, {j: int(seen[j]) for j in agent.view.others},
                        filt, alpha)
        if length == episode_horizon or terminal[state]:
            rewards.append(total)
            elapsed.append(t)
    return LFFPTrace(
        episode_rewards=np.array(rewards),
        steps_elapsed=np.array(elapsed, dtype=np.int64),
        tracking_resets=np.array([a.resets for a in agents]),
        optimistic_nodes=np.array([a.optimistic for a in agents]),
        total_nodes=np.array([a.nodes for a in agents]),
        tracking_hits=hits,
        seed=seed,
    )


def lgwfp_config(config: LFFPConfig) -> LFFPConfig:
    """The same planner with unfiltered (identity) belief updates."""
    return replace(config, filter=FilterSpec("identity"))
