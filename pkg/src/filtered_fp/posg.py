"""Partially observable stochastic games with action-driven transitions.

A POSG here is a stack of stage games sharing one joint action space, a
deterministic transition table ``next_state[s, a_1, ..., a_N]`` and an
optional table of local signals each player receives on entering a state.
Agents track the state with a distribution that is propagated through the
transition table using filtered beliefs over what the others just did.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .games import TOL, NormalFormGame, ShapeError
from .learning import FilterSpec, _posterior_rows, apply_floor

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class POSG:
    payoffs: np.ndarray               # (S, N, A_1..A_N)
    transition: np.ndarray            # (S, A_1..A_N) -> next state index
    gamma: float
    initial_state: int = 0
    signals: Optional[np.ndarray] = None   # (S, N) signal index per state/player
    num_signals: int = 0
    state_labels: Optional[tuple] = None

    def __post_init__(self):
        payoffs = np.array(self.payoffs, dtype=float)
        transition = np.array(self.transition, dtype=np.int64)
        if payoffs.ndim < 3 or payoffs.shape[1] != payoffs.ndim - 2:
            raise ShapeError(f"payoffs must be (S, N, A_1..A_N), got {payoffs.shape}")
        num_states = payoffs.shape[0]
        if transition.shape != (num_states,) + payoffs.shape[2:]:
            raise ShapeError("transition must be defined for every (state, joint action)")
        if transition.min() < 0 or transition.max() >= num_states:
            raise ValueError("transition points outside the state set")
        if not 0 <= self.gamma < 1:
            raise ValueError("gamma must lie in [0, 1)")
        if not 0 <= self.initial_state < num_states:
            raise ValueError("initial state out of range")
        if not np.all(np.isfinite(payoffs)):
            raise ValueError("payoffs must be finite")
        for arr in (payoffs, transition):
            arr.setflags(write=False)
        object.__setattr__(self, "payoffs", payoffs)
        object.__setattr__(self, "transition", transition)
        if self.signals is not None:
            signals = np.array(self.signals, dtype=np.int64)
            if signals.shape != (num_states, payoffs.shape[1]):
                raise ShapeError("signals must be (S, N)")
            num_signals = max(self.num_signals, int(signals.max()) + 1)
            signals.setflags(write=False)
            object.__setattr__(self, "signals", signals)
            object.__setattr__(self, "num_signals", num_signals)

    @classmethod
    def from_stage_games(cls, games: Sequence[NormalFormGame], transition, gamma,
                         initial_state=0, signals=None, num_signals=0):
        counts = {g.action_counts for g in games}
        if len(counts) != 1:
            raise ShapeError("stage games must share player count and action sets")
        return cls(np.stack([g.payoffs for g in games]), transition, gamma,
                   initial_state, signals, num_signals)

    @property
    def num_states(self) -> int:
        return self.payoffs.shape[0]

    @property
    def num_players(self) -> int:
        return self.payoffs.shape[1]

    @property
    def action_counts(self) -> tuple[int, ...]:
        return tuple(self.payoffs.shape[2:])

    def stage_game(self, s: int) -> NormalFormGame:
        return NormalFormGame(self.payoffs[s])

    def to_dict(self) -> dict:
        counts = self.action_counts
        triples = []
        for s in range(self.num_states):
            for k, nxt in enumerate(self.transition[s].ravel()):
                triples.append([s, k, int(nxt)])
        doc = {
            "players": self.num_players,
            "actions": list(counts),
            "states": self.num_states,
            "payoffs": [[self.payoffs[s, i].ravel().tolist() for i in range(self.num_players)]
                        for s in range(self.num_states)],
            "transition": triples,
            "gamma": self.gamma,
            "initial": self.initial_state,
        }
        if self.signals is not None:
            doc["signals"] = self.signals.tolist()
            doc["num_signals"] = self.num_signals
        if self.state_labels is not None:
            doc["state_labels"] = list(self.state_labels)
        return doc

    @classmethod
    def from_dict(cls, doc: dict) -> "POSG":
        counts = tuple(int(n) for n in doc["actions"])
        if int(doc["players"]) != len(counts):
            raise ShapeError("'players' disagrees with length of 'actions'")
        num_states = int(doc["states"])
        payoffs = np.array(doc["payoffs"], dtype=float).reshape((num_states, len(counts)) + counts)
        size = int(np.prod(counts))
        transition = np.full((num_states, size), -1, dtype=np.int64)
        for s, k, nxt in doc["transition"]:
            transition[int(s), int(k)] = int(nxt)
        if transition.min() < 0:
            raise ValueError("transition table is not total")
        labels = doc.get("state_labels")
        return cls(payoffs, transition.reshape((num_states,) + counts), float(doc["gamma"]),
                   int(doc.get("initial", 0)), doc.get("signals"),
                   int(doc.get("num_signals", 0)),
                   tuple(labels) if labels is not None else None)


def load_posg(path) -> POSG:
    return POSG.from_dict(json.loads(Path(path).read_text()))


def dump_posg(posg: POSG, path) -> None:
    Path(path).write_text(json.dumps(posg.to_dict()) + "\n")


def transition_apply(posg: POSG, state: int, joint_action: Sequence[int]) -> int:
    joint_action = tuple(int(a) for a in joint_action)
    if not 0 <= state < posg.num_states:
        raise IndexError(f"state {state} out of range")
    if len(joint_action) != posg.num_players or any(
            not 0 <= a < n for a, n in zip(joint_action, posg.action_counts)):
        raise IndexError(f"joint action {joint_action} out of range")
    return int(posg.transition[(state,) + joint_action])


class PlayerView:
    """A POSG seen from one player: own action first, others flattened.

    ``rewards[s, a_i, m]`` and ``next_state[s, a_i, m]`` index the others'
    joint action ``m`` in row-major order over the remaining players.
    """

    def __init__(self, posg: POSG, player: int):
        self.posg = posg
        self.player = player
        self.others = [j for j in range(posg.num_players) if j != player]
        s = posg.num_states
        a = posg.action_counts[player]
        self.rewards = np.ascontiguousarray(
            np.moveaxis(posg.payoffs[:, player], player + 1, 1).reshape(s, a, -1))
        self.next_state = np.ascontiguousarray(
            np.moveaxis(posg.transition, player + 1, 1).reshape(s, a, -1))
        self.best_joint = self.rewards.max(axis=(1, 2))

    def joint_others(self, beliefs: dict) -> np.ndarray:
        """Per-state product distribution over the others' joint action, ``(S, M)``."""
        if len(self.others) == 1:
            return _per_state(beliefs[self.others[0]], self.posg.num_states)
        out = np.ones((self.posg.num_states, 1))
        for j in self.others:
            out = (out[:, :, None] * _per_state(beliefs[j], self.posg.num_states)[:, None, :])
            out = out.reshape(self.posg.num_states, -1)
        return out


def _per_state(dist, num_states):
    dist = np.asarray(dist, dtype=float)
    return np.broadcast_to(dist, (num_states, dist.shape[-1])) if dist.ndim == 1 else dist


def state_belief_update(posg: POSG, belief, player: int, own_action: int,
                        opponent_posteriors: dict, signal: Optional[int] = None,
                        view: Optional[PlayerView] = None) -> tuple[np.ndarray, bool]:
    """Propagate the state distribution one step.

    ``opponent_posteriors[j]`` is either one distribution over j's actions
    shared by all states or an ``(S, A_j)`` table.  A local ``signal`` enters
    as hard evidence.  Returns the new distribution and whether it had to be
    reset to uniform because the evidence ruled out every state.
    """
    view = view or PlayerView(posg, player)
    belief = np.asarray(belief, dtype=float)
    live = np.flatnonzero(belief)
    shared = [np.asarray(opponent_posteriors[j], dtype=float) for j in view.others]
    if len(shared) == 1 and shared[0].ndim == 1:
        probs = shared[0][None, :]
    else:
        probs = view.joint_others(opponent_posteriors)[live]
    weights = belief[live, None] * probs
    new = np.bincount(view.next_state[live, own_action, :].ravel(), weights=weights.ravel(),
                      minlength=posg.num_states)
    if signal is not None and posg.signals is not None:
        new = new * (posg.signals[:, player] == signal)
    total = new.sum()
    if total <= TOL:
        log.debug("state evidence contradicts every state; resetting to uniform")
        return np.full(posg.num_states, 1.0 / posg.num_states), True
    return new / total, False


def per_state_belief_update(beliefs: dict, state_belief, observed: dict,
                            filt: FilterSpec, alpha) -> dict:
    """Responsibility-weighted belief step: state s moves with rate alpha * beta(s).

    ``beliefs[j]`` is an ``(S, A_j)`` table of beliefs over opponent j's action
    in each state; ``observed[j]`` is the (perturbed) observation of j.
    ``alpha`` is one step size for all states or an ``(S,)`` vector.
    """
    beta = np.asarray(state_belief, dtype=float)
    alpha = np.broadcast_to(np.asarray(alpha, dtype=float), beta.shape)
    live = beta > 0
    out = {}
    for j, table in beliefs.items():
        table = np.asarray(table, dtype=float)
        new = table.copy()
        if np.any(live):
            rows = table[live]
            post = _posterior_rows(filt, rows, np.full(len(rows), observed[j]))
            step = (alpha[live] * beta[live])[:, None]
            new[live] = apply_floor((1 - step) * rows + step * post)
        out[j] = new
    return out


def uniform_state_beliefs(posg: POSG, player: int) -> dict:
    return {j: np.full((posg.num_states, n), 1.0 / n)
            for j, n in enumerate(posg.action_counts) if j != player}


def point_belief(posg: POSG, state: int) -> np.ndarray:
    out = np.zeros(posg.num_states)
    out[state] = 1.0
    return out

