"""Finite normal-form games and the equilibrium analysis used by the learners.

Payoffs are stored as one array of shape ``(N, A_1, ..., A_N)``; entry
``payoffs[i][a]`` is player ``i``'s reward at joint action ``a``.  Mixed
strategies are plain 1-D numpy arrays.
"""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

TOL = 1e-9


class ShapeError(ValueError):
    """A strategy or profile does not fit the game's action sets."""


@dataclass(frozen=True)
class NormalFormGame:
    payoffs: np.ndarray
    action_names: Optional[tuple[tuple[str, ...], ...]] = None

    def __post_init__(self):
        payoffs = np.array(self.payoffs, dtype=float)
        if payoffs.ndim < 2 or payoffs.shape[0] != payoffs.ndim - 1:
            raise ShapeError(
                f"payoffs must have shape (N, A_1..A_N), got {payoffs.shape}")
        if not np.all(np.isfinite(payoffs)):
            raise ValueError("payoffs must be finite")
        if min(payoffs.shape[1:]) < 1:
            raise ShapeError("every player needs at least one action")
        payoffs.setflags(write=False)
        object.__setattr__(self, "payoffs", payoffs)
        if self.action_names is not None:
            names = tuple(tuple(n) for n in self.action_names)
            if tuple(len(n) for n in names) != self.action_counts:
                raise ShapeError("action_names do not match action counts")
            object.__setattr__(self, "action_names", names)

    @property
    def num_players(self) -> int:
        return self.payoffs.shape[0]

    @property
    def action_counts(self) -> tuple[int, ...]:
        return tuple(self.payoffs.shape[1:])

    def joint_actions(self):
        return itertools.product(*(range(n) for n in self.action_counts))

    def label(self, joint: Sequence[int]) -> str:
        if self.action_names is None:
            return "-".join(str(a) for a in joint)
        return "-".join(self.action_names[i][a] for i, a in enumerate(joint))

    # serialization: flattened row-major payoffs, last player's action fastest
    def to_dict(self) -> dict:
        doc = {
            "players": self.num_players,
            "actions": list(self.action_counts),
            "payoffs": [self.payoffs[i].ravel().tolist()
                        for i in range(self.num_players)],
        }
        if self.action_names is not None:
            doc["action_names"] = [list(n) for n in self.action_names]
        return doc

    @classmethod
    def from_dict(cls, doc: dict) -> "NormalFormGame":
        counts = tuple(int(n) for n in doc["actions"])
        if int(doc["players"]) != len(counts):
            raise ShapeError("'players' disagrees with length of 'actions'")
        rows = doc["payoffs"]
        if len(rows) != len(counts):
            raise ShapeError("need one payoff array per player")
        size = int(np.prod(counts))
        arrays = []
        for row in rows:
            row = np.asarray(row, dtype=float)
            if row.size != size:
                raise ShapeError(
                    f"payoff array has {row.size} entries, expected {size}")
            arrays.append(row.reshape(counts))
        return cls(np.stack(arrays), doc.get("action_names"))


def load_game(path) -> NormalFormGame:
    return NormalFormGame.from_dict(json.loads(Path(path).read_text()))


def dump_game(game: NormalFormGame, path) -> None:
    Path(path).write_text(json.dumps(game.to_dict(), indent=2) + "\n")


def check_strategy(probs, n: int, tol: float = TOL) -> np.ndarray:
    probs = np.asarray(probs, dtype=float)
    if probs.shape != (n,):
        raise ShapeError(f"strategy has shape {probs.shape}, expected ({n},)")
    if np.any(probs < -tol) or np.any(probs > 1 + tol) or abs(probs.sum() - 1) > tol:
        raise ValueError(f"not a probability vector: {probs}")
    return probs


def pure(action: int, n: int) -> np.ndarray:
    out = np.zeros(n)
    out[action] = 1.0
    return out


def _check_profile(game, profile, skip=None):
    if len(profile) != game.num_players:
        raise ShapeError(
            f"profile has {len(profile)} entries for {game.num_players} players")
    return [None if j == skip else check_strategy(p, n)
            for j, (p, n) in enumerate(zip(profile, game.action_counts))]


def action_values(game: NormalFormGame, player: int, profile) -> np.ndarray:
    """Expected reward of each pure action of ``player`` against ``profile``.

    ``profile[player]`` is ignored and may be ``None``.
    """
    profile = _check_profile(game, profile, skip=player)
    values = game.payoffs[player]
    # contract from the last axis down so the remaining axis is `player`'s
    for j in reversed(range(game.num_players)):
        if j != player:
            values = np.moveaxis(values, j, -1) @ profile[j]
    return values


def expected_reward(game: NormalFormGame, profile, player: int) -> float:
    profile = _check_profile(game, profile)
    return float(action_values(game, player, profile) @ profile[player])


def best_response(game: NormalFormGame, player: int, others,
                  tol: float = TOL) -> frozenset[int]:
    return delta_best_response(game, player, others, 0.0, tol=tol)


def delta_best_response(game: NormalFormGame, player: int, others,
                        delta: float, tol: float = TOL) -> frozenset[int]:
    if delta < 0:
        raise ValueError("delta must be nonnegative")
    values = action_values(game, player, others)
    return frozenset(np.flatnonzero(values >= values.max() - delta - tol).tolist())


def epsilon_best_response(game: NormalFormGame, player: int, others,
                          eps: float) -> np.ndarray:
    """Spread 1-eps uniformly over best responses and eps over the rest."""
    if not 0 <= eps <= 1:
        raise ValueError("eps must lie in [0, 1]")
    n = game.action_counts[player]
    br = sorted(best_response(game, player, others))
    out = np.zeros(n)
    if eps == 0:
        out[br] = 1.0 / len(br)
        return out
    if len(br) == n:
        raise ValueError("every action is a best response; eps-spread is undefined")
    out[:] = eps / (n - len(br))
    out[br] = (1 - eps) / len(br)
    return out


@dataclass(frozen=True)
class PureEquilibrium:
    actions: tuple[int, ...]
    strict: bool


def deviation_gains(game: NormalFormGame, joint: Sequence[int]) -> list[np.ndarray]:
    """Per player, reward change from each unilateral pure deviation."""
    joint = tuple(joint)
    gains = []
    for i in range(game.num_players):
        idx = list(joint)
        idx[i] = slice(None)
        row = game.payoffs[i][tuple(idx)]
        gains.append(row - row[joint[i]])
    return gains


def pure_nash(game: NormalFormGame, tol: float = TOL) -> list[PureEquilibrium]:
    found = []
    for joint in game.joint_actions():
        gains = deviation_gains(game, joint)
        if all(g.max() <= tol for g in gains):
            strict = all(
                np.all(np.delete(g, a) < -tol) for g, a in zip(gains, joint))
            found.append(PureEquilibrium(joint, bool(strict)))
    return found


def is_nash(game: NormalFormGame, profile, tol: float = TOL) -> bool:
    profile = _check_profile(game, profile)
    for i in range(game.num_players):
        values = action_values(game, i, profile)
        if values.max() - values @ profile[i] > tol:
            return False
    return True


@dataclass(frozen=True)
class PotentialResult:
    """Outcome of :func:`potential_reconstruct`.

    On success ``potential`` holds the tensor (zero at the all-zeros joint
    action).  On failure ``edge`` is a unilateral deviation
    ``(player, joint, alternative_action)`` where the reconstruction breaks and
    ``cycle`` a closed 4-cycle of joint actions whose summed reward changes is
    nonzero.
    """

    potential: Optional[np.ndarray] = None
    edge: Optional[tuple] = None
    cycle: Optional[tuple] = None
    cycle_sum: float = 0.0

    @property
    def ok(self) -> bool:
        return self.potential is not None


def potential_reconstruct(game: NormalFormGame, tol: float = TOL) -> PotentialResult:
    counts = game.action_counts
    n = game.num_players
    pot = np.zeros(counts)
    # integrate along the path 0..0 -> (a_1,0..0) -> (a_1,a_2,0..) -> ... -> a
    for joint in game.joint_actions():
        total = 0.0
        point = [0] * n
        for k in range(n):
            before = tuple(point)
            point[k] = joint[k]
            total += game.payoffs[k][tuple(point)] - game.payoffs[k][before]
        pot[joint] = total

    for i in range(n):
        # P differences along axis i must equal r_i differences along axis i
        dp = pot - np.take(pot, [0], axis=i)
        dr = game.payoffs[i] - np.take(game.payoffs[i], [0], axis=i)
        bad = np.argwhere(np.abs(dp - dr) > tol)
        if bad.size:
            joint = tuple(int(x) for x in bad[0])
            cycle, csum = _nonzero_cycle(game, tol)
            return PotentialResult(edge=(i, joint, 0), cycle=cycle, cycle_sum=csum)
    pot.setflags(write=False)
    return PotentialResult(potential=pot)


def _nonzero_cycle(game, tol):
    """Find a 2-player deviation 4-cycle with nonzero reward-change sum."""
    n = game.num_players
    counts = game.action_counts
    for i, j in itertools.combinations(range(n), 2):
        for joint in game.joint_actions():
            for ai in range(counts[i]):
                for aj in range(counts[j]):
                    if ai == joint[i] or aj == joint[j]:
                        continue
                    a = tuple(joint)
                    b = _with(a, i, ai)
                    c = _with(b, j, aj)
                    d = _with(a, j, aj)
                    s = (game.payoffs[i][b] - game.payoffs[i][a]
                         + game.payoffs[j][c] - game.payoffs[j][b]
                         + game.payoffs[i][d] - game.payoffs[i][c]
                         + game.payoffs[j][a] - game.payoffs[j][d])
                    if abs(s) > tol:
                        return (a, b, c, d), float(s)
    return None, 0.0


def _with(joint, k, value):
    out = list(joint)
    out[k] = value
    return tuple(out)


@dataclass(frozen=True)
class PDominanceReport:
    equilibrium: tuple[int, ...]
    min_p: float
    binding_constraints: tuple[tuple[int, int, tuple[int, ...]], ...] = field(default=())


def min_p_dominance(game: NormalFormGame, equilibrium: Sequence[int],
                    tol: float = TOL) -> PDominanceReport:
    """Smallest p for which ``equilibrium`` is p-dominant.

    Opponent beliefs range over joint (possibly correlated) distributions over
    the other players' actions.  The feasible set ``{pi : pi(a*_-i) >= p}`` has
    vertices ``p*a*_-i + (1-p)*a_-i``, and each constraint is linear in ``pi``,
    so checking the vertices is exact.
    """
    eq = tuple(int(a) for a in equilibrium)
    if len(eq) != game.num_players:
        raise ShapeError("equilibrium must name one action per player")
    if any(g.max() > tol for g in deviation_gains(game, eq)):
        raise ValueError(f"{eq} is not a pure Nash equilibrium")

    worst = 0.0
    binding: list[tuple[int, int, tuple[int, ...]]] = []
    counts = game.action_counts
    for i in range(game.num_players):
        r = game.payoffs[i]
        others = [range(n) if j != i else [eq[i]] for j, n in enumerate(counts)]
        for dev in range(counts[i]):
            if dev == eq[i]:
                continue
            g = r[eq] - r[_with(eq, i, dev)]
            for vertex in itertools.product(*others):
                if vertex == eq:
                    continue
                h = r[vertex] - r[_with(vertex, i, dev)]
                if h >= -tol:
                    continue
                crit = min(1.0, max(0.0, -h / (g - h)))
                opp = tuple(a for j, a in enumerate(vertex) if j != i)
                if crit > worst + tol:
                    worst, binding = crit, [(i, dev, opp)]
                elif abs(crit - worst) <= tol:
                    binding.append((i, dev, opp))
    return PDominanceReport(eq, worst, tuple(binding))


def gwfp_noise_threshold(p: float, num_players: int) -> float:
    """Observation noise above which GWFP cannot stay at a p-dominant NE."""
    if num_players < 2:
        raise ValueError("need at least two players")
    if not 0 <= p <= 1:
        raise ValueError("p must lie in [0, 1]")
    return 1.0 - p ** (1.0 / (num_players - 1))


def potential_local_maxima(potential: np.ndarray, tol: float = TOL) -> list[tuple[int, ...]]:
    """Joint actions no unilateral change can increase the potential from."""
    out = []
    for joint in itertools.product(*(range(n) for n in potential.shape)):
        if all(potential[_with(joint, i, slice(None))].max() <= potential[joint] + tol
               for i in range(potential.ndim)):
            out.append(joint)
    return out
