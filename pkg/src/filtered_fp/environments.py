"""Test problems: the two-UAV positioning game, cooperative box pushing, and a
two-state fixture for the planner."""

from __future__ import annotations

import itertools
import json
from collections import deque
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .games import NormalFormGame
from .posg import POSG

SECONDARY, ABOVE = 0, 1


def uav_game(printed_table: bool = False) -> NormalFormGame:
    """Two UAVs choose the secondary point or the position above a target.

    Whoever sits above earns 1 when the other takes the secondary point; both
    above collide at -4 each.  ``printed_table=True`` builds the transposed
    off-diagonal assignment instead, which has no symmetric mixed equilibrium
    at 0.8 on the secondary point.
    """
    row = np.array([[0.0, 0.0], [1.0, -4.0]])
    if printed_table:
        row = np.array([[0.0, 1.0], [0.0, -4.0]])
    return NormalFormGame(np.stack([row, row.T]),
                          action_names=(("Secondary", "Above"), ("Secondary", "Above")))


def anticoordination_game(collision: float) -> NormalFormGame:
    """UAV-style game with a configurable collision cost; both pure NE have
    minimum p-dominance ``collision / (1 + collision)`` when collision >= 1."""
    row = np.array([[0.0, 0.0], [1.0, -collision]])
    return NormalFormGame(np.stack([row, row.T]))


def toy_posg() -> POSG:
    """Two identical-interest 2x2 stages; joint action (1, 1) in state 0 moves to
    the absorbing state 1, where (1, 1) pays 4."""
    r0 = np.array([[1.0, 0.0], [0.0, 0.0]])
    r1 = np.array([[0.0, 0.0], [0.0, 4.0]])
    payoffs = np.stack([np.stack([r0, r0]), np.stack([r1, r1])])
    transition = np.zeros((2, 2, 2), dtype=np.int64)
    transition[0, 1, 1] = 1
    transition[1] = 1
    return POSG(payoffs, transition, gamma=0.9, initial_state=0,
                state_labels=("start", "absorbing"))


# --- cooperative box pushing -------------------------------------------------

FORWARD, TURN_LEFT, TURN_RIGHT, STAY = range(4)
ACTION_NAMES = ("forward", "turn-left", "turn-right", "stay")
NORTH, EAST, SOUTH, WEST = range(4)
_STEP = {NORTH: (-1, 0), EAST: (0, 1), SOUTH: (1, 0), WEST: (0, -1)}
SIG_EMPTY, SIG_WALL, SIG_AGENT, SIG_SMALL, SIG_LARGE = range(5)
SIGNAL_NAMES = ("empty", "wall", "agent", "small-box", "large-box")


@dataclass(frozen=True)
class BoxPushingConfig:
    width: int = 4
    height: int = 3
    goal_row: int = 0
    small_boxes: tuple = ((1, 0), (1, 3))
    large_box: tuple = (1, 1)            # left cell; the box also covers (row, col + 1)
    # Facing each other: a small box takes a turn and a push, the large box a
    # step, a turn and a joint push.  Facing north would make the small-box
    # push a one-step dominant move from the start.
    agents: tuple = ((2, 0, EAST), (2, 3, WEST))
    small_box_reward: float = 10.0
    large_box_reward: float = 100.0
    bump_penalty: float = -5.0
    step_cost: float = -0.1
    horizon: int = 100
    gamma: float = 0.95

    def __post_init__(self):
        for name in ("small_boxes", "agents"):
            object.__setattr__(self, name, tuple(tuple(x) for x in getattr(self, name)))
        object.__setattr__(self, "large_box", tuple(self.large_box))
        cells = [tuple(b) for b in self.small_boxes] + self.large_cells()
        cells += [a[:2] for a in self.agents]
        if len(self.agents) != 2:
            raise ValueError("box pushing needs exactly two agents")
        if len(set(cells)) != len(cells):
            raise ValueError("boxes and agents must occupy distinct cells")
        for r, c in cells:
            if not (0 <= r < self.height and 0 <= c < self.width):
                raise ValueError(f"cell {(r, c)} is off the grid")
        for r, _ in cells:
            if r == self.goal_row:
                raise ValueError("nothing may start in the goal row")
        if any(a[2] not in _STEP for a in self.agents):
            raise ValueError("facing must be 0..3 (N, E, S, W)")
        if self.horizon < 1:
            raise ValueError("horizon must be >= 1")

    def large_cells(self) -> list:
        r, c = self.large_box
        return [(r, c), (r, c + 1)]

    @classmethod
    def from_dict(cls, doc: dict) -> "BoxPushingConfig":
        return cls(**doc)

    def to_dict(self) -> dict:
        return json.loads(json.dumps(asdict(self)))


def load_box_config(path) -> BoxPushingConfig:
    import yaml
    return BoxPushingConfig.from_dict(yaml.safe_load(Path(path).read_text()) or {})


@dataclass(frozen=True)
class _Grid:
    agents: tuple      # ((r, c, facing), (r, c, facing))
    smalls: tuple      # ((r, c), ...) in config order
    large: tuple       # (r, c) of the left cell


@dataclass(frozen=True)
class _Done:
    boxes: tuple       # names of the boxes that reached the goal


@dataclass
class BoxPushingWorld:
    """The deterministic simulator behind :func:`box_pushing`."""

    config: BoxPushingConfig = field(default_factory=BoxPushingConfig)

    def initial(self) -> _Grid:
        cfg = self.config
        return _Grid(tuple(cfg.agents), tuple(tuple(b) for b in cfg.small_boxes),
                     tuple(cfg.large_box))

    def _inside(self, r, c):
        return 0 <= r < self.config.height and 0 <= c < self.config.width

    def step(self, state, joint) -> tuple[object, float]:
        """Apply a joint action; returns ``(next_state, team_reward)``."""
        if isinstance(state, _Done):
            return state, 0.0
        cfg = self.config
        reward = cfg.step_cost
        faces = []
        for (r, c, f), a in zip(state.agents, joint):
            faces.append((f + 3) % 4 if a == TURN_LEFT else (f + 1) % 4 if a == TURN_RIGHT else f)
        pos = [(r, c) for r, c, _ in state.agents]
        smalls = list(state.smalls)
        large = state.large
        lr, lc = large
        large_cells = [(lr, lc), (lr, lc + 1)]
        movers = [i for i in range(2) if joint[i] == FORWARD]
        target = {i: (pos[i][0] + _STEP[faces[i]][0], pos[i][1] + _STEP[faces[i]][1])
                  for i in movers}
        events = []
        bumps = 0

        if (len(movers) == 2 and faces[0] == faces[1] and faces[0] in (NORTH, SOUTH)
                and sorted(target.values()) == large_cells):
            dr = _STEP[faces[0]][0]
            dest = [(r + dr, c) for r, c in large_cells]
            if all(self._inside(*d) and d not in smalls for d in dest):
                large = (lr + dr, lc)
                pos = [target[0], target[1]]
                if lr + dr == cfg.goal_row:
                    events.append("large")
            else:
                bumps += 2
            movers = []

        moves = {}        # agent -> new cell
        pushes = {}       # agent -> (box index, box destination)
        for i in movers:
            other = pos[1 - i]
            tgt = target[i]
            if not self._inside(*tgt) or tgt == other:
                bumps += 1
            elif tgt in large_cells:
                pass  # one agent alone cannot shift the large box
            elif tgt in smalls:
                k = smalls.index(tgt)
                dest = (tgt[0] + _STEP[faces[i]][0], tgt[1] + _STEP[faces[i]][1])
                if (not self._inside(*dest) or dest in smalls or dest in large_cells
                        or dest == other or dest == target.get(1 - i)):
                    bumps += 1
                else:
                    moves[i] = tgt
                    pushes[i] = (k, dest)
            else:
                moves[i] = tgt
        if len(moves) == 2 and moves[0] == moves[1]:
            bumps += 2
            moves, pushes = {}, {}
        for i, (k, dest) in list(pushes.items()):
            if moves.get(1 - i) == dest:
                bumps += 2
                moves, pushes = {}, {}
                break
        for i, cell in moves.items():
            pos[i] = cell
        for k, dest in pushes.values():
            smalls[k] = dest
            if dest[0] == cfg.goal_row:
                events.append(f"small{k}")

        reward += bumps * cfg.bump_penalty
        for e in events:
            reward += cfg.large_box_reward if e == "large" else cfg.small_box_reward
        if events:
            return _Done(tuple(sorted(events))), reward
        agents = tuple((p[0], p[1], f) for p, f in zip(pos, faces))
        return _Grid(agents, tuple(smalls), large), reward

    def signal(self, state, player: int) -> int:
        """What ``player`` sees in the cell it faces."""
        if isinstance(state, _Done):
            return SIG_EMPTY
        r, c, f = state.agents[player]
        cell = (r + _STEP[f][0], c + _STEP[f][1])
        lr, lc = state.large
        if not self._inside(*cell):
            return SIG_WALL
        if cell == state.agents[1 - player][:2]:
            return SIG_AGENT
        if cell in state.smalls:
            return SIG_SMALL
        if cell in ((lr, lc), (lr, lc + 1)):
            return SIG_LARGE
        return SIG_EMPTY

    def enumerate(self):
        """Breadth-first reachable states, the initial state first."""
        start = self.initial()
        index = {start: 0}
        order = [start]
        queue = deque([start])
        while queue:
            s = queue.popleft()
            for joint in itertools.product(range(4), repeat=2):
                nxt, _ = self.step(s, joint)
                if nxt not in index:
                    index[nxt] = len(order)
                    order.append(nxt)
                    queue.append(nxt)
        return order, index


def _state_label(s) -> str:
    if isinstance(s, _Done):
        return "goal:" + "+".join(s.boxes)
    a = " ".join(f"{r}{c}{'NESW'[f]}" for r, c, f in s.agents)
    return f"agents {a} | large {s.large[0]}{s.large[1]}"


def box_pushing(config: Optional[BoxPushingConfig] = None) -> POSG:
    """Cooperative box pushing as an identical-interest POSG.

    Four actions per agent, five front-cell signals.  Any box reaching the
    goal row ends the task: the state becomes absorbing (zero reward) until
    the episode's horizon, mirroring the benchmark's reset on delivery.
    """
    world = BoxPushingWorld(config or BoxPushingConfig())
    order, index = world.enumerate()
    num_states = len(order)
    rewards = np.zeros((num_states, 4, 4))
    transition = np.zeros((num_states, 4, 4), dtype=np.int64)
    signals = np.zeros((num_states, 2), dtype=np.int64)
    for k, s in enumerate(order):
        for joint in itertools.product(range(4), repeat=2):
            nxt, r = world.step(s, joint)
            rewards[(k,) + joint] = r
            transition[(k,) + joint] = index[nxt]
        signals[k] = [world.signal(s, 0), world.signal(s, 1)]
    payoffs = np.stack([rewards, rewards], axis=1)
    return POSG(payoffs, transition, gamma=world.config.gamma, initial_state=0,
                signals=signals, num_signals=len(SIGNAL_NAMES),
                state_labels=tuple(_state_label(s) for s in order))
