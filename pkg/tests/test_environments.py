import itertools

import numpy as np
import pytest

from filtered_fp.environments import (ACTION_NAMES, FORWARD, SIGNAL_NAMES, STAY, TURN_LEFT,
                                      TURN_RIGHT, BoxPushingConfig, BoxPushingWorld,
                                      anticoordination_game, box_pushing, load_box_config,
                                      toy_posg, uav_game)
from filtered_fp.games import min_p_dominance, potential_reconstruct, pure_nash
from filtered_fp.lffp import terminal_states


@pytest.fixture(scope="module")
def boxes():
    return box_pushing()


def play(posg, joints):
    s, total = posg.initial_state, 0.0
    for joint in joints:
        total += posg.payoffs[(s, 0) + tuple(joint)]
        s = int(posg.transition[(s,) + tuple(joint)])
    return s, total


def test_uav_tables():
    g = uav_game()
    np.testing.assert_array_equal(g.payoffs[0], [[0, 0], [1, -4]])
    np.testing.assert_array_equal(g.payoffs[1], g.payoffs[0].T)
    assert {e.actions for e in pure_nash(g)} == {(0, 1), (1, 0)}
    assert potential_reconstruct(g).ok
    for e in pure_nash(g):
        assert min_p_dominance(g, e.actions).min_p == pytest.approx(0.8, abs=1e-9)


def test_anticoordination_min_p_follows_collision_cost():
    for cost in (1.0, 7 / 3, 9.0):
        g = anticoordination_game(cost)
        for e in pure_nash(g):
            assert min_p_dominance(g, e.actions).min_p == pytest.approx(cost / (1 + cost), abs=1e-9)


def test_toy_fixture():
    toy = toy_posg()
    assert toy.num_states == 2 and toy.action_counts == (2, 2)
    assert toy.gamma == 0.9
    assert (toy.transition[1] == 1).all()
    assert toy.payoffs[1, 0, 1, 1] == 4.0


def test_box_pushing_counts(boxes):
    assert boxes.num_states == 100
    assert boxes.action_counts == (4, 4)
    assert boxes.num_signals == 5
    assert len(ACTION_NAMES) == 4 and len(SIGNAL_NAMES) == 5


def test_box_pushing_is_total_deterministic_and_identical_interest(boxes):
    assert boxes.transition.min() >= 0 and boxes.transition.max() < boxes.num_states
    np.testing.assert_array_equal(boxes.payoffs[:, 0], boxes.payoffs[:, 1])
    again = box_pushing()
    np.testing.assert_array_equal(again.transition, boxes.transition)
    np.testing.assert_array_equal(again.signals, boxes.signals)
    assert boxes.signals.max() < 5


def test_positive_rewards_only_from_deliveries(boxes):
    labels = boxes.state_labels
    r = boxes.payoffs[:, 0]
    for s, a0, a1 in zip(*np.nonzero(r > 0)):
        assert labels[boxes.transition[s, a0, a1]].startswith("goal:")
    values = set(np.round(r, 6).ravel().tolist())
    assert {9.9, 19.9, 99.9, -0.1, -5.1} <= values      # 19.9: both small boxes at once
    assert r.max() <= 100 + 2 * 10 - 0.1


def test_terminal_states_are_the_delivered_ones(boxes):
    term = terminal_states(boxes)
    labels = np.array(boxes.state_labels)
    assert term.any()
    assert all(lbl.startswith("goal:") for lbl in labels[term])
    assert not term[boxes.initial_state]


def test_small_box_delivery_takes_two_steps(boxes):
    s, total = play(boxes, [(TURN_LEFT, STAY), (FORWARD, STAY)])
    assert boxes.state_labels[s] == "goal:small0"
    assert total == pytest.approx(-0.1 + 9.9)


def test_large_box_needs_both_agents(boxes):
    s, total = play(boxes, [(FORWARD, FORWARD), (TURN_LEFT, TURN_RIGHT), (FORWARD, FORWARD)])
    assert boxes.state_labels[s] == "goal:large"
    assert total == pytest.approx(99.7)
    # a lone push leaves the box where it is
    s, _ = play(boxes, [(FORWARD, FORWARD), (TURN_LEFT, TURN_RIGHT), (FORWARD, STAY)])
    assert not boxes.state_labels[s].startswith("goal:")
    assert "large 11" in boxes.state_labels[s]


def test_bumping_into_walls_and_each_other_costs():
    world = BoxPushingWorld()
    start = world.initial()
    # agent 1 faces west along the bottom row: the turn to south then forward hits the wall
    nxt, r = world.step(start, (STAY, TURN_LEFT))
    _, r = world.step(nxt, (STAY, FORWARD))
    assert r == pytest.approx(-5.1)
    # both agents step into the middle of the bottom row: (2,1) and (2,2), no clash
    nxt, r = world.step(start, (FORWARD, FORWARD))
    assert r == pytest.approx(-0.1)
    # now facing each other, a forward move hits the other agent
    _, r = world.step(nxt, (FORWARD, STAY))
    assert r == pytest.approx(-5.1)


def test_signals_report_the_front_cell():
    world = BoxPushingWorld()
    start = world.initial()
    # agent 0 at (2,0) faces east at an empty cell; after turning left it faces the small box
    assert SIGNAL_NAMES[world.signal(start, 0)] == "empty"
    turned, _ = world.step(start, (TURN_LEFT, TURN_RIGHT))
    assert SIGNAL_NAMES[world.signal(turned, 0)] == "small-box"
    assert SIGNAL_NAMES[world.signal(turned, 1)] == "small-box"
    inward, _ = world.step(start, (FORWARD, FORWARD))
    assert SIGNAL_NAMES[world.signal(inward, 0)] == "agent"
    up, _ = world.step(inward, (TURN_LEFT, TURN_RIGHT))
    assert SIGNAL_NAMES[world.signal(up, 0)] == "large-box"
    down, _ = world.step(start, (TURN_RIGHT, STAY))
    assert SIGNAL_NAMES[world.signal(down, 0)] == "wall"


def test_every_state_reachable_and_labelled(boxes):
    seen = {boxes.initial_state}
    frontier = [boxes.initial_state]
    while frontier:
        s = frontier.pop()
        for nxt in np.unique(boxes.transition[s]):
            if nxt not in seen:
                seen.add(int(nxt))
                frontier.append(int(nxt))
    assert len(seen) == boxes.num_states
    assert len(set(boxes.state_labels)) == boxes.num_states


def test_config_validation():
    with pytest.raises(ValueError):
        BoxPushingConfig(agents=((2, 0, 0),))
    with pytest.raises(ValueError):
        BoxPushingConfig(agents=((1, 0, 0), (2, 3, 3)))     # on a small box
    with pytest.raises(ValueError):
        BoxPushingConfig(agents=((2, 0, 7), (2, 3, 3)))
    with pytest.raises(ValueError):
        BoxPushingConfig(small_boxes=((0, 0), (1, 3)))     # already in the goal row
    with pytest.raises(ValueError):
        BoxPushingConfig(width=2)


def test_config_round_trip_and_yaml(tmp_path):
    cfg = BoxPushingConfig(step_cost=-0.5, gamma=0.9)
    assert BoxPushingConfig.from_dict(cfg.to_dict()) == cfg
    path = tmp_path / "box.yaml"
    path.write_text("step_cost: -0.5\ngamma: 0.9\n")
    assert load_box_config(path) == cfg
    posg = box_pushing(cfg)
    assert posg.gamma == 0.9
    _, total = play(posg, [(TURN_LEFT, STAY), (FORWARD, STAY)])
    assert total == pytest.approx(-1.0 + 10.0)


def test_every_joint_action_is_defined_everywhere(boxes):
    world = BoxPushingWorld()
    order, index = world.enumerate()
    for k in range(0, len(order), 7):
        for joint in itertools.product(range(4), repeat=2):
            nxt, r = world.step(order[k], joint)
            assert boxes.transition[(k,) + joint] == index[nxt]
            assert boxes.payoffs[(k, 0) + joint] == pytest.approx(r)
