import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from filtered_fp.environments import box_pushing, toy_posg
from filtered_fp.games import NormalFormGame, ShapeError
from filtered_fp.learning import IDENTITY, FilterSpec, LearnerState, belief_update
from filtered_fp.posg import (POSG, PlayerView, dump_posg, load_posg, per_state_belief_update,
                              point_belief, state_belief_update, transition_apply,
                              uniform_state_beliefs)


def random_posg(rng, num_states=3, counts=(2, 3), signals=False):
    n = len(counts)
    payoffs = rng.normal(size=(num_states, n) + tuple(counts))
    transition = rng.integers(0, num_states, size=(num_states,) + tuple(counts))
    sig = rng.integers(0, 2, size=(num_states, n)) if signals else None
    return POSG(payoffs, transition, gamma=float(rng.uniform(0, 0.95)), signals=sig)


def test_validation():
    with pytest.raises(ShapeError):
        POSG(np.zeros((2, 2, 2, 2)), np.zeros((2, 3, 2), dtype=int), 0.9)
    with pytest.raises(ValueError):
        POSG(np.zeros((2, 2, 2, 2)), np.full((2, 2, 2), 5), 0.9)
    with pytest.raises(ValueError):
        POSG(np.zeros((2, 2, 2, 2)), np.zeros((2, 2, 2), dtype=int), 1.0)
    g1 = NormalFormGame(np.zeros((2, 2, 2)))
    g2 = NormalFormGame(np.zeros((2, 2, 3)))
    with pytest.raises(ShapeError):
        POSG.from_stage_games([g1, g2], np.zeros((2, 2, 2), dtype=int), 0.5)


def test_transition_apply_examples():
    ident = POSG(np.zeros((3, 2, 2, 2)), np.broadcast_to(np.arange(3)[:, None, None], (3, 2, 2)),
                 0.5)
    for s in range(3):
        assert transition_apply(ident, s, (1, 0)) == s
    toy = toy_posg()
    assert transition_apply(toy, 0, (1, 1)) == 1
    assert transition_apply(toy, 0, (0, 1)) == 0
    with pytest.raises(IndexError):
        transition_apply(toy, 2, (0, 0))
    with pytest.raises(IndexError):
        transition_apply(toy, 0, (0, 2))


def test_round_trip_json(tmp_path):
    posg = box_pushing()
    dump_posg(posg, tmp_path / "p.json")
    back = load_posg(tmp_path / "p.json")
    np.testing.assert_array_equal(back.payoffs, posg.payoffs)
    np.testing.assert_array_equal(back.transition, posg.transition)
    np.testing.assert_array_equal(back.signals, posg.signals)
    assert back.gamma == posg.gamma and back.state_labels == posg.state_labels


def test_player_view_orders_own_action_first():
    rng = np.random.default_rng(0)
    posg = random_posg(rng, counts=(2, 3, 2))
    view = PlayerView(posg, 1)
    # own action a_1 first, then (a_0, a_2) flattened row-major
    for s in range(3):
        for a0 in range(2):
            for a1 in range(3):
                for a2 in range(2):
                    m = a0 * 2 + a2
                    assert view.rewards[s, a1, m] == posg.payoffs[s, 1, a0, a1, a2]
                    assert view.next_state[s, a1, m] == posg.transition[s, a0, a1, a2]


# --- state tracking --------------------------------------------------------------

def test_state_update_example_on_toy():
    toy = toy_posg()
    new, reset = state_belief_update(toy, [1.0, 0.0], 0, 1, {1: np.array([0.8, 0.2])})
    np.testing.assert_allclose(new, [0.8, 0.2])
    assert not reset


def test_state_update_point_masses_follow_true_state():
    posg = box_pushing()
    rng = np.random.default_rng(1)
    state = posg.initial_state
    beliefs = [point_belief(posg, state), point_belief(posg, state)]
    for _ in range(300):
        joint = rng.integers(0, 4, size=2)
        nxt = transition_apply(posg, state, joint)
        for i in range(2):
            post = {1 - i: np.eye(4)[joint[1 - i]]}
            beliefs[i], reset = state_belief_update(posg, beliefs[i], i, int(joint[i]), post,
                                                    int(posg.signals[nxt, i]))
            assert not reset
            assert beliefs[i][nxt] == 1.0
        state = nxt


def test_contradictory_signal_resets_to_uniform():
    posg = box_pushing()
    start = point_belief(posg, posg.initial_state)
    true_next = transition_apply(posg, posg.initial_state, (3, 3))
    wrong = (int(posg.signals[true_next, 0]) + 1) % posg.num_signals
    new, reset = state_belief_update(posg, start, 0, 3, {1: np.eye(4)[3]}, wrong)
    assert reset
    np.testing.assert_allclose(new, 1.0 / posg.num_states)


def test_uninformative_posterior_gives_reachability_mixing():
    toy = toy_posg()
    new, _ = state_belief_update(toy, [0.5, 0.5], 0, 1, {1: np.array([0.5, 0.5])})
    # from 0: half stays, half moves; state 1 absorbs
    np.testing.assert_allclose(new, [0.25, 0.75])
    new, _ = state_belief_update(toy, [0.5, 0.5], 0, 0, {1: np.array([0.5, 0.5])})
    np.testing.assert_allclose(new, [0.5, 0.5])


@settings(max_examples=300, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), use_signal=st.booleans())
def test_state_update_stays_on_simplex(seed, use_signal):
    rng = np.random.default_rng(seed)
    posg = random_posg(rng, num_states=4, signals=True)
    belief = rng.dirichlet(np.ones(4))
    post = {1: rng.dirichlet(np.ones(3))}
    sig = int(rng.integers(2)) if use_signal else None
    new, reset = state_belief_update(posg, belief, 0, int(rng.integers(2)), post, sig)
    assert abs(new.sum() - 1) < 1e-9 and np.all(new >= 0)
    if reset:
        np.testing.assert_allclose(new, 0.25)


# --- per-state opponent beliefs -----------------------------------------------------

def test_per_state_update_point_mass_matches_single_state_update():
    toy = toy_posg()
    beliefs = uniform_state_beliefs(toy, 0)
    filt = FilterSpec("bayes", 0.2)
    new = per_state_belief_update(beliefs, [0.0, 1.0], {1: 0}, filt, 0.25)
    expect = belief_update(LearnerState((None, np.array([0.5, 0.5]))), (None, 0), filt,
                           None, alpha=0.25)
    np.testing.assert_allclose(new[1][1], expect.beliefs[1])
    np.testing.assert_array_equal(new[1][0], beliefs[1][0])


def test_per_state_update_splits_step_by_responsibility():
    toy = toy_posg()
    beliefs = uniform_state_beliefs(toy, 0)
    new = per_state_belief_update(beliefs, [0.5, 0.5], {1: 0}, IDENTITY, 0.1)
    np.testing.assert_allclose(new[1], [[0.525, 0.475], [0.525, 0.475]])
    same = per_state_belief_update(beliefs, [0.5, 0.5], {1: 0}, IDENTITY, 0.0)
    np.testing.assert_allclose(same[1], beliefs[1])


@settings(max_examples=200, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), alpha=st.floats(0.0, 1.0))
def test_responsibility_weights_sum_to_alpha(seed, alpha):
    """With an identity filter every row moves by step * (e_obs - row); the
    steps, recovered per state, add up to alpha."""
    rng = np.random.default_rng(seed)
    s = 5
    beta = rng.dirichlet(np.ones(s))
    table = np.full((s, 3), 1 / 3)
    new = per_state_belief_update({1: table}, beta, {1: 2}, IDENTITY, alpha)[1]
    steps = (new[:, 2] - 1 / 3) / (2 / 3)
    assert steps.sum() == pytest.approx(alpha, abs=1e-5)
