"""Q-learning on a small deterministic MDP against exact value iteration."""

import numpy as np

from ssdlab.engine import derive_rng
from ssdlab.learner import LearnerConfig, QNetwork, Transition, act, td_update
from oracles import chain_mdp_step, value_iteration

N_STATES = 5
N_ACTIONS = 2
GAMMA = 0.9


def one_hot(s: int) -> np.ndarray:
    v = np.zeros(N_STATES)
    v[s] = 1.0
    return v


def run_q_learning(steps=50_000, epsilon=0.2, seed=0) -> QNetwork:
    """Online bias-free linear Q-learning with a decaying step size."""
    net = QNetwork([N_STATES, N_ACTIONS], bias=False)
    cfg = LearnerConfig(gamma=GAMMA, learning_rate=0.25, min_replay=1, minibatch_size=1)
    rng = derive_rng(seed, "mdp")
    s = 0
    for t in range(steps):
        if t % 10 == 0:
            s = int(rng.integers(N_STATES))   # exploring restarts
        a = int(act(net, one_hot(s), epsilon, rng))
        s2, r = chain_mdp_step(s, a)
        # alpha decays 0.5 -> 0.1; a high floor is fine on a noise-free
        # MDP and lets rarely visited pairs track their settling targets.
        # td_update's tabular-equivalent step size is 2 * lr.
        alpha = max(0.1, 0.5 * (1.0 - t / steps))
        cfg.learning_rate = alpha / 2.0
        td_update(net, [Transition(one_hot(s), a, r, one_hot(s2), False)], cfg)
        s = s2
    return net


def test_q_learning_reaches_value_iteration_fixed_point():
    q_star = value_iteration(N_STATES, N_ACTIONS, chain_mdp_step, GAMMA)
    net = run_q_learning()
    learned = net.weights[0]   # [state, action] table under one-hot inputs
    assert np.max(np.abs(learned - q_star)) < 1e-2


def test_value_iteration_oracle_sanity():
    q_star = value_iteration(N_STATES, N_ACTIONS, chain_mdp_step, GAMMA)
    # stepping right is optimal everywhere on the chain
    assert np.all(q_star[:, 1] >= q_star[:, 0])
    # at the absorbing end the optimal value is the geometric sum of 1s
    assert abs(q_star[4, 1] - 1.0 / (1.0 - GAMMA)) < 1e-6
