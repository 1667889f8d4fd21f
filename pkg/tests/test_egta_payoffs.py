"""Payoff estimation against brute-force playouts.

The fixture game is symmetric: each player has a private apple three
steps ahead of its spawn, so a forward-walking policy scores exactly 1
and a standing policy exactly 0, for either player ordering.
"""

import numpy as np
import pytest

from ssdlab.egta import EmptyPool, estimate_payoffs
from ssdlab.engine import Action, derive_rng, load_map
from ssdlab.games import GatheringEnv, GatheringParams
from ssdlab.harness import RandomPolicy, ScriptedPolicy

SYMMETRIC_MAP = "#######\n#A...A#\n#.....#\n#1...2#\n#######"
EPISODE = 30

STAND = ScriptedPolicy(action=Action.STAND_STILL)
WALK = ScriptedPolicy(action=Action.STEP_FORWARD)


def make_env(index: int) -> GatheringEnv:
    grid = load_map(SYMMETRIC_MAP)
    return GatheringEnv(grid, GatheringParams(n_apple=5, n_tagged=5),
                        rng=derive_rng(1000, "egta-env", index), episode_length=EPISODE)


def brute_force_returns(p0, p1) -> tuple[float, float]:
    """Play the pairing once by stepping the env directly."""
    env = make_env(0)
    env.reset()
    totals = [0.0, 0.0]
    for _ in range(EPISODE):
        actions = [int(p0.act(None, 0.0)), int(p1.act(None, 0.0))]
        result = env.step(actions, want_obs=False)
        totals[0] += result.rewards[0]
        totals[1] += result.rewards[1]
    return totals[0], totals[1]


def test_fixture_game_is_symmetric_and_nontrivial():
    assert brute_force_returns(WALK, WALK) == (1.0, 1.0)
    assert brute_force_returns(STAND, STAND) == (0.0, 0.0)
    assert brute_force_returns(STAND, WALK) == (0.0, 1.0)
    assert brute_force_returns(WALK, STAND) == (1.0, 0.0)


def test_deterministic_pools_reproduce_exact_playouts():
    matrix = estimate_payoffs([STAND], [WALK], make_env, rng=derive_rng(0, "egta"))
    cc = brute_force_returns(STAND, STAND)
    dd = brute_force_returns(WALK, WALK)
    cd = brute_force_returns(STAND, WALK)
    assert matrix.R.mean == sum(cc) / 2
    assert matrix.P.mean == sum(dd) / 2
    assert matrix.S.mean == cd[0]
    assert matrix.T.mean == cd[1]
    for cell in (matrix.R, matrix.P, matrix.S, matrix.T):
        assert cell.se == 0.0
    # one round gives every cell two samples: the diagonals pool both
    # players' returns, the off-diagonals pool both orderings
    assert (matrix.R.n, matrix.P.n, matrix.S.n, matrix.T.n) == (2, 2, 2, 2)
    assert not matrix.budget_exhausted


def test_identical_pools_collapse_r_p_and_s_t():
    matrix = estimate_payoffs([WALK], [WALK], make_env, rng=derive_rng(1, "egta"))
    assert matrix.R.mean == matrix.P.mean
    assert matrix.S.mean == matrix.T.mean


def test_infinite_tolerance_stops_after_one_round():
    # noisy pools never reach SE 0, but an infinite tolerance accepts
    # the minimum single round per cell
    pool_c = [RandomPolicy(derive_rng(2, "n", 0))]
    pool_d = [RandomPolicy(derive_rng(2, "n", 1))]
    matrix = estimate_payoffs(pool_c, pool_d, make_env,
                              rng=derive_rng(2, "egta"), se_tol=float("inf"))
    assert (matrix.R.n, matrix.P.n, matrix.S.n, matrix.T.n) == (2, 2, 2, 2)


def test_budget_flag_when_noise_never_converges():
    noisy_c = RandomPolicy(derive_rng(3, "noise", 0))
    noisy_d = RandomPolicy(derive_rng(3, "noise", 1))
    matrix = estimate_payoffs([noisy_c], [noisy_d], make_env,
                              rng=derive_rng(3, "egta"), se_tol=0.0,
                              max_episodes_per_cell=4)
    assert matrix.budget_exhausted
    assert matrix.R.n == 8


def test_empty_pool_rejected():
    with pytest.raises(EmptyPool):
        estimate_payoffs([], [WALK], make_env, rng=derive_rng(4, "egta"))


def test_label_orderings_pool_together():
    # asymmetric policies: ordering changes which PLAYER scores, but the
    # cooperator's payoff lands in S either way
    matrix = estimate_payoffs([STAND], [WALK], make_env,
                              rng=derive_rng(5, "egta"), se_tol=float("inf"))
    assert matrix.S.mean == 0.0
    assert matrix.T.mean == 1.0


def test_se_shrinks_with_more_samples_on_noisy_pools():
    def run(max_eps):
        return estimate_payoffs(
            [RandomPolicy(derive_rng(7, "n", 0))], [RandomPolicy(derive_rng(7, "n", 1))],
            make_env, rng=derive_rng(7, "egta"), se_tol=0.0, max_episodes_per_cell=max_eps,
        )

    small, large = run(4), run(40)
    assert large.R.se <= small.R.se
