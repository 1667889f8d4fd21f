"""Desk-scale gridworld lab for sequential social dilemmas.

The package hosts a deterministic grid-world engine, the Gathering and
Wolfpack games, independent Q-learning agents, an experiment/sweep
harness, and empirical payoff-matrix analysis of trained policy pools.
"""

from .engine import (
    Action,
    GridMap,
    Observation,
    Orientation,
    WorldState,
    apply_kinematics,
    cast_beam,
    derive_rng,
    load_map,
    make_world,
    render_observation,
)
from .games import (
    EpisodeLog,
    GatheringEnv,
    GatheringParams,
    WolfpackEnv,
    WolfpackParams,
    beam_use_rate,
    gathering_step,
    lone_wolf_rate,
    prey_policy,
    wolfpack_step,
    wolves_per_capture,
)
from .learner import (
    EpsilonSchedule,
    EvalPolicy,
    LearnerConfig,
    QLearner,
    QNetwork,
    ReplayBuffer,
    Transition,
    act,
    epsilon_at,
    load_policy,
    save_policy,
    td_update,
)
from .harness import (
    AgentSettings,
    ExperimentConfig,
    ScriptedPolicy,
    SweepSpec,
    parse_config,
    parse_sweep,
    run_episode,
    sweep,
    train,
)
from .egta import (
    Classification,
    DilemmaType,
    EmpiricalPayoffMatrix,
    InequalityReport,
    PoolLabel,
    check_ssd_inequalities,
    classify_matrix,
    classify_policy,
    estimate_payoffs,
    percentile_thresholds,
)

__version__ = "0.1.0"
