"""Calibration probe for the two trend experiments (scratch, not shipped)."""

import sys
import time

from ssdlab.engine import derive_rng
from ssdlab.games import GatheringParams, WolfpackParams, beam_use_rate
from ssdlab.harness import AgentSettings, ExperimentConfig, build_env, run_episode, train
from ssdlab.learner import EvalPolicy

STEPS = int(sys.argv[1]) if len(sys.argv) > 1 else 100_000
SEEDS = [0, 1, 2][: int(sys.argv[2]) if len(sys.argv) > 2 else 2]
GAME = sys.argv[3] if len(sys.argv) > 3 else "gathering"

AGENT = AgentSettings(learning_rate=1e-4, update_period=4)


def eval_metric(cfg, result, n_eps=5):
    vals = []
    captures = wolves_sum = 0
    for k in range(n_eps):
        env = build_env(cfg, rng=derive_rng(cfg.seed, "trend-eval-env", k))
        policies = [EvalPolicy(result.agents[i].net, rng=derive_rng(cfg.seed, "trend-eval", i, k))
                    for i in range(2)]
        log = run_episode(env, policies, "eval", eval_epsilon=0.05)
        if cfg.game == "gathering":
            vals += [beam_use_rate(log, 0), beam_use_rate(log, 1)]
        else:
            for frame in log.events:
                for ev in frame:
                    if ev[0] == "capture":
                        captures += 1
                        wolves_sum += ev[1]
    if cfg.game == "gathering":
        return sum(vals) / len(vals), None
    return (wolves_sum / captures if captures else None), captures


def run(game, seed, **knobs):
    if game == "gathering":
        params = dict(gathering=GatheringParams(**knobs))
        map_path = "builtin:gathering_small"
    else:
        params = dict(wolfpack=WolfpackParams(**knobs))
        map_path = "builtin:wolfpack_small"
    cfg = ExperimentConfig(
        game=game, map_path=map_path, total_steps=STEPS, episode_length=1000,
        eval_interval=10**9, seed=seed, agents=(AGENT, AGENT), **params,
    )
    t0 = time.perf_counter()
    result = train(cfg)
    metric, extra = eval_metric(cfg, result, n_eps=5 if game == "gathering" else 10)
    ret = sum(result.rows[i].ret for i in range(2)) / 2
    print(f"{game} seed={seed} {knobs}: metric={metric} captures={extra} "
          f"final_return={ret:.1f} ({time.perf_counter()-t0:.0f}s)", flush=True)
    return metric


if GAME == "gathering":
    for seed in SEEDS:
        abundant = run("gathering", seed, n_apple=1, n_tagged=150)
        scarce = run("gathering", seed, n_apple=200, n_tagged=150)
        print(f"  -> seed {seed}: scarce {scarce:.4f} vs abundant {abundant:.4f} "
              f"{'TREND OK' if scarce > abundant else 'TREND REVERSED'}", flush=True)
else:
    for seed in SEEDS:
        low = run("wolfpack", seed, capture_radius=4, r_lone=1.0, r_team=1.0)
        high = run("wolfpack", seed, capture_radius=4, r_lone=1.0, r_team=8.0)
        ok = (low is not None and high is not None and high > low)
        print(f"  -> seed {seed}: high-bonus {high} vs low-bonus {low} "
              f"{'TREND OK' if ok else 'TREND ISSUE'}", flush=True)
