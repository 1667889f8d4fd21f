"""Experiment orchestration: configs, training runs, parameter sweeps.

Every run is fully determined by (config, seed): per-role random streams
are derived from the master seed with fixed labels, evaluation episodes
use their own derived streams so adding or removing them never perturbs
training randomness, and sweep cells are independent, so results do not
depend on the parallelism level.

Config files are INI-style text (flat key/value under nested sections);
unknown sections or keys are errors.  Metrics are written as CSV with
the fixed header ``cell_id,seed,step,agent,return,metric_name,
metric_value,epsilon,loss``.
"""

from __future__ import annotations

import configparser
import csv
import importlib.resources
import itertools
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

from .engine import GridMap, OBS_COLS, OBS_ROWS, derive_rng, load_map
from .games import (
    DEFAULT_EPISODE_LENGTH,
    EpisodeLog,
    GatheringEnv,
    GatheringParams,
    WolfpackEnv,
    WolfpackParams,
    beam_use_rate,
    wolves_per_capture,
)
from .learner import (
    EpsilonSchedule,
    EvalPolicy,
    LearnerConfig,
    QLearner,
    Transition,
    epsilon_at,
    save_policy,
)

OBS_DIM = 3 * OBS_ROWS * OBS_COLS

METRICS_HEADER = (
    "cell_id", "seed", "step", "agent", "return",
    "metric_name", "metric_value", "epsilon", "loss",
)


class ConfigError(Exception):
    pass


@dataclass(frozen=True)
class AgentSettings:
    """Per-agent learner knobs as they appear in config files."""

    hidden: tuple[int, ...] = (32, 32)
    learning_rate: float = 1e-4
    gamma: float = 0.99
    minibatch_size: int = 32
    updates_per_step: int = 1
    update_period: int = 1
    min_replay: int = 1000
    buffer_capacity: int = 100_000
    use_target_network: bool = False
    target_sync_interval: int = 1000
    eps_start: float = 1.0
    eps_end: float = 0.1
    eps_decay_steps: int | None = None   # None: half of total_steps

    def learner_config(self) -> LearnerConfig:
        return LearnerConfig(
            gamma=self.gamma,
            learning_rate=self.learning_rate,
            minibatch_size=self.minibatch_size,
            updates_per_step=self.updates_per_step,
            update_period=self.update_period,
            min_replay=self.min_replay,
            use_target_network=self.use_target_network,
            target_sync_interval=self.target_sync_interval,
        )

    def schedule(self, total_steps: int) -> EpsilonSchedule:
        decay = self.eps_decay_steps if self.eps_decay_steps is not None else max(1, total_steps // 2)
        return EpsilonSchedule(self.eps_start, self.eps_end, decay)


@dataclass(frozen=True)
class ExperimentConfig:
    game: str = "gathering"
    map_path: str = "builtin:gathering_default"
    total_steps: int = 10_000
    seed: int = 0
    episode_length: int = DEFAULT_EPISODE_LENGTH
    eval_interval: int = 10_000
    eval_epsilon: float = 0.05
    metrics_path: str | None = None
    checkpoint_dir: str | None = None
    checkpoint_interval: int = 0     # frames between mid-run checkpoints; 0 = final only
    cell_id: str = "base"
    gathering: GatheringParams = field(default_factory=GatheringParams)
    wolfpack: WolfpackParams = field(default_factory=WolfpackParams)
    agents: tuple[AgentSettings, AgentSettings] = (AgentSettings(), AgentSettings())

    def validate(self) -> None:
        if self.game not in ("gathering", "wolfpack"):
            raise ConfigError(f"unknown game {self.game!r}")
        if self.seed is None:
            raise ConfigError("seed is mandatory; wall-clock seeding is not supported")
        if self.total_steps < 1 or self.episode_length < 1:
            raise ConfigError("total_steps and episode_length must be >= 1")
        if self.total_steps % self.episode_length != 0:
            raise ConfigError(
                f"total_steps ({self.total_steps}) must be a multiple of "
                f"episode_length ({self.episode_length})"
            )
        if self.eval_interval < 1:
            raise ConfigError("eval_interval must be >= 1")
        resolve_map(self.map_path)   # must be resolvable at load time


@dataclass(frozen=True)
class MetricsRow:
    cell_id: str
    seed: int
    step: int
    agent: int
    ret: float
    metric_name: str
    metric_value: float | None
    epsilon: float
    loss: float | None

    def as_csv(self) -> list[str]:
        return [
            self.cell_id,
            str(self.seed),
            str(self.step),
            str(self.agent),
            _fmt(self.ret),
            self.metric_name,
            _fmt(self.metric_value),
            _fmt(self.epsilon),
            _fmt(self.loss),
        ]

    def sort_key(self):
        return (self.cell_id, self.seed, self.step, self.agent)


def _fmt(value) -> str:
    # repr gives the shortest round-trip decimal form, identical across
    # hosts, which keeps metrics files byte-reproducible.
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)
    return str(value)


def write_metrics_csv(rows, path) -> None:
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(METRICS_HEADER)
        for row in rows:
            writer.writerow(row.as_csv())


def read_metrics_csv(path) -> list[MetricsRow]:
    rows = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        for rec in reader:
            rows.append(
                MetricsRow(
                    cell_id=rec["cell_id"],
                    seed=int(rec["seed"]),
                    step=int(rec["step"]),
                    agent=int(rec["agent"]),
                    ret=float(rec["return"]),
                    metric_name=rec["metric_name"],
                    metric_value=float(rec["metric_value"]) if rec["metric_value"] else None,
                    epsilon=float(rec["epsilon"]),
                    loss=float(rec["loss"]) if rec["loss"] else None,
                )
            )
    return rows


def resolve_map(map_path: str) -> GridMap:
    """Load a map from a file path or a ``builtin:<name>`` reference."""
    if map_path.startswith("builtin:"):
        name = map_path.split(":", 1)[1]
        resource = importlib.resources.files("ssdlab") / "maps" / f"{name}.txt"
        if not resource.is_file():
            raise ConfigError(f"no builtin map named {name!r}")
        return load_map(resource.read_text())
    if not os.path.isfile(map_path):
        raise ConfigError(f"map file not found: {map_path}")
    with open(map_path) as fh:
        return load_map(fh.read())


def build_env(cfg: ExperimentConfig, rng):
    grid = resolve_map(cfg.map_path)
    if cfg.game == "gathering":
        return GatheringEnv(grid, cfg.gathering, rng=rng, episode_length=cfg.episode_length)
    return WolfpackEnv(grid, cfg.wolfpack, rng=rng, episode_length=cfg.episode_length)


class ScriptedPolicy:
    """Fixed-action (or callable-driven) stub for tests and replays."""

    needs_obs = False

    def __init__(self, action=None, fn=None):
        if (action is None) == (fn is None):
            raise ValueError("give exactly one of action or fn")
        self._action = action
        self._fn = fn

    def act(self, obs, epsilon: float):
        return self._action if self._fn is None else self._fn(obs)


class RandomPolicy:
    """Uniform-random actions from an owned generator."""

    needs_obs = False

    def __init__(self, rng, n_actions: int = 8):
        self.rng = rng
        self.n_actions = n_actions

    def act(self, obs, epsilon: float):
        return int(self.rng.integers(self.n_actions))


def run_episode(env, agents, mode: str = "eval", *, eval_epsilon: float = 0.05,
                global_step: int = 0) -> EpisodeLog:
    """Play one full episode, resetting the env first.

    In train mode each agent's epsilon follows its own schedule from
    ``global_step``, and every frame feeds one transition per agent into
    that agent's buffer (removed agents see an all-background view, so
    the bookkeeping never skips a frame).  In eval mode epsilon is fixed
    at ``eval_epsilon`` and nothing is stored.
    """
    if mode not in ("train", "eval"):
        raise ValueError(f"mode must be 'train' or 'eval', got {mode!r}")
    train = mode == "train"
    n = env.n_players
    if len(agents) != n:
        raise ValueError(f"{env.game_name} needs {n} agents, got {len(agents)}")
    need_obs = train or any(getattr(a, "needs_obs", True) for a in agents)

    env.reset()
    log = EpisodeLog(n_agents=n)
    obs = env.observations() if need_obs else [None] * n
    length = env.episode_length
    for t in range(length):
        if train:
            eps = [epsilon_at(a.schedule, global_step + t) for a in agents]
        else:
            eps = [eval_epsilon] * n
        actions = [int(agents[i].act(obs[i], eps[i])) for i in range(n)]
        result = env.step(actions, want_obs=need_obs)
        log.append(actions, result.rewards, result.active, result.events)
        if train:
            terminal = t == length - 1
            for i in range(n):
                agents[i].observe(
                    Transition(obs[i], actions[i], result.rewards[i], result.obs[i], terminal)
                )
        obs = result.obs if need_obs else obs
    return log


@dataclass
class TrainResult:
    config: ExperimentConfig
    agents: list[QLearner]
    rows: list[MetricsRow]
    checkpoint_paths: list[str]


def train(cfg: ExperimentConfig) -> TrainResult:
    """Run a full training experiment: episodes until ``total_steps``
    frames elapse, eval-mode metrics at every ``eval_interval``, and
    checkpoints at the configured cadence plus at the end."""
    cfg.validate()
    env = build_env(cfg, rng=derive_rng(cfg.seed, "env"))
    agents = [
        QLearner(
            input_dim=OBS_DIM,
            hidden=settings.hidden,
            cfg=settings.learner_config(),
            schedule=settings.schedule(cfg.total_steps),
            buffer_capacity=settings.buffer_capacity,
            rng=derive_rng(cfg.seed, "agent", i),
        )
        for i, settings in enumerate(cfg.agents)
    ]

    rows: list[MetricsRow] = []
    checkpoints: list[str] = []
    eval_points = 0
    last_eval_step = -1
    last_ckpt_step = 0

    def evaluate(step: int) -> None:
        nonlocal eval_points, last_eval_step
        eval_env = build_env(cfg, rng=derive_rng(cfg.seed, "eval-env", eval_points))
        policies = [
            EvalPolicy(agents[i].net, rng=derive_rng(cfg.seed, "eval-agent", i, eval_points))
            for i in range(len(agents))
        ]
        log = run_episode(eval_env, policies, "eval", eval_epsilon=cfg.eval_epsilon)
        losses = [loss for a in agents for loss in a.take_losses()]
        mean_loss = sum(losses) / len(losses) if losses else None
        for i in range(len(agents)):
            if cfg.game == "gathering":
                metric = beam_use_rate(log, i)
            else:
                metric = wolves_per_capture(log)
            rows.append(
                MetricsRow(
                    cell_id=cfg.cell_id,
                    seed=cfg.seed,
                    step=step,
                    agent=i,
                    ret=log.undiscounted_return(i),
                    metric_name=eval_env.metric_name,
                    metric_value=metric,
                    epsilon=agents[i].epsilon(step),
                    loss=mean_loss,
                )
            )
        eval_points += 1
        last_eval_step = step

    def checkpoint(step: int, tag: str) -> None:
        os.makedirs(cfg.checkpoint_dir, exist_ok=True)
        for i, agent in enumerate(agents):
            path = os.path.join(cfg.checkpoint_dir, f"agent{i}_{tag}.qnet")
            save_policy(agent.net, path, step=step)
            checkpoints.append(path)

    n_episodes = cfg.total_steps // cfg.episode_length
    for episode in range(n_episodes):
        start = episode * cfg.episode_length
        run_episode(env, agents, "train", global_step=start)
        step = start + cfg.episode_length
        if step // cfg.eval_interval > start // cfg.eval_interval:
            evaluate(step)
        if (
            cfg.checkpoint_dir
            and cfg.checkpoint_interval > 0
            and step - last_ckpt_step >= cfg.checkpoint_interval
            and step < cfg.total_steps
        ):
            checkpoint(step, f"step{step}")
            last_ckpt_step = step

    if last_eval_step != cfg.total_steps:
        evaluate(cfg.total_steps)
    if cfg.checkpoint_dir:
        checkpoint(cfg.total_steps, "final")
    if cfg.metrics_path:
        write_metrics_csv(rows, cfg.metrics_path)
    return TrainResult(config=cfg, agents=agents, rows=rows, checkpoint_paths=checkpoints)


# --- sweeps ---------------------------------------------------------------

@dataclass(frozen=True)
class SweepSpec:
    """Cross-product sweep over named config fields.

    ``axes`` maps dotted field paths (``gathering.n_apple``,
    ``agent.gamma``, ``experiment.total_steps``, ...) to value lists;
    cells are enumerated in declaration order, each run with seeds
    ``base.seed .. base.seed + seeds_per_cell - 1``.
    """

    base: ExperimentConfig
    axes: dict[str, list]
    seeds_per_cell: int = 3
    out_dir: str | None = None


@dataclass(frozen=True)
class CellFailure:
    cell_id: str
    seed: int
    error: str


@dataclass
class SweepResult:
    rows: list[MetricsRow]
    failures: list[CellFailure]


def _sanitize(cell_id: str) -> str:
    return "".join(c if c.isalnum() or c in "=._-" else "_" for c in cell_id)


def enumerate_runs(spec: SweepSpec) -> list[ExperimentConfig]:
    """Deterministic (cell, seed) enumeration of the sweep's runs."""
    paths = list(spec.axes.keys())
    combos = itertools.product(*(spec.axes[p] for p in paths))
    runs = []
    for combo in combos:
        cfg = spec.base
        for path, value in zip(paths, combo):
            cfg = apply_override(cfg, path, value)
        cell_id = ";".join(f"{p}={v}" for p, v in zip(paths, combo)) or "base"
        for k in range(spec.seeds_per_cell):
            seed = spec.base.seed + k
            if spec.out_dir:
                run_dir = os.path.join(spec.out_dir, _sanitize(cell_id), f"seed{seed}")
                metrics = os.path.join(run_dir, "metrics.csv")
                ckpts = os.path.join(run_dir, "checkpoints")
            else:
                metrics = None
                ckpts = None
            runs.append(
                replace(cfg, seed=seed, cell_id=cell_id, metrics_path=metrics, checkpoint_dir=ckpts)
            )
    return runs


def _run_cell(cfg: ExperimentConfig):
    try:
        result = train(cfg)
        return ("ok", cfg.cell_id, cfg.seed, result.rows)
    except Exception as exc:   # isolate failures; the sweep reports them
        return ("fail", cfg.cell_id, cfg.seed, f"{type(exc).__name__}: {exc}")


def sweep(spec: SweepSpec, parallelism: int = 1) -> SweepResult:
    """Run every (cell, seed) independently and aggregate the metrics.

    Failed cells are reported without aborting the rest; the aggregated
    table is sorted, so it is identical at any parallelism level.
    """
    runs = enumerate_runs(spec)
    if parallelism <= 1:
        outcomes = [_run_cell(cfg) for cfg in runs]
    else:
        with ProcessPoolExecutor(max_workers=parallelism) as pool:
            outcomes = list(pool.map(_run_cell, runs))

    rows: list[MetricsRow] = []
    failures: list[CellFailure] = []
    for outcome in outcomes:
        if outcome[0] == "ok":
            rows.extend(outcome[3])
        else:
            failures.append(CellFailure(outcome[1], outcome[2], outcome[3]))
    rows.sort(key=MetricsRow.sort_key)
    if spec.out_dir:
        write_metrics_csv(rows, os.path.join(spec.out_dir, "results.csv"))
    return SweepResult(rows=rows, failures=failures)


# --- config files ---------------------------------------------------------

def _parse_bool(text: str) -> bool:
    lowered = text.strip().lower()
    if lowered in ("true", "yes", "on", "1"):
        return True
    if lowered in ("false", "no", "off", "0"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _parse_hidden(text: str) -> tuple[int, ...]:
    parts = [p.strip() for p in str(text).split(",") if p.strip()]
    return tuple(int(p) for p in parts)


# (config key -> (dataclass field, parser)) per section kind
_EXPERIMENT_KEYS = {
    "game": ("game", str),
    "map": ("map_path", str),
    "total_steps": ("total_steps", int),
    "seed": ("seed", int),
    "episode_length": ("episode_length", int),
    "eval_interval": ("eval_interval", int),
    "eval_epsilon": ("eval_epsilon", float),
    "metrics": ("metrics_path", str),
    "checkpoint_dir": ("checkpoint_dir", str),
    "checkpoint_interval": ("checkpoint_interval", int),
}
_GATHERING_KEYS = {"n_apple": ("n_apple", int), "n_tagged": ("n_tagged", int)}
_WOLFPACK_KEYS = {
    "capture_radius": ("capture_radius", int),
    "r_lone": ("r_lone", float),
    "r_team": ("r_team", float),
}
_AGENT_KEYS = {
    "hidden": ("hidden", _parse_hidden),
    "learning_rate": ("learning_rate", float),
    "gamma": ("gamma", float),
    "minibatch_size": ("minibatch_size", int),
    "updates_per_step": ("updates_per_step", int),
    "update_period": ("update_period", int),
    "min_replay": ("min_replay", int),
    "buffer_capacity": ("buffer_capacity", int),
    "use_target_network": ("use_target_network", _parse_bool),
    "target_sync_interval": ("target_sync_interval", int),
    "eps_start": ("eps_start", float),
    "eps_end": ("eps_end", float),
    "eps_decay_steps": ("eps_decay_steps", int),
}
_SECTION_KEYS = {
    "experiment": _EXPERIMENT_KEYS,
    "gathering": _GATHERING_KEYS,
    "wolfpack": _WOLFPACK_KEYS,
    "agent": _AGENT_KEYS,
    "agent0": _AGENT_KEYS,
    "agent1": _AGENT_KEYS,
}


def _section_values(parser, section, table, path):
    values = {}
    for key, raw in parser.items(section):
        if key not in table:
            raise ConfigError(f"{path}: unknown key {key!r} in [{section}]")
        field_name, convert = table[key]
        try:
            values[field_name] = convert(raw)
        except ValueError as exc:
            raise ConfigError(f"{path}: bad value for {section}.{key}: {exc}") from exc
    return values


def parse_config(path) -> ExperimentConfig:
    """Read an experiment config file; unknown sections and keys are errors."""
    if not os.path.isfile(path):
        raise ConfigError(f"config file not found: {path}")
    parser = configparser.ConfigParser(inline_comment_prefixes=("#",), interpolation=None)
    try:
        parser.read(path)
    except configparser.Error as exc:
        raise ConfigError(f"{path}: {exc}") from exc

    known = set(_SECTION_KEYS) | {"sweep", "sweep.axes"}
    for section in parser.sections():
        if section not in known:
            raise ConfigError(f"{path}: unknown section [{section}]")
    if not parser.has_section("experiment"):
        raise ConfigError(f"{path}: missing [experiment] section")
    for required in ("game", "map", "total_steps", "seed"):
        if not parser.has_option("experiment", required):
            raise ConfigError(f"{path}: [experiment] must set {required}")

    cfg = ExperimentConfig(**_section_values(parser, "experiment", _EXPERIMENT_KEYS, path))
    if parser.has_section("gathering"):
        cfg = replace(cfg, gathering=GatheringParams(**_section_values(parser, "gathering", _GATHERING_KEYS, path)))
    if parser.has_section("wolfpack"):
        cfg = replace(cfg, wolfpack=WolfpackParams(**_section_values(parser, "wolfpack", _WOLFPACK_KEYS, path)))

    shared = _section_values(parser, "agent", _AGENT_KEYS, path) if parser.has_section("agent") else {}
    agent_settings = []
    for i in range(2):
        section = f"agent{i}"
        specific = _section_values(parser, section, _AGENT_KEYS, path) if parser.has_section(section) else {}
        agent_settings.append(AgentSettings(**{**shared, **specific}))
    cfg = replace(cfg, agents=(agent_settings[0], agent_settings[1]))
    cfg.validate()
    return cfg


def parse_sweep(path) -> SweepSpec:
    """Read a sweep spec: the experiment config plus [sweep]/[sweep.axes]."""
    base = parse_config(path)
    parser = configparser.ConfigParser(inline_comment_prefixes=("#",), interpolation=None)
    parser.read(path)
    seeds_per_cell = 3
    out_dir = None
    if parser.has_section("sweep"):
        for key, raw in parser.items("sweep"):
            if key == "seeds_per_cell":
                seeds_per_cell = int(raw)
            elif key == "out_dir":
                out_dir = raw
            else:
                raise ConfigError(f"{path}: unknown key {key!r} in [sweep]")
    axes: dict[str, list] = {}
    if parser.has_section("sweep.axes"):
        for dotted, raw in parser.items("sweep.axes"):
            convert = _axis_parser(dotted, path)
            values = [convert(v.strip()) for v in raw.split(",") if v.strip()]
            if not values:
                raise ConfigError(f"{path}: axis {dotted} has no values")
            axes[dotted] = values
    return SweepSpec(base=base, axes=axes, seeds_per_cell=seeds_per_cell, out_dir=out_dir)


def _split_path(dotted: str) -> tuple[str, str]:
    if "." not in dotted:
        raise ConfigError(f"axis path {dotted!r} must look like section.key")
    section, key = dotted.split(".", 1)
    if section not in _SECTION_KEYS:
        raise ConfigError(f"axis path {dotted!r}: unknown section {section!r}")
    if key not in _SECTION_KEYS[section]:
        raise ConfigError(f"axis path {dotted!r}: unknown key {key!r}")
    return section, key


def _axis_parser(dotted: str, path: str):
    section, key = _split_path(dotted)
    _, convert = _SECTION_KEYS[section][key]
    # hidden widths inside an axis value list use ':' between widths
    if convert is _parse_hidden:
        return lambda text: tuple(int(p) for p in text.split(":") if p)
    return convert


def apply_override(cfg: ExperimentConfig, dotted: str, value) -> ExperimentConfig:
    """Return a config with one dotted field replaced.

    ``agent.<key>`` sets both agents; ``agent0.<key>``/``agent1.<key>``
    one of them.  String values are coerced with the config-file parsers.
    """
    section, key = _split_path(dotted)
    field_name, convert = _SECTION_KEYS[section][key]
    if isinstance(value, str):
        value = convert(value)

    if section == "experiment":
        return replace(cfg, **{field_name: value})
    if section == "gathering":
        return replace(cfg, gathering=replace(cfg.gathering, **{field_name: value}))
    if section == "wolfpack":
        return replace(cfg, wolfpack=replace(cfg.wolfpack, **{field_name: value}))
    a0, a1 = cfg.agents
    if section in ("agent", "agent0"):
        a0 = replace(a0, **{field_name: value})
    if section in ("agent", "agent1"):
        a1 = replace(a1, **{field_name: value})
    return replace(cfg, agents=(a0, a1))
