import pytest

from ssdlab.harness import (
    AgentSettings,
    ConfigError,
    ExperimentConfig,
    apply_override,
    parse_config,
    parse_sweep,
    resolve_map,
)

GOOD = """\
[experiment]
game = gathering
map = builtin:gathering_small
total_steps = 2000
episode_length = 500
seed = 7
eval_interval = 1000
eval_epsilon = 0.05

[gathering]
n_apple = 3      # inline comments allowed
n_tagged = 20

[agent]
hidden = 16,16
learning_rate = 0.002
min_replay = 100

[agent1]
hidden = 8
"""


def write(tmp_path, text, name="exp.cfg"):
    path = tmp_path / name
    path.write_text(text)
    return path


def test_parse_good_config(tmp_path):
    cfg = parse_config(write(tmp_path, GOOD))
    assert cfg.game == "gathering"
    assert cfg.total_steps == 2000
    assert cfg.seed == 7
    assert cfg.gathering.n_apple == 3
    assert cfg.agents[0].hidden == (16, 16)
    assert cfg.agents[1].hidden == (8,)          # agent1 override
    assert cfg.agents[1].learning_rate == 0.002  # shared value inherited


def test_missing_file_is_config_error(tmp_path):
    with pytest.raises(ConfigError):
        parse_config(tmp_path / "nope.cfg")


def test_unknown_key_rejected(tmp_path):
    text = GOOD + "\n[experiment]\nfrobnicate = 1\n"
    bad = GOOD.replace("n_apple = 3", "n_apples = 3")
    with pytest.raises(ConfigError) as err:
        parse_config(write(tmp_path, bad))
    assert "n_apples" in str(err.value)


def test_unknown_section_rejected(tmp_path):
    with pytest.raises(ConfigError):
        parse_config(write(tmp_path, GOOD + "\n[mystery]\nx = 1\n"))


def test_required_keys_enforced(tmp_path):
    missing_seed = GOOD.replace("seed = 7\n", "")
    with pytest.raises(ConfigError) as err:
        parse_config(write(tmp_path, missing_seed))
    assert "seed" in str(err.value)


def test_total_steps_must_tile_episodes(tmp_path):
    bad = GOOD.replace("total_steps = 2000", "total_steps = 1700")
    with pytest.raises(ConfigError):
        parse_config(write(tmp_path, bad))


def test_unresolvable_map_rejected(tmp_path):
    bad = GOOD.replace("builtin:gathering_small", "does/not/exist.txt")
    with pytest.raises(ConfigError):
        parse_config(write(tmp_path, bad))
    bad = GOOD.replace("builtin:gathering_small", "builtin:alcatraz")
    with pytest.raises(ConfigError):
        parse_config(write(tmp_path, bad))


def test_map_from_file(tmp_path):
    map_path = tmp_path / "tiny.txt"
    map_path.write_text("#####\n#1A2#\n#####\n")
    grid = resolve_map(str(map_path))
    assert grid.apple_sites == ((2, 1),)


def test_parse_sweep(tmp_path):
    text = GOOD + """
[sweep]
seeds_per_cell = 2

[sweep.axes]
gathering.n_apple = 2, 40
agent.gamma = 0.75, 0.99
"""
    spec = parse_sweep(write(tmp_path, text))
    assert spec.seeds_per_cell == 2
    assert spec.axes == {"gathering.n_apple": [2, 40], "agent.gamma": [0.75, 0.99]}


def test_sweep_axis_unknown_field(tmp_path):
    text = GOOD + "\n[sweep.axes]\ngathering.n_apples = 1, 2\n"
    with pytest.raises(ConfigError):
        parse_sweep(write(tmp_path, text))


def test_apply_override_paths():
    cfg = ExperimentConfig()
    cfg = apply_override(cfg, "gathering.n_apple", 9)
    assert cfg.gathering.n_apple == 9
    cfg = apply_override(cfg, "agent.gamma", 0.5)
    assert cfg.agents[0].gamma == 0.5 and cfg.agents[1].gamma == 0.5
    cfg = apply_override(cfg, "agent0.hidden", "4,4")
    assert cfg.agents[0].hidden == (4, 4)
    assert cfg.agents[1].hidden == (32, 32)
    cfg = apply_override(cfg, "experiment.total_steps", "4000")
    assert cfg.total_steps == 4000
    with pytest.raises(ConfigError):
        apply_override(cfg, "experiment.nope", 1)


def test_validate_checks_game_name():
    cfg = ExperimentConfig(game="chess")
    with pytest.raises(ConfigError):
        cfg.validate()
