import numpy as np
import pytest

from ssdlab.cli import SchemaMismatch, emit_figure_data, main
from ssdlab.engine import derive_rng
from ssdlab.harness import MetricsRow
from ssdlab.learner import QNetwork, save_policy

CONFIG = """\
[experiment]
game = gathering
map = builtin:gathering_small
total_steps = 200
episode_length = 100
seed = 5
eval_interval = 1000

[gathering]
n_apple = 3
n_tagged = 10

[agent]
hidden = 4
min_replay = 40
minibatch_size = 4
buffer_capacity = 500
eps_decay_steps = 100
"""


def write_config(tmp_path, text=CONFIG, name="exp.cfg"):
    path = tmp_path / name
    path.write_text(text)
    return str(path)


def run_cli(capsys, *argv):
    code = main(list(argv))
    captured = capsys.readouterr()
    return code, captured.out, captured.err


class TestExitCodes:
    def test_validate_good_config(self, tmp_path, capsys):
        code, out, _ = run_cli(capsys, "validate-config", write_config(tmp_path))
        assert code == 0
        assert "ok" in out

    def test_missing_config_is_config_error(self, capsys):
        code, _, err = run_cli(capsys, "train", "--config", "missing.cfg")
        assert code == 2
        assert err

    def test_bad_config_key_is_config_error(self, tmp_path, capsys):
        path = write_config(tmp_path, CONFIG + "\n[experiment]\nbogus = 1\n")
        code, _, err = run_cli(capsys, "validate-config", path)
        assert code == 2

    def test_unknown_command_is_usage_error(self, capsys):
        assert main(["conquer"]) == 1

    def test_unknown_flag_is_usage_error(self, capsys):
        assert main(["classify", "--r", "1", "--p", "0", "--s", "0", "--t", "0", "--zap"]) == 1

    def test_missing_required_flag_is_usage_error(self, capsys):
        assert main(["train"]) == 1

    def test_help_exits_zero(self, capsys):
        assert main(["--help"]) == 0


class TestClassify:
    def test_prisoners_dilemma_line(self, capsys):
        code, out, _ = run_cli(capsys, "classify", "--r", "3", "--p", "1", "--s", "0", "--t", "4")
        assert code == 0
        assert out.strip() == "PrisonersDilemma greed=1 fear=1"

    def test_chicken(self, capsys):
        code, out, _ = run_cli(capsys, "classify", "--r", "3", "--p", "0", "--s", "1", "--t", "4")
        assert out.startswith("Chicken")

    def test_non_dilemma_reports_failures(self, capsys):
        code, out, _ = run_cli(capsys, "classify", "--r", "0", "--p", "0", "--s", "0", "--t", "0")
        assert code == 0
        assert "NotSocialDilemma" in out and "failed=" in out


class TestTrain:
    def test_train_smoke(self, tmp_path, capsys):
        text = CONFIG.replace("eval_interval = 1000", f"eval_interval = 1000\nmetrics = {tmp_path}/m.csv")
        code, out, err = run_cli(capsys, "train", "--config", write_config(tmp_path, text))
        assert code == 0, err
        assert (tmp_path / "m.csv").is_file()
        assert "agent 0" in out


class TestReplay:
    def test_exact_frame_count(self, tmp_path, capsys):
        code, out, _ = run_cli(
            capsys, "replay", "--config", write_config(tmp_path), "--seed", "4", "--frames", "3"
        )
        assert code == 0
        assert out.count("frame ") == 3

    def test_deterministic_output(self, tmp_path, capsys):
        args = ("replay", "--config", write_config(tmp_path), "--seed", "4", "--frames", "8")
        _, out1, _ = run_cli(capsys, *args)
        _, out2, _ = run_cli(capsys, *args)
        assert out1 == out2

    def test_glyphs_come_from_map_alphabet(self, tmp_path, capsys):
        code, out, _ = run_cli(
            capsys, "replay", "--config", write_config(tmp_path), "--seed", "4", "--frames", "2"
        )
        body = "".join(ch for line in out.splitlines() if not line.startswith("frame") for ch in line)
        assert set(body) <= set("#.a12p|-")


class TestEgta:
    def test_end_to_end_with_checkpoints(self, tmp_path, capsys):
        rng = derive_rng(0, "cli-egta")
        for name, metric in (("coop", "0.01"), ("defect", "0.40")):
            net = QNetwork([3 * 16 * 21, 4, 8], rng)
            save_policy(net, tmp_path / f"{name}.qnet")
        manifest = tmp_path / "pools.txt"
        manifest.write_text(
            "# label metric checkpoint\n"
            "C 0.01 coop.qnet\n"
            "D 0.40 defect.qnet\n"
        )
        report = tmp_path / "payoffs.csv"
        scatter = tmp_path / "scatter.csv"
        code, out, err = run_cli(
            capsys, "egta",
            "--config", write_config(tmp_path),
            "--pools", str(manifest),
            "--out", str(report),
            "--scatter-out", str(scatter),
            "--max-episodes", "2",
        )
        assert code == 0, err
        lines = report.read_text().splitlines()
        assert lines[0] == "cell,mean,se,n"
        assert [line.split(",")[0] for line in lines[1:5]] == ["R", "P", "S", "T"]
        assert lines[5].startswith("# fear=")
        assert scatter.read_text().splitlines()[0] == "fear,greed,class"

    def test_bad_manifest_is_config_error(self, tmp_path, capsys):
        manifest = tmp_path / "pools.txt"
        manifest.write_text("X 0.1 nothing.qnet\n")
        code, _, err = run_cli(
            capsys, "egta", "--config", write_config(tmp_path), "--pools", str(manifest)
        )
        assert code in (2, 3)
        assert err


def rows_for(cells, metric=0.5):
    rows = []
    for cell_id in cells:
        for agent in (0, 1):
            rows.append(MetricsRow(cell_id, 0, 100, agent, 1.0, "beam_use_rate", metric, 0.1, None))
    return rows


class TestFigureData:
    def test_heatmap_rows(self, tmp_path):
        cells = [f"a.x={x};b.y={y}" for x in (1, 2) for y in (3, 4)]
        out = tmp_path / "heat.csv"
        emit_figure_data(rows_for(cells), "heatmap", out)
        lines = out.read_text().splitlines()
        assert lines[0] == "x,y,value"
        assert len(lines) == 5
        assert "1,3,0.5" in lines

    def test_sweep_curves(self, tmp_path):
        cells = [f"a.x={x}" for x in (1, 2, 3)]
        out = tmp_path / "curves.csv"
        emit_figure_data(rows_for(cells), "sweep-curves", out)
        lines = out.read_text().splitlines()
        assert lines[0] == "x,series,value"
        assert len(lines) == 4

    def test_scatter_row(self, tmp_path):
        out = tmp_path / "scatter.csv"
        emit_figure_data([{"r": 3, "p": 1, "s": 0, "t": 4}], "scatter", out)
        assert out.read_text().splitlines()[1] == "1,1,PrisonersDilemma"

    def test_empty_table_rejected(self, tmp_path):
        with pytest.raises(SchemaMismatch):
            emit_figure_data([], "heatmap", tmp_path / "x.csv")

    def test_heatmap_needs_two_axes(self, tmp_path):
        with pytest.raises(SchemaMismatch):
            emit_figure_data(rows_for(["a.x=1"]), "heatmap", tmp_path / "x.csv")

    def test_unknown_figure_kind(self, tmp_path):
        with pytest.raises(SchemaMismatch):
            emit_figure_data(rows_for(["a.x=1"]), "pie", tmp_path / "x.csv")
