"""Command-line frontend.

Six non-interactive commands: ``train``, ``sweep``, ``egta``,
``classify``, ``replay``, and ``validate-config``.  Diagnostics go to
stderr, data to files or stdout.  Exit codes: 0 success, 1 usage error,
2 config error, 3 runtime failure.
"""

from __future__ import annotations

import argparse
import sys

from .egta import (
    EmpiricalPayoffMatrix,
    check_ssd_inequalities,
    classify_matrix,
    estimate_payoffs,
    load_pool_manifest,
    write_payoff_report,
)
from .engine import MapError, derive_rng
from .games import lone_wolf_rate, wolves_per_capture, beam_use_rate
from .harness import (
    ConfigError,
    MetricsRow,
    RandomPolicy,
    build_env,
    parse_config,
    parse_sweep,
    run_episode,
    sweep,
    train,
    write_metrics_csv,
)
from .learner import CorruptCheckpoint, EvalPolicy, VersionMismatch, load_policy

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_CONFIG = 2
EXIT_RUNTIME = 3


class SchemaMismatch(ValueError):
    pass


def _num(value: float) -> str:
    return f"{value:g}"


def emit_figure_data(table, figure: str, path) -> None:
    """Write a plot-ready CSV for one of the figure kinds.

    ``heatmap``: `table` is metrics rows from a two-axis sweep; emits
    ``x,y,value`` with the mean final metric per cell.  ``sweep-curves``:
    one- or two-axis sweep; emits ``x,series,value``.  ``scatter``:
    `table` is a list of payoff dicts with keys r, p, s, t; emits
    ``fear,greed,class``.
    """
    if figure not in ("heatmap", "sweep-curves", "scatter"):
        raise SchemaMismatch(f"unknown figure kind {figure!r}")
    if not table:
        raise SchemaMismatch("empty results table")

    if figure == "scatter":
        lines = ["fear,greed,class"]
        for rec in table:
            try:
                r, p, s, t = (float(rec[k]) for k in ("r", "p", "s", "t"))
            except (KeyError, TypeError, ValueError) as exc:
                raise SchemaMismatch(f"scatter rows need r/p/s/t values: {exc}") from exc
            m = EmpiricalPayoffMatrix.from_values(r, p, s, t)
            lines.append(f"{_num(m.fear)},{_num(m.greed)},{classify_matrix(m).kind.value}")
        _write_lines(path, lines)
        return

    cells = _final_cell_means(table)
    n_axes = len(next(iter(cells))[0])
    if figure == "heatmap" and n_axes != 2:
        raise SchemaMismatch(f"heatmap needs a two-axis sweep, got {n_axes} axes")
    if figure == "sweep-curves" and n_axes not in (1, 2):
        raise SchemaMismatch(f"sweep-curves needs one or two axes, got {n_axes}")

    if figure == "heatmap":
        lines = ["x,y,value"]
        for (axis_values, _cell_id), value in sorted(cells.items()):
            lines.append(f"{axis_values[0]},{axis_values[1]},{_num(value)}")
    else:
        lines = ["x,series,value"]
        for (axis_values, _cell_id), value in sorted(cells.items()):
            series = axis_values[1] if n_axes == 2 else ""
            lines.append(f"{axis_values[0]},{series},{_num(value)}")
    _write_lines(path, lines)


def _final_cell_means(rows) -> dict:
    """Mean metric over seeds and agents at each cell's last eval step."""
    by_cell: dict[str, list[MetricsRow]] = {}
    for row in rows:
        by_cell.setdefault(row.cell_id, []).append(row)
    cells = {}
    for cell_id, cell_rows in by_cell.items():
        axis_values = []
        for part in cell_id.split(";"):
            if "=" not in part:
                raise SchemaMismatch(f"cell id {cell_id!r} does not encode sweep axes")
            axis_values.append(part.split("=", 1)[1])
        final = max(r.step for r in cell_rows)
        values = [r.metric_value for r in cell_rows if r.step == final and r.metric_value is not None]
        if not values:
            raise SchemaMismatch(f"cell {cell_id!r} has no final metric values")
        cells[(tuple(axis_values), cell_id)] = sum(values) / len(values)
    return cells


def _write_lines(path, lines) -> None:
    import os

    parent = os.path.dirname(os.path.abspath(path))
    os.makedirs(parent, exist_ok=True)
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def _cmd_validate_config(args) -> int:
    parse_config(args.config)
    print(f"{args.config}: ok")
    return EXIT_OK


def _cmd_train(args) -> int:
    cfg = parse_config(args.config)
    result = train(cfg)
    final = [r for r in result.rows if r.step == cfg.total_steps]
    for row in final:
        metric = "" if row.metric_value is None else f" {row.metric_name}={_num(row.metric_value)}"
        print(f"agent {row.agent}: return={_num(row.ret)}{metric}")
    if cfg.metrics_path:
        print(f"metrics written to {cfg.metrics_path}")
    return EXIT_OK


def _cmd_sweep(args) -> int:
    spec = parse_sweep(args.config)
    result = sweep(spec, parallelism=args.parallelism)
    if args.out:
        write_metrics_csv(result.rows, args.out)
        print(f"aggregated metrics written to {args.out}")
    if args.heatmap_out:
        emit_figure_data(result.rows, "heatmap", args.heatmap_out)
        print(f"heatmap data written to {args.heatmap_out}")
    if args.curves_out:
        emit_figure_data(result.rows, "sweep-curves", args.curves_out)
        print(f"curve data written to {args.curves_out}")
    for failure in result.failures:
        print(f"FAILED cell={failure.cell_id} seed={failure.seed}: {failure.error}", file=sys.stderr)
    print(f"{len(result.rows)} metric rows, {len(result.failures)} failed runs")
    return EXIT_RUNTIME if result.failures else EXIT_OK


def _cmd_egta(args) -> int:
    cfg = parse_config(args.config)
    pool_c, pool_d = load_pool_manifest(args.pools, eval_seed=cfg.seed)

    def env_factory(index: int):
        return build_env(cfg, rng=derive_rng(cfg.seed, "egta-env", index))

    matrix = estimate_payoffs(
        pool_c,
        pool_d,
        env_factory,
        rng=derive_rng(cfg.seed, "egta-sampler"),
        eval_epsilon=cfg.eval_epsilon,
        se_tol=args.se_tol,
        max_episodes_per_cell=args.max_episodes,
    )
    report = check_ssd_inequalities(matrix)
    classification = classify_matrix(matrix)
    if args.out:
        write_payoff_report(matrix, args.out)
        print(f"payoff report written to {args.out}")
    if args.scatter_out:
        emit_figure_data(
            [{"r": matrix.R.mean, "p": matrix.P.mean, "s": matrix.S.mean, "t": matrix.T.mean}],
            "scatter",
            args.scatter_out,
        )
        print(f"scatter data written to {args.scatter_out}")
    for name in ("R", "P", "S", "T"):
        cell = getattr(matrix, name)
        print(f"{name} = {cell.mean:.4f} (se {cell.se:.4f}, n {cell.n})")
    print(f"fear={_num(matrix.fear)} greed={_num(matrix.greed)} class={classification.kind.value}")
    if not report.all_hold:
        print(f"failed conditions: {', '.join(report.failed)}")
    if matrix.budget_exhausted:
        print("warning: episode budget exhausted before convergence", file=sys.stderr)
    return EXIT_OK


def _cmd_classify(args) -> int:
    matrix = EmpiricalPayoffMatrix.from_values(args.r, args.p, args.s, args.t)
    classification = classify_matrix(matrix)
    line = f"{classification.kind.value} greed={_num(matrix.greed)} fear={_num(matrix.fear)}"
    if classification.failed:
        line += f" failed={','.join(classification.failed)}"
    print(line)
    return EXIT_OK


def _cmd_replay(args) -> int:
    cfg = parse_config(args.config)
    env = build_env(cfg, rng=derive_rng(args.seed, "replay-env"))
    if args.checkpoint:
        if len(args.checkpoint) != 2:
            raise ConfigError("replay needs exactly two --checkpoint arguments")
        policies = [
            EvalPolicy(load_policy(p)[0], rng=derive_rng(args.seed, "replay-agent", i))
            for i, p in enumerate(args.checkpoint)
        ]
    else:
        policies = [RandomPolicy(derive_rng(args.seed, "replay-agent", i)) for i in range(2)]

    env.reset()
    n_frames = args.frames
    obs = env.observations() if args.checkpoint else [None, None]
    log_frames = []
    for t in range(n_frames):
        actions = [int(policies[i].act(obs[i], args.epsilon)) for i in range(2)]
        result = env.step(actions, want_obs=bool(args.checkpoint))
        if args.checkpoint:
            obs = result.obs
        log_frames.append(env.render())
    for t, frame in enumerate(log_frames):
        print(f"frame {t}")
        print(frame)
        print()
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ssdlab", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="run one training experiment from a config file")
    p.add_argument("--config", required=True)
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("sweep", help="run the config's parameter sweep")
    p.add_argument("--config", required=True)
    p.add_argument("--parallelism", type=int, default=1)
    p.add_argument("--out", help="aggregated metrics CSV path")
    p.add_argument("--heatmap-out", help="write x,y,value heatmap data")
    p.add_argument("--curves-out", help="write x,series,value curve data")
    p.set_defaults(func=_cmd_sweep)

    p = sub.add_parser("egta", help="estimate the empirical payoff matrix from policy pools")
    p.add_argument("--config", required=True)
    p.add_argument("--pools", required=True, help="pool manifest: '<C|D> <metric> <checkpoint>' lines")
    p.add_argument("--out", help="payoff report CSV path")
    p.add_argument("--scatter-out", help="write fear,greed,class scatter data")
    p.add_argument("--se-tol", type=float, default=None)
    p.add_argument("--max-episodes", type=int, default=1000)
    p.set_defaults(func=_cmd_egta)

    p = sub.add_parser("classify", help="classify a payoff matrix given R/P/S/T")
    p.add_argument("--r", type=float, required=True)
    p.add_argument("--p", type=float, required=True)
    p.add_argument("--s", type=float, required=True)
    p.add_argument("--t", type=float, required=True)
    p.set_defaults(func=_cmd_classify)

    p = sub.add_parser("replay", help="print an episode as ASCII frames")
    p.add_argument("--config", required=True)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--frames", type=int, default=20)
    p.add_argument("--checkpoint", action="append", help="policy checkpoint (give twice)")
    p.add_argument("--epsilon", type=float, default=0.05)
    p.set_defaults(func=_cmd_replay)

    p = sub.add_parser("validate-config", help="parse and validate a config file")
    p.add_argument("config")
    p.set_defaults(func=_cmd_validate_config)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse exits 0 for --help, 2 for usage problems
        return EXIT_OK if exc.code == 0 else EXIT_USAGE
    try:
        return args.func(args)
    except (ConfigError, MapError, SchemaMismatch, CorruptCheckpoint, VersionMismatch) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
