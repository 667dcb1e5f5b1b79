"""Command-line front end: train, compare, bench-refresh, plot.

Exit codes: 0 on success, 2 for configuration or input errors, 3 when a run
diverges (non-finite loss). All randomness flows from the config seeds; two
invocations with the same config and seed write byte-identical episode CSVs.
The output root can be set with the LAMBDA_REPLAY_OUT environment variable;
relative output paths are joined under it.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .agent import TrainingDiverged, train_dqn_lambda, train_dqn_nstep_baseline
from .config import ConfigError, PRESETS, RunConfig, load_config
from .replay import ReplayMemory, build_cache

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DIVERGED = 3

OUTPUT_ROOT_VAR = "LAMBDA_REPLAY_OUT"


def _resolve_out(path: str) -> Path:
    p = Path(path)
    root = os.environ.get(OUTPUT_ROOT_VAR)
    if root and not p.is_absolute():
        p = Path(root) / p
    return p


def _run_one(cfg: RunConfig, seed: int):
    env = cfg.build_env()
    qfunc = cfg.build_qfunc(env, seed)
    if cfg.agent == "nstep-baseline":
        return train_dqn_nstep_baseline(env, qfunc, cfg.train, cfg.nstep, seed)
    return train_dqn_lambda(env, qfunc, cfg.train, seed)


def _write_run(cfg: RunConfig, seed: int, out_dir: Path) -> dict:
    out_dir.mkdir(parents=True, exist_ok=True)
    status = "ok"
    nan_refresh = None
    log = None
    try:
        log = _run_one(cfg, seed)
    except TrainingDiverged as exc:
        status = "diverged"
        nan_refresh = exc.refresh_index
    if log is not None:
        log.write_episode_csv(out_dir / "episodes.csv")
        log.write_refresh_csv(out_dir / "refreshes.csv")
    manifest = {
        "version": __version__,
        "seed": seed,
        "status": status,
        "nan_refresh_index": nan_refresh,
        "config": cfg.to_mapping(),
        "final": None
        if log is None
        else {
            "episodes": log.counters.get("episodes"),
            "rolling_mean_100": log.final_rolling,
            "solved_at_step": log.solved_at_step,
            **log.counters,
        },
    }
    with open(out_dir / "manifest.json", "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return manifest


def cmd_train(args) -> int:
    cfg = load_config(args.config, preset=args.preset, overrides=_overrides(args))
    out = _resolve_out(cfg.out)
    diverged = False
    for seed in cfg.seeds:
        manifest = _write_run(cfg, seed, out / f"seed-{seed:03d}")
        final = manifest["final"] or {}
        print(
            f"seed {seed}: status={manifest['status']} "
            f"episodes={final.get('episodes')} "
            f"rolling_mean_100={final.get('rolling_mean_100')}"
        )
        diverged = diverged or manifest["status"] == "diverged"
    return EXIT_DIVERGED if diverged else EXIT_OK


def cmd_compare(args) -> int:
    seeds = _parse_seeds(args.seeds) if args.seeds else None
    arms = []
    for path in args.configs:
        cfg = load_config(path, preset=args.preset)
        if seeds is not None:
            cfg.seeds = tuple(seeds)
        arms.append((Path(path).stem, cfg))
    out = _resolve_out(args.out) if args.out else None

    rows = []
    summary = []
    for arm_name, cfg in arms:
        finals = []
        for seed in cfg.seeds:
            arm_out = (out / arm_name / f"seed-{seed:03d}") if out else None
            if arm_out is not None:
                manifest = _write_run(cfg, seed, arm_out)
                if manifest["status"] != "ok":
                    print(f"arm {arm_name} seed {seed}: {manifest['status']}")
                    return EXIT_DIVERGED
                log_episodes = _read_episode_rows(arm_out / "episodes.csv")
            else:
                log = _run_one(cfg, seed)
                log_episodes = [
                    (e.index, e.end_step, e.score, e.rolling_mean) for e in log.episodes
                ]
                manifest = {"final": {"rolling_mean_100": log.final_rolling}}
            finals.append(manifest["final"]["rolling_mean_100"])
            rows.extend(
                (arm_name, seed, idx, step, score, rolling)
                for idx, step, score, rolling in log_episodes
            )
        mean = float(np.mean(finals))
        sem = float(np.std(finals, ddof=1) / math.sqrt(len(finals))) if len(finals) > 1 else 0.0
        summary.append((arm_name, mean, sem, len(finals)))

    print(f"{'arm':<24} {'mean_final':>12} {'sem':>10} {'seeds':>6}")
    for arm_name, mean, sem, n_seeds in summary:
        print(f"{arm_name:<24} {mean:>12.4f} {sem:>10.4f} {n_seeds:>6}")

    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
        merged = out / "comparison.csv"
        with open(merged, "w") as fh:
            fh.write("arm,seed,episode,end_step,score,rolling_mean_100\n")
            for arm_name, seed, idx, step, score, rolling in rows:
                fh.write(f"{arm_name},{seed},{idx},{step},{score!r},{rolling!r}\n")
        print(f"merged episode data written to {merged}")
    return EXIT_OK


def _fill_synthetic(mem: ReplayMemory, n: int, obs_dim: int, n_state_ids: int | None, rng) -> None:
    """Terminal-free filler stream so refresh cost is content-independent."""
    chunk_states = rng.normal(size=(n + 1, obs_dim))
    ids = rng.integers(n_state_ids, size=n + 1) if n_state_ids else None
    mem.extend_batch(
        states=chunk_states[:-1],
        actions=rng.integers(2, size=n),
        rewards=rng.normal(size=n),
        next_states=chunk_states[1:],
        terminals=np.zeros(n, dtype=bool),
        ids=ids[:-1] if ids is not None else None,
        next_ids=ids[1:] if ids is not None else None,
    )


def cmd_bench_refresh(args) -> int:
    cfg = load_config(args.config, preset=args.preset)
    capacities = [int(c) for c in args.capacities]
    if len(capacities) < 2:
        print("need at least two capacities to compare", file=sys.stderr)
        return EXIT_CONFIG
    env = cfg.build_env()
    t = cfg.train
    results = []
    for capacity in capacities:
        rng = np.random.default_rng(0)
        mem = ReplayMemory(capacity)
        _fill_synthetic(mem, capacity, env.obs_dim * cfg.history_len, env.n_state_ids, rng)
        qfunc = cfg.build_qfunc(env, seed=0)
        times = []
        counts = []
        for _ in range(args.repeats):
            before = qfunc.eval_count
            started = time.perf_counter()
            build_cache(mem, qfunc, t.estimator, t.cache_size, t.block_size, rng)
            times.append(time.perf_counter() - started)
            counts.append(qfunc.eval_count - before)
        results.append((capacity, counts[0], min(times)))
        if len(set(counts)) != 1:
            print("Q-evaluation count varied between repeats", file=sys.stderr)
            return 1

    expected = (t.cache_size // t.block_size) * (t.block_size + 1) + t.cache_size
    print(f"{'capacity':>12} {'q_evals':>12} {'best_wall_s':>12}")
    for capacity, count, wall in results:
        print(f"{capacity:>12} {count:>12} {wall:>12.4f}")
    counts = {count for _, count, _ in results}
    if len(counts) != 1:
        print("FAIL: Q-evaluation counts differ across capacities", file=sys.stderr)
        return 1
    print(f"Q-evaluations per refresh: {counts.pop()} (closed form {expected})")
    print("refresh cost is independent of replay capacity")
    return EXIT_OK


def cmd_plot(args) -> int:
    from .plotting import PlotDataError, plot_learning_curves

    try:
        plot_learning_curves([Path(p) for p in args.csv_paths], _resolve_out(args.out))
    except PlotDataError as exc:
        print(f"plot error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    print(f"plot written to {_resolve_out(args.out)}")
    return EXIT_OK


def _parse_seeds(raw: str) -> list[int]:
    return [int(s) for s in raw.replace(",", " ").split()]


def _overrides(args) -> dict:
    overrides: dict = {}
    if getattr(args, "seeds", None):
        overrides.setdefault("run", {})["seeds"] = _parse_seeds(args.seeds)
    if getattr(args, "out", None):
        overrides.setdefault("run", {})["out"] = args.out
    return overrides


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="lambda-replay",
        description="Train and benchmark replay agents driven by cached return targets.",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    train = sub.add_parser("train", help="run training for every seed in the config")
    train.add_argument("--config", required=True)
    train.add_argument("--seeds", help="override the config seed list, e.g. 0,1,2")
    train.add_argument("--out", help="override the output directory")
    train.add_argument("--preset", choices=sorted(PRESETS), help="base values to start from")
    train.set_defaults(func=cmd_train)

    compare = sub.add_parser("compare", help="run two or more configs on matched seeds")
    compare.add_argument("configs", nargs="+", help="one config file per arm")
    compare.add_argument("--seeds", help="matched seed list for every arm")
    compare.add_argument("--out", help="directory for per-arm runs and the merged CSV")
    compare.add_argument("--preset", choices=sorted(PRESETS))
    compare.set_defaults(func=cmd_compare)

    bench = sub.add_parser(
        "bench-refresh", help="measure cache refresh cost across replay capacities"
    )
    bench.add_argument("--config", required=True)
    bench.add_argument(
        "--capacities", nargs="+", required=True, help="replay capacities to compare"
    )
    bench.add_argument("--repeats", type=int, default=5)
    bench.add_argument("--preset", choices=sorted(PRESETS))
    bench.set_defaults(func=cmd_bench_refresh)

    plot = sub.add_parser("plot", help="render learning curves from episode CSVs")
    plot.add_argument("csv_paths", nargs="+", help="episodes.csv files, run dirs, or a comparison.csv")
    plot.add_argument("--out", default="learning_curves.svg")
    plot.set_defaults(func=cmd_plot)
    return parser


def _read_episode_rows(path: Path):
    rows = []
    with open(path) as fh:
        next(fh)
        for line in fh:
            idx, step, score, _length, rolling, _eps = line.rstrip("\n").split(",")
            rows.append((int(idx), int(step), float(score), float(rolling)))
    return rows


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except TrainingDiverged as exc:
        print(f"run diverged: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    except FileNotFoundError as exc:
        print(f"missing file: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
