"""Command-line experiment runner.

    rmrl init-config --out config.json
    rmrl run --method rmrl --config config.json --seed 3 --out runs/
    rmrl bench --methods standard rmrl pretrained-rmrl --seeds 20 --jobs 4 --out bench/
    rmrl pretrain --samples 200 --out pre/
    rmrl eval --checkpoint runs/rmrl-seed3/checkpoint.bin --out eval/

Exit codes: 0 success, 2 configuration error, 3 runtime error.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import datasets, learn, metrics
from .config import METHODS, ConfigError, RunConfig

log = logging.getLogger("rmrl")

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 2, 3

BENCH_COLUMNS = (
    "method", "seed", "t_tau_10", "avg_reward", "std_reward", "eval_reward",
    "e_trans_mm", "e_rot_deg", "success_rate", "error",
)


def load_config(path=None, seed=None, out=None) -> RunConfig:
    cfg = RunConfig.load(path) if path else RunConfig()
    if seed is not None:
        cfg = cfg.replace(seed=int(seed))
    if out is not None:
        cfg = cfg.replace(out_dir=str(out))
    return cfg.validate()


def parse_seeds(spec: str, base: int) -> list[int]:
    """``"20"`` -> 20 seeds from ``base``; ``"0-19"`` -> range; ``"1,4,9"`` -> list."""
    try:
        if "," in spec:
            return [int(s) for s in spec.split(",") if s.strip()]
        if "-" in spec.strip("-"):
            lo, hi = spec.split("-", 1)
            return list(range(int(lo), int(hi) + 1))
        n = int(spec)
    except ValueError as exc:
        raise ConfigError(f"invalid --seeds {spec!r}") from exc
    if n < 1:
        raise ConfigError("--seeds needs at least one seed")
    return list(range(base, base + n))


def evaluate(config: RunConfig, params) -> metrics.Evaluation:
    streams = learn.RunStreams(config.seed)
    env = learn.make_env(config, streams)
    m = config.metrics
    return metrics.evaluate_policy(
        params, env, m.eval_scenes, streams.eval, m.success_trans_mm, m.success_rot_deg
    )


def load_init(path, config: RunConfig):
    params, _, _ = datasets.read_checkpoint(
        path, expected_grid=config.env.grid, expected_arch=learn.make_architecture(config)
    )
    return params


def execute_run(method: str, config: RunConfig, out_dir, init=None, plots: bool = True) -> metrics.MetricReport:
    """One training run with every artifact written into ``out_dir``."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    writer = None
    if method in ("rmrl", "pretrained-rmrl"):
        writer = datasets.DatasetWriter(out / "dataset.jsonl", config.env.grid, config.env.feature_dim)
    result = learn.run_method(
        method, config, init=init, on_scene_labeled=writer.append_scene if writer is not None else None
    )
    smoothed = metrics.ema(result.rewards, config.metrics.ema_alpha)
    datasets.write_trace(out / "trace.csv", result.rewards, result.scene_ids, result.phases, smoothed)
    datasets.write_checkpoint(out / "checkpoint.bin", result.params, config.env.grid, config.seed)
    report = metrics.build_report(result.rewards, evaluate(config, result.params), config.metrics.tau)
    (out / "metrics.json").write_text(json.dumps(report.to_dict(), indent=2) + "\n")
    (out / "config.json").write_text(config.to_json() + "\n")
    if plots:
        from . import report as figures

        figures.plot_reward_curve(
            result.rewards, smoothed, out / "reward_curve.png",
            tau=config.metrics.tau, title=f"{method}, seed {config.seed}",
        )
    return report


def bench_cell(method: str, seed: int, config: RunConfig) -> tuple[dict, np.ndarray | None]:
    """Run one (method, seed) cell; failures come back as an error row."""
    cfg = config.replace(seed=seed)
    row = {"method": method, "seed": seed}
    try:
        result = learn.run_method(method, cfg)
        rep = metrics.build_report(result.rewards, evaluate(cfg, result.params), cfg.metrics.tau)
    except Exception as exc:  # reported per cell, the rest of the table still runs
        row.update({c: None for c in BENCH_COLUMNS[2:]}, error=f"{type(exc).__name__}: {exc}")
        return row, None
    row.update(rep.to_dict(), error="")
    return row, metrics.ema(result.rewards, cfg.metrics.ema_alpha)


def median_rows(rows: list[dict], methods) -> list[dict]:
    out = []
    for m in methods:
        ok = [r for r in rows if r["method"] == m and not r["error"]]
        med = {"method": m, "seed": "median", "error": "" if ok else "no successful runs"}
        if ok:
            t = metrics.median_t_tau(
                [None if r["t_tau_10"] == metrics.NOT_REACHED else r["t_tau_10"] for r in ok]
            )
            med["t_tau_10"] = metrics.NOT_REACHED if np.isinf(t) else t
            for c in BENCH_COLUMNS[3:-1]:
                med[c] = float(np.median([r[c] for r in ok]))
        out.append(med)
    return out


def run_bench(methods, seeds, config: RunConfig, jobs: int = 1):
    cells = [(m, s) for m in methods for s in seeds]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            futures = [pool.submit(bench_cell, m, s, config) for m, s in cells]
            results = [f.result() for f in futures]
    else:
        results = [bench_cell(m, s, config) for m, s in cells]
    rows = [r for r, _ in results]
    curves = {m: [] for m in methods}
    for row, curve in results:
        if curve is not None:
            curves[row["method"]].append(curve)
    return rows, median_rows(rows, methods), curves


def write_bench(out_dir, rows, medians, config: RunConfig, curves=None, plots=True):
    import csv

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "bench.csv", "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=BENCH_COLUMNS, lineterminator="\n")
        w.writeheader()
        for r in rows + medians:
            w.writerow({c: ("" if r.get(c) is None else r.get(c)) for c in BENCH_COLUMNS})
    (out / "bench.json").write_text(json.dumps({"rows": rows, "medians": medians}, indent=2) + "\n")
    if plots:
        from . import report as figures

        if curves:
            figures.plot_bench_curves(curves, out / "reward_curves.png", tau=config.metrics.tau)
        figures.plot_bench_summary(rows, out / "summary.png")


# --- subcommands --------------------------------------------------------------

def cmd_init_config(args) -> int:
    text = RunConfig().to_json() + "\n"
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def cmd_run(args) -> int:
    cfg = load_config(args.config, args.seed)
    init = load_init(args.init_checkpoint, cfg) if args.init_checkpoint else None
    out = Path(args.out or cfg.out_dir) / f"{args.method}-seed{cfg.seed}"
    report = execute_run(args.method, cfg, out, init=init, plots=not args.no_plots)
    print(json.dumps({"out": str(out), **report.to_dict()}))
    return EXIT_OK


def cmd_bench(args) -> int:
    cfg = load_config(args.config, args.seed)
    for m in args.methods:
        if m not in METHODS:
            raise ConfigError(f"unknown method {m!r}")
    seeds = parse_seeds(args.seeds, cfg.seed)
    rows, medians, curves = run_bench(args.methods, seeds, cfg, jobs=args.jobs)
    out = Path(args.out or cfg.out_dir)
    write_bench(out, rows, medians, cfg, curves, plots=not args.no_plots)
    for r in medians:
        print(f"{r['method']:16s} T_tau^10={r.get('t_tau_10')} avg_reward={r.get('avg_reward')}")
    failed = [r for r in rows if r["error"]]
    for r in failed:
        log.error("cell %s/seed %s failed: %s", r["method"], r["seed"], r["error"])
    return EXIT_RUNTIME if failed else EXIT_OK


def cmd_pretrain(args) -> int:
    cfg = load_config(args.config, args.seed)
    n = cfg.schedule.pretrain_samples if args.samples is None else args.samples
    if n < 1:
        raise ConfigError("--samples must be >= 1")
    streams = learn.RunStreams(cfg.seed)
    env = learn.make_env(cfg, streams)
    records = learn.generate_pretrain_dataset(env, cfg, streams.pretrain, n)
    params = learn.pretrain(cfg, records, streams)
    out = Path(args.out or cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    datasets.write_dataset(out / "pretrain_dataset.jsonl", records, cfg.env.grid, cfg.env.feature_dim)
    datasets.write_checkpoint(out / "pretrained.bin", params, cfg.env.grid, cfg.seed)
    print(json.dumps({"out": str(out), "records": len(records)}))
    return EXIT_OK


def cmd_eval(args) -> int:
    cfg = load_config(args.config, args.seed)
    params = load_init(args.checkpoint, cfg)
    ev = evaluate(cfg, params)
    result = {
        "eval_reward": ev.mean_reward,
        "e_trans_mm": ev.e_trans_mm,
        "e_rot_deg": ev.e_rot_deg,
        "success_rate": ev.success_rate,
        "n_scenes": int(ev.rewards.size),
    }
    if args.out:
        Path(args.out).mkdir(parents=True, exist_ok=True)
        (Path(args.out) / "eval.json").write_text(json.dumps(result, indent=2) + "\n")
    print(json.dumps(result))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="rmrl", description="Role-model RL pick-and-place laboratory")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p, out_help="output directory (default: config out_dir)"):
        p.add_argument("--config", metavar="PATH", help="JSON run config (default: built-in defaults)")
        p.add_argument("--seed", type=int, help="override the config seed")
        p.add_argument("--out", metavar="DIR", help=out_help)

    p = sub.add_parser("init-config", help="write the full default config")
    p.add_argument("--out", metavar="PATH", help="file to write (default: stdout)")
    p.set_defaults(func=cmd_init_config)

    p = sub.add_parser("run", help="train one method on one seed")
    common(p)
    p.add_argument("--method", choices=METHODS, required=True)
    p.add_argument("--init-checkpoint", metavar="PATH", help="start from these parameters")
    p.add_argument("--no-plots", action="store_true")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("bench", help="compare methods over many seeds")
    common(p)
    p.add_argument("--methods", nargs="+", default=list(METHODS), metavar="NAME")
    p.add_argument("--seeds", default="20", help="count from --seed, A-B range, or comma list")
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--no-plots", action="store_true")
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("pretrain", help="generate a labeled pretraining set and pretrain a policy")
    common(p)
    p.add_argument("--samples", type=int, default=None)
    p.set_defaults(func=cmd_pretrain)

    p = sub.add_parser("eval", help="greedy evaluation of a checkpoint on fresh scenes")
    common(p)
    p.add_argument("--checkpoint", "--init-checkpoint", dest="checkpoint", metavar="PATH", required=True)
    p.set_defaults(func=cmd_eval)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (datasets.FormatError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
