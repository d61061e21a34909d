"""Command-line orchestration: single searches, benchmark sweeps, noise
sweeps, epsilon sweeps, and ablations.

Every command writes per-direction result rows as CSV into the output
directory, plus a command-specific summary; sweep summaries also render a
figure next to the delimited output. Runs are reproducible: all randomness
derives from the master seed, and rerunning a manifest rewrites identical
result files.

Exit codes: 0 completed, 2 configuration error, 3 task-file error.
"""
from __future__ import annotations

import argparse
import configparser
import csv
import json
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, replace

import numpy as np

from . import bench as B
from . import env as E
from .agent import EpisodeRow
from .bench import (AblationConfig, BenchSettings, BenchmarkTask,
                    RESULT_COLUMNS, TaskFileError, TrialOutcome)
from .expr import to_infix
from .qnet import TrainConfig

SEED_ENV_VAR = "EGRL_SR_SEED"
DEFAULT_NOISE_GRID = (0.0, 1e-3, 1e-2, 1e-1)
DEFAULT_EPS_GRID = (0.2, 0.4, 0.6, 0.8, 1.0)


class ConfigError(ValueError):
    pass


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="egrlsr",
        description="Expression search driven by goal-conditioned value "
                    "learning, with a benchmark harness.")
    sub = p.add_subparsers(dest="command", required=True)

    def add_common(sp):
        sp.add_argument("--config", help="INI config file (flags override it)")
        sp.add_argument("--task", help="task name, or comma-separated names")
        sp.add_argument("--tasks-file", help="benchmark definitions file")
        sp.add_argument("--steps", type=int, help="env steps per direction")
        sp.add_argument("--directions", type=int, help="number of search directions")
        sp.add_argument("--trials", type=int, help="independent trials per cell")
        sp.add_argument("--seed", type=int, help="master seed")
        sp.add_argument("--noise", help="noise level (sweeps take a comma list)")
        sp.add_argument("--epsilon", help="exploration share (sweeps take a comma list)")
        sp.add_argument("--reward-mode", choices=["apsr", "nrmse"])
        sp.add_argument("--exploration-mode", choices=["sghe", "random"])
        sp.add_argument("--her", choices=["on", "off"])
        sp.add_argument("--literals", choices=["on", "off"],
                        help="add integer literal tokens {1,2} to the vocabulary")
        sp.add_argument("--max-len", type=int, help="episode token budget")
        sp.add_argument("--tolerance", type=float, help="all-point reward tolerance")
        sp.add_argument("--out", help="output directory (default: runs/<command>)")
        sp.add_argument("--threads", type=int, help="worker processes")
        sp.add_argument("--no-plots", action="store_true",
                        help="skip figure rendering")

    sp = sub.add_parser("search", help="run one search on a single task")
    add_common(sp)
    sp.add_argument("--episode-log", action="store_true",
                    help="also write per-episode rows")
    for name in ("bench", "noise-sweep", "eps-sweep", "ablation"):
        add_common(sub.add_parser(name))
    return p


# ---------------------------------------------------------------------------
# Configuration resolution: flags > config file > defaults, except the seed,
# where the EGRL_SR_SEED environment variable takes precedence over both.
# ---------------------------------------------------------------------------

_BOOL = {"on": True, "off": False, "true": True, "false": False,
         "1": True, "0": False, "yes": True, "no": False}


def _parse_bool(text: str, what: str) -> bool:
    try:
        return _BOOL[text.strip().lower()]
    except KeyError:
        raise ConfigError(f"{what}: expected on/off, got {text!r}") from None


def _float_list(text: str, what: str) -> list[float]:
    try:
        return [float(x) for x in str(text).split(",") if x.strip() != ""]
    except ValueError:
        raise ConfigError(f"{what}: expected comma-separated numbers, got {text!r}") from None


class Resolved:
    """Fully resolved run manifest for one command invocation."""

    def __init__(self):
        self.settings = BenchSettings()
        self.trials = 12
        self.trials_set = False
        self.seed = 0
        self.out = ""
        self.threads = max(os.cpu_count() or 1, 1)
        self.tasks_file = B.default_tasks_path()
        self.task_names: list[str] = []
        self.noise_grid = list(DEFAULT_NOISE_GRID)
        self.eps_grid = list(DEFAULT_EPS_GRID)
        self.plots = True

    def manifest(self, command: str) -> dict:
        d = asdict(self.settings)
        d["train"] = asdict(self.settings.train)
        return {
            "command": command,
            "seed": self.seed,
            "trials": self.trials,
            "threads": self.threads,
            "tasks_file": self.tasks_file,
            "tasks": self.task_names,
            "noise_grid": self.noise_grid,
            "eps_grid": self.eps_grid,
            "settings": d,
        }


def _read_config_file(path: str) -> configparser.ConfigParser:
    cp = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    read = cp.read(path)
    if not read:
        raise ConfigError(f"config file not found: {path}")
    return cp


def resolve(args: argparse.Namespace) -> Resolved:
    r = Resolved()
    s: dict = {}
    t: dict = {}

    if args.config:
        cp = _read_config_file(args.config)
        try:
            get = cp.get
            if cp.has_option("run", "seed"):
                r.seed = cp.getint("run", "seed")
            if cp.has_option("run", "trials"):
                r.trials = cp.getint("run", "trials")
                r.trials_set = True
            if cp.has_option("run", "steps"):
                s["steps_per_direction"] = cp.getint("run", "steps")
            if cp.has_option("run", "directions"):
                s["n_directions"] = cp.getint("run", "directions")
            if cp.has_option("run", "threads"):
                r.threads = cp.getint("run", "threads")
            if cp.has_option("run", "out"):
                r.out = get("run", "out")
            if cp.has_option("env", "max_len"):
                s["max_len"] = cp.getint("env", "max_len")
            if cp.has_option("env", "tolerance"):
                s["tolerance"] = cp.getfloat("env", "tolerance")
            if cp.has_option("env", "literals"):
                s["literals"] = _parse_bool(get("env", "literals"), "env.literals")
            if cp.has_option("env", "noisy_tolerance_scale"):
                s["noisy_tolerance_scale"] = cp.getfloat("env", "noisy_tolerance_scale")
            if cp.has_option("qnet", "gamma"):
                t["gamma"] = cp.getfloat("qnet", "gamma")
            if cp.has_option("qnet", "learning_rate"):
                t["learning_rate"] = cp.getfloat("qnet", "learning_rate")
            if cp.has_option("qnet", "soft_update_rate"):
                t["soft_update_rate"] = cp.getfloat("qnet", "soft_update_rate")
            if cp.has_option("qnet", "batch_size"):
                t["batch_size"] = cp.getint("qnet", "batch_size")
            if cp.has_option("qnet", "hidden_sizes"):
                t["hidden_sizes"] = tuple(
                    int(x) for x in get("qnet", "hidden_sizes").split(","))
            if cp.has_option("qnet", "train_every"):
                s["train_every"] = cp.getint("qnet", "train_every")
            if cp.has_option("qnet", "warmup"):
                s["warmup"] = cp.getint("qnet", "warmup")
            if cp.has_option("qnet", "buffer_capacity"):
                s["buffer_capacity"] = cp.getint("qnet", "buffer_capacity")
            if cp.has_option("sghe", "epsilon"):
                s["epsilon"] = cp.getfloat("sghe", "epsilon")
            if cp.has_option("sghe", "push_weight"):
                s["push_weight"] = cp.getfloat("sghe", "push_weight")
            if cp.has_option("sghe", "exploration"):
                s["exploration"] = get("sghe", "exploration")
            if cp.get("bench", "tasks_file", fallback="").strip():
                r.tasks_file = get("bench", "tasks_file").strip()
            if cp.has_option("bench", "tasks"):
                r.task_names = [x.strip() for x in get("bench", "tasks").split(",") if x.strip()]
            if cp.has_option("bench", "noise"):
                r.noise_grid = _float_list(get("bench", "noise"), "bench.noise")
            if cp.has_option("bench", "epsilon_grid"):
                r.eps_grid = _float_list(get("bench", "epsilon_grid"), "bench.epsilon_grid")
            if cp.has_option("bench", "reward_mode"):
                s["reward_mode"] = get("bench", "reward_mode")
            if cp.has_option("bench", "her"):
                s["her_enabled"] = _parse_bool(get("bench", "her"), "bench.her")
            if cp.has_option("bench", "trials"):
                r.trials = cp.getint("bench", "trials")
                r.trials_set = True
        except (ValueError, configparser.Error) as e:
            raise ConfigError(f"bad config file value: {e}") from e

    if args.steps is not None:
        s["steps_per_direction"] = args.steps
    if args.directions is not None:
        s["n_directions"] = args.directions
    if args.trials is not None:
        r.trials = args.trials
        r.trials_set = True
    if args.seed is not None:
        r.seed = args.seed
    if args.max_len is not None:
        s["max_len"] = args.max_len
    if args.tolerance is not None:
        s["tolerance"] = args.tolerance
    if args.literals is not None:
        s["literals"] = _parse_bool(args.literals, "--literals")
    if args.reward_mode is not None:
        s["reward_mode"] = args.reward_mode
    if args.exploration_mode is not None:
        s["exploration"] = args.exploration_mode
    if args.her is not None:
        s["her_enabled"] = _parse_bool(args.her, "--her")
    if args.threads is not None:
        r.threads = args.threads
    if args.out:
        r.out = args.out
    if args.tasks_file:
        r.tasks_file = args.tasks_file
    if args.task:
        r.task_names = [x.strip() for x in args.task.split(",") if x.strip()]
    if args.noise is not None:
        grid = _float_list(args.noise, "--noise")
        r.noise_grid = grid
        if len(grid) == 1:
            s["noise_level"] = grid[0]
    if args.epsilon is not None:
        grid = _float_list(args.epsilon, "--epsilon")
        r.eps_grid = grid
        if len(grid) == 1:
            s["epsilon"] = grid[0]

    env_seed = os.environ.get(SEED_ENV_VAR)
    if env_seed is not None:
        try:
            r.seed = int(env_seed)
        except ValueError:
            raise ConfigError(f"{SEED_ENV_VAR} must be an integer, got {env_seed!r}")

    if r.trials < 1:
        raise ConfigError("trials must be >= 1")
    if r.threads < 1:
        raise ConfigError("threads must be >= 1")
    if any(x < 0 for x in r.noise_grid):
        raise ConfigError("noise levels must be non-negative")
    if any(not (0.0 <= x <= 1.0) for x in r.eps_grid):
        raise ConfigError("epsilon values must lie in [0, 1]")
    try:
        if t:
            s["train"] = TrainConfig(**t)
        r.settings = replace(r.settings, **s)
    except (TypeError, ValueError) as e:
        raise ConfigError(str(e)) from e
    return r


# ---------------------------------------------------------------------------
# Execution helpers
# ---------------------------------------------------------------------------

def _limit_blas_threads():
    try:
        import threadpoolctl

        threadpoolctl.threadpool_limits(1)
    except Exception:
        pass


def run_jobs(jobs: list[tuple], threads: int) -> list[TrialOutcome]:
    """Run (task, settings, seed, trial) jobs, deterministically ordered."""
    if threads <= 1 or len(jobs) <= 1:
        outcomes = [B.run_trial_job(j) for j in jobs]
    else:
        with ProcessPoolExecutor(max_workers=threads,
                                 initializer=_limit_blas_threads) as ex:
            outcomes = list(ex.map(B.run_trial_job, jobs, chunksize=1))
    return outcomes


def write_rows(path: str, rows: list[dict], columns) -> None:
    rows = sorted(rows, key=lambda r: tuple(str(r[c]) for c in columns[:4]))
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.DictWriter(fh, fieldnames=list(columns))
        w.writeheader()
        w.writerows(rows)


def _prepare_out(r: Resolved, command: str) -> str:
    out = r.out or os.path.join("runs", command)
    os.makedirs(out, exist_ok=True)
    with open(os.path.join(out, "run.json"), "w", encoding="utf-8") as fh:
        json.dump(r.manifest(command), fh, indent=2, sort_keys=True)
        fh.write("\n")
    return out


def _load_selected_tasks(r: Resolved, need_one: bool = False) -> list[BenchmarkTask]:
    tasks = B.load_tasks(r.tasks_file)
    if not r.task_names:
        if need_one:
            raise ConfigError("this command needs --task")
        raise ConfigError("no tasks selected: pass --task or set bench.tasks")
    selected = []
    for name in r.task_names:
        try:
            selected.append(B.find_task(tasks, name))
        except KeyError as e:
            raise ConfigError(str(e.args[0])) from e
    if need_one and len(selected) != 1:
        raise ConfigError("this command takes exactly one --task")
    return selected


def _result_rows(outcomes) -> list[dict]:
    rows = []
    for o in outcomes:
        rows.extend(B.outcome_rows(o))
    return rows


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------

def cmd_search(r: Resolved, episode_log: bool, plots: bool) -> int:
    task = _load_selected_tasks(r, need_one=True)[0]
    if not r.trials_set:
        r.trials = 1
    out = _prepare_out(r, "search")
    log: list[EpisodeRow] | None = [] if episode_log else None
    outcome = B.run_trial(task, r.settings, r.seed, 0, episode_log=log)
    extra = [B.run_trial(task, r.settings, r.seed, t) for t in range(1, r.trials)]
    all_outcomes = [outcome] + extra
    write_rows(os.path.join(out, "results.csv"), _result_rows(all_outcomes),
               RESULT_COLUMNS)
    if log is not None:
        with open(os.path.join(out, "episodes.csv"), "w", newline="",
                  encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(["direction", "episode", "success", "steps"])
            for row in log:
                w.writerow([row.direction_id, row.episode, int(row.success),
                            row.steps])
    print(f"task {task.name}: target {to_infix(task.target)}")
    for res in outcome.results:
        if res.found:
            print(f"  direction {res.direction_id}: found "
                  f"{to_infix(res.program)} after {res.trajectories_to_success} "
                  f"trajectories, {res.steps_used} steps")
        else:
            print(f"  direction {res.direction_id}: not found "
                  f"({res.episodes} trajectories, {res.steps_used} steps)")
    print(f"exact recovery: {'yes' if outcome.recovered else 'no'}")
    print(f"results written to {out}")
    return 0


def cmd_bench(r: Resolved, plots: bool) -> int:
    tasks = _load_selected_tasks(r)
    out = _prepare_out(r, "bench")
    jobs = [(task, r.settings, r.seed, t) for task in tasks for t in range(r.trials)]
    outcomes = run_jobs(jobs, r.threads)
    write_rows(os.path.join(out, "results.csv"), _result_rows(outcomes),
               RESULT_COLUMNS)
    summary = []
    for task in tasks:
        flags = [o.recovered for o in outcomes if o.task == task.name]
        rate, sd = B.recovery_rate(flags)
        summary.append({"task": task.name, "trials": len(flags), "rate": rate,
                        "stdev": sd})
    write_rows(os.path.join(out, "recovery.csv"), summary,
               ("task", "trials", "rate", "stdev"))
    print(f"{'task':<8}{'trials':>8}{'rate':>10}{'stdev':>10}")
    for row in summary:
        print(f"{row['task']:<8}{row['trials']:>8}{row['rate']:>10.2%}"
              f"{row['stdev']:>10.3f}")
    if plots:
        from .report import plot_bench_recovery

        plot_bench_recovery(summary, os.path.join(out, "recovery.png"))
    print(f"results written to {out}")
    return 0


def cmd_noise_sweep(r: Resolved, plots: bool) -> int:
    tasks = _load_selected_tasks(r)
    out = _prepare_out(r, "noise-sweep")
    jobs = []
    for task in tasks:
        for lam in r.noise_grid:
            st = replace(r.settings, noise_level=lam)
            jobs.extend((task, st, r.seed, t) for t in range(r.trials))
    outcomes = run_jobs(jobs, r.threads)
    write_rows(os.path.join(out, "results.csv"), _result_rows(outcomes),
               RESULT_COLUMNS)
    summary = []
    for task in tasks:
        for lam in r.noise_grid:
            flags = [o.recovered for o in outcomes
                     if o.task == task.name and o.settings.noise_level == lam]
            rate, sd = B.recovery_rate(flags)
            summary.append({"task": task.name, "noise": lam, "trials": len(flags),
                            "rate": rate, "stdev": sd})
    write_rows(os.path.join(out, "noise_recovery.csv"), summary,
               ("task", "noise", "trials", "rate", "stdev"))
    for row in summary:
        print(f"{row['task']:<8} noise={row['noise']:<8g} rate={row['rate']:.2%}")
    if plots:
        from .report import plot_noise_sweep

        plot_noise_sweep(summary, os.path.join(out, "noise_recovery.png"))
    print(f"results written to {out}")
    return 0


def cmd_eps_sweep(r: Resolved, plots: bool) -> int:
    tasks = _load_selected_tasks(r)
    out = _prepare_out(r, "eps-sweep")
    jobs = []
    for task in tasks:
        for eps in r.eps_grid:
            st = replace(r.settings, epsilon=eps)
            jobs.extend((task, st, r.seed, t) for t in range(r.trials))
    outcomes = run_jobs(jobs, r.threads)
    write_rows(os.path.join(out, "results.csv"), _result_rows(outcomes),
               RESULT_COLUMNS)
    summary = []
    for task in tasks:
        for eps in r.eps_grid:
            sets = [o.results for o in outcomes
                    if o.task == task.name and o.settings.epsilon == eps]
            tts = B.tts_stats(sets)
            censored = float(np.mean([v for res in sets
                                      for v in B.censored_tts(res)]))
            summary.append({"task": task.name, "epsilon": eps,
                            "seeds": len(sets),
                            "tts": None if tts is None else round(tts, 2),
                            "censored_tts": round(censored, 2)})
    write_rows(os.path.join(out, "tts.csv"), summary,
               ("task", "epsilon", "seeds", "tts", "censored_tts"))
    for row in summary:
        print(f"{row['task']:<8} eps={row['epsilon']:<5g} "
              f"tts={'-' if row['tts'] is None else row['tts']}")
    if plots:
        from .report import plot_eps_sweep

        plot_eps_sweep(summary, os.path.join(out, "tts.png"))
    print(f"results written to {out}")
    return 0


def cmd_ablation(r: Resolved, plots: bool) -> int:
    tasks = _load_selected_tasks(r)
    out = _prepare_out(r, "ablation")
    configs = AblationConfig.columns()
    jobs = []
    for task in tasks:
        for cfg in configs:
            st = replace(r.settings, reward_mode=cfg.reward_mode,
                         exploration=cfg.exploration, her_enabled=cfg.her_enabled)
            jobs.extend((task, st, r.seed, t) for t in range(r.trials))
    outcomes = run_jobs(jobs, r.threads)
    write_rows(os.path.join(out, "results.csv"), _result_rows(outcomes),
               RESULT_COLUMNS)
    summary = []
    for task in tasks:
        for cfg in configs:
            flags = [o.recovered for o in outcomes
                     if o.task == task.name
                     and o.settings.reward_mode == cfg.reward_mode
                     and o.settings.exploration == cfg.exploration
                     and o.settings.her_enabled == cfg.her_enabled]
            rate, sd = B.recovery_rate(flags)
            summary.append({"task": task.name, "config": cfg.label,
                            "trials": len(flags), "rate": rate, "stdev": sd})
    write_rows(os.path.join(out, "ablation.csv"), summary,
               ("task", "config", "trials", "rate", "stdev"))
    labels = [c.label for c in configs]
    print(f"{'task':<8}" + "".join(f"{lbl:>16}" for lbl in labels))
    for task in tasks:
        cells = []
        for lbl in labels:
            row = next(x for x in summary
                       if x["task"] == task.name and x["config"] == lbl)
            cells.append(f"{row['rate']:>16.0%}")
        print(f"{task.name:<8}" + "".join(cells))
    if plots:
        from .report import plot_ablation

        plot_ablation(summary, os.path.join(out, "ablation.png"))
    print(f"results written to {out}")
    return 0


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        r = resolve(args)
        plots = not args.no_plots
        if args.command == "search":
            return cmd_search(r, args.episode_log, plots)
        if args.command == "bench":
            return cmd_bench(r, plots)
        if args.command == "noise-sweep":
            return cmd_noise_sweep(r, plots)
        if args.command == "eps-sweep":
            return cmd_eps_sweep(r, plots)
        if args.command == "ablation":
            return cmd_ablation(r, plots)
        raise ConfigError(f"unknown command {args.command!r}")
    except ConfigError as e:
        print(f"configuration error: {e}", file=sys.stderr)
        return 2
    except TaskFileError as e:
        print(f"task-file error: {e}", file=sys.stderr)
        return 3
    except FileNotFoundError as e:
        print(f"task-file error: {e}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
