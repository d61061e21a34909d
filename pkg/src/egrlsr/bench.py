"""Benchmark tasks, sampling, noise injection, metrics, and ablation
configurations, plus the trial runner shared by the CLI and the
verification suite."""
from __future__ import annotations

import importlib.resources
from dataclasses import dataclass, field, replace
from typing import Iterable, Sequence

import numpy as np

from . import agent as A
from . import env as E
from .expr import PostfixProgram, n_variables, parse_infix, to_infix, exact_match
from .qnet import TrainConfig
from .sghe import default_directions


class TaskFileError(ValueError):
    pass


@dataclass(frozen=True)
class BenchmarkTask:
    name: str
    target: PostfixProgram
    ranges: tuple[tuple[float, float], ...]  # per variable
    n_points: int = 20

    def __post_init__(self):
        if not self.target.is_complete:
            raise ValueError(f"task {self.name}: target is not complete")
        if self.n_points < 1:
            raise ValueError(f"task {self.name}: n_points must be >= 1")
        for lo, hi in self.ranges:
            if not (np.isfinite(lo) and np.isfinite(hi)) or hi <= lo:
                raise ValueError(f"task {self.name}: degenerate range [{lo}, {hi}]")
        k = max(n_variables(self.target), 1)
        if len(self.ranges) == 1 and k > 1:
            object.__setattr__(self, "ranges", tuple(self.ranges) * k)
        elif len(self.ranges) < k:
            raise ValueError(f"task {self.name}: need a range per variable")

    @property
    def n_vars(self) -> int:
        return max(n_variables(self.target), 1)

    def probe_ranges(self, widen: float = 3.0) -> tuple[tuple[float, float], ...]:
        """Sampling ranges stretched around their centers for the
        exact-recovery probe (wider than the training interval)."""
        out = []
        for lo, hi in self.ranges[: self.n_vars]:
            c = 0.5 * (lo + hi)
            h = 0.5 * (hi - lo) * widen
            out.append((c - h, c + h))
        return tuple(out)


@dataclass(frozen=True)
class NoiseSpec:
    level: float
    seed: int = 0

    def __post_init__(self):
        if self.level < 0:
            raise ValueError("noise level must be non-negative")


ABLATION_COLUMNS = (
    ("HER+APSR+SGHE", E.REWARD_APSR, "sghe", True),
    ("HER+APSR+RE", E.REWARD_APSR, "random", True),
    ("HER+nRR+SGHE", E.REWARD_NRMSE, "sghe", True),
    ("nRR+SGHE", E.REWARD_NRMSE, "sghe", False),
)


@dataclass(frozen=True)
class AblationConfig:
    label: str
    reward_mode: str
    exploration: str
    her_enabled: bool

    @staticmethod
    def columns() -> list["AblationConfig"]:
        return [AblationConfig(*c) for c in ABLATION_COLUMNS]


# ---------------------------------------------------------------------------
# Task file I/O.  Line format:  name | infix expression | ranges | n_points
# where ranges is 'lo,hi' per variable, ';'-separated (one range covers all
# variables).  '#' starts a comment.
# ---------------------------------------------------------------------------

def parse_task_line(line: str, lineno: int) -> BenchmarkTask:
    parts = [p.strip() for p in line.split("|")]
    if len(parts) != 4:
        raise TaskFileError(f"line {lineno}: expected 4 '|'-separated fields")
    name, expr_text, range_text, npts_text = parts
    if not name:
        raise TaskFileError(f"line {lineno}: empty task name")
    try:
        target = parse_infix(expr_text)
    except ValueError as e:
        raise TaskFileError(f"line {lineno}: bad expression {expr_text!r}: {e}") from e
    try:
        ranges = tuple(
            (float(r.split(",")[0]), float(r.split(",")[1]))
            for r in range_text.split(";")
        )
        n_points = int(npts_text)
    except (ValueError, IndexError) as e:
        raise TaskFileError(f"line {lineno}: bad range/points field: {e}") from e
    try:
        return BenchmarkTask(name, target, ranges, n_points)
    except ValueError as e:
        raise TaskFileError(f"line {lineno}: {e}") from e


def load_tasks(path) -> list[BenchmarkTask]:
    tasks = []
    seen = set()
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            task = parse_task_line(line, lineno)
            if task.name in seen:
                raise TaskFileError(f"line {lineno}: duplicate task {task.name!r}")
            seen.add(task.name)
            tasks.append(task)
    return tasks


def write_tasks(tasks: Sequence[BenchmarkTask], path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for t in tasks:
            ranges = "; ".join(f"{lo:g},{hi:g}" for lo, hi in t.ranges[: t.n_vars])
            fh.write(f"{t.name} | {to_infix(t.target)} | {ranges} | {t.n_points}\n")


def default_tasks_path() -> str:
    return str(importlib.resources.files("egrlsr").joinpath("tasks/benchmarks.txt"))


def load_default_tasks() -> list[BenchmarkTask]:
    return load_tasks(default_tasks_path())


def find_task(tasks: Sequence[BenchmarkTask], name: str) -> BenchmarkTask:
    for t in tasks:
        if t.name == name:
            return t
    known = ", ".join(t.name for t in tasks)
    raise KeyError(f"unknown task {name!r}; valid names: {known}")


# ---------------------------------------------------------------------------
# Sampling and noise
# ---------------------------------------------------------------------------

def sample_task(task: BenchmarkTask, rng: np.random.Generator,
                max_retries: int = 200) -> E.SampleSet:
    """Uniform draws per variable inside the task ranges; points where the
    target is undefined are redrawn, up to a retry budget."""
    from .expr import _probe_values

    n = task.n_points
    inputs = np.column_stack([
        rng.uniform(lo, hi, size=n) for lo, hi in task.ranges[: task.n_vars]
    ])
    y = _probe_values(task.target, inputs)
    for _ in range(max_retries):
        bad = ~np.isfinite(y)
        if not bad.any():
            return E.SampleSet(inputs, y)
        m = int(bad.sum())
        redraw = np.column_stack([
            rng.uniform(lo, hi, size=m) for lo, hi in task.ranges[: task.n_vars]
        ])
        inputs[bad] = redraw
        y = _probe_values(task.target, inputs)
    raise ValueError(
        f"task {task.name}: target undefined over its sampling range even after "
        f"retries; use a range inside the target's domain (e.g. positive values "
        f"for log)")


def rms(y: np.ndarray) -> float:
    return float(np.sqrt(np.mean(np.square(y))))


def add_noise(s: E.SampleSet, spec: NoiseSpec) -> E.SampleSet:
    """Gaussian noise on the targets with std = level * RMS(y); the zero
    level returns the sample set unchanged, bit for bit."""
    if spec.level == 0.0:
        return s
    rng = np.random.default_rng(spec.seed)
    sigma = spec.level * rms(s.targets)
    noisy = s.targets + rng.normal(0.0, sigma, size=s.targets.shape)
    return E.SampleSet(s.inputs, noisy)


# ---------------------------------------------------------------------------
# Metrics
# ---------------------------------------------------------------------------

def recovery_rate(recovered_flags: Sequence[bool]) -> tuple[float, float]:
    """Fraction of trials recovered and the sample standard deviation of the
    per-trial 0/1 outcomes."""
    if not recovered_flags:
        raise ValueError("need at least one trial")
    v = np.asarray(recovered_flags, dtype=np.float64)
    sd = float(np.std(v, ddof=1)) if v.size > 1 else 0.0
    return float(v.mean()), sd


def trial_recovered(results: Sequence[A.SearchResult], task: BenchmarkTask,
                    tolerance: float = 1e-6) -> bool:
    """A trial recovers the target when some direction's found program is
    equivalent to it on the widened probe range."""
    for r in results:
        if r.found and exact_match(r.program, task.target, task.probe_ranges(),
                                   tolerance):
            return True
    return False


def tts_stats(result_sets: Sequence[Sequence[A.SearchResult]]) -> float | None:
    """Mean trajectories-to-success over every (seed, successful-direction)
    pair; None when nothing succeeded."""
    values = [r.trajectories_to_success
              for results in result_sets for r in results if r.found]
    if not values:
        return None
    return float(np.mean(values))


def censored_tts(results: Sequence[A.SearchResult]) -> list[float]:
    """Per-direction trajectories-to-success, with budget-exhausted
    directions censored at their episode count (a lower bound)."""
    return [float(r.trajectories_to_success if r.found else max(r.episodes, 1))
            for r in results]


def nrmse_reward(f: np.ndarray, y: np.ndarray) -> float:
    return E.nrmse_reward(f, y)


# ---------------------------------------------------------------------------
# Trial runner
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class BenchSettings:
    """Everything one benchmark trial needs besides the task itself."""

    steps_per_direction: int = 50_000
    n_directions: int = 8
    epsilon: float = 0.4
    literals: bool = False
    max_len: int = 20
    tolerance: float = 1e-6
    noise_level: float = 0.0
    noisy_tolerance_scale: float = 3.0
    reward_mode: str = E.REWARD_APSR
    exploration: str = "sghe"
    her_enabled: bool = True
    her_k: int = 4
    train_every: int = 4
    warmup: int = 1_000
    buffer_capacity: int = 100_000
    push_weight: float = 1.0
    train: TrainConfig = field(default_factory=TrainConfig)

    def run_config(self, seed: int) -> A.RunConfig:
        return A.RunConfig(
            steps_per_direction=self.steps_per_direction,
            train_every=self.train_every,
            warmup=self.warmup,
            seed=seed,
            epsilon=self.epsilon,
            her_k=self.her_k,
            her_enabled=self.her_enabled,
            buffer_capacity=self.buffer_capacity,
            push_weight=self.push_weight,
            exploration=self.exploration,
            train=self.train,
        )


@dataclass(frozen=True)
class TrialOutcome:
    task: str
    trial: int
    recovered: bool
    results: tuple[A.SearchResult, ...]
    settings: BenchSettings


def _derive_seed(*parts: int) -> int:
    return int(np.random.SeedSequence(list(parts)).generate_state(1)[0])


def run_trial(task: BenchmarkTask, settings: BenchSettings, master_seed: int,
              trial: int,
              episode_log: list[A.EpisodeRow] | None = None) -> TrialOutcome:
    """One independent trial: sample the training points, optionally inject
    noise (the agent then only ever sees the noisy targets, with the success
    tolerance loosened accordingly), search every direction, and score exact
    recovery against the clean symbolic target."""
    sample_rng = np.random.default_rng(_derive_seed(master_seed, trial, 101))
    clean = sample_task(task, sample_rng)
    tolerance = settings.tolerance
    train_set = clean
    if settings.noise_level > 0.0:
        noise = NoiseSpec(settings.noise_level,
                          seed=_derive_seed(master_seed, trial, 202))
        train_set = add_noise(clean, noise)
        tolerance = (settings.noisy_tolerance_scale * settings.noise_level
                     * rms(clean.targets) + settings.tolerance)
    vocab = E.default_vocabulary(task.n_vars, settings.literals)
    env_cfg = E.EnvConfig(train_set, vocab, settings.max_len, tolerance,
                          settings.reward_mode)
    run_cfg = settings.run_config(_derive_seed(master_seed, trial))
    directions = default_directions(settings.n_directions)
    results = A.run_search(train_set, directions, env_cfg, run_cfg, episode_log)
    recovered = trial_recovered(results, task, settings.tolerance)
    return TrialOutcome(task.name, trial, recovered, tuple(results), settings)


def run_trial_job(args) -> TrialOutcome:
    """Picklable entry point for process pools."""
    task, settings, master_seed, trial = args
    return run_trial(task, settings, master_seed, trial)


def outcome_rows(o: TrialOutcome) -> list[dict]:
    """Flatten a trial outcome into the documented result-row schema."""
    rows = []
    for r in o.results:
        rows.append({
            "task": o.task,
            "trial": o.trial,
            "direction": r.direction_id,
            "found": int(r.found),
            "tts": r.trajectories_to_success if r.found else r.episodes,
            "steps": r.steps_used,
            "noiseLevel": o.settings.noise_level,
            "rewardMode": o.settings.reward_mode,
            "explorationMode": o.settings.exploration,
            "herEnabled": int(o.settings.her_enabled),
        })
    return rows


RESULT_COLUMNS = ("task", "trial", "direction", "found", "tts", "steps",
                  "noiseLevel", "rewardMode", "explorationMode", "herEnabled")
