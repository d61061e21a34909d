"""Per-direction training loop: run episodes, relabel failures, train,
stop at the first exact success."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import env as E
from .env import EnvConfig, EnvState
from .expr import PostfixProgram
from .qnet import QNetwork, Trainer, TrainConfig
from .replay import (OUTCOME_FAILURE, OUTCOME_SUCCESS, ReplayBuffer,
                     Trajectory, Transition, her_relabel)
from .sghe import DirectionSpec, DirectionWorker, default_directions, select_action


@dataclass(frozen=True)
class RunConfig:
    steps_per_direction: int = 50_000
    train_every: int = 4
    warmup: int = 1_000
    seed: int = 0
    epsilon: float = 0.4
    her_k: int = 4
    her_enabled: bool = True
    buffer_capacity: int = 100_000
    push_weight: float = 1.0
    exploration: str = "sghe"  # or "random"
    stop_at_first_success: bool = True
    train: TrainConfig = field(default_factory=TrainConfig)

    def __post_init__(self):
        if min(self.steps_per_direction, self.train_every, self.warmup,
               self.her_k, self.buffer_capacity) < 1:
            raise ValueError("counts must be positive")
        if self.exploration not in ("sghe", "random"):
            raise ValueError(f"unknown exploration mode {self.exploration!r}")


@dataclass(frozen=True)
class SearchResult:
    found: bool
    program: PostfixProgram | None
    trajectories_to_success: int
    steps_used: int
    direction_id: int
    episodes: int
    heuristic_fallbacks: int = 0


@dataclass(frozen=True)
class EpisodeRow:
    direction_id: int
    episode: int
    success: bool
    steps: int


def make_worker(direction_id: int, spec: DirectionSpec, env_cfg: EnvConfig,
                cfg: RunConfig) -> DirectionWorker:
    seq = np.random.SeedSequence([cfg.seed, direction_id])
    init_seed, action_seed, buffer_seed = seq.generate_state(3)
    net = QNetwork(2 * env_cfg.sample_set.n_points, env_cfg.n_actions,
                   cfg.train.hidden_sizes, seed=int(init_seed))
    return DirectionWorker(
        direction_id=direction_id,
        spec=spec,
        trainer=Trainer(net, cfg.train),
        buffer=ReplayBuffer(cfg.buffer_capacity, env_cfg.sample_set.n_points,
                            env_cfg.n_actions, seed=int(buffer_seed)),
        rng=np.random.default_rng(int(action_seed)),
        budget=cfg.steps_per_direction,
    )


def run_direction(worker: DirectionWorker, env_cfg: EnvConfig, cfg: RunConfig,
                  episode_log: list[EpisodeRow] | None = None) -> SearchResult:
    """Episodes until the first success or until the step budget is spent.

    Each episode: reset, then epsilon-split action selection and env steps;
    failed episodes are pushed together with their hindsight relabelings;
    one gradient step runs every train_every env steps once the warmup
    step count has passed.
    """
    found_program: PostfixProgram | None = None
    first_success_episode = 0
    state = E.reset(env_cfg)
    traj: list[Transition] = []
    episode_steps = 0
    batch = cfg.train.batch_size

    while worker.steps_used < worker.budget:
        valid = E.valid_actions(state, env_cfg)
        action = select_action(state, worker, cfg.epsilon, valid, env_cfg,
                               worker.rng, cfg.push_weight, cfg.exploration)
        out = E.step(state, action, env_cfg)
        worker.steps_used += 1
        episode_steps += 1
        next_valid = (E.valid_actions(out.next_state, env_cfg)
                      if not out.done else np.zeros(env_cfg.n_actions, dtype=bool))
        traj.append(Transition(
            obs_x=state.x_now,
            goal=state.goal,
            action=action,
            reward=out.reward,
            next_x=out.next_state.x_now,
            next_mask=next_valid,
            done=out.done,
            next_complete=out.next_state.is_complete,
        ))
        state = out.next_state

        if out.done:
            worker.episodes += 1
            success = out.status == E.SUCCESS
            if episode_log is not None:
                episode_log.append(EpisodeRow(worker.direction_id,
                                              worker.episodes, success,
                                              episode_steps))
            _store_episode(worker, traj, success, env_cfg, cfg)
            if success:
                worker.successes += 1
                program = PostfixProgram(state.tokens, env_cfg.max_len)
                if found_program is None:
                    first_success_episode = worker.episodes
                    found_program = program
                elif len(program) < len(found_program):
                    found_program = program
                if cfg.stop_at_first_success:
                    break
            traj = []
            episode_steps = 0
            state = E.reset(env_cfg)

        if (worker.steps_used > cfg.warmup
                and worker.steps_used % cfg.train_every == 0
                and len(worker.buffer) >= batch):
            worker.trainer.train_arrays(*worker.buffer.sample_arrays(batch))

    if traj and found_program is None:
        # budget ran out mid-episode: keep the partial attempt as failure data
        _store_episode(worker, traj, False, env_cfg, cfg)

    return SearchResult(
        found=found_program is not None,
        program=found_program,
        trajectories_to_success=first_success_episode,
        steps_used=worker.steps_used,
        direction_id=worker.direction_id,
        episodes=worker.episodes,
        heuristic_fallbacks=worker.heuristic_fallbacks,
    )


def _store_episode(worker: DirectionWorker, traj: list[Transition],
                   success: bool, env_cfg: EnvConfig, cfg: RunConfig) -> None:
    worker.buffer.extend(traj)
    if success or not cfg.her_enabled:
        return
    relabeled = her_relabel(
        Trajectory(tuple(traj), OUTCOME_FAILURE), cfg.her_k,
        env_cfg.tolerance, worker.rng, env_cfg.reward_mode)
    worker.buffer.extend(relabeled)


def run_search(sample_set: E.SampleSet, directions: Sequence[DirectionSpec],
               env_cfg: EnvConfig, cfg: RunConfig,
               episode_log: list[EpisodeRow] | None = None) -> list[SearchResult]:
    """One run_direction per spec, with per-direction seeds derived from the
    master seed; results come back in direction order."""
    if not directions:
        raise ValueError("need at least one direction")
    if env_cfg.sample_set is not sample_set:
        env_cfg = EnvConfig(sample_set, env_cfg.vocabulary, env_cfg.max_len,
                            env_cfg.tolerance, env_cfg.reward_mode)
    results = []
    for i, spec in enumerate(directions):
        worker = make_worker(i, spec, env_cfg, cfg)
        results.append(run_direction(worker, env_cfg, cfg, episode_log))
    return results
