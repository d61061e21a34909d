"""Goal-aware experience buffer and hindsight relabeling.

A failed episode still reaches real outputs: every step whose program
prefix is COMPLETE produced a vector some expression evaluates to. The
relabeler picks up to k of those vectors as substitute goals, copies the
trajectory prefix with the goal swapped, and recomputes rewards, so every
relabeled trajectory ends in reward 1.
"""
from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np

from .env import apsr_reward, nrmse_reward

OUTCOME_SUCCESS = "SUCCESS"
OUTCOME_FAILURE = "FAILURE"


@dataclass(frozen=True)
class Transition:
    """One goal-conditioned step record.

    The observation presented to the network is obs_x ++ goal (and
    next_x ++ goal). next_complete marks whether the program prefix was
    COMPLETE after the step, which decides hindsight-goal eligibility.
    """

    obs_x: np.ndarray
    goal: np.ndarray
    action: int
    reward: float
    next_x: np.ndarray
    next_mask: np.ndarray
    done: bool
    next_complete: bool = False


@dataclass(frozen=True)
class Trajectory:
    transitions: tuple[Transition, ...]
    outcome: str

    def __post_init__(self):
        if self.outcome not in (OUTCOME_SUCCESS, OUTCOME_FAILURE):
            raise ValueError(f"unknown outcome {self.outcome!r}")
        for t in self.transitions[:-1]:
            if t.done:
                raise ValueError("done transition before the end of the trajectory")


def her_relabel(traj: Trajectory, k: int, tau: float,
                rng: np.random.Generator | None = None,
                reward_mode: str = "apsr") -> list[Transition]:
    """Relabel a failed trajectory with up to k hindsight goals.

    Eligible goals are next_x vectors at COMPLETE steps with finite values.
    The final eligible step is always used; the remaining k-1 goals are
    drawn uniformly without replacement from earlier eligible steps. Each
    chosen step i yields a copy of transitions[0..i] with the goal replaced
    and rewards recomputed; the copy is truncated at the first step that
    satisfies the reward against the new goal, which becomes terminal with
    reward 1. Returns an empty list when no eligible step exists.
    """
    if traj.outcome != OUTCOME_FAILURE:
        raise ValueError("hindsight relabeling applies to failed trajectories")
    if k < 1:
        raise ValueError("k must be >= 1")
    rng = rng or np.random.default_rng()
    eligible = [
        i
        for i, t in enumerate(traj.transitions)
        if t.next_complete and np.all(np.isfinite(t.next_x))
    ]
    if not eligible:
        return []
    chosen = [eligible[-1]]
    earlier = eligible[:-1]
    extra = min(k - 1, len(earlier))
    if extra > 0:
        picks = rng.choice(len(earlier), size=extra, replace=False)
        chosen.extend(earlier[int(i)] for i in sorted(picks))

    out: list[Transition] = []
    for goal_step in chosen:
        new_goal = traj.transitions[goal_step].next_x
        for i in range(goal_step + 1):
            t = traj.transitions[i]
            reached = t.next_complete and apsr_reward(t.next_x, new_goal, tau) == 1
            if reward_mode == "nrmse":
                reward = nrmse_reward(t.next_x, new_goal) if t.next_complete else 0.0
            else:
                reward = 1.0 if reached else 0.0
            out.append(
                replace(t, goal=new_goal, reward=reward, done=reached)
            )
            if reached:
                break
    return out


class ReplayBuffer:
    """Fixed-capacity FIFO ring with uniform, seeded sampling.

    Storage is column-oriented so batches gather with fancy indexing
    instead of per-transition object handling.
    """

    def __init__(self, capacity: int, n_points: int, n_actions: int,
                 seed: int = 0):
        if capacity < 1:
            raise ValueError("capacity must be >= 1")
        self.capacity = capacity
        self.rng = np.random.default_rng(seed)
        self._obs = np.zeros((capacity, n_points))
        self._goal = np.zeros((capacity, n_points))
        self._next = np.zeros((capacity, n_points))
        self._mask = np.zeros((capacity, n_actions), dtype=bool)
        self._action = np.zeros(capacity, dtype=np.int64)
        self._reward = np.zeros(capacity)
        self._done = np.zeros(capacity, dtype=bool)
        self._complete = np.zeros(capacity, dtype=bool)
        self._head = 0
        self._size = 0

    def __len__(self) -> int:
        return self._size

    def push(self, t: Transition) -> None:
        i = self._head
        self._obs[i] = t.obs_x
        self._goal[i] = t.goal
        self._next[i] = t.next_x
        self._mask[i] = t.next_mask
        self._action[i] = t.action
        self._reward[i] = t.reward
        self._done[i] = t.done
        self._complete[i] = t.next_complete
        self._head = (self._head + 1) % self.capacity
        self._size = min(self._size + 1, self.capacity)

    def extend(self, ts: Sequence[Transition]) -> None:
        for t in ts:
            self.push(t)

    def _order(self) -> np.ndarray:
        """Indices from oldest to newest."""
        if self._size < self.capacity:
            return np.arange(self._size)
        return (np.arange(self.capacity) + self._head) % self.capacity

    def sample_indices(self, batch_size: int) -> np.ndarray:
        if self._size < 1:
            raise ValueError("cannot sample from an empty buffer")
        return self.rng.integers(0, self._size, size=batch_size)

    def sample_arrays(self, batch_size: int) -> tuple[np.ndarray, ...]:
        idx = self._order()[self.sample_indices(batch_size)]
        from .env import observation_transform

        obs = observation_transform(
            np.concatenate([self._obs[idx], self._goal[idx]], axis=1))
        done = self._done[idx]
        next_raw = np.concatenate([self._next[idx], self._goal[idx]], axis=1)
        next_raw[done] = 0.0  # terminal rows never feed the bootstrap
        next_obs = observation_transform(next_raw)
        return (obs, self._action[idx], self._reward[idx], done,
                next_obs, self._mask[idx])

    def sample(self, batch_size: int) -> list[Transition]:
        """Uniform with replacement, seeded; returns Transition values."""
        idx = self._order()[self.sample_indices(batch_size)]
        return [self._get(i) for i in idx]

    def _get(self, i: int) -> Transition:
        return Transition(
            obs_x=self._obs[i].copy(),
            goal=self._goal[i].copy(),
            action=int(self._action[i]),
            reward=float(self._reward[i]),
            next_x=self._next[i].copy(),
            next_mask=self._mask[i].copy(),
            done=bool(self._done[i]),
            next_complete=bool(self._complete[i]),
        )

    def as_list(self) -> list[Transition]:
        """All stored transitions, oldest first (testing/introspection)."""
        return [self._get(i) for i in self._order()]
