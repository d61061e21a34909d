"""Structure-guided heuristic exploration.

The expression space is partitioned into directions described by three
structural attributes: how many unary operators appear, how deeply unary
operators nest, and how long the sub-expression under each unary must be.
Each direction owns its own value network and replay buffer; the heuristic
branch of the epsilon-split builds variable/binary nodes until a unary's
length window is hit, then fires the unary.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .env import EnvConfig, EnvState
from .qnet import QNetwork, Trainer, masked_argmax
from .replay import ReplayBuffer

SHORT_RANGE = (1, 3)
LONG_RANGE = (4, 9)


@dataclass(frozen=True)
class DirectionSpec:
    """One structural subspace.

    arg_ranges holds one inclusive [lo, hi] token-length window per unary
    use (the i-th unary fired must wrap a node whose token count lies in
    arg_ranges[i]). nesting_depth bounds how many unary operators may sit
    above another one inside any subtree.
    """

    unary_count: int
    nesting_depth: int
    arg_ranges: tuple[tuple[int, int], ...]

    def __post_init__(self):
        if self.unary_count < 0 or self.nesting_depth < 0:
            raise ValueError("counts must be non-negative")
        if self.nesting_depth > self.unary_count:
            raise ValueError("nesting depth cannot exceed the unary count")
        ranges = tuple((int(lo), int(hi)) for lo, hi in self.arg_ranges)
        object.__setattr__(self, "arg_ranges", ranges)
        if len(ranges) < max(self.unary_count, 1):
            raise ValueError("need one arg range per unary use")
        for lo, hi in ranges:
            if lo < 1 or hi < lo:
                raise ValueError(f"bad arg length range [{lo}, {hi}]")

    def label(self) -> str:
        rs = ",".join(f"{lo}-{hi}" for lo, hi in self.arg_ranges[: max(self.unary_count, 1)])
        return f"u{self.unary_count}d{self.nesting_depth}[{rs}]"


def default_directions(count: int) -> list[DirectionSpec]:
    """Deterministic direction grid: a pure-polynomial direction, single
    unaries with short/long argument windows, unary pairs over the window
    combinations, and nested pairs; truncated or cycled to count."""
    if count < 1:
        raise ValueError("count must be >= 1")
    s, l = SHORT_RANGE, LONG_RANGE
    grid = [
        DirectionSpec(0, 0, ((1, 1),)),
        DirectionSpec(1, 0, (s,)),
        DirectionSpec(1, 0, (l,)),
        DirectionSpec(2, 0, (s, s)),
        DirectionSpec(2, 0, (s, l)),
        DirectionSpec(2, 0, (l, l)),
        DirectionSpec(2, 1, (s, s)),
        DirectionSpec(2, 1, (l, l)),
    ]
    return [grid[i % len(grid)] for i in range(count)]


@dataclass
class DirectionWorker:
    """One direction's private learner: spec, networks, buffer, counters."""

    direction_id: int
    spec: DirectionSpec
    trainer: Trainer
    buffer: ReplayBuffer
    rng: np.random.Generator
    budget: int
    episodes: int = 0
    successes: int = 0
    steps_used: int = 0
    heuristic_fallbacks: int = 0

    @property
    def net(self) -> QNetwork:
        return self.trainer.net

    @property
    def target(self) -> QNetwork:
        return self.trainer.target


def _unary_should_fire(state: EnvState, spec: DirectionSpec) -> bool:
    if state.depth < 1 or state.unary_used >= spec.unary_count:
        return False
    top = state.stack[-1]
    lo, hi = spec.arg_ranges[state.unary_used]
    if not (lo <= top.token_count <= hi):
        return False
    return top.unary_chain <= spec.nesting_depth


def heuristic_action(state: EnvState, spec: DirectionSpec, valid: np.ndarray,
                     cfg: EnvConfig, rng: np.random.Generator,
                     push_weight: float = 1.0,
                     worker: DirectionWorker | None = None) -> int:
    """Structure-constrained action choice.

    Fires a unary exactly when the top node's token count sits inside the
    window for the next unary use, the unary quota is unspent, and wrapping
    the top respects the nesting bound. Otherwise samples among valid
    variable/literal/binary actions, with pushes weighted by push_weight.
    If the constraints exclude every valid action, falls back to a uniform
    choice over valid (counted on the worker).
    """
    if not valid.any():
        raise ValueError("no valid actions")
    if _unary_should_fire(state, spec):
        unary_valid = [i for i in cfg.unary_indices if valid[i]]
        if unary_valid:
            return int(rng.choice(unary_valid))
        # length-mask removed the unaries: structural intent unrealizable
        if worker is not None:
            worker.heuristic_fallbacks += 1
        return int(rng.choice(np.flatnonzero(valid)))
    choices = [i for i in cfg.push_indices if valid[i]]
    weights = [push_weight] * len(choices)
    for i in cfg.binary_indices:
        if valid[i]:
            choices.append(i)
            weights.append(1.0)
    if not choices:
        if worker is not None:
            worker.heuristic_fallbacks += 1
        return int(rng.choice(np.flatnonzero(valid)))
    w = np.asarray(weights)
    return int(rng.choice(choices, p=w / w.sum()))


def select_action(state: EnvState, worker: DirectionWorker, epsilon: float,
                  valid: np.ndarray, cfg: EnvConfig,
                  rng: np.random.Generator, push_weight: float = 1.0,
                  heuristic: str = "sghe") -> int:
    """epsilon-split policy: with probability epsilon follow the structural
    heuristic (or a uniform random choice in ablation mode), otherwise take
    the network argmax over valid actions, ties to the lowest index."""
    if not (0.0 <= epsilon <= 1.0):
        raise ValueError("epsilon must lie in [0, 1]")
    if epsilon > 0.0 and rng.random() < epsilon:
        if heuristic == "random":
            return int(rng.choice(np.flatnonzero(valid)))
        return heuristic_action(state, worker.spec, valid, cfg, rng,
                                push_weight, worker)
    from .env import observation_transform

    q = worker.net.q_values(observation_transform(state.observation))
    return masked_argmax(q, valid)
