"""Goal-conditioned construction environment.

The state tracks the most recent intermediate numeric output alongside the
target vector (observation = x_now ++ y). A step appends one token to the
postfix program under construction; the episode succeeds as soon as a
COMPLETE prefix satisfies the all-point reward against the goal.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .expr import BINARY_OPS, UNARY_OPS, DomainError, Token, lit, op, var

RUNNING = "RUNNING"
SUCCESS = "SUCCESS"
LENGTH_EXCEEDED = "LENGTH_EXCEEDED"
DOMAIN_FAIL = "DOMAIN_FAIL"

REWARD_APSR = "apsr"
REWARD_NRMSE = "nrmse"


def default_vocabulary(n_vars: int, literals: bool = False) -> tuple[Token, ...]:
    """Action vocabulary: variables, optional integer literals {1, 2}, then
    the unified binary and unary operator set."""
    tokens: list[Token] = [var(i) for i in range(1, n_vars + 1)]
    if literals:
        tokens += [lit(1), lit(2)]
    tokens += [op(o) for o in BINARY_OPS]
    tokens += [op(o) for o in UNARY_OPS]
    return tuple(tokens)


def apsr_reward(f: np.ndarray, y: np.ndarray, tau: float) -> int:
    """All-point satisfaction: 1 iff |f_i - y_i| <= tau * max(1, |y_i|)
    at every sample point, else 0."""
    if f.shape != y.shape:
        raise ValueError("vector lengths differ")
    return int(np.all(np.abs(f - y) <= tau * np.maximum(1.0, np.abs(y))))


def nrmse_reward(f: np.ndarray, y: np.ndarray) -> float:
    """Continuous ablation reward r = 1 / (1 + RMSE(f, y) / std(y))."""
    if f.shape != y.shape:
        raise ValueError("vector lengths differ")
    sd = float(np.std(y))
    if sd == 0.0:
        raise ValueError("degenerate target: std(y) = 0")
    rmse = float(np.sqrt(np.mean((f - y) ** 2)))
    return 1.0 / (1.0 + rmse / sd)


@dataclass(frozen=True)
class SampleSet:
    """Input matrix (N x K) and target vector of length N."""

    inputs: np.ndarray
    targets: np.ndarray

    def __post_init__(self):
        inputs = np.asarray(self.inputs, dtype=np.float64)
        targets = np.asarray(self.targets, dtype=np.float64)
        if inputs.ndim != 2 or targets.ndim != 1 or inputs.shape[0] != targets.shape[0]:
            raise ValueError("inputs must be N x K with N matching targets")
        if inputs.shape[0] < 1:
            raise ValueError("need at least one sample point")
        if not (np.all(np.isfinite(inputs)) and np.all(np.isfinite(targets))):
            raise ValueError("sample set contains NaN/inf")
        object.__setattr__(self, "inputs", inputs)
        object.__setattr__(self, "targets", targets)

    @property
    def n_points(self) -> int:
        return self.inputs.shape[0]

    @property
    def n_vars(self) -> int:
        return self.inputs.shape[1]


@dataclass(frozen=True)
class EnvConfig:
    sample_set: SampleSet
    vocabulary: tuple[Token, ...]
    max_len: int = 20
    tolerance: float = 1e-6
    reward_mode: str = REWARD_APSR

    def __post_init__(self):
        if self.max_len < 1:
            raise ValueError("max_len must be >= 1")
        if self.tolerance <= 0:
            raise ValueError("tolerance must be positive")
        if self.reward_mode not in (REWARD_APSR, REWARD_NRMSE):
            raise ValueError(f"unknown reward mode {self.reward_mode!r}")
        # precomputed action groupings for masking and the heuristic policy
        push_idx, unary_idx, binary_idx = [], [], []
        for i, t in enumerate(self.vocabulary):
            if t.arity == 0:
                push_idx.append(i)
            elif t.arity == 1:
                unary_idx.append(i)
            else:
                binary_idx.append(i)
        object.__setattr__(self, "_push_idx", tuple(push_idx))
        object.__setattr__(self, "_unary_idx", tuple(unary_idx))
        object.__setattr__(self, "_binary_idx", tuple(binary_idx))

    @property
    def n_actions(self) -> int:
        return len(self.vocabulary)

    @property
    def push_indices(self) -> tuple[int, ...]:
        return self._push_idx

    @property
    def unary_indices(self) -> tuple[int, ...]:
        return self._unary_idx

    @property
    def binary_indices(self) -> tuple[int, ...]:
        return self._binary_idx


@dataclass(frozen=True)
class StackNode:
    """One open node: its value vector plus the structural bookkeeping the
    exploration heuristic needs (token count and deepest unary chain)."""

    values: np.ndarray
    token_count: int
    unary_chain: int


@dataclass(frozen=True)
class EnvState:
    x_now: np.ndarray
    goal: np.ndarray
    stack: tuple[StackNode, ...]
    tokens: tuple[Token, ...]
    unary_used: int = 0

    @property
    def depth(self) -> int:
        return len(self.stack)

    @property
    def n_tokens(self) -> int:
        return len(self.tokens)

    @property
    def is_complete(self) -> bool:
        return len(self.stack) == 1

    @property
    def observation(self) -> np.ndarray:
        return np.concatenate([self.x_now, self.goal])


@dataclass(frozen=True)
class StepOutcome:
    next_state: EnvState
    reward: float
    done: bool
    status: str


def reset(cfg: EnvConfig) -> EnvState:
    """Initial state: x_now is the input column for single-variable tasks,
    the zero vector otherwise."""
    s = cfg.sample_set
    if s.n_vars == 1:
        x_now = s.inputs[:, 0].copy()
    else:
        x_now = np.zeros(s.n_points)
    return EnvState(x_now=x_now, goal=s.targets, stack=(), tokens=())


def valid_actions(state: EnvState, cfg: EnvConfig) -> np.ndarray:
    """Boolean mask over the vocabulary. Arity must be satisfiable and the
    program must stay completable: after the token, the minimum tokens to
    reach depth 1 (one binary per extra open node) must fit in max_len."""
    mask = np.zeros(cfg.n_actions, dtype=bool)
    t = state.n_tokens
    d = state.depth
    budget = cfg.max_len
    if state.depth >= 0 and t + d + 1 <= budget:
        for i in cfg.push_indices:
            mask[i] = True
    if d >= 1 and t + d <= budget:
        for i in cfg.unary_indices:
            mask[i] = True
    if d >= 2:  # t + d - 1 <= budget holds inductively for reachable states
        for i in cfg.binary_indices:
            mask[i] = True
    return mask


def _invalid_vector(n: int) -> np.ndarray:
    return np.full(n, np.nan)


def step(state: EnvState, action: int, cfg: EnvConfig) -> StepOutcome:
    """Apply one action token. Rejects arity/length violations outright
    (programming error), fails the episode on non-finite values, and checks
    the goal whenever the program prefix is COMPLETE."""
    if not valid_actions(state, cfg)[action]:
        raise ValueError(f"action {action} invalid in this state")
    tok = cfg.vocabulary[action]
    s = cfg.sample_set
    stack = list(state.stack)
    unary_used = state.unary_used

    if tok.kind == "var":
        node = StackNode(s.inputs[:, tok.index - 1], 1, 0)
        stack.append(node)
    elif tok.kind == "lit":
        node = StackNode(np.full(s.n_points, float(tok.value)), 1, 0)
        stack.append(node)
    elif tok.kind == "unary":
        top = stack.pop()
        from .expr import _UNARY_FN  # local import keeps module load light

        with np.errstate(all="ignore"):
            v = _UNARY_FN[tok.op](top.values)
        if not np.all(np.isfinite(v)):
            return _fail(state, tok, cfg)
        node = StackNode(v, top.token_count + 1, top.unary_chain + 1)
        stack.append(node)
        unary_used += 1
    else:
        b = stack.pop()
        a = stack.pop()
        from .expr import _BINARY_FN

        with np.errstate(all="ignore"):
            v = _BINARY_FN[tok.op](a.values, b.values)
        if not np.all(np.isfinite(v)):
            return _fail(state, tok, cfg)
        node = StackNode(
            v, a.token_count + b.token_count + 1, max(a.unary_chain, b.unary_chain)
        )
        stack.append(node)

    next_state = EnvState(
        x_now=node.values,
        goal=state.goal,
        stack=tuple(stack),
        tokens=state.tokens + (tok,),
        unary_used=unary_used,
    )
    complete = next_state.is_complete
    reached = complete and apsr_reward(node.values, state.goal, cfg.tolerance) == 1
    if cfg.reward_mode == REWARD_NRMSE:
        reward = nrmse_reward(node.values, state.goal) if complete else 0.0
    else:
        reward = 1.0 if reached else 0.0
    if reached:
        return StepOutcome(next_state, reward, True, SUCCESS)
    if next_state.n_tokens >= cfg.max_len:
        return StepOutcome(next_state, reward, True, LENGTH_EXCEEDED)
    return StepOutcome(next_state, reward, False, RUNNING)


def _fail(state: EnvState, tok: Token, cfg: EnvConfig) -> StepOutcome:
    nan = _invalid_vector(cfg.sample_set.n_points)
    next_state = EnvState(
        x_now=nan,
        goal=state.goal,
        stack=(),
        tokens=state.tokens + (tok,),
        unary_used=state.unary_used,
    )
    return StepOutcome(next_state, 0.0, True, DOMAIN_FAIL)


def observation_transform(v: np.ndarray) -> np.ndarray:
    """Bijective, order-preserving squash applied at the network input:
    sign(v) * ln(1 + |v|). Raw vectors stay in transitions."""
    return np.sign(v) * np.log1p(np.abs(v))
