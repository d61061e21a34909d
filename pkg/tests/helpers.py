"""Shared test utilities: random program generation and tiny environments."""
from __future__ import annotations

import numpy as np

from egrlsr import env as E
from egrlsr.expr import PostfixProgram, Token


def random_complete_program(rng: np.random.Generator, vocab: tuple[Token, ...],
                            length: int) -> PostfixProgram:
    """Random COMPLETE program of exactly `length` tokens, built with the
    same completability mask the environment enforces."""
    pushes = [t for t in vocab if t.arity == 0]
    unaries = [t for t in vocab if t.arity == 1]
    binaries = [t for t in vocab if t.arity == 2]
    tokens: list[Token] = []
    depth = 0
    while len(tokens) < length:
        t = len(tokens)
        options: list[Token] = []
        if t + depth + 1 <= length:
            options += pushes
        if depth >= 1 and t + depth <= length:
            options += unaries
        if depth >= 2:
            options += binaries
        tok = options[int(rng.integers(len(options)))]
        tokens.append(tok)
        depth += 1 - tok.arity
    assert depth == 1
    return PostfixProgram(tuple(tokens), length)


def make_env(target_fn, n_points: int = 5, n_vars: int = 1, max_len: int = 8,
             literals: bool = False, tolerance: float = 1e-6,
             reward_mode: str = E.REWARD_APSR, seed: int = 0,
             lo: float = -1.0, hi: float = 1.0) -> E.EnvConfig:
    rng = np.random.default_rng(seed)
    x = rng.uniform(lo, hi, size=(n_points, n_vars))
    y = target_fn(x)
    ss = E.SampleSet(x, y)
    vocab = E.default_vocabulary(n_vars, literals)
    return E.EnvConfig(ss, vocab, max_len, tolerance, reward_mode)


def action_index(cfg: E.EnvConfig, name: str) -> int:
    for i, t in enumerate(cfg.vocabulary):
        if str(t) == name:
            return i
    raise KeyError(name)


def drive(cfg: E.EnvConfig, names: list[str]):
    """Apply a token-name sequence; returns (final outcome, all outcomes)."""
    s = E.reset(cfg)
    outs = []
    out = None
    for name in names:
        out = E.step(s, action_index(cfg, name), cfg)
        outs.append(out)
        s = out.next_state
        if out.done:
            break
    return out, outs
