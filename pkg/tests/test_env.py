import numpy as np
import pytest

from egrlsr import env as E
from egrlsr.expr import PostfixProgram

from helpers import action_index, drive, make_env, random_complete_program


def test_reset_single_variable_starts_at_input_column():
    cfg = make_env(lambda x: x[:, 0] ** 2, n_points=2, seed=1)
    s = E.reset(cfg)
    assert np.array_equal(s.x_now, cfg.sample_set.inputs[:, 0])
    assert np.array_equal(s.goal, cfg.sample_set.targets)


def test_reset_multi_variable_starts_at_zero():
    cfg = make_env(lambda x: x[:, 0] + x[:, 1], n_points=3, n_vars=2, seed=1)
    s = E.reset(cfg)
    assert np.array_equal(s.x_now, np.zeros(3))


def test_observation_is_xnow_concat_goal():
    cfg = make_env(lambda x: x[:, 0], n_points=20, seed=1)
    s = E.reset(cfg)
    assert s.observation.shape == (40,)
    assert np.array_equal(s.observation[:20], s.x_now)
    assert np.array_equal(s.observation[20:], s.goal)


def test_valid_actions_empty_stack_allows_only_pushes():
    cfg = make_env(lambda x: x[:, 0], literals=True)
    mask = E.valid_actions(E.reset(cfg), cfg)
    for i, t in enumerate(cfg.vocabulary):
        assert mask[i] == (t.arity == 0)


def test_valid_actions_depth_one_allows_unary_not_binary():
    cfg = make_env(lambda x: x[:, 0])
    s = E.step(E.reset(cfg), action_index(cfg, "x1"), cfg).next_state
    mask = E.valid_actions(s, cfg)
    assert mask[action_index(cfg, "sin")]
    assert not mask[action_index(cfg, "+")]


def _completable(tokens_used: int, depth: int, action_arity: int, max_len: int) -> bool:
    """Brute-force: can the program still reach depth 1 within max_len after
    applying an action of the given arity?"""
    d = depth + 1 - action_arity
    t = tokens_used + 1
    if action_arity > depth:
        return False
    # cheapest completion appends one binary per extra open node
    return t + (d - 1) <= max_len


def test_valid_actions_match_exhaustive_completability_oracle():
    cfg = make_env(lambda x: x[:, 0], max_len=5, literals=True)
    rng = np.random.default_rng(3)
    seen = 0
    for _ in range(300):
        s = E.reset(cfg)
        while True:
            mask = E.valid_actions(s, cfg)
            assert mask.any()
            for i, tok in enumerate(cfg.vocabulary):
                assert mask[i] == _completable(s.n_tokens, s.depth, tok.arity,
                                               cfg.max_len), (
                    s.n_tokens, s.depth, str(tok))
            seen += 1
            choices = np.flatnonzero(mask)
            out = E.step(s, int(rng.choice(choices)), cfg)
            if out.done:
                break
            s = out.next_state
    assert seen > 500


def test_push_excluded_when_closing_binaries_cannot_fit():
    # depth 2 with 2 tokens of budget left: binary and unary fit, push cannot
    cfg = make_env(lambda x: x[:, 0], max_len=4)
    s = E.reset(cfg)
    s = E.step(s, action_index(cfg, "x1"), cfg).next_state
    s = E.step(s, action_index(cfg, "x1"), cfg).next_state
    mask = E.valid_actions(s, cfg)
    assert not mask[action_index(cfg, "x1")]
    assert mask[action_index(cfg, "+")]
    assert mask[action_index(cfg, "sin")]


def test_step_success_on_square_trajectory():
    cfg = make_env(lambda x: x[:, 0] ** 2, n_points=2, seed=5)
    out, outs = drive(cfg, ["x1", "x1", "*"])
    assert out.status == E.SUCCESS
    assert out.reward == 1.0
    assert out.done
    assert all(o.reward == 0.0 for o in outs[:-1])


def test_step_complete_mismatch_continues_with_zero_reward():
    x = np.array([[1.0], [2.0]])
    y = np.array([1.0, 5.0])  # not x^2 at the second point
    cfg = E.EnvConfig(E.SampleSet(x, y), E.default_vocabulary(1), max_len=8)
    out, _ = drive(cfg, ["x1", "x1", "*"])
    assert out.status == E.RUNNING
    assert out.reward == 0.0
    assert not out.done
    assert out.next_state.is_complete


def test_step_domain_failure_terminates():
    x = np.array([[-1.0]])
    cfg = E.EnvConfig(E.SampleSet(x, np.array([0.0])), E.default_vocabulary(1),
                      max_len=8)
    out, _ = drive(cfg, ["x1", "log"])
    assert out.status == E.DOMAIN_FAIL
    assert out.done
    assert out.reward == 0.0


def test_step_length_exhaustion():
    cfg = make_env(lambda x: x[:, 0] ** 4, max_len=3)
    out, _ = drive(cfg, ["x1", "x1", "*"])  # x^2 != x^4 on generic points
    assert out.status == E.LENGTH_EXCEEDED
    assert out.done


def test_step_rejects_invalid_action():
    cfg = make_env(lambda x: x[:, 0])
    with pytest.raises(ValueError):
        E.step(E.reset(cfg), action_index(cfg, "+"), cfg)


def test_apsr_reward_examples():
    y = np.linspace(-2, 2, 20)
    assert E.apsr_reward(y, y, 1e-6) == 1
    f = y.copy()
    f[7] += 10 * 1e-6 * max(1.0, abs(y[7]))
    assert E.apsr_reward(f, y, 1e-6) == 0
    f = y + 0.5e-6  # within tau/2 everywhere (|y| <= 2 -> bound >= 1e-6)
    assert E.apsr_reward(f, y, 1e-6) == 1


def test_nrmse_reward_values():
    y = np.array([0.0, 2.0])  # std = 1
    assert E.nrmse_reward(y, y) == 1.0
    assert E.nrmse_reward(y + 1.0, y) == 0.5
    with pytest.raises(ValueError):
        E.nrmse_reward(y, np.ones(2))


def test_fuzzed_episodes_keep_reward_binary_and_success_lawful():
    rng = np.random.default_rng(0)
    cfg = make_env(lambda x: x[:, 0] ** 2 + x[:, 0], n_points=3, max_len=5,
                   seed=2)
    statuses = set()
    for _ in range(100_000):
        s = E.reset(cfg)
        while True:
            mask = E.valid_actions(s, cfg)
            a = int(rng.choice(np.flatnonzero(mask)))
            out = E.step(s, a, cfg)
            assert out.reward in (0.0, 1.0)
            assert out.done == (out.status != E.RUNNING)
            assert (out.reward == 1.0) == (out.status == E.SUCCESS)
            if out.status == E.SUCCESS:
                assert E.apsr_reward(out.next_state.x_now, out.next_state.goal,
                                     cfg.tolerance) == 1
            if out.done:
                statuses.add(out.status)
                break
            s = out.next_state
    assert E.SUCCESS in statuses and E.LENGTH_EXCEEDED in statuses


def test_step_is_deterministic():
    cfg = make_env(lambda x: x[:, 0] ** 2, seed=3)
    s = E.reset(cfg)
    s = E.step(s, action_index(cfg, "x1"), cfg).next_state
    a = action_index(cfg, "sin")
    o1 = E.step(s, a, cfg)
    o2 = E.step(s, a, cfg)
    assert o1.status == o2.status and o1.reward == o2.reward
    assert np.array_equal(o1.next_state.x_now, o2.next_state.x_now)


def test_xnow_tracks_most_recent_node():
    cfg = make_env(lambda x: x[:, 0], n_points=4, seed=6)
    x = cfg.sample_set.inputs[:, 0]
    s = E.reset(cfg)
    s = E.step(s, action_index(cfg, "x1"), cfg).next_state
    assert np.array_equal(s.x_now, x)
    s = E.step(s, action_index(cfg, "x1"), cfg).next_state
    s2 = E.step(s, action_index(cfg, "*"), cfg).next_state
    assert np.allclose(s2.x_now, x * x)


def test_observation_transform_is_signed_log():
    v = np.array([-np.e + 1 - np.e * 0, 0.0, np.expm1(2.0)])
    g = E.observation_transform(v)
    assert g[1] == 0.0
    assert np.isclose(g[2], 2.0)
    assert np.all(np.sign(g) == np.sign(v))
