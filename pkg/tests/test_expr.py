import math

import numpy as np
import pytest

from egrlsr import expr
from egrlsr.env import default_vocabulary
from egrlsr.expr import (DomainError, EvalStack, ParseError, PostfixProgram,
                         apply_token, canonical_complexity, evaluate,
                         exact_match, lit, op, parse_infix, to_infix,
                         tree_evaluate, var)

from helpers import random_complete_program

X1 = var(1)


def test_apply_token_pushes_variable_column():
    stack = EvalStack(1)
    out = apply_token(stack, X1, np.array([[2.0]]))
    assert out.depth == 1
    assert out.entries[0][0] == 2.0
    assert stack.depth == 0  # original untouched


def test_apply_token_mul_then_sin_matches_scalar_math():
    inputs = np.array([[0.0]])
    stack = EvalStack(1)
    stack.entries = [np.array([0.5]), np.array([0.5])]
    after_mul = apply_token(stack, op("*"), inputs)
    after_sin = apply_token(after_mul, op("sin"), inputs)
    assert after_sin.depth == 1
    assert after_sin.entries[0][0] == math.sin(0.5 * 0.5)


def test_apply_token_log_of_negative_is_domain_error():
    stack = EvalStack(1)
    stack.entries = [np.array([-1.0])]
    with pytest.raises(DomainError):
        apply_token(stack, op("log"), np.array([[0.0]]))


def test_apply_token_rejects_arity_underflow():
    with pytest.raises(DomainError):
        apply_token(EvalStack(1), op("+"), np.array([[1.0]]))


def test_evaluate_square():
    p = PostfixProgram((X1, X1, op("*")))
    assert evaluate(p, np.array([[3.0]]))[0] == 9.0


def test_evaluate_nguyen3_full_postfix_matches_tree_oracle():
    p = parse_infix("x1^5 + x1^4 + x1^3 + x1^2 + x1")
    xs = np.array([[1.0], [-1.0], [0.5]])
    got = evaluate(p, xs)
    oracle = tree_evaluate(p, xs)
    assert np.array_equal(got, oracle)
    assert got[0] == 5.0


def test_evaluate_log_at_zero_is_domain_error():
    p = PostfixProgram((X1, op("log")))
    with pytest.raises(DomainError):
        evaluate(p, np.array([[0.0]]))


def test_evaluate_division_by_exact_zero_is_domain_error():
    p = parse_infix("x1/(x1-x1)")
    with pytest.raises(DomainError):
        evaluate(p, np.array([[2.0]]))


def test_evaluate_overflow_is_domain_error():
    p = parse_infix("exp(exp(exp(x1)))")
    with pytest.raises(DomainError):
        evaluate(p, np.array([[4.0]]))


def test_evaluate_rejects_incomplete_program():
    with pytest.raises(DomainError):
        evaluate(PostfixProgram((X1, X1)), np.array([[1.0]]))


def test_to_infix_examples():
    assert to_infix(PostfixProgram((X1, op("sin")))) == "sin(x1)"
    assert to_infix(PostfixProgram((X1, X1, op("*"), op("sin")))) == "sin((x1*x1))"
    assert to_infix(PostfixProgram((X1, X1, op("+"), X1, op("/")))) == "((x1+x1)/x1)"


def test_parse_round_trips_to_infix():
    for text in ("sin((x1*x1))", "((x1+x1)/x1)", "(((x1*x1)*x1)+2)"):
        p = parse_infix(text)
        assert parse_infix(to_infix(p)).tokens == p.tokens


def test_parse_rejects_garbage():
    for bad in ("x1 +", "sin(x1", "x1 ^ x1", "1.5 + x1", "foo(x1)", ""):
        with pytest.raises(ParseError):
            parse_infix(bad)


def test_program_validates_prefix_depths():
    with pytest.raises(DomainError):
        PostfixProgram((op("+"), X1, X1))
    with pytest.raises(ValueError):
        PostfixProgram((X1, X1, op("+")), max_len=2)


def test_stack_machine_equals_tree_oracle_on_random_programs():
    rng = np.random.default_rng(42)
    vocab = default_vocabulary(2, literals=True)
    inputs = rng.uniform(0.2, 1.8, size=(20, 2))
    checked = 0
    for _ in range(400):
        p = random_complete_program(rng, vocab, int(rng.integers(1, 13)))
        try:
            got = evaluate(p, inputs)
        except DomainError:
            with pytest.raises(DomainError):
                tree_evaluate(p, inputs)
            continue
        assert np.array_equal(got, tree_evaluate(p, inputs))
        checked += 1
    assert checked > 100


def test_fuzzed_token_sequences_never_crash():
    rng = np.random.default_rng(7)
    vocab = default_vocabulary(1, literals=True)
    inputs = rng.uniform(-1, 1, size=(3, 1))
    rejected = 0
    for _ in range(100_000):
        length = int(rng.integers(1, 7))
        stack = EvalStack(3)
        try:
            for i in rng.integers(0, len(vocab), size=length):
                stack = apply_token(stack, vocab[int(i)], inputs)
        except DomainError:
            rejected += 1
    assert rejected > 0  # invalid sequences are rejected, not crashed on


def test_domain_error_monotonic_once_poisoned():
    # log(x1 - x1) fails mid-program; the whole evaluation must fail even
    # though later tokens would be harmless
    p = parse_infix("(log(x1-x1)+x1)")
    with pytest.raises(DomainError):
        evaluate(p, np.array([[1.0]]))


# -- exact_match ------------------------------------------------------------

def test_exact_match_identical_programs():
    p = parse_infix("sin(x1)*cos(x1)")
    assert exact_match(p, p, (-3.0, 3.0))


def test_exact_match_equivalent_different_shape():
    doubled = parse_infix("x1+x1")
    times_two = parse_infix("2*x1")
    assert exact_match(times_two, doubled, (-3.0, 3.0))
    assert exact_match(doubled, times_two, (-3.0, 3.0))


def test_exact_match_rejects_close_fit_with_wrong_structure():
    # Taylor-style polynomial stand-in for sin(x1^2)+x1: tiny error on the
    # training interval, wildly different outside it
    target = parse_infix("sin(x1^2)+x1")
    candidate = parse_infix("x1 + x1^2 - (x1^6)/6")
    inputs = np.linspace(-1, 1, 20).reshape(-1, 1)
    err = np.max(np.abs(evaluate(candidate, inputs) - evaluate(target, inputs)))
    assert err < 0.01  # convincing on the training range
    assert not exact_match(candidate, target, (-3.0, 3.0))


def test_exact_match_reflexive_and_symmetric():
    programs = [
        parse_infix("x1^2+x1"),
        parse_infix("x1*(x1+1)"),
        parse_infix("sin(x1)"),
        parse_infix("sin(x1)+1"),
    ]
    for p in programs:
        assert exact_match(p, p, (-3.0, 3.0))
    equivalent = (programs[0], programs[1])
    assert exact_match(*equivalent, (-3.0, 3.0))
    assert exact_match(equivalent[1], equivalent[0], (-3.0, 3.0))
    different = (programs[2], programs[3])
    assert not exact_match(*different, (-3.0, 3.0))
    assert not exact_match(different[1], different[0], (-3.0, 3.0))


def test_exact_match_tolerates_shared_domain_failures():
    a = parse_infix("log(x1)")
    b = parse_infix("log(x1) + (x1 - x1)")
    assert exact_match(a, b, (-2.0, 4.0))  # both undefined left of zero


def test_exact_match_requires_complete_programs():
    with pytest.raises(DomainError):
        exact_match(PostfixProgram((X1, X1)), parse_infix("x1"), (-1.0, 1.0))


def test_canonical_complexity_simplifies():
    # x1 + x1 simplifies to 2*x1: three tokens either way
    assert canonical_complexity(parse_infix("x1+x1")) == 3
    assert canonical_complexity(parse_infix("2*x1")) == 3
    assert canonical_complexity(parse_infix("x1")) == 1
