"""Token vocabulary, postfix programs, vectorized evaluation, infix I/O,
and probe-based exact-recovery checks.

Programs are postfix token sequences. Evaluation runs a stack machine over
all sample points at once (one length-N vector per open node); any NaN/inf
produced by a step is a domain failure, never a silent value.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Iterable, Sequence

import numpy as np

UNARY_OPS = ("sin", "cos", "exp", "log")
BINARY_OPS = ("+", "-", "*", "/")

_UNARY_FN: dict[str, Callable[[np.ndarray], np.ndarray]] = {
    "sin": np.sin,
    "cos": np.cos,
    "exp": np.exp,
    "log": np.log,
}
_BINARY_FN: dict[str, Callable[[np.ndarray, np.ndarray], np.ndarray]] = {
    "+": np.add,
    "-": np.subtract,
    "*": np.multiply,
    "/": np.divide,
}


class DomainError(ValueError):
    """An evaluation step produced NaN/inf (log of non-positive, zero
    division, overflow) or a program is structurally malformed."""


@dataclass(frozen=True)
class Token:
    """One vocabulary element: variable, integer literal, unary or binary op.

    kind is one of 'var', 'lit', 'unary', 'binary'. Variables carry a
    1-based index; literals carry a small integer value; operators carry
    their opcode string.
    """

    kind: str
    op: str | None = None
    index: int | None = None
    value: int | None = None

    def __post_init__(self):
        if self.kind == "var":
            if not self.index or self.index < 1:
                raise ValueError("variable index must be >= 1")
        elif self.kind == "lit":
            if self.value is None:
                raise ValueError("literal token needs a value")
        elif self.kind == "unary":
            if self.op not in UNARY_OPS:
                raise ValueError(f"unknown unary op {self.op!r}")
        elif self.kind == "binary":
            if self.op not in BINARY_OPS:
                raise ValueError(f"unknown binary op {self.op!r}")
        else:
            raise ValueError(f"unknown token kind {self.kind!r}")

    @property
    def arity(self) -> int:
        if self.kind in ("var", "lit"):
            return 0
        return 1 if self.kind == "unary" else 2

    def __str__(self) -> str:
        if self.kind == "var":
            return f"x{self.index}"
        if self.kind == "lit":
            return str(self.value)
        return self.op  # type: ignore[return-value]


def var(i: int) -> Token:
    return Token("var", index=i)


def lit(v: int) -> Token:
    return Token("lit", value=v)


def op(name: str) -> Token:
    if name in UNARY_OPS:
        return Token("unary", op=name)
    if name in BINARY_OPS:
        return Token("binary", op=name)
    raise ValueError(f"unknown operator {name!r}")


def stack_depths(tokens: Sequence[Token]) -> list[int]:
    """Stack depth after each token; raises DomainError on arity underflow."""
    depths = []
    d = 0
    for i, t in enumerate(tokens):
        d += 1 - t.arity
        if d < 1:
            raise DomainError(f"token {i} ({t}) underflows the stack")
        depths.append(d)
    return depths


@dataclass(frozen=True)
class PostfixProgram:
    """A postfix token sequence with its episode length threshold.

    Every prefix must keep stack depth >= 1 after the first token; a
    COMPLETE program ends at depth exactly 1.
    """

    tokens: tuple[Token, ...]
    max_len: int = 0

    def __post_init__(self):
        tokens = tuple(self.tokens)
        object.__setattr__(self, "tokens", tokens)
        if self.max_len == 0:
            object.__setattr__(self, "max_len", max(len(tokens), 1))
        if len(tokens) > self.max_len:
            raise ValueError("program longer than max_len")
        stack_depths(tokens)  # validates prefixes

    @property
    def is_complete(self) -> bool:
        if not self.tokens:
            return False
        return stack_depths(self.tokens)[-1] == 1

    def __len__(self) -> int:
        return len(self.tokens)

    def __str__(self) -> str:
        return " ".join(str(t) for t in self.tokens)


class EvalStack:
    """Stack of per-node value vectors (one value per sample point)."""

    def __init__(self, n_points: int):
        self.n_points = n_points
        self.entries: list[np.ndarray] = []

    @property
    def depth(self) -> int:
        return len(self.entries)

    def copy(self) -> "EvalStack":
        s = EvalStack(self.n_points)
        s.entries = list(self.entries)
        return s


def _check_finite(v: np.ndarray, t: Token) -> np.ndarray:
    if not np.all(np.isfinite(v)):
        raise DomainError(f"token {t} produced a non-finite value")
    return v


def apply_token(stack: EvalStack, t: Token, inputs: np.ndarray) -> EvalStack:
    """Apply one token to the stack, returning a new stack.

    Push places a fresh vector; unary replaces the top elementwise; binary
    pops two and pushes op(second-from-top, top). Raises DomainError when
    the result has any NaN/inf component or the arity precondition fails.
    """
    if stack.depth < t.arity:
        raise DomainError(f"token {t} needs arity {t.arity}, stack depth {stack.depth}")
    out = stack.copy()
    if t.kind == "var":
        if t.index > inputs.shape[1]:
            raise DomainError(f"variable x{t.index} exceeds {inputs.shape[1]} features")
        out.entries.append(inputs[:, t.index - 1].astype(np.float64, copy=False))
    elif t.kind == "lit":
        out.entries.append(np.full(stack.n_points, float(t.value)))
    elif t.kind == "unary":
        a = out.entries.pop()
        with np.errstate(all="ignore"):
            out.entries.append(_check_finite(_UNARY_FN[t.op](a), t))
    else:
        b = out.entries.pop()
        a = out.entries.pop()
        with np.errstate(all="ignore"):
            out.entries.append(_check_finite(_BINARY_FN[t.op](a, b), t))
    return out


def evaluate(p: PostfixProgram, inputs: np.ndarray) -> np.ndarray:
    """Evaluate a COMPLETE program over an N x K input matrix."""
    inputs = np.asarray(inputs, dtype=np.float64)
    if inputs.ndim != 2:
        raise ValueError("inputs must be an N x K matrix")
    if not p.is_complete:
        raise DomainError("program is not complete")
    stack = EvalStack(inputs.shape[0])
    for t in p.tokens:
        stack = apply_token(stack, t, inputs)
    return stack.entries[0]


def to_infix(p: PostfixProgram) -> str:
    """Deterministic parenthesized infix rendering of a COMPLETE program."""
    if not p.is_complete:
        raise DomainError("program is not complete")
    stack: list[str] = []
    for t in p.tokens:
        if t.arity == 0:
            stack.append(str(t))
        elif t.arity == 1:
            stack.append(f"{t.op}({stack.pop()})")
        else:
            b = stack.pop()
            a = stack.pop()
            stack.append(f"({a}{t.op}{b})")
    return stack[0]


# ---------------------------------------------------------------------------
# Infix parsing.  Grammar (whitespace ignored):
#   expr    := term (('+'|'-') term)*
#   term    := factor (('*'|'/') factor)*
#   factor  := primary ('^' INT)?
#   primary := INT | 'x'<k> | FUNC '(' expr ')' | '(' expr ')'
# '^' requires a positive integer exponent and expands to repeated
# multiplication, keeping the token set closed under {+,-,*,/,sin,cos,exp,log}.
# ---------------------------------------------------------------------------

class ParseError(ValueError):
    pass


def _tokenize_infix(text: str) -> list[str]:
    out = []
    i = 0
    while i < len(text):
        c = text[i]
        if c.isspace():
            i += 1
        elif c in "+-*/^()":
            out.append(c)
            i += 1
        elif c.isdigit():
            j = i
            while j < len(text) and text[j].isdigit():
                j += 1
            out.append(text[i:j])
            i = j
        elif c.isalpha():
            j = i
            while j < len(text) and (text[j].isalnum() or text[j] == "_"):
                j += 1
            out.append(text[i:j])
            i = j
        else:
            raise ParseError(f"unexpected character {c!r} at position {i}")
    return out


class _Parser:
    def __init__(self, items: list[str]):
        self.items = items
        self.pos = 0

    def peek(self) -> str | None:
        return self.items[self.pos] if self.pos < len(self.items) else None

    def take(self) -> str:
        if self.pos >= len(self.items):
            raise ParseError("unexpected end of expression")
        self.pos += 1
        return self.items[self.pos - 1]

    def expect(self, sym: str):
        got = self.take()
        if got != sym:
            raise ParseError(f"expected {sym!r}, got {got!r}")

    def expr(self) -> list[Token]:
        out = self.term()
        while self.peek() in ("+", "-"):
            o = self.take()
            out = out + self.term() + [op(o)]
        return out

    def term(self) -> list[Token]:
        out = self.factor()
        while self.peek() in ("*", "/"):
            o = self.take()
            out = out + self.factor() + [op(o)]
        return out

    def factor(self) -> list[Token]:
        out = self.primary()
        if self.peek() == "^":
            self.take()
            e = self.take()
            if not e.isdigit() or int(e) < 1:
                raise ParseError(f"'^' needs a positive integer exponent, got {e!r}")
            n = int(e)
            base = list(out)
            for _ in range(n - 1):
                out = out + base + [op("*")]
        return out

    def primary(self) -> list[Token]:
        item = self.take()
        if item.isdigit():
            return [lit(int(item))]
        if item == "(":
            out = self.expr()
            self.expect(")")
            return out
        if item in UNARY_OPS:
            self.expect("(")
            out = self.expr()
            self.expect(")")
            return out + [op(item)]
        if item.startswith("x") and item[1:].isdigit():
            return [var(int(item[1:]))]
        raise ParseError(f"unexpected symbol {item!r}")


def parse_infix(text: str, max_len: int = 0) -> PostfixProgram:
    """Parse an infix expression string into a PostfixProgram."""
    parser = _Parser(_tokenize_infix(text))
    tokens = parser.expr()
    if parser.peek() is not None:
        raise ParseError(f"trailing input at {parser.peek()!r}")
    p = PostfixProgram(tuple(tokens), max_len or len(tokens))
    if not p.is_complete:
        raise ParseError("expression did not reduce to a single value")
    return p


def n_variables(p: PostfixProgram) -> int:
    return max((t.index for t in p.tokens if t.kind == "var"), default=0)


# ---------------------------------------------------------------------------
# Exact-recovery check: wide-range probe agreement plus a canonical
# complexity cap that rejects overfit look-alikes.
# ---------------------------------------------------------------------------

def _to_sympy(p: PostfixProgram):
    import sympy

    stack = []
    for t in p.tokens:
        if t.kind == "var":
            stack.append(sympy.Symbol(f"x{t.index}"))
        elif t.kind == "lit":
            stack.append(sympy.Integer(t.value))
        elif t.kind == "unary":
            a = stack.pop()
            stack.append(getattr(sympy, t.op)(a))
        else:
            b = stack.pop()
            a = stack.pop()
            if t.op == "+":
                stack.append(a + b)
            elif t.op == "-":
                stack.append(a - b)
            elif t.op == "*":
                stack.append(a * b)
            else:
                stack.append(a / b)
    return stack[0]


def canonical_complexity(p: PostfixProgram) -> int:
    """Token count of the algebraically simplified form, mapped back onto
    the engine's vocabulary (integer powers cost repeated multiplies)."""
    import sympy

    simplified = sympy.simplify(_to_sympy(p))
    return _sympy_token_count(simplified)


def _sympy_token_count(e) -> int:
    import sympy

    if e.is_Symbol or e.is_Integer or isinstance(e, (sympy.core.numbers.NaN,)):
        return 1
    if e.is_Rational:
        return 3  # p, q, '/'
    if e.is_Float or e.is_number and e.is_Atom:
        return 1
    if isinstance(e, (sympy.sin, sympy.cos, sympy.exp, sympy.log)):
        return 1 + _sympy_token_count(e.args[0])
    if isinstance(e, sympy.Pow):
        base, expo = e.args
        if expo.is_Integer:
            n = int(expo)
            if n >= 1:
                return n * _sympy_token_count(base) + (n - 1)
            n = -n
            return 1 + 1 + (n * _sympy_token_count(base) + (n - 1))  # 1/(b^n)
        # fractional power: costed as exp(q * log(base))
        return _sympy_token_count(expo) + 1 + _sympy_token_count(base) + 1 + 1
    if isinstance(e, (sympy.Add, sympy.Mul)):
        return sum(_sympy_token_count(a) for a in e.args) + (len(e.args) - 1)
    # anything exotic the simplifier invents counts by its tree size
    return 1 + sum(_sympy_token_count(a) for a in e.args)


def _probe_values(p: PostfixProgram, inputs: np.ndarray) -> np.ndarray:
    """Per-point evaluation that marks domain failures as NaN instead of
    raising, so probe points can be compared failure-for-failure."""
    out = np.full(inputs.shape[0], np.nan)
    stack: list[np.ndarray] = []
    with np.errstate(all="ignore"):
        for t in p.tokens:
            if t.kind == "var":
                stack.append(inputs[:, t.index - 1].astype(np.float64, copy=False))
            elif t.kind == "lit":
                stack.append(np.full(inputs.shape[0], float(t.value)))
            elif t.kind == "unary":
                stack.append(_UNARY_FN[t.op](stack.pop()))
            else:
                b = stack.pop()
                a = stack.pop()
                stack.append(_BINARY_FN[t.op](a, b))
        v = stack[0]
    out[:] = v
    out[~np.isfinite(v)] = np.nan
    return out


def exact_match(
    candidate: PostfixProgram,
    target: PostfixProgram,
    probe_range: Sequence[tuple[float, float]] | tuple[float, float],
    tolerance: float = 1e-6,
    n_probes: int = 1000,
    complexity_slack: int = 2,
    seed: int = 2718,
) -> bool:
    """True iff candidate and target agree at n_probes points drawn from
    probe_range within mixed absolute/relative tolerance at every point,
    and the simplified candidate is no more complex than the simplified
    target plus a small slack.

    A domain failure at a probe point counts as disagreement unless both
    programs fail there.
    """
    if not candidate.is_complete or not target.is_complete:
        raise DomainError("exact_match requires COMPLETE programs")
    if n_probes < 1:
        raise ValueError("need at least one probe point")
    k = max(n_variables(candidate), n_variables(target), 1)
    if isinstance(probe_range[0], (int, float)):
        ranges = [tuple(probe_range)] * k
    else:
        ranges = [tuple(r) for r in probe_range]
        if len(ranges) < k:
            raise ValueError("probe_range must cover every variable")
    rng = np.random.default_rng(seed)
    inputs = np.column_stack(
        [rng.uniform(lo, hi, size=n_probes) for lo, hi in ranges[:k]]
    )
    c = _probe_values(candidate, inputs)
    t = _probe_values(target, inputs)
    both_fail = np.isnan(c) & np.isnan(t)
    either_fail = np.isnan(c) | np.isnan(t)
    with np.errstate(invalid="ignore"):
        close = np.abs(c - t) <= tolerance * np.maximum(1.0, np.abs(t))
    if not np.all(both_fail | (~either_fail & close)):
        return False
    return canonical_complexity(candidate) <= canonical_complexity(target) + complexity_slack


def tree_evaluate(p: PostfixProgram, inputs: np.ndarray) -> np.ndarray:
    """Independent recursive expression-tree evaluation (oracle for the
    stack machine). Builds the tree, then evaluates children before parents
    in the same operand order as the stack machine."""
    inputs = np.asarray(inputs, dtype=np.float64)
    nodes: list[tuple] = []  # (token, child_indices)
    stack: list[int] = []
    for t in p.tokens:
        if t.arity == 0:
            nodes.append((t, ()))
        elif t.arity == 1:
            a = stack.pop()
            nodes.append((t, (a,)))
        else:
            b = stack.pop()
            a = stack.pop()
            nodes.append((t, (a, b)))
        stack.append(len(nodes) - 1)
    if len(stack) != 1:
        raise DomainError("program is not complete")

    def rec(i: int) -> np.ndarray:
        t, kids = nodes[i]
        if t.kind == "var":
            return inputs[:, t.index - 1].astype(np.float64, copy=False)
        if t.kind == "lit":
            return np.full(inputs.shape[0], float(t.value))
        if t.arity == 1:
            with np.errstate(all="ignore"):
                return _check_finite(_UNARY_FN[t.op](rec(kids[0])), t)
        a = rec(kids[0])
        b = rec(kids[1])
        with np.errstate(all="ignore"):
            return _check_finite(_BINARY_FN[t.op](a, b), t)

    return rec(stack[0])
