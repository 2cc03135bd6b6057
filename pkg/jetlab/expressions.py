"""
Coefficient expressions: tokenizer, recursive-descent parser, AST and a
vectorized numpy evaluator.

Grammar::

    expr   := term (('+' | '-') term)*
    term   := unary (('*' | '/') unary)*
    unary  := ('-' | '+') unary | power
    power  := atom ('^' unary)?            # right-associative
    atom   := NUMBER | VAR | FUNC '(' expr (',' expr)* ')' | '(' expr ')'

Variables are x1..xn (base point), r (value slot) and p1..pn (gradient).
"""

import logging
import re
from dataclasses import dataclass
from typing import Any, Callable, Dict, List, Mapping, NamedTuple, Optional, Sequence, Set, Tuple

import numpy as np

from .errors import EvalError, ExpressionSyntaxError, InvalidCoefficient

logger = logging.getLogger(__name__)

UNARY_FUNCTIONS = {
    "exp": np.exp,
    "sin": np.sin,
    "cos": np.cos,
    "abs": np.abs,
    "sqrt": np.sqrt,
}
VARIADIC_FUNCTIONS = {
    "min": np.minimum,
    "max": np.maximum,
}
FUNCTIONS = set(UNARY_FUNCTIONS) | set(VARIADIC_FUNCTIONS)

_VARIABLE = re.compile(r"^(?:r|[xp][1-9][0-9]*)$")

_TOKEN_SPEC = [
    ("NUMBER", r"(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?"),
    ("IDENT", r"[A-Za-z_][A-Za-z_0-9]*"),
    ("OP", r"[+\-*/^]"),
    ("LPAREN", r"\("),
    ("RPAREN", r"\)"),
    ("COMMA", r","),
    ("NEWLINE", r"\n"),
    ("SKIP", r"[ \t\r]+"),
    ("MISMATCH", r"."),
]
_TOKEN_RE = re.compile("|".join(f"(?P<{name}>{pattern})" for name, pattern in _TOKEN_SPEC))


class Token(NamedTuple):
    kind: str
    text: str
    line: int
    col: int


def tokenize(source: str) -> List[Token]:
    """Split source into tokens with 1-based line/column positions."""
    tokens = []
    line = 1
    line_start = 0
    for match in _TOKEN_RE.finditer(source):
        kind = match.lastgroup
        text = match.group()
        col = match.start() - line_start + 1
        if kind == "NEWLINE":
            line += 1
            line_start = match.end()
            continue
        if kind == "SKIP":
            continue
        if kind == "MISMATCH":
            raise ExpressionSyntaxError(f"unexpected character {text!r}", line, col,
                                        ["number", "variable", "function", "("])
        tokens.append(Token(kind, text, line, col))
    tokens.append(Token("EOF", "", line, len(source) - line_start + 1))
    return tokens


class Node:
    """Base class of expression AST nodes."""

    def to_source(self) -> str:
        raise NotImplementedError

    def evaluate(self, env: Mapping[str, Any]) -> np.ndarray:
        raise NotImplementedError

    def variables(self) -> Set[str]:
        return set()


@dataclass(frozen=True)
class Num(Node):
    value: float

    def to_source(self) -> str:
        text = repr(float(self.value))
        return f"({text})" if self.value < 0 else text

    def evaluate(self, env):
        return np.asarray(self.value, dtype=float)


@dataclass(frozen=True)
class Var(Node):
    name: str

    def to_source(self) -> str:
        return self.name

    def evaluate(self, env):
        if self.name not in env:
            raise EvalError(f"unbound variable {self.name}")
        return np.asarray(env[self.name], dtype=float)

    def variables(self) -> Set[str]:
        return {self.name}


@dataclass(frozen=True)
class Unary(Node):
    op: str
    operand: Node

    def to_source(self) -> str:
        return f"({self.op}{self.operand.to_source()})"

    def evaluate(self, env):
        value = self.operand.evaluate(env)
        return -value if self.op == "-" else value

    def variables(self) -> Set[str]:
        return self.operand.variables()


@dataclass(frozen=True)
class Binary(Node):
    op: str
    left: Node
    right: Node

    def to_source(self) -> str:
        return f"({self.left.to_source()} {self.op} {self.right.to_source()})"

    def evaluate(self, env):
        a = self.left.evaluate(env)
        b = self.right.evaluate(env)
        if self.op == "+":
            return a + b
        if self.op == "-":
            return a - b
        if self.op == "*":
            return a * b
        if self.op == "/":
            if np.any(b == 0.0):
                raise EvalError("division by zero")
            return a / b
        with np.errstate(invalid="ignore", over="ignore", divide="ignore"):
            result = np.power(a, b)
        if np.any(np.isnan(result) & ~np.isnan(a + b)):
            raise EvalError("power of a negative base with non-integer exponent")
        if np.any((a == 0.0) & (b < 0.0)):
            raise EvalError("division by zero")
        return result

    def variables(self) -> Set[str]:
        return self.left.variables() | self.right.variables()


@dataclass(frozen=True)
class Call(Node):
    name: str
    args: Tuple[Node, ...]

    def to_source(self) -> str:
        return f"{self.name}({', '.join(a.to_source() for a in self.args)})"

    def evaluate(self, env):
        values = [a.evaluate(env) for a in self.args]
        if self.name in VARIADIC_FUNCTIONS:
            fn = VARIADIC_FUNCTIONS[self.name]
            result = values[0]
            for v in values[1:]:
                result = fn(result, v)
            return result
        if self.name == "sqrt" and np.any(values[0] < 0.0):
            raise EvalError("sqrt of a negative number")
        with np.errstate(over="ignore"):
            return UNARY_FUNCTIONS[self.name](values[0])

    def variables(self) -> Set[str]:
        out: Set[str] = set()
        for a in self.args:
            out |= a.variables()
        return out


class Parser:
    """Recursive-descent parser over the token stream."""

    def __init__(self, source: str):
        self.source = source
        self.tokens = tokenize(source)
        self.pos = 0

    @property
    def current(self) -> Token:
        return self.tokens[self.pos]

    def _advance(self) -> Token:
        token = self.tokens[self.pos]
        self.pos += 1
        return token

    def _error(self, message: str, expected: Sequence[str], token: Optional[Token] = None):
        token = token or self.current
        found = "end of input" if token.kind == "EOF" else repr(token.text)
        return ExpressionSyntaxError(f"{message}, found {found}", token.line, token.col, expected)

    def _expect(self, kind: str, text: str) -> Token:
        if self.current.kind != kind:
            raise self._error(f"expected {text!r}", [text])
        return self._advance()

    def parse(self) -> Node:
        node = self._expr()
        if self.current.kind != "EOF":
            raise self._error("unexpected trailing input", ["+", "-", "*", "/", "^", "end of input"])
        return node

    def _expr(self) -> Node:
        node = self._term()
        while self.current.kind == "OP" and self.current.text in "+-":
            op = self._advance().text
            node = Binary(op, node, self._term())
        return node

    def _term(self) -> Node:
        node = self._unary()
        while self.current.kind == "OP" and self.current.text in "*/":
            op = self._advance().text
            node = Binary(op, node, self._unary())
        return node

    def _unary(self) -> Node:
        if self.current.kind == "OP" and self.current.text in "+-":
            op = self._advance().text
            operand = self._unary()
            return operand if op == "+" else Unary("-", operand)
        return self._power()

    def _power(self) -> Node:
        base = self._atom()
        if self.current.kind == "OP" and self.current.text == "^":
            self._advance()
            return Binary("^", base, self._unary())
        return base

    def _atom(self) -> Node:
        token = self.current
        if token.kind == "NUMBER":
            self._advance()
            return Num(float(token.text))
        if token.kind == "LPAREN":
            self._advance()
            node = self._expr()
            self._expect("RPAREN", ")")
            return node
        if token.kind == "IDENT":
            self._advance()
            if _VARIABLE.match(token.text) and self.current.kind != "LPAREN":
                return Var(token.text)
            return self._call(token)
        raise self._error("expected an operand", ["number", "variable", "function", "("])

    def _call(self, head: Token) -> Node:
        if self.current.kind != "LPAREN":
            raise self._error(f"unknown variable {head.text!r}", ["("])
        if head.text not in FUNCTIONS:
            raise ExpressionSyntaxError(f"unknown function {head.text!r}", head.line, head.col,
                                        sorted(FUNCTIONS))
        self._advance()
        args = [self._expr()]
        while self.current.kind == "COMMA":
            self._advance()
            args.append(self._expr())
        self._expect("RPAREN", ")")
        if head.text in UNARY_FUNCTIONS and len(args) != 1:
            raise ExpressionSyntaxError(f"{head.text} takes exactly one argument",
                                        head.line, head.col)
        if head.text in VARIADIC_FUNCTIONS and len(args) < 2:
            raise ExpressionSyntaxError(f"{head.text} takes at least two arguments",
                                        head.line, head.col)
        return Call(head.text, tuple(args))


@dataclass(frozen=True)
class Expression:
    """A parsed expression together with its source text."""
    source: str
    root: Node

    def to_source(self) -> str:
        return self.root.to_source()

    def variables(self) -> Set[str]:
        return self.root.variables()

    def evaluate(self, env: Mapping[str, Any]) -> np.ndarray:
        return self.root.evaluate(env)

    def __call__(self, **env: Any) -> np.ndarray:
        return self.evaluate(env)


def parse_expression(source: str) -> Expression:
    return Expression(source, Parser(source).parse())


def jet_environment(x: Optional[np.ndarray] = None, p: Optional[np.ndarray] = None,
                    r: Optional[np.ndarray] = None) -> Dict[str, np.ndarray]:
    """Bind x1..xn, p1..pn and r from arrays shaped (..., n) and (...)."""
    env: Dict[str, np.ndarray] = {}
    if x is not None:
        x = np.asarray(x, dtype=float)
        for i in range(x.shape[-1]):
            env[f"x{i + 1}"] = x[..., i]
    if p is not None:
        p = np.asarray(p, dtype=float)
        for i in range(p.shape[-1]):
            env[f"p{i + 1}"] = p[..., i]
    if r is not None:
        env["r"] = np.asarray(r, dtype=float)
    return env


class Coefficient:
    """
    A scalar coefficient field c(x, p, r).

    Accepts a number, an expression string, a GridFunction (multilinear
    interpolation in x) or a callable taking (x, p, r).
    """

    def __init__(self, fn: Callable[..., Any], n: int, description: str,
                 depends_on: Set[str]):
        self._fn = fn
        self.n = n
        self.description = description
        self.depends_on = depends_on

    @classmethod
    def parse(cls, spec: Any, n: int) -> "Coefficient":
        from .models import GridFunction

        if isinstance(spec, Coefficient):
            return spec
        if isinstance(spec, bool):
            raise InvalidCoefficient(f"not a coefficient: {spec!r}")
        if isinstance(spec, (int, float)):
            value = float(spec)
            if not np.isfinite(value):
                raise InvalidCoefficient(f"coefficient must be finite, got {spec}")
            return cls(lambda x, p, r: value, n, repr(value), set())
        if isinstance(spec, str):
            expr = parse_expression(spec)
            allowed = {f"x{i + 1}" for i in range(n)} | {f"p{i + 1}" for i in range(n)} | {"r"}
            unknown = expr.variables() - allowed
            if unknown:
                raise InvalidCoefficient(
                    f"expression {spec!r} uses variables {sorted(unknown)} outside dimension {n}")
            return cls(lambda x, p, r: expr.evaluate(jet_environment(x, p, r)), n, spec,
                       expr.variables())
        if isinstance(spec, GridFunction):
            if spec.domain.n != n:
                raise InvalidCoefficient("grid coefficient dimension mismatch")
            return cls(lambda x, p, r: spec.interpolate(x), n, "grid",
                       {f"x{i + 1}" for i in range(n)})
        if callable(spec):
            return cls(spec, n, getattr(spec, "__name__", "callable"),
                       {f"x{i + 1}" for i in range(n)} | {f"p{i + 1}" for i in range(n)} | {"r"})
        raise InvalidCoefficient(f"not a coefficient: {spec!r}")

    @property
    def depends_on_x(self) -> bool:
        return any(name.startswith("x") for name in self.depends_on)

    def __call__(self, x: Any = None, p: Any = None, r: Any = None) -> np.ndarray:
        shapes = []
        if x is not None:
            x = np.asarray(x, dtype=float)
            shapes.append(x.shape[:-1])
        if p is not None:
            p = np.asarray(p, dtype=float)
            shapes.append(p.shape[:-1])
        if r is not None:
            r = np.asarray(r, dtype=float)
            shapes.append(r.shape)
        value = np.asarray(self._fn(x, p, r), dtype=float)
        shape = np.broadcast_shapes(value.shape, *shapes)
        return np.broadcast_to(value, shape)

    def __repr__(self) -> str:
        return f"Coefficient({self.description})"


class MatrixCoefficient:
    """A symmetric matrix field M(x) given entrywise."""

    def __init__(self, entries: Sequence[Sequence[Any]], n: int):
        if not isinstance(entries, (list, tuple)) or not all(isinstance(row, (list, tuple)) for row in entries):
            raise InvalidCoefficient(f"matrix coefficient must be a list of rows, got {entries!r}")
        if len(entries) != n or any(len(row) != n for row in entries):
            raise InvalidCoefficient(f"matrix coefficient must be {n}x{n}")
        self.n = n
        self.entries = [[Coefficient.parse(e, n) for e in row] for row in entries]
        self.description = [[e.description for e in row] for row in self.entries]

    @classmethod
    def parse(cls, spec: Any, n: int) -> "MatrixCoefficient":
        if isinstance(spec, MatrixCoefficient):
            return spec
        if isinstance(spec, (int, float)) or spec is None:
            scale = 0.0 if spec is None else float(spec)
            return cls([[scale if i == j else 0.0 for j in range(n)] for i in range(n)], n)
        return cls(spec, n)

    @property
    def depends_on_x(self) -> bool:
        return any(e.depends_on_x for row in self.entries for e in row)

    def __call__(self, x: Any) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        batch = x.shape[:-1]
        M = np.empty(batch + (self.n, self.n))
        for i in range(self.n):
            for j in range(self.n):
                M[..., i, j] = np.broadcast_to(self.entries[i][j](x), batch)
        return 0.5 * (M + np.swapaxes(M, -1, -2))
