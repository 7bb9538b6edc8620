"""Polynomial expressions over species counts.

Used for observables f(x) and for explicit propensity factors b(x).  The
grammar is deliberately small: ``+``, ``-``, ``*``, integer powers (``^`` or
``**``), numeric constants and variables.  Variables are either ``x1..xn``
(declaration order) or species names.
"""

from __future__ import annotations

import ast
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Sequence

Monomial = tuple[int, ...]


class ExpressionError(ValueError):
    pass


def _poly_add(p: dict, q: dict, sign: int = 1) -> dict:
    out = dict(p)
    for mono, coef in q.items():
        out[mono] = out.get(mono, 0) + sign * coef
        if out[mono] == 0:
            del out[mono]
    return out


def _poly_mul(p: dict, q: dict) -> dict:
    out: dict = {}
    for m1, c1 in p.items():
        for m2, c2 in q.items():
            mono = tuple(a + b for a, b in zip(m1, m2))
            out[mono] = out.get(mono, 0) + c1 * c2
            if out[mono] == 0:
                del out[mono]
    return out


@dataclass(frozen=True)
class Polynomial:
    """Polynomial in n variables with exact rational coefficients."""

    text: str
    n: int
    terms: tuple[tuple[Monomial, Fraction], ...]
    _fn: Callable[[Sequence[int]], float] = field(repr=False, compare=False, hash=False, default=None)

    def __call__(self, x: Sequence[int]) -> float:
        return self._fn(x)

    def exact(self, x: Sequence[int]) -> Fraction:
        total = Fraction(0)
        for mono, coef in self.terms:
            v = coef
            for xi, e in zip(x, mono):
                if e:
                    v *= xi**e
            total += v
        return total

    @property
    def variables(self) -> frozenset[int]:
        """Indices of variables with a nonzero exponent in some term."""
        return frozenset(i for mono, _ in self.terms for i, e in enumerate(mono) if e)

    @property
    def is_constant(self) -> bool:
        return not self.variables

    def __reduce__(self):
        return (_rebuild_polynomial, (self.text, self.n, self.terms))


def _rebuild_polynomial(text, n, terms):
    return Polynomial(text, n, terms, _compile(terms))


def _compile(terms) -> Callable[[Sequence[int]], float]:
    # Restricted AST was validated already, so generated source only contains
    # numbers, indexing and arithmetic.
    if not terms:
        return lambda x: 0.0
    parts = []
    for mono, coef in terms:
        factors = [repr(float(coef))]
        for i, e in enumerate(mono):
            if e == 1:
                factors.append(f"x[{i}]")
            elif e > 1:
                factors.append(f"x[{i}]**{e}")
        parts.append("*".join(factors))
    src = "lambda x: " + " + ".join(parts)
    return eval(src, {"__builtins__": {}})


def parse_polynomial(text: str, species: Sequence[str]) -> Polynomial:
    """Parse ``text`` into a :class:`Polynomial` over ``len(species)`` variables."""
    n = len(species)
    names = {name: i for i, name in enumerate(species)}
    for i in range(n):
        names.setdefault(f"x{i + 1}", i)
    try:
        tree = ast.parse(text.replace("^", "**"), mode="eval")
    except SyntaxError as exc:
        raise ExpressionError(f"cannot parse expression {text!r}: {exc.msg}") from None

    zero = (0,) * n

    def walk(node) -> dict:
        if isinstance(node, ast.Expression):
            return walk(node.body)
        if isinstance(node, ast.Constant) and isinstance(node.value, (int, float)) and not isinstance(node.value, bool):
            c = Fraction(str(node.value))
            return {zero: c} if c else {}
        if isinstance(node, ast.Name):
            if node.id not in names:
                raise ExpressionError(f"unknown variable {node.id!r} in {text!r}")
            mono = [0] * n
            mono[names[node.id]] = 1
            return {tuple(mono): Fraction(1)}
        if isinstance(node, ast.UnaryOp) and isinstance(node.op, (ast.USub, ast.UAdd)):
            inner = walk(node.operand)
            return inner if isinstance(node.op, ast.UAdd) else {k: -v for k, v in inner.items()}
        if isinstance(node, ast.BinOp):
            if isinstance(node.op, ast.Add):
                return _poly_add(walk(node.left), walk(node.right))
            if isinstance(node.op, ast.Sub):
                return _poly_add(walk(node.left), walk(node.right), -1)
            if isinstance(node.op, ast.Mult):
                return _poly_mul(walk(node.left), walk(node.right))
            if isinstance(node.op, ast.Pow):
                exp = node.right
                if not (isinstance(exp, ast.Constant) and isinstance(exp.value, int) and exp.value >= 0):
                    raise ExpressionError(f"only nonnegative integer powers allowed in {text!r}")
                base = walk(node.left)
                out = {zero: Fraction(1)}
                for _ in range(exp.value):
                    out = _poly_mul(out, base)
                return out
        raise ExpressionError(f"unsupported construct in expression {text!r}")

    poly = walk(tree)
    terms = tuple(sorted(poly.items()))
    return Polynomial(text, n, terms, _compile(terms))
