"""Reaction networks with product-form propensities a_j(x, c) = c_j b_j(x)."""

from __future__ import annotations

import itertools
import math
import re
from dataclasses import dataclass, field, replace
from functools import cached_property
from typing import Mapping, Sequence

import numpy as np

from .expr import ExpressionError, Polynomial, parse_polynomial

INT64_MAX = 2**63 - 1


class ModelError(ValueError):
    """Invalid model text or inconsistent network definition."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line is not None else message)


class InfeasibleTransition(RuntimeError):
    """A reaction fired from a state where it would drive a count negative."""


@dataclass(frozen=True)
class Reaction:
    name: str
    reactants: Mapping[int, int]
    products: Mapping[int, int]
    rate_param: str
    # None means mass action inferred from the reactant complex.
    polynomial: Polynomial | None = None

    @property
    def mass_action(self) -> bool:
        return self.polynomial is None

    def stoichiometry(self, n: int) -> tuple[int, ...]:
        return tuple(self.products.get(i, 0) - self.reactants.get(i, 0) for i in range(n))

    def b(self, x: Sequence[int]) -> float:
        if self.polynomial is not None:
            return self.polynomial(x)
        v = 1
        for i, k in self.reactants.items():
            v *= math.comb(x[i], k) if x[i] >= k else 0
        return float(v)

    def kinetics_variables(self) -> frozenset[int]:
        if self.polynomial is not None:
            return self.polynomial.variables
        return frozenset(self.reactants)


@dataclass(frozen=True)
class ReactionClassification:
    unconsuming: tuple[int, ...]
    consuming: tuple[int, ...]


@dataclass(frozen=True, eq=False)
class ReactionNetwork:
    species: tuple[str, ...]
    reactions: tuple[Reaction, ...]
    x0: tuple[int, ...]
    params: Mapping[str, float]
    name: str = ""

    def __post_init__(self):
        n = len(self.species)
        if len(set(self.species)) != n:
            raise ModelError("species names must be unique")
        if len({r.name for r in self.reactions}) != len(self.reactions):
            raise ModelError("reaction names must be unique")
        if len(self.x0) != n:
            raise ModelError("initial state length does not match species count")
        if any(v < 0 for v in self.x0):
            raise ModelError("initial counts must be nonnegative")
        for pname, value in self.params.items():
            if not value > 0:
                raise ModelError(f"rate constant {pname} must be positive")
        for r in self.reactions:
            if r.rate_param not in self.params:
                raise ModelError(f"reaction {r.name}: unknown parameter {r.rate_param!r}")
            if not any(r.stoichiometry(n)):
                raise ModelError(f"reaction {r.name}: zero stoichiometric vector")
            for idx in itertools.chain(r.reactants, r.products):
                if not 0 <= idx < n:
                    raise ModelError(f"reaction {r.name}: species index {idx} out of range")

    @property
    def n(self) -> int:
        return len(self.species)

    @property
    def m(self) -> int:
        return len(self.reactions)

    @cached_property
    def nu(self) -> np.ndarray:
        """Stoichiometric matrix, shape (n, m); column j is the change caused by reaction j."""
        nu = np.array([r.stoichiometry(self.n) for r in self.reactions], dtype=np.int64).T
        nu = nu.reshape(self.n, self.m)
        nu.setflags(write=False)
        return nu

    def rate(self, j: int) -> float:
        return float(self.params[self.reactions[j].rate_param])

    def channel(self, ref: int | str) -> int:
        """Resolve a channel by index, reaction name or (unshared) parameter name."""
        if isinstance(ref, (int, np.integer)):
            if not 0 <= ref < self.m:
                raise ModelError(f"channel index {ref} out of range")
            return int(ref)
        for j, r in enumerate(self.reactions):
            if r.name == ref:
                return j
        users = [j for j, r in enumerate(self.reactions) if r.rate_param == ref]
        if len(users) == 1:
            return users[0]
        if users:
            raise ModelError(f"parameter {ref!r} is shared by several reactions; name a reaction instead")
        raise ModelError(f"no reaction or parameter named {ref!r}")

    def with_param(self, name: str, value: float) -> "ReactionNetwork":
        if name not in self.params:
            raise ModelError(f"unknown parameter {name!r}")
        params = dict(self.params)
        params[name] = value
        return replace(self, params=params)

    def with_rate(self, j: int, value: float) -> "ReactionNetwork":
        return self.with_param(self.reactions[j].rate_param, value)

    def with_x0(self, x0: Sequence[int]) -> "ReactionNetwork":
        return replace(self, x0=tuple(int(v) for v in x0))

    @cached_property
    def kernel(self) -> "Kernel":
        return Kernel(self)

    def __getstate__(self):
        state = dict(self.__dict__)
        for key in ("kernel", "nu"):
            state.pop(key, None)
        return state

    def __setstate__(self, state):
        self.__dict__.update(state)


def _make_b(reaction: Reaction):
    """Fast closure for b_j over a list state."""
    if reaction.polynomial is not None:
        return reaction.polynomial._fn
    items = sorted(reaction.reactants.items())
    if not items:
        return lambda x: 1.0
    if len(items) == 1:
        (i, k), = items
        if k == 1:
            return lambda x: float(x[i])
        if k == 2:
            return lambda x: x[i] * (x[i] - 1) * 0.5
        return lambda x: float(math.comb(x[i], k)) if x[i] >= k else 0.0
    if len(items) == 2 and items[0][1] == 1 and items[1][1] == 1:
        (i, _), (l, _) = items
        return lambda x: float(x[i] * x[l])
    return reaction.b


class Kernel:
    """Compiled propensities, state deltas and a species-to-channel dependency map."""

    def __init__(self, net: ReactionNetwork):
        self.m = net.m
        self.n = net.n
        self.rates = [net.rate(j) for j in range(net.m)]
        self.bfuncs = [_make_b(r) for r in net.reactions]
        self.props = [_scaled(c, b) for c, b in zip(self.rates, self.bfuncs)]
        self.deltas = [tuple((i, d) for i, d in enumerate(r.stoichiometry(net.n)) if d) for r in net.reactions]
        readers: dict[int, list[int]] = {}
        for j, r in enumerate(net.reactions):
            for i in r.kinetics_variables():
                readers.setdefault(i, []).append(j)
        self.dependents = [
            tuple(sorted({k for i, _ in self.deltas[j] for k in readers.get(i, ())}))
            for j in range(net.m)
        ]


def _scaled(c, b):
    return lambda x: c * b(x)


def propensity(net: ReactionNetwork, j: int, x: Sequence[int]) -> float:
    """a_j(x, c) = c_j b_j(x); zero when a reactant count is insufficient."""
    r = net.reactions[j]
    value = net.rate(j) * r.b(x)
    if value < 0:
        raise ModelError(f"reaction {r.name}: negative propensity at state {tuple(x)}")
    return value


def classify_reactions(net: ReactionNetwork) -> ReactionClassification:
    nu = net.nu
    unconsuming = tuple(j for j in range(net.m) if (nu[:, j] >= 0).all())
    consuming = tuple(j for j in range(net.m) if j not in unconsuming)
    return ReactionClassification(unconsuming, consuming)


def apply_reaction(x: Sequence[int], net: ReactionNetwork, j: int) -> tuple[int, ...]:
    """State after one firing of channel j."""
    if propensity(net, j, x) <= 0:
        raise InfeasibleTransition(f"reaction {net.reactions[j].name} has zero propensity at {tuple(x)}")
    out = tuple(int(a) + int(d) for a, d in zip(x, net.nu[:, j]))
    if min(out) < 0:
        raise InfeasibleTransition(f"reaction {net.reactions[j].name} drives state {tuple(x)} negative")
    if max(out) > INT64_MAX:
        raise OverflowError("species count exceeds 64-bit range")
    return out


# ---------------------------------------------------------------------------
# model text format

_SECTION = re.compile(r"^\[(params|species|reactions)\]\s*(.*)$")
_ASSIGN = re.compile(r"([A-Za-z_][A-Za-z0-9_']*)\s*=\s*([^\s=]+)")
_REACTION = re.compile(
    r"^([A-Za-z_][A-Za-z0-9_']*)\s*:\s*(.*?)\s*->\s*(.*?)\s*@\s*([A-Za-z_][A-Za-z0-9_']*)\s*(?:\|\s*b\s*=\s*\"([^\"]*)\"\s*)?$"
)
_TERM = re.compile(r"^(\d+)?\s*\*?\s*([A-Za-z_][A-Za-z0-9_']*)$")


def _parse_complex(text: str, index: Mapping[str, int], lineno: int) -> dict[int, int]:
    text = text.strip()
    if text in ("0", "∅", ""):
        if text == "":
            raise ModelError("empty complex; write 0 for the empty complex", lineno)
        return {}
    out: dict[int, int] = {}
    for term in text.split("+"):
        mt = _TERM.match(term.strip())
        if not mt:
            raise ModelError(f"cannot parse complex term {term.strip()!r}", lineno)
        mult = int(mt.group(1) or 1)
        name = mt.group(2)
        if name not in index:
            raise ModelError(f"unknown species {name!r}", lineno)
        if mult <= 0:
            raise ModelError(f"multiplicity of {name} must be positive", lineno)
        out[index[name]] = out.get(index[name], 0) + mult
    return out


def _check_polynomial_kinetics(poly: Polynomial, reactants: Mapping[int, int], name: str, lineno: int):
    # Grid check of nonnegativity and of vanishing below reactant thresholds.
    variables = sorted(poly.variables | set(reactants))
    if not variables:
        if poly.exact([0] * poly.n) < 0:
            raise ModelError(f"reaction {name}: b must be nonnegative", lineno)
        return
    top = max([3] + [k + 2 for k in reactants.values()])
    span = max(2, int(4096 ** (1 / len(variables))))
    values = range(min(top, span) + 1)
    for combo in itertools.product(values, repeat=len(variables)):
        x = [0] * poly.n
        for i, v in zip(variables, combo):
            x[i] = v
        val = poly.exact(x)
        if val < 0:
            raise ModelError(f"reaction {name}: b is negative at {tuple(x)}", lineno)
        if val != 0 and any(x[i] < k for i, k in reactants.items()):
            raise ModelError(f"reaction {name}: b must vanish when reactants are insufficient, fails at {tuple(x)}", lineno)


def parse_model(text: str, name: str = "") -> ReactionNetwork:
    """Parse the line-oriented model format into a validated network."""
    params: dict[str, float] = {}
    species: list[str] = []
    x0: list[int] = []
    pending: list[tuple[int, str]] = []
    section = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        ms = _SECTION.match(line)
        if ms:
            section, line = ms.group(1), ms.group(2).strip()
            if not line:
                continue
        if section is None:
            raise ModelError("content before any [section] header", lineno)
        if section == "reactions":
            pending.append((lineno, line))
            continue
        pairs = _ASSIGN.findall(line)
        if not pairs or _ASSIGN.sub("", line).strip():
            raise ModelError(f"expected 'name = value' entries, got {line!r}", lineno)
        for key, value in pairs:
            if section == "params":
                try:
                    v = float(value)
                except ValueError:
                    raise ModelError(f"bad number {value!r} for parameter {key}", lineno) from None
                if not (v > 0 and math.isfinite(v)):
                    raise ModelError(f"rate constant {key} must be positive, got {value}", lineno)
                if key in params:
                    raise ModelError(f"duplicate parameter {key}", lineno)
                params[key] = v
            else:
                try:
                    v = int(value)
                except ValueError:
                    raise ModelError(f"initial count of {key} must be an integer, got {value!r}", lineno) from None
                if v < 0:
                    raise ModelError(f"initial count of {key} must be nonnegative", lineno)
                if key in species:
                    raise ModelError(f"duplicate species {key}", lineno)
                species.append(key)
                x0.append(v)

    index = {s: i for i, s in enumerate(species)}
    reactions = []
    for lineno, line in pending:
        mr = _REACTION.match(line)
        if not mr:
            raise ModelError(f"cannot parse reaction {line!r}", lineno)
        rname, lhs, rhs, pname, btext = mr.groups()
        reactants = _parse_complex(lhs, index, lineno)
        products = _parse_complex(rhs, index, lineno)
        if pname not in params:
            raise ModelError(f"unknown parameter {pname!r}", lineno)
        poly = None
        if btext is not None:
            try:
                poly = parse_polynomial(btext, species)
            except ExpressionError as exc:
                raise ModelError(str(exc), lineno) from None
            _check_polynomial_kinetics(poly, reactants, rname, lineno)
        r = Reaction(rname, reactants, products, pname, poly)
        if not any(r.stoichiometry(len(species))):
            raise ModelError(f"reaction {rname} has a zero stoichiometric vector", lineno)
        if any(r.name == rname for r in reactions):
            raise ModelError(f"duplicate reaction name {rname}", lineno)
        reactions.append(r)
    if not species:
        raise ModelError("no species declared")
    if not reactions:
        raise ModelError("no reactions declared")
    return ReactionNetwork(tuple(species), tuple(reactions), tuple(x0), params, name)


def _complex_text(c: Mapping[int, int], species: Sequence[str]) -> str:
    if not c:
        return "0"
    return " + ".join((f"{k}{species[i]}" if k > 1 else species[i]) for i, k in sorted(c.items()))


def format_model(net: ReactionNetwork) -> str:
    """Render a network back into model text (round-trips through parse_model)."""
    lines = ["[params]"]
    lines += [f"{k} = {v!r}" for k, v in net.params.items()]
    lines.append("[species]")
    lines += [f"{s} = {v}" for s, v in zip(net.species, net.x0)]
    lines.append("[reactions]")
    for r in net.reactions:
        line = f"{r.name}: {_complex_text(r.reactants, net.species)} -> {_complex_text(r.products, net.species)} @ {r.rate_param}"
        if r.polynomial is not None:
            line += f' | b = "{r.polynomial.text}"'
        lines.append(line)
    return "\n".join(lines) + "\n"
