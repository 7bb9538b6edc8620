"""Exact rational linear programming: two-phase tableau simplex with Bland's rule."""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Sequence

OPTIMAL = "optimal"
INFEASIBLE = "infeasible"
UNBOUNDED = "unbounded"


@dataclass(frozen=True)
class LPResult:
    status: str
    x: tuple[Fraction, ...] | None = None
    value: Fraction | None = None


def _pivot(T, basis, row, col):
    pr = T[row]
    p = pr[col]
    if p != 1:
        T[row] = pr = [v / p for v in pr]
    for i, r in enumerate(T):
        if i != row:
            f = r[col]
            if f:
                T[i] = [a - f * b for a, b in zip(r, pr)]
    basis[row] = col


def _simplex(T, basis, allowed):
    """Maximize over the tableau in place.

    T[-1] is the objective row r with r[j] = reduced cost of column j and r[-1] = -value.
    Returns True when optimal, False when unbounded.
    """
    while True:
        zrow = T[-1]
        col = next((j for j in allowed if zrow[j] > 0), None)
        if col is None:
            return True
        best = None
        for i in range(len(T) - 1):
            a = T[i][col]
            if a > 0:
                ratio = T[i][-1] / a
                if best is None or ratio < best[0] or (ratio == best[0] and basis[i] < basis[best[1]]):
                    best = (ratio, i)
        if best is None:
            return False
        _pivot(T, basis, best[1], col)


def linprog(c: Sequence, A_ub: Sequence[Sequence] = (), b_ub: Sequence = (),
            A_eq: Sequence[Sequence] = (), b_eq: Sequence = (), maximize: bool = True) -> LPResult:
    """Optimize c·x subject to A_ub x <= b_ub, A_eq x = b_eq, x >= 0, exactly."""
    n = len(c)
    c = [Fraction(v) for v in c]
    if not maximize:
        c = [-v for v in c]
    rows = [([Fraction(v) for v in a], Fraction(b), True) for a, b in zip(A_ub, b_ub)]
    rows += [([Fraction(v) for v in a], Fraction(b), False) for a, b in zip(A_eq, b_eq)]
    n_slack = len(A_ub)
    m = len(rows)
    # columns: x (n) | slacks (n_slack) | artificials (<= m) | rhs
    tableau, basis, art_rows = [], [], []
    slack_idx = 0
    for r, (a, b, is_ub) in enumerate(rows):
        sign = -1 if b < 0 else 1
        row = [sign * v for v in a] + [Fraction(0)] * n_slack
        if is_ub:
            row[n + slack_idx] = Fraction(sign)
            slack_idx += 1
        tableau.append((row, sign * b, is_ub and sign > 0))
    n_art = sum(1 for _, _, has_basis in tableau if not has_basis)
    width = n + n_slack + n_art
    T, art_cols = [], []
    art = 0
    slack_idx = 0
    for r, (row, b, has_basis) in enumerate(tableau):
        full = row + [Fraction(0)] * n_art + [b]
        if has_basis:
            basis.append(n + [k for k in range(n_slack) if row[n + k] == 1][0])
        else:
            col = n + n_slack + art
            full[col] = Fraction(1)
            basis.append(col)
            art_cols.append(col)
            art += 1
        T.append(full)

    if art_cols:
        # phase I: maximize -sum(artificials)
        z = [Fraction(0)] * (width + 1)
        for col in art_cols:
            z[col] = Fraction(-1)
        for i, bcol in enumerate(basis):
            if bcol in art_cols:
                z = [a + b for a, b in zip(z, T[i])]
        T.append(z)
        _simplex(T, basis, range(width))
        if T[-1][-1] != 0:
            return LPResult(INFEASIBLE)
        T.pop()
        # drive remaining (zero-level) artificials out of the basis
        art_set = set(art_cols)
        keep = []
        for i in range(len(T)):
            if basis[i] in art_set:
                col = next((j for j in range(n + n_slack) if T[i][j] != 0), None)
                if col is None:
                    continue
                _pivot(T, basis, i, col)
            keep.append(i)
        T = [T[i] for i in keep]
        basis = [basis[i] for i in keep]
        T = [r[: n + n_slack] + [r[-1]] for r in T]
        width = n + n_slack

    # phase II objective row: reduced costs c_j - c_B B^-1 A_j, rhs = -value
    cost = c + [Fraction(0)] * (width - n)
    z = cost + [Fraction(0)]
    for i, bcol in enumerate(basis):
        cb = cost[bcol]
        if cb:
            z = [a - cb * b for a, b in zip(z, T[i])]
    T.append(z)
    if not _simplex(T, basis, range(width)):
        return LPResult(UNBOUNDED)
    x = [Fraction(0)] * width
    for i, bcol in enumerate(basis):
        x[bcol] = T[i][-1]
    value = -T[-1][-1]
    if not maximize:
        value = -value
    return LPResult(OPTIMAL, tuple(x[:n]), value)
