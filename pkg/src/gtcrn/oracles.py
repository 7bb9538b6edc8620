"""Closed-form laws for analytically solvable networks.

Pure birth S -> 2S started at x0: X(t) - x0 is negative binomial with
P(X(t) = x0 + k) = C(x0 + k - 1, k) q^x0 p^k,  q = exp(-c t),  p = 1 - q.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from scipy import stats

TAIL = 1e-14
MAX_TERMS = 10**6


@dataclass(frozen=True)
class PureBirthLaw:
    x0: int
    c: float
    t: float

    def __post_init__(self):
        if self.x0 < 1:
            raise ValueError("x0 must be a positive integer")
        if not (self.c > 0 and self.t > 0):
            raise ValueError("c and t must be positive")

    @property
    def q(self) -> float:
        return math.exp(-self.c * self.t)

    @property
    def p(self) -> float:
        return -math.expm1(-self.c * self.t)


def pure_birth_pmf(law: PureBirthLaw, k: int) -> float:
    """P(X(t) = x0 + k)."""
    if k < 0:
        return 0.0
    x, ct = law.x0, law.c * law.t
    log_binom = math.lgamma(x + k) - math.lgamma(k + 1) - math.lgamma(x)
    log_p = math.log(law.p) if k else 0.0
    return math.exp(log_binom - x * ct + k * log_p)


def pure_birth_pmf_table(law: PureBirthLaw, tail: float = TAIL, cap: int = MAX_TERMS) -> list[float]:
    """pmf values for k = 0, 1, ... until cumulative mass reaches 1 - tail (or ``cap`` terms)."""
    out, mass, k = [], 0.0, 0
    while mass < 1.0 - tail and k < cap:
        v = pure_birth_pmf(law, k)
        out.append(v)
        mass += v
        k += 1
    return out


def pure_birth_moments(law: PureBirthLaw) -> tuple[float, float]:
    g = math.exp(law.c * law.t)
    return law.x0 * g, law.x0 * g * (g - 1.0)


def pure_birth_mean_sensitivity(law: PureBirthLaw) -> float:
    """d/dc E X(t) = x0 t exp(c t)."""
    return law.x0 * law.t * math.exp(law.c * law.t)


def exp_moment_threshold(law: PureBirthLaw) -> float:
    """Supremum of ε with E exp(ε X(t)) finite: -ln(1 - exp(-c t))."""
    return -math.log(law.p) if law.p > 0 else math.inf


def pure_birth_exp_moment_finite(law: PureBirthLaw, eps: float) -> bool:
    """Ratio test on the pmf: consecutive terms of E exp(ε X) shrink by e^ε p in the limit."""
    if not eps > 0:
        raise ValueError("eps must be positive")
    return math.exp(eps) * law.p < 1.0


def right_probe_threshold(law: PureBirthLaw) -> float:
    """Supremum of ρ with E ρ^R(t) finite for the pure birth count R = X - x0: 1/p."""
    return 1.0 / law.p


@dataclass(frozen=True)
class MonomolecularLaw:
    kind: str
    family: str
    mean: float
    variance: float
    mean_sensitivity: dict[str, float]
    _dist: object = field(repr=False, compare=False)

    def pmf(self, x: int) -> float:
        return float(self._dist(x))


def monomolecular_solution(kind: str, rates: dict[str, float], x0: int, t: float) -> MonomolecularLaw:
    """Law of X(t) for immigration (0 -> S, rate c), decay (S -> 0, rate d) or both."""
    if x0 < 0 or not t >= 0:
        raise ValueError("x0 and t must be nonnegative")
    if kind == "immigration":
        c = rates["c"]
        lam = c * t
        return MonomolecularLaw(kind, "shifted poisson", x0 + lam, lam, {"c": t},
                                lambda x: stats.poisson.pmf(x - x0, lam))
    if kind == "decay":
        d = rates["d"]
        s = math.exp(-d * t)
        return MonomolecularLaw(kind, "binomial", x0 * s, x0 * s * (1 - s), {"d": -x0 * t * s},
                                lambda x: stats.binom.pmf(x, x0, s))
    if kind == "immigration-decay":
        c, d = rates["c"], rates["d"]
        s = math.exp(-d * t)
        lam = c / d * (1 - s)
        dmean_dd = -x0 * t * s + c * (t * s / d - (1 - s) / d**2)

        def pmf(x):
            ks = range(0, min(x, x0) + 1)
            return math.fsum(stats.binom.pmf(k, x0, s) * stats.poisson.pmf(x - k, lam) for k in ks)

        return MonomolecularLaw(kind, "binomial + poisson", x0 * s + lam, x0 * s * (1 - s) + lam,
                                {"c": (1 - s) / d, "d": dmean_dd}, pmf)
    raise ValueError(f"unknown monomolecular kind {kind!r}")
