"""Sufficient conditions for validity of the GT sensitivity estimator.

A parameter c_t is certified when E[ρ^R_t(T)] < ∞ for some ρ > 1 can be
established from the network structure:

* the target propensity is bounded on the reachable set (species bounds from
  nonnegative vectors w with wᵀν ≤ 0), or
* the target is unconsuming and every unconsuming channel has an exponential
  moment (bounded propensity, or the pure-birth coupling structure), or
* the target is consuming, every unconsuming channel has an exponential
  moment, and nonnegativity of X = x0 + νR bounds R_t by an affine
  combination of exponentially integrable counts (exact LP certificate).

Everything structural is decided in exact rational arithmetic.  Monte Carlo
probes of the integrability conditions are reported alongside but never
promoted to a proof.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Sequence

from .estimator import observable, replicate_stats
from .lp import OPTIMAL, linprog
from .network import ReactionNetwork, classify_reactions
from .simulator import SimConfig
from .stats import RunningStats

TOP_SHARE_LIMIT = 0.01
DOUBLING_LIMIT = 3.0
RIGHT_GRID = (1.1, 1.25, 1.5)
LEFT_GRID = (0.1, 0.25, 0.5)  # multiples of c*


def frac_str(x: Fraction) -> str:
    x = Fraction(x)
    return f"{x.numerator}/{x.denominator}"


def _nu(net) -> list[list[int]]:
    return [[int(v) for v in row] for row in net.nu]


def _positive_part(net, j) -> list[int]:
    return [max(0, int(v)) for v in net.nu[:, j]]


def _primitive(vec: Sequence[Fraction]) -> tuple[Fraction, ...]:
    """Scale a nonnegative rational vector to the smallest integer vector on its ray."""
    den = math.lcm(*(Fraction(v).denominator for v in vec))
    ints = [int(Fraction(v) * den) for v in vec]
    g = math.gcd(*ints) or 1
    return tuple(Fraction(v // g) for v in ints)


# ---------------------------------------------------------------------------
# certificates


@dataclass(frozen=True)
class SpeciesBound:
    """X_i(t) <= bound on the reachable set, from w >= 0 with wᵀν <= 0."""

    species: int
    w: tuple[Fraction, ...]
    bound: Fraction

    def verify(self, net: ReactionNetwork) -> bool:
        nu = _nu(net)
        if any(v < 0 for v in self.w) or self.w[self.species] <= 0:
            return False
        if any(sum(self.w[i] * nu[i][j] for i in range(net.n)) > 0 for j in range(net.m)):
            return False
        return self.bound == sum(w * x for w, x in zip(self.w, net.x0)) / self.w[self.species]

    def to_dict(self, net) -> dict:
        return {"kind": "SpeciesBound", "species": net.species[self.species],
                "w": [frac_str(v) for v in self.w], "bound": frac_str(self.bound)}


@dataclass(frozen=True)
class PropensityBound:
    """a_j <= K on the reachable set because every variable of b_j is bounded."""

    channel: int
    species_bounds: tuple[SpeciesBound, ...]
    K: Fraction | None

    def to_dict(self, net) -> dict:
        return {"kind": "BoundedPropensity", "channel": net.reactions[self.channel].name,
                "species_bounds": [b.to_dict(net) for b in self.species_bounds],
                "K": None if self.K is None else frac_str(self.K)}


@dataclass(frozen=True)
class AffineReactionBound:
    """Σ_j lhs_j R_j <= a + Σ_k b_k R_k, with lhs_target >= 1.

    Obtained from multipliers λ >= 0 over species: lhs_j = -λᵀν_j for cone channels,
    a = λᵀx0 and b_k = λᵀμ_k for the integrable channels k (μ_k = positive part of ν_k).
    """

    target: int
    multipliers: tuple[Fraction, ...]
    lhs: dict[int, Fraction]
    a: Fraction
    b: dict[int, Fraction]
    integrable: tuple[int, ...]

    def verify(self, net: ReactionNetwork) -> bool:
        lam = self.multipliers
        if any(v < 0 for v in lam):
            return False
        nu = _nu(net)
        cone = [j for j in range(net.m) if j not in self.integrable]
        for j in cone:
            d = -sum(lam[i] * nu[i][j] for i in range(net.n))
            if d < (1 if j == self.target else 0) or self.lhs.get(j, 0) != d:
                return False
        for k in self.integrable:
            if self.b.get(k, 0) != sum(l * p for l, p in zip(lam, _positive_part(net, k))):
                return False
        return self.a == sum(l * x for l, x in zip(lam, net.x0))

    def holds(self, counts: Sequence[int]) -> bool:
        left = sum(c * counts[j] for j, c in self.lhs.items())
        return left <= self.a + sum(c * counts[k] for k, c in self.b.items())

    def describe(self, net) -> str:
        def lin(coefs):
            return " + ".join((f"{c}*" if c != 1 else "") + f"R[{net.reactions[j].name}]"
                              for j, c in sorted(coefs.items()) if c)
        x0_terms = " + ".join((f"{l}*" if l != 1 else "") + f"x0[{net.species[i]}]"
                              for i, l in enumerate(self.multipliers) if l)
        right = " + ".join(p for p in (x0_terms or "0", lin(self.b)) if p)
        return f"{lin(self.lhs)} <= {right}"

    def to_dict(self, net) -> dict:
        names = [r.name for r in net.reactions]
        return {"kind": "AffineReactionBound", "target": names[self.target],
                "multipliers": {net.species[i]: frac_str(v) for i, v in enumerate(self.multipliers) if v},
                "lhs": {names[j]: frac_str(v) for j, v in sorted(self.lhs.items()) if v},
                "a": frac_str(self.a),
                "b": {names[k]: frac_str(v) for k, v in sorted(self.b.items()) if v},
                "integrable": [names[k] for k in self.integrable],
                "inequality": self.describe(net)}


@dataclass(frozen=True)
class RecessionRay:
    """ξ >= 0 with ξ_target > 0 and Σ_j ν_j ξ_j >= 0 over the cone channels."""

    target: int
    xi: dict[int, Fraction]

    def verify(self, net: ReactionNetwork) -> bool:
        if any(v < 0 for v in self.xi.values()) or self.xi.get(self.target, 0) <= 0:
            return False
        nu = _nu(net)
        return all(sum(nu[i][j] * v for j, v in self.xi.items()) >= 0 for i in range(net.n))

    def to_dict(self, net) -> dict:
        return {"kind": "RecessionRay", "target": net.reactions[self.target].name,
                "xi": {net.reactions[j].name: frac_str(v) for j, v in sorted(self.xi.items())}}


# ---------------------------------------------------------------------------
# structural checks


def bounded_species(net: ReactionNetwork) -> dict[int, SpeciesBound]:
    """Species with a conservation-type upper bound on the reachable set (sound, not complete)."""
    nu = _nu(net)
    out = {}
    for i in range(net.n):
        # minimize wᵀx0 s.t. wᵀν_j <= 0 for all j, w_i = 1, w >= 0
        A_ub = [[nu[s][j] for s in range(net.n)] for j in range(net.m)]
        e = [1 if s == i else 0 for s in range(net.n)]
        res = linprog(list(net.x0), A_ub, [0] * net.m, [e], [1], maximize=False)
        if res.status == OPTIMAL:
            out[i] = SpeciesBound(i, res.x, res.value)
    return out


def bounded_propensity_channels(net: ReactionNetwork, bounded: dict[int, SpeciesBound] | None = None
                                ) -> dict[int, PropensityBound]:
    if bounded is None:
        bounded = bounded_species(net)
    out = {}
    for j, r in enumerate(net.reactions):
        variables = r.kinetics_variables()
        if not variables <= set(bounded):
            continue
        caps = {i: int(math.floor(bounded[i].bound)) for i in variables}
        c = Fraction(net.rate(j))
        if r.mass_action:
            K = c
            for i, k in r.reactants.items():
                K *= math.comb(caps[i], k)
        else:
            box = [range(caps[i] + 1) for i in sorted(variables)]
            if math.prod(len(b) for b in box) <= 10**5:
                best = Fraction(0)
                for combo in itertools.product(*box):
                    x = [0] * net.n
                    for i, v in zip(sorted(variables), combo):
                        x[i] = v
                    best = max(best, r.polynomial.exact(x))
                K = c * best
            else:
                K = None
        out[j] = PropensityBound(j, tuple(bounded[i] for i in sorted(variables)), K)
    return out


def lp_bounded_in_direction(net: ReactionNetwork, target: int, integrable: Sequence[int] = ()
                            ) -> AffineReactionBound | RecessionRay:
    """Decide whether R_target is affinely bounded by integrable reaction counts.

    The cone channels are the consuming channels not listed in ``integrable``.
    Maximizes ξ_target over {ξ >= 0, Σ ν_j ξ_j >= 0, Σ ξ_j <= 1}; optimum 0 means
    bounded, and the multipliers of the dual system give the affine bound.
    """
    cls = classify_reactions(net)
    if target in cls.unconsuming:
        raise ValueError(f"channel {net.reactions[target].name} is unconsuming; no LP needed")
    integ = tuple(sorted(set(cls.unconsuming) | (set(integrable) - {target})))
    cone = [j for j in cls.consuming if j not in integ]
    nu = _nu(net)
    n = net.n
    t = cone.index(target)
    A_ub = [[-nu[i][j] for j in cone] for i in range(n)] + [[1] * len(cone)]
    b_ub = [0] * n + [1]
    c = [1 if k == t else 0 for k in range(len(cone))]
    primal = linprog(c, A_ub, b_ub)
    assert primal.status == OPTIMAL
    if primal.value > 0:
        ray = _primitive(primal.x)
        return RecessionRay(target, {j: v for j, v in zip(cone, ray) if v})
    # λ >= 0 with -λᵀν_j >= [j == target] for cone channels; keep λ small
    A = [[nu[i][j] for i in range(n)] for j in cone]
    b = [-1 if j == target else 0 for j in cone]
    dual = linprog([1] * n, A, b, maximize=False)
    assert dual.status == OPTIMAL, "LP duality violated"
    lam = dual.x
    lhs = {j: -sum(lam[i] * nu[i][j] for i in range(n)) for j in cone}
    bvec = {k: sum(l * p for l, p in zip(lam, _positive_part(net, k))) for k in integ}
    a = sum(l * x for l, x in zip(lam, net.x0))
    return AffineReactionBound(target, lam, lhs, Fraction(a), bvec, integ)


@dataclass(frozen=True)
class ChannelType:
    channel: int
    kind: str  # "type1" or "type2"
    species: int
    carrier: int | None = None  # species A of A -> A + S (None when A is empty)


@dataclass(frozen=True)
class CouplingAssignment:
    types: tuple[ChannelType, ...]

    @property
    def type2_species(self) -> tuple[int, ...]:
        return tuple(sorted({t.species for t in self.types if t.kind == "type2"}))

    def to_dict(self, net) -> dict:
        return {"kind": "CouplingStructure",
                "channels": {net.reactions[t.channel].name: {
                    "type": t.kind, "species": net.species[t.species],
                    "carrier": None if t.carrier is None else net.species[t.carrier]} for t in self.types}}


@dataclass(frozen=True)
class CouplingFailure:
    condition: int
    channel: int
    species: int | None
    reason: str

    def to_dict(self, net) -> dict:
        return {"condition": self.condition, "reaction": net.reactions[self.channel].name,
                "species": None if self.species is None else net.species[self.species], "reason": self.reason}


def coupling_structure_check(net: ReactionNetwork, bounded: dict[int, SpeciesBound] | None = None
                             ) -> CouplingAssignment | CouplingFailure:
    """Check the pure-birth domination structure for all unconsuming channels.

    Condition 1: each unconsuming channel is A -> A + S_i with A empty or bounded
    (type 1), or S_i -> 2 S_i (type 2).  Condition 2: no consuming channel increases
    a species that appears in a type-2 channel.
    """
    if bounded is None:
        bounded = bounded_species(net)
    cls = classify_reactions(net)
    types = []
    for j in cls.unconsuming:
        r = net.reactions[j]
        if not r.mass_action:
            return CouplingFailure(1, j, None, "explicit polynomial kinetics")
        react, prod = dict(r.reactants), dict(r.products)
        gained = {i: prod.get(i, 0) - react.get(i, 0) for i in set(prod) | set(react)}
        gained = {i: d for i, d in gained.items() if d}
        if len(gained) != 1 or next(iter(gained.values())) != 1:
            return CouplingFailure(1, j, None, "not of the form A -> A + S or S -> 2S")
        (i,) = gained
        if not react:
            types.append(ChannelType(j, "type1", i))
        elif react == {i: 1}:
            types.append(ChannelType(j, "type2", i))
        elif len(react) == 1 and next(iter(react.values())) == 1:
            (carrier,) = react
            if carrier not in bounded:
                return CouplingFailure(1, j, carrier, "carrier species of A -> A + S is not certified bounded")
            types.append(ChannelType(j, "type1", i, carrier))
        else:
            return CouplingFailure(1, j, None, "not of the form A -> A + S or S -> 2S")
    assignment = CouplingAssignment(tuple(types))
    birth = set(assignment.type2_species)
    for j in cls.consuming:
        for i in sorted(birth):
            if net.nu[i, j] > 0:
                return CouplingFailure(2, j, i, "consuming reaction increases a type-2 species")
    return assignment


@dataclass(frozen=True)
class DominatingSystem:
    """Pure-birth system dominating the type-2 species, with the pairing used to couple it."""

    network: ReactionNetwork
    pairs: tuple[tuple[int, int], ...]
    species_map: dict[int, int]

    def claims(self, net: ReactionNetwork) -> list[tuple[int, tuple[int, ...]]]:
        """(net species, paired net channels) for each dominated species."""
        out = []
        for dom_i, net_i in sorted(self.species_map.items()):
            chans = tuple(j for j, k in self.pairs if self.network.nu[dom_i, k] > 0)
            out.append((net_i, chans))
        return out


def build_dominating(net: ReactionNetwork, assignment: CouplingAssignment,
                     bounded: dict[int, SpeciesBound] | None = None) -> DominatingSystem:
    """Pure birth S̃_i -> 2 S̃_i per channel feeding a type-2 species i.

    A type-1 channel A -> A + S_i with |A| <= K is dominated at rate c K, which
    requires X̃_i >= 1, hence X̃_i(0) = x0_i + 1 whenever such a channel exists.
    """
    from .network import Reaction

    if bounded is None:
        bounded = bounded_species(net)
    birth = assignment.type2_species
    species = tuple(net.species[i] for i in birth)
    dom_index = {i: k for k, i in enumerate(birth)}
    reactions, params, pairs = [], {}, []
    x0 = [net.x0[i] for i in birth]
    for t in assignment.types:
        if t.species not in dom_index:
            continue
        K = 1 if t.carrier is None else int(math.floor(bounded[t.carrier].bound))
        if t.kind == "type1":
            x0[dom_index[t.species]] = net.x0[t.species] + 1
        if K == 0:
            continue
        pname = f"d_{net.reactions[t.channel].name}"
        params[pname] = net.rate(t.channel) * K
        k = dom_index[t.species]
        reactions.append(Reaction(f"D_{net.reactions[t.channel].name}", {k: 1}, {k: 2}, pname))
        pairs.append((t.channel, len(reactions) - 1))
    dom = ReactionNetwork(species, tuple(reactions), tuple(x0), params, name=f"{net.name}-dominating")
    return DominatingSystem(dom, tuple(pairs), {k: i for i, k in dom_index.items()})


# ---------------------------------------------------------------------------
# verdict


@dataclass
class ProbeResult:
    condition: str  # "right", "left" or "moment"
    parameter: float
    estimate: float
    stderr: float
    top_sample_share: float
    n: int
    doubling_shift: float
    stabilized: bool

    @property
    def status(self) -> str:
        return "STABLE" if self.stabilized else "UNSTABLE"

    def to_dict(self) -> dict:
        d = dict(self.__dict__)
        d["status"] = self.status
        return {k: (v if not isinstance(v, float) or math.isfinite(v) else str(v)) for k, v in d.items()}


@dataclass
class ValidityReport:
    target: int
    verdict: str  # "valid" or "inconclusive"
    path: str | None = None  # "bounded_propensity", "coupling_structure" or "lp_certificate"
    certificate: object = None
    property1: dict[int, str] = field(default_factory=dict)
    reasons: list[dict] = field(default_factory=list)
    obligations: list[int] = field(default_factory=list)
    observations: list[str] = field(default_factory=list)
    probes: list[ProbeResult] = field(default_factory=list)
    species_bounds: dict[int, SpeciesBound] = field(default_factory=dict)
    coupling: object = None

    @property
    def valid(self) -> bool:
        return self.verdict == "valid"

    def to_dict(self, net) -> dict:
        names = [r.name for r in net.reactions]
        return {
            "target": names[self.target],
            "target_param": net.reactions[self.target].rate_param,
            "verdict": self.verdict,
            "path": self.path,
            "certificate": None if self.certificate is None else self.certificate.to_dict(net),
            "property1": {names[j]: route for j, route in sorted(self.property1.items())},
            "species_bounds": [b.to_dict(net) for _, b in sorted(self.species_bounds.items())],
            "coupling": None if self.coupling is None else self.coupling.to_dict(net),
            "reasons": self.reasons,
            "obligations": [names[j] for j in self.obligations],
            "observations": self.observations,
            "probes": [p.to_dict() for p in self.probes],
        }

    def render(self, net) -> str:
        names = [r.name for r in net.reactions]
        lines = [f"{names[self.target]} ({net.reactions[self.target].rate_param}): {self.verdict.upper()}"]
        if self.path:
            lines.append(f"  path: {self.path}")
        cert = self.certificate
        if isinstance(cert, AffineReactionBound):
            lines.append(f"  bound: {cert.describe(net)}")
        elif isinstance(cert, PropensityBound):
            lines.append(f"  propensity bound K = {cert.K}")
        elif isinstance(cert, CouplingAssignment):
            lines += [f"  {names[t.channel]}: {t.kind} on {net.species[t.species]}" for t in cert.types]
        for j, route in sorted(self.property1.items()):
            lines.append(f"  property 1 for {names[j]}: {route}")
        for r in self.reasons:
            lines.append(f"  failed: {r['condition']}: {r.get('detail', '')}")
        for o in self.observations:
            lines.append(f"  note: {o}")
        for p in self.probes:
            lines.append(f"  probe {p.condition}({p.parameter:g}) = {p.estimate:.6g} ± {p.stderr:.3g} "
                         f"top-share {p.top_sample_share:.3g} shift {p.doubling_shift:.3g} {p.status}")
        return "\n".join(lines)


def _accept(report: ValidityReport, path: str, certificate) -> ValidityReport:
    report.verdict, report.path, report.certificate = "valid", path, certificate
    report.reasons.clear()
    return report


def check_gt_validity(net: ReactionNetwork, target: int) -> ValidityReport:
    cls = classify_reactions(net)
    species_bounds = bounded_species(net)
    bprop = bounded_propensity_channels(net, species_bounds)
    coupling = coupling_structure_check(net, species_bounds)
    report = ValidityReport(target, "inconclusive", species_bounds=species_bounds, coupling=coupling)

    for j in cls.unconsuming:
        if j in bprop:
            report.property1[j] = "bounded_propensity"
        elif isinstance(coupling, CouplingAssignment):
            report.property1[j] = "coupling"
        else:
            report.obligations.append(j)

    if target in bprop:
        return _accept(report, "bounded_propensity", bprop[target])
    report.reasons.append({"condition": "bounded_propensity",
                           "detail": "some kinetics variable of the target is not certified bounded"})

    if isinstance(coupling, CouplingFailure):
        failure = coupling.to_dict(net)
        failure["failed_condition"] = failure.pop("condition")
        report.reasons.append({"condition": "coupling_structure", **failure, "detail": coupling.reason})

    if target in cls.unconsuming:
        if isinstance(coupling, CouplingAssignment):
            return _accept(report, "coupling_structure", coupling)
        else:
            report.reasons.append({"condition": "property1",
                                   "detail": "unconsuming target with unbounded propensity and no coupling route"})
        return report

    cert = lp_bounded_in_direction(net, target)
    extra = sorted(j for j in bprop if j in cls.consuming and j != target)
    if isinstance(cert, RecessionRay) and extra:
        widened = lp_bounded_in_direction(net, target, extra)
        if isinstance(widened, AffineReactionBound):
            report.observations.append(
                "bound uses consuming channels with bounded propensity as integrable terms: "
                + ", ".join(net.reactions[j].name for j in extra))
            for j in extra:
                report.property1[j] = "bounded_propensity"
        cert = widened
    if isinstance(cert, RecessionRay):
        report.reasons.append({"condition": "lp_bounded_direction", "witness": cert.to_dict(net),
                               "detail": "recession cone contains a ray with positive target coordinate"})
        report.certificate = cert
        return report
    if report.obligations:
        used = {k for k, v in cert.b.items() if v}
        missing = [j for j in report.obligations if j in used]
        if not missing:
            report.observations.append(
                "affine bound only involves channels with established exponential moments; "
                "a weaker hypothesis restricted to those channels would accept this target")
        report.reasons.append({"condition": "property1",
                               "detail": "unresolved unconsuming channels: "
                               + ", ".join(net.reactions[j].name for j in report.obligations)})
        report.certificate = cert
        return report
    return _accept(report, "lp_certificate", cert)


# ---------------------------------------------------------------------------
# Monte Carlo probes


class _ProbeStatistic:
    def __init__(self, kind, params, target, c_star, f):
        self.kind, self.params, self.target, self.c_star, self.f = kind, params, target, c_star, f

    def __call__(self, summaries):
        s = summaries[0]
        out = []
        for p in self.params:
            try:
                if self.kind == "right":
                    v = float(p) ** s.counts[self.target]
                elif self.kind == "left":
                    v = math.exp(p * s.integrated_propensity[self.target] / self.c_star)
                else:
                    v = abs(float(self.f(s.final_state))) ** p
            except OverflowError:
                v = math.inf
            out.append(v)
        return tuple(out)


def _probe_result(kind, p, half: RunningStats, full: RunningStats) -> ProbeResult:
    finite = math.isfinite(full.mean) and math.isfinite(full.m2) and math.isfinite(full.total)
    if not finite:
        return ProbeResult(kind, p, math.inf, math.inf, math.inf, full.n, math.inf, False)
    se = math.hypot(full.stderr, half.stderr)
    shift = abs(full.mean - half.mean)
    shift = 0.0 if shift == 0 else (shift / se if se > 0 else math.inf)
    share = full.top_share
    stable = share < TOP_SHARE_LIMIT and shift < DOUBLING_LIMIT
    return ProbeResult(kind, p, full.mean, full.stderr, share, full.n, shift, stable)


def integrability_probe(net: ReactionNetwork, target: int, cfg: SimConfig, N: int, kind: str = "right",
                        grid: Sequence[float] | None = None, f=None, threads: int = 1) -> list[ProbeResult]:
    """Monte Carlo evidence for the exponential-integrability conditions.

    ``right``: E[ρ^R_target(T)] for ρ in grid (default 1.1, 1.25, 1.5).
    ``left``: E[exp(ε ∫ b_target ds)] for ε in grid (default (0.1, 0.25, 0.5) c*).
    ``moment``: E|f(X(T))|^p for p in grid (default 3).
    A probe is STABLE when the largest summand is under 1% of the total and
    doubling N from N/2 moves the estimate by less than 3 combined standard errors.
    """
    c_star = net.rate(target)
    if kind == "right":
        params = tuple(grid or RIGHT_GRID)
        if any(p <= 1 for p in params):
            raise ValueError("right-tail probe needs ρ > 1")
    elif kind == "left":
        params = tuple(grid or tuple(g * c_star for g in LEFT_GRID))
        if any(p <= 0 for p in params):
            raise ValueError("left-tail probe needs ε > 0")
    elif kind == "moment":
        params = tuple(grid or (3,))
        if f is None:
            raise ValueError("moment probe needs an observable f")
    else:
        raise ValueError(f"unknown probe kind {kind!r}")
    fn = observable(net, f) if f is not None else None
    stat = _ProbeStatistic(kind, params, target, c_star, fn)
    half_n = max(1, N // 2)
    first, _ = replicate_stats([net], cfg.T, half_n, cfg.seed, stat, len(params), threads, cfg.max_events)
    if N > half_n:
        second, _ = replicate_stats([net], cfg.T, N - half_n, cfg.seed, stat, len(params), threads, cfg.max_events,
                                    first=half_n)
        full = [a.merge(b) for a, b in zip(first, second)]
    else:
        full = first
    return [_probe_result(kind, p, h, fl) for p, h, fl in zip(params, first, full)]
