"""Likelihood ratio, score and Girsanov-transformation (GT) sensitivity estimators.

For a target channel with a_1(x, c) = c b_1(x) and a path simulated at c*,

    L(T, c) = (c / c*)^R_1(T) * exp((c* - c) * ∫ b_1(X(s)) ds)
    Z(T, c*) = R_1(T) / c* - ∫ b_1(X(s)) ds

and the GT estimator of d/dc E f(X(T, c)) at c* is the sample mean of f(X(T, c*)) Z(T, c*).
"""

from __future__ import annotations

import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass
from typing import Callable, Sequence

from .expr import Polynomial, parse_polynomial
from .network import ReactionNetwork
from .rng import derive_seed, run_key
from .simulator import DEFAULT_MAX_EVENTS, ExplosionGuard, ReplicateSummary, SimConfig, run_replicate
from .stats import RunningStats

BATCH = 1024
MAX_DISCARD_FRACTION = 1e-4
Z95 = 1.96


class DiscardLimitExceeded(RuntimeError):
    """Too many replicates hit the event cap for the estimate to be trusted."""

    def __init__(self, n_discarded: int, n_total: int):
        self.n_discarded = n_discarded
        self.n_total = n_total
        super().__init__(f"{n_discarded} of {n_total} replicates hit the event cap "
                         f"(limit fraction {MAX_DISCARD_FRACTION:g})")


@dataclass(frozen=True)
class GTSample:
    f_value: float
    R_target: int
    int_b: float
    score: float


@dataclass(frozen=True)
class EstimatorResult:
    mean: float
    variance: float
    stderr: float
    ci95: tuple[float, float]
    n_replicates: int
    n_discarded: int
    seed: int

    @classmethod
    def from_stats(cls, st: RunningStats, n_discarded: int, seed: int) -> "EstimatorResult":
        se = st.stderr
        return cls(st.mean, st.variance, se, (st.mean - Z95 * se, st.mean + Z95 * se), st.n, n_discarded, seed)

    def covers(self, value: float) -> bool:
        return self.ci95[0] <= value <= self.ci95[1]

    def to_dict(self) -> dict:
        d = asdict(self)
        d["ci95"] = list(self.ci95)
        return d


# ---------------------------------------------------------------------------
# per-path quantities


def _counts_and_integral(traj, target):
    return traj.counts[target], traj.integrated_propensity[target]


def likelihood_ratio(traj, target: int, c: float, c_star: float) -> float:
    """L(T, c) for a path simulated at c* (Trajectory or ReplicateSummary)."""
    R, integral = _counts_and_integral(traj, target)
    int_b = integral / c_star
    log_l = (R * math.log(c / c_star) if R else 0.0) + (c_star - c) * int_b
    return math.exp(log_l)


def score_Z(traj, target: int, c_star: float) -> float:
    R, integral = _counts_and_integral(traj, target)
    return R / c_star - integral / c_star


def gt_sample(summary, target: int, c_star: float, f: Callable) -> GTSample:
    R, integral = _counts_and_integral(summary, target)
    int_b = integral / c_star
    return GTSample(float(f(summary.final_state)), R, int_b, R / c_star - int_b)


def observable(net: ReactionNetwork, f) -> Polynomial | Callable:
    if isinstance(f, str):
        return parse_polynomial(f, net.species)
    return f


# ---------------------------------------------------------------------------
# replicate engine


class _Job:
    """Picklable unit of work: replicates [start, stop) of every network in ``nets``."""

    def __init__(self, nets, T, seed, statistic, max_events):
        self.nets = nets
        self.T = T
        self.seed = seed
        self.statistic = statistic
        self.max_events = max_events

    def __call__(self, bounds):
        start, stop = bounds
        key = run_key(self.seed)
        acc = None
        discarded = []
        for r in range(start, stop):
            try:
                summaries = [run_replicate(net, self.T, key, r, self.max_events) for net in self.nets]
            except ExplosionGuard:
                discarded.append(r)
                continue
            values = self.statistic(summaries)
            if acc is None:
                acc = [RunningStats() for _ in values]
            for st, v in zip(acc, values):
                st.push(v)
        return acc, discarded


def replicate_stats(nets: Sequence[ReactionNetwork], T: float, N: int, seed: int, statistic,
                    n_values: int, threads: int = 1, max_events: int = DEFAULT_MAX_EVENTS,
                    first: int = 0) -> tuple[list[RunningStats], list[int]]:
    """Accumulate ``statistic(summaries)`` over replicates ``first .. first+N-1``.

    Every replicate simulates each network in ``nets`` from the same streams.
    Replicates are grouped into fixed batches merged in index order, so the
    result does not depend on ``threads``.
    """
    if N < 1:
        raise ValueError("N must be positive")
    job = _Job(list(nets), T, seed, statistic, max_events)
    bounds = [(s, min(s + BATCH, first + N)) for s in range(first, first + N, BATCH)]
    if threads > 1 and len(bounds) > 1:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(job, bounds))
    else:
        parts = [job(b) for b in bounds]
    total = [RunningStats() for _ in range(n_values)]
    discarded: list[int] = []
    for acc, disc in parts:
        discarded.extend(disc)
        if acc is not None:
            total = [a.merge(b) for a, b in zip(total, acc)]
    return total, discarded


def _check_discards(discarded, N):
    if len(discarded) > MAX_DISCARD_FRACTION * N:
        raise DiscardLimitExceeded(len(discarded), N)


class _GTStatistic:
    def __init__(self, f, target, c_star):
        self.f, self.target, self.c_star = f, target, c_star

    def __call__(self, summaries):
        s = gt_sample(summaries[0], self.target, self.c_star, self.f)
        return (s.f_value * s.score,)


def gt_estimate(net: ReactionNetwork, f, target: int, cfg: SimConfig, N: int, threads: int = 1) -> EstimatorResult:
    """GT estimate of d/dc_target E f(X(T)) at the network's current rate constants."""
    fn = observable(net, f)
    (st,), disc = replicate_stats([net], cfg.T, N, cfg.seed, _GTStatistic(fn, target, net.rate(target)), 1,
                                  threads, cfg.max_events)
    _check_discards(disc, N)
    return EstimatorResult.from_stats(st, len(disc), cfg.seed)


class _FDStatistic:
    def __init__(self, f, scale):
        self.f, self.scale = f, scale

    def __call__(self, summaries):
        hi, lo = summaries
        return ((self.f(hi.final_state) - self.f(lo.final_state)) * self.scale,)


class _FValue:
    def __init__(self, f):
        self.f = f

    def __call__(self, summaries):
        return (float(self.f(summaries[0].final_state)),)


def fd_estimate(net: ReactionNetwork, f, target: int, cfg: SimConfig, N: int, h: float,
                mode: str = "central", crn: bool = True, threads: int = 1) -> EstimatorResult:
    """Finite-difference baseline; with ``crn`` both arms reuse the same Poisson streams."""
    if not h > 0:
        raise ValueError("h must be positive")
    c_star = net.rate(target)
    if mode == "central":
        if not c_star - h > 0:
            raise ValueError("c* - h must be positive")
        hi, lo, width = net.with_rate(target, c_star + h), net.with_rate(target, c_star - h), 2 * h
    elif mode == "forward":
        hi, lo, width = net.with_rate(target, c_star + h), net, h
    else:
        raise ValueError(f"unknown finite-difference mode {mode!r}")
    fn = observable(net, f)
    if crn:
        (st,), disc = replicate_stats([hi, lo], cfg.T, N, cfg.seed, _FDStatistic(fn, 1.0 / width), 1,
                                      threads, cfg.max_events)
        _check_discards(disc, N)
        return EstimatorResult.from_stats(st, len(disc), cfg.seed)
    (s_hi,), d_hi = replicate_stats([hi], cfg.T, N, derive_seed(cfg.seed, 1), _FValue(fn), 1, threads, cfg.max_events)
    (s_lo,), d_lo = replicate_stats([lo], cfg.T, N, derive_seed(cfg.seed, 2), _FValue(fn), 1, threads, cfg.max_events)
    _check_discards(d_hi, N)
    _check_discards(d_lo, N)
    mean = (s_hi.mean - s_lo.mean) / width
    se = math.hypot(s_hi.stderr, s_lo.stderr) / width
    n = min(s_hi.n, s_lo.n)
    return EstimatorResult(mean, se * se * n, se, (mean - Z95 * se, mean + Z95 * se), n,
                           len(d_hi) + len(d_lo), cfg.seed)


class _WeightedF:
    def __init__(self, f, target, c, c_star):
        self.f, self.target, self.c, self.c_star = f, target, c, c_star

    def __call__(self, summaries):
        s = summaries[0]
        return (float(self.f(s.final_state)) * likelihood_ratio(s, self.target, self.c, self.c_star),)


@dataclass(frozen=True)
class ReweightingDiagnostic:
    direct: EstimatorResult
    reweighted: EstimatorResult
    z: float

    def to_dict(self) -> dict:
        return {"direct": self.direct.to_dict(), "reweighted": self.reweighted.to_dict(), "z": self.z}


def reweighting_check(net: ReactionNetwork, f, target: int, c: float, cfg: SimConfig, N: int,
                      c_star: float | None = None, threads: int = 1) -> ReweightingDiagnostic:
    """Compare E f(X(T, c)) simulated directly against E[f(X(T, c*)) L(T, c)].

    Both sides use the same seed, so c = c* gives identical means.
    """
    if c_star is None:
        c_star = net.rate(target)
    base = net.with_rate(target, c_star)
    fn = observable(net, f)
    (a,), da = replicate_stats([net.with_rate(target, c)], cfg.T, N, cfg.seed, _FValue(fn), 1, threads, cfg.max_events)
    (b,), db = replicate_stats([base], cfg.T, N, cfg.seed, _WeightedF(fn, target, c, c_star), 1, threads, cfg.max_events)
    _check_discards(da, N)
    _check_discards(db, N)
    ra = EstimatorResult.from_stats(a, len(da), cfg.seed)
    rb = EstimatorResult.from_stats(b, len(db), cfg.seed)
    se = math.hypot(ra.stderr, rb.stderr)
    diff = ra.mean - rb.mean
    z = 0.0 if diff == 0 else (diff / se if se > 0 else math.copysign(math.inf, diff))
    return ReweightingDiagnostic(ra, rb, z)


class _LRStatistic:
    def __init__(self, target, cs, c_star):
        self.target, self.cs, self.c_star = target, cs, c_star

    def __call__(self, summaries):
        s = summaries[0]
        return tuple(likelihood_ratio(s, self.target, c, self.c_star) for c in self.cs)


def likelihood_ratio_means(net: ReactionNetwork, target: int, ratios: Sequence[float], cfg: SimConfig, N: int,
                           threads: int = 1) -> list[EstimatorResult]:
    """Sample means of L(T, ρ c*) for each ρ in ``ratios`` (martingale check: all should be 1)."""
    c_star = net.rate(target)
    sts, disc = replicate_stats([net], cfg.T, N, cfg.seed, _LRStatistic(target, [r * c_star for r in ratios], c_star),
                                len(ratios), threads, cfg.max_events)
    _check_discards(disc, N)
    return [EstimatorResult.from_stats(st, len(disc), cfg.seed) for st in sts]


class _ScoreStatistic:
    def __init__(self, rates):
        self.rates = rates

    def __call__(self, summaries):
        s = summaries[0]
        return tuple(score_Z(s, j, c) for j, c in enumerate(self.rates))


def score_means(net: ReactionNetwork, cfg: SimConfig, N: int, threads: int = 1) -> list[EstimatorResult]:
    """Sample mean of Z(T, c*) for every channel, from one shared set of replicates."""
    rates = [net.rate(j) for j in range(net.m)]
    sts, disc = replicate_stats([net], cfg.T, N, cfg.seed, _ScoreStatistic(rates), net.m, threads, cfg.max_events)
    _check_discards(disc, N)
    return [EstimatorResult.from_stats(st, len(disc), cfg.seed) for st in sts]


def result_record(result: EstimatorResult, *, model: str, f: str, target_param: str, c_star: float, T: float,
                  N: int, method: str, wallclock_s: float, **extra) -> dict:
    record = {
        "model": model, "f": f, "target_param": target_param, "c_star": c_star, "T": T, "N": N,
        "mean": result.mean, "variance": result.variance, "stderr": result.stderr, "ci95": list(result.ci95),
        "n_discarded": result.n_discarded, "seed": result.seed, "method": method, "wallclock_s": wallclock_s,
    }
    record.update(extra)
    return record


class Stopwatch:
    def __enter__(self):
        self.start = time.perf_counter()
        return self

    def __exit__(self, *exc):
        self.elapsed = time.perf_counter() - self.start
