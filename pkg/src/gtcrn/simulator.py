"""Exact trajectory simulation through the random time change representation.

Each channel k is driven by its own unit-rate Poisson stream Y_k and fires
whenever the internal time ∫ a_k(X(s)) ds reaches the next arrival of Y_k
(next-reaction scheme over internal times).  Runs at different rate constants
with the same seed share the streams and are therefore coupled.
"""

from __future__ import annotations

import io
import math
from dataclasses import dataclass, field
from typing import Iterator, Sequence

import numpy as np

from .network import INT64_MAX, InfeasibleTransition, ReactionNetwork, propensity
from .rng import DIRECT_SUBSTREAM, ExpStream, generator, run_key

DEFAULT_MAX_EVENTS = 10**7


class ExplosionGuard(RuntimeError):
    """Event cap reached before the final time."""

    def __init__(self, events: int, t: float, T: float, replicate: int | None = None):
        self.events = events
        self.t = t
        self.T = T
        self.replicate = replicate
        super().__init__(f"{events} events exceeded the cap at t={t:.6g} < T={T:g} (replicate {replicate})")


@dataclass(frozen=True)
class SimConfig:
    T: float
    max_events: int = DEFAULT_MAX_EVENTS
    seed: int = 0
    replicate_index: int = 0

    def __post_init__(self):
        if not self.T > 0:
            raise ValueError("T must be positive")
        if self.max_events < 1:
            raise ValueError("max_events must be at least 1")
        if not 0 <= self.seed < 2**64:
            raise ValueError("seed must be a 64-bit nonnegative integer")
        if self.replicate_index < 0:
            raise ValueError("replicate_index must be nonnegative")


@dataclass(frozen=True, eq=False)
class Trajectory:
    net: ReactionNetwork = field(repr=False)
    T: float
    jump_times: tuple[float, ...]
    channels: tuple[int, ...]
    states: tuple[tuple[int, ...], ...]
    counts: tuple[int, ...]
    integrated_propensity: tuple[float, ...]
    seed: int
    replicate_index: int

    @property
    def final_state(self) -> tuple[int, ...]:
        return self.states[-1]

    def state_at(self, t: float) -> tuple[int, ...]:
        k = int(np.searchsorted(self.jump_times, t, side="right"))
        return self.states[k]

    def segments(self) -> Iterator[tuple[float, float, tuple[int, ...]]]:
        """(start, end, state) for each constant piece of the path on [0, T]."""
        edges = (0.0,) + self.jump_times + (self.T,)
        for k, state in enumerate(self.states):
            yield edges[k], edges[k + 1], state

    def to_csv(self) -> str:
        buf = io.StringIO()
        n = self.net.n
        buf.write("t,channel," + ",".join(f"x{i + 1}" for i in range(n)) + "\n")
        for t, j, x in zip(self.jump_times, self.channels, self.states[1:]):
            buf.write(f"{t!r},{j}," + ",".join(map(str, x)) + "\n")
        buf.write(f"{float(self.T)!r},-1," + ",".join(map(str, self.final_state)) + "\n")
        return buf.getvalue()


def _engine(z, props, deltas, deps, T, streams, max_events, record, replicate=None):
    """Next-reaction loop over generic channels acting on a mutable integer list ``z``.

    Returns (fired counts, internal times consumed, event log).  Internal-time
    accumulators use Kahan compensation; a firing channel's accumulator is snapped
    to its stream arrival so that counts match the stream points exactly.
    """
    m = len(props)
    a = [p(z) for p in props]
    internal = [0.0] * m
    comp = [0.0] * m
    nxt: list = [None] * m
    fired = [0] * m
    t = 0.0
    events = 0
    log = [] if record else None
    inf = math.inf
    while True:
        best = inf
        mu = -1
        for k in range(m):
            ak = a[k]
            if ak > 0.0:
                pk = nxt[k]
                if pk is None:
                    pk = nxt[k] = streams[k].next()
                dt = (pk - internal[k]) / ak
                if dt < best:
                    best = dt
                    mu = k
        if mu < 0 or t + best > T:
            dt = T - t
            for k in range(m):
                if a[k] > 0.0:
                    y = a[k] * dt - comp[k]
                    s = internal[k] + y
                    comp[k] = (s - internal[k]) - y
                    internal[k] = s
            break
        if best < 0.0:
            best = 0.0
        events += 1
        if events > max_events:
            raise ExplosionGuard(events - 1, t, T, replicate)
        for k in range(m):
            if k != mu and a[k] > 0.0:
                y = a[k] * best - comp[k]
                s = internal[k] + y
                comp[k] = (s - internal[k]) - y
                internal[k] = s
        internal[mu] = nxt[mu]
        comp[mu] = 0.0
        nxt[mu] += streams[mu].next()
        fired[mu] += 1
        t += best
        for i, d in deltas[mu]:
            v = z[i] + d
            if v < 0:
                raise InfeasibleTransition(f"channel {mu} drove species {i} negative at t={t}")
            if v > INT64_MAX:
                raise OverflowError("species count exceeds 64-bit range")
            z[i] = v
        for k in deps[mu]:
            a[k] = props[k](z)
        if record:
            log.append((t, mu, tuple(z)))
    return fired, internal, log


@dataclass(frozen=True)
class ReplicateSummary:
    """Lean per-replicate output used by the estimators."""

    final_state: tuple[int, ...]
    counts: tuple[int, ...]
    integrated_propensity: tuple[float, ...]


def run_replicate(net: ReactionNetwork, T: float, key: np.ndarray, replicate: int,
                  max_events: int = DEFAULT_MAX_EVENTS) -> ReplicateSummary:
    kern = net.kernel
    z = list(net.x0)
    streams = [ExpStream(key, replicate, k) for k in range(kern.m)]
    fired, internal, _ = _engine(z, kern.props, kern.deltas, kern.dependents, T, streams, max_events, False, replicate)
    return ReplicateSummary(tuple(z), tuple(fired), tuple(internal))


def simulate(net: ReactionNetwork, cfg: SimConfig) -> Trajectory:
    """Simulate one exact trajectory on [0, cfg.T]."""
    kern = net.kernel
    z = list(net.x0)
    key = run_key(cfg.seed)
    streams = [ExpStream(key, cfg.replicate_index, k) for k in range(kern.m)]
    fired, internal, log = _engine(z, kern.props, kern.deltas, kern.dependents, cfg.T, streams,
                                   cfg.max_events, True, cfg.replicate_index)
    return Trajectory(
        net=net,
        T=cfg.T,
        jump_times=tuple(e[0] for e in log),
        channels=tuple(e[1] for e in log),
        states=(tuple(net.x0),) + tuple(e[2] for e in log),
        counts=tuple(fired),
        integrated_propensity=tuple(internal),
        seed=cfg.seed,
        replicate_index=cfg.replicate_index,
    )


def integrated_propensity(traj: Trajectory, j: int) -> float:
    """Piecewise-constant integral of a_j along the stored path."""
    net = traj.net
    return math.fsum(propensity(net, j, x) * (t1 - t0) for t0, t1, x in traj.segments())


def simulate_direct(net: ReactionNetwork, cfg: SimConfig) -> Trajectory:
    """Gillespie direct method; agrees with :func:`simulate` in law, not pathwise."""
    gen = generator(run_key(cfg.seed), cfg.replicate_index, DIRECT_SUBSTREAM)
    kern = net.kernel
    x = list(net.x0)
    t = 0.0
    times, chans, states = [], [], [tuple(x)]
    integrals = [0.0] * net.m
    while True:
        a = [p(x) for p in kern.props]
        a0 = math.fsum(a)
        dt = gen.standard_exponential() / a0 if a0 > 0 else math.inf
        if t + dt > cfg.T:
            for k in range(net.m):
                integrals[k] += a[k] * (cfg.T - t)
            break
        if len(times) >= cfg.max_events:
            raise ExplosionGuard(len(times), t, cfg.T, cfg.replicate_index)
        for k in range(net.m):
            integrals[k] += a[k] * dt
        u = gen.random() * a0
        mu, acc = 0, a[0]
        while acc <= u and mu < net.m - 1:
            mu += 1
            acc += a[mu]
        while a[mu] == 0.0:
            mu -= 1
        t += dt
        for i, d in kern.deltas[mu]:
            x[i] += d
            if x[i] < 0:
                raise InfeasibleTransition(f"channel {mu} drove species {i} negative")
        times.append(t)
        chans.append(mu)
        states.append(tuple(x))
    counts = [0] * net.m
    for j in chans:
        counts[j] += 1
    return Trajectory(net, cfg.T, tuple(times), tuple(chans), tuple(states), tuple(counts),
                      tuple(integrals), cfg.seed, cfg.replicate_index)


# ---------------------------------------------------------------------------
# coupled pairs


class PairingError(ValueError):
    pass


def _check_pairing(net, dominating, shared, species_map):
    if not all((dominating.nu[:, k] >= 0).all() for k in range(dominating.m)):
        raise PairingError("dominating system must consist of unconsuming (birth) reactions only")
    seen_net, seen_dom = set(), set()
    for j, k in shared:
        if not (0 <= j < net.m and 0 <= k < dominating.m):
            raise PairingError(f"pair ({j}, {k}) out of range")
        if j in seen_net or k in seen_dom:
            raise PairingError(f"channel reused in pairing ({j}, {k})")
        seen_net.add(j)
        seen_dom.add(k)
        for dom_i, net_i in species_map.items():
            if dominating.nu[dom_i, k] != net.nu[net_i, j]:
                raise PairingError(
                    f"pair ({net.reactions[j].name}, {dominating.reactions[k].name}) changes "
                    f"{net.species[net_i]} differently")


def simulate_coupled(net: ReactionNetwork, dominating: ReactionNetwork, shared: Sequence[tuple[int, int]],
                     cfg: SimConfig, species_map: dict[int, int] | None = None) -> tuple[Trajectory, Trajectory]:
    """Simulate ``net`` and a dominating birth system on one probability space.

    Every shared pair (j, k) is driven by three streams: a common stream at
    rate min(a_j(X), ã_k(X̃)) that fires both channels, and one residual stream
    per side carrying the excess.  Unshared channels keep their own streams.
    ``species_map`` maps dominating species indices to net species indices;
    by default species are matched by name.
    """
    if species_map is None:
        index = {s: i for i, s in enumerate(net.species)}
        try:
            species_map = {i: index[s] for i, s in enumerate(dominating.species)}
        except KeyError as exc:
            raise PairingError(f"dominating species {exc.args[0]!r} has no counterpart") from None
    shared = [(int(j), int(k)) for j, k in shared]
    _check_pairing(net, dominating, shared, species_map)

    n = net.n
    kn, kd = net.kernel, dominating.kernel
    net_p = kn.props
    dom_p = [(lambda p: (lambda z: p(z[n:])))(p) for p in kd.props]
    dom_deltas = [tuple((n + i, d) for i, d in dl) for dl in kd.deltas]

    props, deltas, owner = [], [], []  # owner: (net channel or None, dom channel or None)
    for j, k in shared:
        pj, pk = net_p[j], dom_p[k]
        props.append((lambda pj, pk: lambda z: min(pj(z), pk(z)))(pj, pk))
        deltas.append(kn.deltas[j] + dom_deltas[k])
        owner.append((j, k))
        props.append((lambda pj, pk: lambda z: pj(z) - min(pj(z), pk(z)))(pj, pk))
        deltas.append(kn.deltas[j])
        owner.append((j, None))
        props.append((lambda pj, pk: lambda z: pk(z) - min(pj(z), pk(z)))(pj, pk))
        deltas.append(dom_deltas[k])
        owner.append((None, k))
    paired_net = {j for j, _ in shared}
    paired_dom = {k for _, k in shared}
    for j in range(net.m):
        if j not in paired_net:
            props.append(net_p[j])
            deltas.append(kn.deltas[j])
            owner.append((j, None))
    for k in range(dominating.m):
        if k not in paired_dom:
            props.append(dom_p[k])
            deltas.append(dom_deltas[k])
            owner.append((None, k))

    v = len(props)
    allv = tuple(range(v))
    key = run_key(cfg.seed)
    streams = [ExpStream(key, cfg.replicate_index, s) for s in range(v)]
    z = list(net.x0) + list(dominating.x0)
    fired, internal, log = _engine(z, props, deltas, [allv] * v, cfg.T, streams, cfg.max_events, True,
                                   cfg.replicate_index)

    def side(which, sub, offset, size, m):
        times, chans, states = [], [], [tuple(sub.x0)]
        for t, mu, zz in log:
            ch = owner[mu][which]
            if ch is not None:
                times.append(t)
                chans.append(ch)
                states.append(tuple(zz[offset:offset + size]))
        counts = [0] * m
        integrals = [0.0] * m
        parts: list[list[float]] = [[] for _ in range(m)]
        for s in range(v):
            ch = owner[s][which]
            if ch is not None:
                counts[ch] += fired[s]
                parts[ch].append(internal[s])
        integrals = [math.fsum(p) for p in parts]
        return Trajectory(sub, cfg.T, tuple(times), tuple(chans), tuple(states), tuple(counts),
                          tuple(integrals), cfg.seed, cfg.replicate_index)

    return side(0, net, 0, n, net.m), side(1, dominating, n, dominating.n, dominating.m)


def joint_path(first: Trajectory, second: Trajectory) -> Iterator[tuple[float, tuple, tuple, tuple, tuple]]:
    """Walk two trajectories on a common time axis.

    Yields (t, x, R, x̃, R̃) at time 0 and after every jump of either path,
    where R are the cumulative reaction counts.
    """
    i = j = 0
    r1 = [0] * first.net.m
    r2 = [0] * second.net.m
    yield 0.0, first.states[0], tuple(r1), second.states[0], tuple(r2)
    n1, n2 = len(first.jump_times), len(second.jump_times)
    while i < n1 or j < n2:
        t1 = first.jump_times[i] if i < n1 else math.inf
        t2 = second.jump_times[j] if j < n2 else math.inf
        t = min(t1, t2)
        while i < n1 and first.jump_times[i] == t:
            r1[first.channels[i]] += 1
            i += 1
        while j < n2 and second.jump_times[j] == t:
            r2[second.channels[j]] += 1
            j += 1
        yield t, first.states[i], tuple(r1), second.states[j], tuple(r2)
