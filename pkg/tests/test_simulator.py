import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from _gof import pooled_chisquare
from gtcrn import ExplosionGuard, SimConfig, parse_model, simulate, simulate_coupled
from gtcrn.models import builtin_names
from gtcrn.network import propensity
from gtcrn.oracles import PureBirthLaw, pure_birth_pmf
from gtcrn.rng import poisson_points, run_key
from gtcrn.simulator import (PairingError, Trajectory, integrated_propensity, joint_path, run_replicate,
                             simulate_direct)


def _x_at_T(net, T, N, seed=0):
    key = run_key(seed)
    return [run_replicate(net, T, key, r).final_state for r in range(N)]


def test_absorbing_start_has_no_jumps():
    net = parse_model("[params] c = 3\n[species] S = 0\n[reactions]\nR1: S -> 2S @ c\n")
    tr = simulate(net, SimConfig(T=5.0))
    assert tr.jump_times == () and tr.final_state == (0,)
    assert tr.counts == (0,) and tr.integrated_propensity == (0.0,)


def test_immigration_counts_have_poisson_mean(models):
    net = models("immigration").with_param("c", 2.0)
    N = 10**5
    xs = [x[0] for x in _x_at_T(net, 1.0, N, seed=11)]
    assert abs(np.mean(xs) - 2.0) < 3 * math.sqrt(2.0 / N)


def test_immigration_distribution_is_poisson(models):
    net = models("immigration").with_param("c", 2.0)
    xs = [x[0] for x in _x_at_T(net, 1.0, 20000, seed=5)]
    assert pooled_chisquare(xs, lambda k: stats.poisson.pmf(k, 2.0)) > 1e-3


def test_pure_birth_distribution_is_geometric(models):
    net = models("purebirth")
    law = PureBirthLaw(1, net.params["c"], 1.0)
    xs = [x[0] for x in _x_at_T(net, 1.0, 20000, seed=6)]
    assert pure_birth_pmf(law, 3) == pytest.approx(0.5 ** 4)
    assert pooled_chisquare(xs, lambda x: pure_birth_pmf(law, x - 1), support_start=1) > 1e-3


class TestIntegratedPropensity:
    def _net(self):
        return parse_model('[params] c = 1\n[species] S = 1\n[reactions]\nR1: 0 -> S @ c | b = "x1^2"\n')

    def test_constant_path(self):
        net = parse_model("[params] c = 3\n[species] S = 0\n[reactions]\nR1: 0 -> S @ c\n")
        tr = Trajectory(net, 2.0, (), (), ((0,),), (0,), (6.0,), 0, 0)
        assert integrated_propensity(tr, 0) == 6.0

    def test_two_pieces(self):
        tr = Trajectory(self._net(), 1.0, (0.5,), (0,), ((1,), (2,)), (1,), (2.5,), 0, 0)
        assert integrated_propensity(tr, 0) == 2.5

    @pytest.mark.parametrize("name", builtin_names())
    def test_matches_simulated_accumulators(self, models, name):
        net = models(name)
        for r in range(20):
            tr = simulate(net, SimConfig(T=2.0, seed=3, replicate_index=r))
            for j in range(net.m):
                assert integrated_propensity(tr, j) == pytest.approx(tr.integrated_propensity[j], rel=1e-12, abs=1e-12)


@pytest.mark.parametrize("name", builtin_names())
def test_trajectory_invariants(models, name):
    net = models(name)
    for r in range(30):
        tr = simulate(net, SimConfig(T=3.0, seed=9, replicate_index=r))
        assert len(tr.states) == len(tr.jump_times) + 1 == len(tr.channels) + 1
        times = (0.0,) + tr.jump_times
        assert all(a < b for a, b in zip(times, times[1:])) and times[-1] <= 3.0
        for k, j in enumerate(tr.channels):
            assert np.array_equal(np.subtract(tr.states[k + 1], tr.states[k]), net.nu[:, j])
            assert propensity(net, j, tr.states[k]) > 0
        assert tr.counts == tuple(tr.channels.count(j) for j in range(net.m))
        assert np.array_equal(np.array(tr.final_state), np.array(net.x0) + net.nu @ np.array(tr.counts))
        assert min(min(x) for x in tr.states) >= 0


@pytest.mark.parametrize("name", builtin_names())
def test_counts_equal_stream_points_below_internal_time(models, name):
    net = models(name)
    key = run_key(17)
    for r in range(25):
        tr = simulate(net, SimConfig(T=2.0, seed=17, replicate_index=r))
        for j in range(net.m):
            assert len(poisson_points(key, r, j, tr.integrated_propensity[j])) == tr.counts[j]


@pytest.mark.parametrize("name", ["example3", "example8", "immigration_decay"])
def test_bit_identical_reruns(models, name):
    net = models(name)
    cfg = SimConfig(T=2.0, seed=123, replicate_index=7)
    a, b = simulate(net, cfg), simulate(net, cfg)
    assert a.to_csv() == b.to_csv() and a.integrated_propensity == b.integrated_propensity
    lean = run_replicate(net, 2.0, run_key(123), 7)
    assert lean.final_state == a.final_state and lean.counts == a.counts
    assert lean.integrated_propensity == a.integrated_propensity


def test_replicates_differ(models):
    net = models("immigration")
    finals = {simulate(net, SimConfig(T=5.0, replicate_index=r)).jump_times for r in range(10)}
    assert len(finals) == 10


def test_explosion_guard(models):
    with pytest.raises(ExplosionGuard) as info:
        simulate(models("purebirth"), SimConfig(T=10.0, max_events=5))
    assert info.value.events == 5 and info.value.t < 10.0


@pytest.mark.parametrize("kwargs", [dict(T=0.0), dict(T=1.0, max_events=0), dict(T=1.0, seed=-1),
                                    dict(T=1.0, replicate_index=-2)])
def test_config_validation(kwargs):
    with pytest.raises(ValueError):
        SimConfig(**kwargs)


def test_csv_layout(models):
    net = models("example2")
    tr = simulate(net, SimConfig(T=1.0, seed=1))
    rows = tr.to_csv().strip().splitlines()
    assert rows[0] == "t,channel,x1,x2"
    assert len(rows) == len(tr.jump_times) + 2
    last = rows[-1].split(",")
    assert float(last[0]) == 1.0 and last[1] == "-1"
    assert tuple(map(int, last[2:])) == tr.final_state


@pytest.mark.parametrize("name", ["example7", "immigration_decay"])
def test_direct_method_agrees_in_distribution(models, name):
    net = models(name)
    N = 4000
    a = [simulate(net, SimConfig(T=1.0, seed=1, replicate_index=r)).final_state[0] for r in range(N)]
    b = [simulate_direct(net, SimConfig(T=1.0, seed=2, replicate_index=r)).final_state[0] for r in range(N)]
    assert stats.chi2_contingency(_table(a, b)).pvalue > 1e-3


def _table(a, b):
    top = int(np.percentile(a + b, 99))
    ca = np.bincount(np.minimum(a, top), minlength=top + 1)
    cb = np.bincount(np.minimum(b, top), minlength=top + 1)
    keep = (ca + cb) > 0
    return np.vstack([ca[keep], cb[keep]])


def test_direct_method_path_invariants(models):
    net = models("example3")
    for r in range(20):
        tr = simulate_direct(net, SimConfig(T=2.0, seed=4, replicate_index=r))
        for j in range(net.m):
            assert integrated_propensity(tr, j) == pytest.approx(tr.integrated_propensity[j], rel=1e-9, abs=1e-12)


class TestCoupling:
    def _ex7_dominating(self):
        return parse_model("[params] c1 = 1\n[species] S = 5\n[reactions]\nD1: S -> 2S @ c1\n")

    def test_example7_domination(self, models):
        net = models("example7")
        dom = self._ex7_dominating()
        for r in range(300):
            a, b = simulate_coupled(net, dom, [(0, 0)], SimConfig(T=2.0, seed=8, replicate_index=r))
            for _, x, R, xt, Rt in joint_path(a, b):
                assert x[0] <= xt[0] and R[0] <= Rt[0]

    def test_marginals_are_valid_paths(self, models):
        net = models("example7")
        a, b = simulate_coupled(net, self._ex7_dominating(), [(0, 0)], SimConfig(T=2.0, seed=3))
        for tr in (a, b):
            for k, j in enumerate(tr.channels):
                assert np.array_equal(np.subtract(tr.states[k + 1], tr.states[k]), tr.net.nu[:, j])
            for j in range(tr.net.m):
                assert integrated_propensity(tr, j) == pytest.approx(tr.integrated_propensity[j], rel=1e-9)

    def test_identical_systems_fire_together(self, models):
        net = models("purebirth")
        for r in range(50):
            a, b = simulate_coupled(net, net, [(0, 0)], SimConfig(T=1.5, replicate_index=r))
            assert a.jump_times == b.jump_times and a.states == b.states

    def test_coupled_marginal_has_right_law(self, models):
        net = models("purebirth")
        dom = parse_model("[params] c = 2\n[species] S = 1\n[reactions]\nD: S -> 2S @ c\n")
        law = PureBirthLaw(1, net.params["c"], 1.0)
        xs = [simulate_coupled(net, dom, [(0, 0)], SimConfig(T=1.0, seed=2, replicate_index=r))[0].final_state[0]
              for r in range(5000)]
        assert pooled_chisquare(xs, lambda x: pure_birth_pmf(law, x - 1), support_start=1) > 1e-3

    def test_rejects_bad_pairings(self, models):
        net = models("example7")
        with pytest.raises(PairingError):
            simulate_coupled(net, net, [(0, 0)], SimConfig(T=1.0))
        dom = parse_model("[params] c = 1\n[species] S = 5\n[reactions]\nD: S -> 3S @ c\n")
        with pytest.raises(PairingError):
            simulate_coupled(net, dom, [(0, 0)], SimConfig(T=1.0))
        with pytest.raises(PairingError):
            simulate_coupled(net, self._ex7_dominating(), [(0, 0), (1, 0)], SimConfig(T=1.0))


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**63), st.integers(0, 10**6))
def test_any_seed_gives_consistent_path(seed, r):
    from gtcrn.models import load_builtin

    net = load_builtin("example6")
    tr = simulate(net, SimConfig(T=1.0, seed=seed, replicate_index=r))
    assert np.array_equal(np.array(tr.final_state), np.array(net.x0) + net.nu @ np.array(tr.counts))
