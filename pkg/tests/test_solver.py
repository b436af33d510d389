"""Solver-layer tests: parametric dual, Dinkelbach bisection, certificates."""
import math

import numpy as np
import pytest

from eepareto.model import ConfigurationError, Scenario, generate_channels
from eepareto.solver import (
    ConvergenceError,
    ITVector,
    LinkIT,
    dinkelbach_bisection,
    effective_noise,
    ellipsoid_solve,
    parametric_primal,
)


def bench_scenario(seed=0, M=2, cross_gain=0.3, caps=10.0, pc=1.0):
    return generate_channels(
        seed, 2, (M, M), cross_gain=cross_gain, noise=1.0,
        power_caps=caps, circuit_power=pc, amp_efficiency=0.38,
    )


def scalar_scenario(caps=math.inf, pc=0.0):
    # two decoupled single-antenna links with unit direct channels
    return Scenario(
        num_links=2,
        antennas=(1, 1),
        channels=(((1.0,), (0.0,)), ((0.0,), (1.0,))),
        noise=(1.0, 1.0),
        power_caps=(caps, caps),
        circuit_power=pc,
        amp_efficiency=0.38,
    )


FREE = LinkIT(link=0, own={1: math.inf}, received={1: 0.0})


class TestITVector:
    def test_pairs_and_accessors(self):
        itv = ITVector.uniform(3, 0.2)
        assert set(itv.entries) == set(ITVector.pairs(3))
        assert itv.num_links == 3
        assert itv[(0, 1)] == 0.2
        lit = itv.for_link(1)
        assert lit.link == 1
        assert set(lit.own) == {0, 2}
        assert set(lit.received) == {0, 2}
        assert lit.own[0] == 0.2 and lit.received[2] == 0.2

    def test_zeros_and_as_array(self):
        itv = ITVector.zeros(2)
        assert itv.as_array().tolist() == [0.0, 0.0]
        itv2 = itv.with_entries({(0, 1): 0.7})
        assert itv2[(0, 1)] == 0.7 and itv2[(1, 0)] == 0.0
        # original unchanged
        assert itv[(0, 1)] == 0.0

    def test_as_array_order_is_sorted_pairs(self):
        itv = ITVector({(0, 1): 1.0, (1, 0): 2.0})
        assert itv.as_array().tolist() == [1.0, 2.0]

    def test_validation(self):
        with pytest.raises(ConfigurationError):
            ITVector({(0, 1): 0.1})  # missing (1, 0)
        with pytest.raises(ConfigurationError):
            ITVector({(0, 1): -0.1, (1, 0): 0.1})
        with pytest.raises(ConfigurationError):
            ITVector({(0, 0): 0.1, (1, 0): 0.1})
        with pytest.raises(ConfigurationError):
            ITVector.uniform(2, 0.1).with_entries({(0, 2): 0.1})

    def test_effective_noise(self):
        itv = ITVector({(0, 1): 0.3, (1, 0): 0.5})
        # link 0 receives at most 0.5 from BS 1 on top of its own noise
        assert effective_noise(itv.for_link(0), 2.0) == pytest.approx(2.5)
        assert effective_noise(itv.for_link(1), 1.0) == pytest.approx(1.3)


class TestScalarHandValues:
    def test_single_antenna_no_circuit_power_supremum(self):
        # scalar link, |h|^2 = 1, sigma^2 = 1, eta = 0.38, P_c = 0:
        # EE p -> log2(1 + p) / (p / eta) increases as p -> 0 with
        # supremum eta / ln 2, never attained at positive power.
        sc = scalar_scenario()
        sol = dinkelbach_bisection(sc, FREE, 0, eps=1e-6)
        ref = 0.38 / math.log(2)
        assert not sol.attained
        assert sol.gamma_star == pytest.approx(ref, rel=5e-3)
        # the reported value stays on the achievable side of the supremum
        assert sol.gamma_star < ref
        assert float(sol.covariance.trace) > 0.0

    def test_single_antenna_with_circuit_power_matches_grid(self):
        # max_p log2(1 + p) / (p / 0.38 + 1) on [0, 10], dense grid reference
        sc = scalar_scenario(caps=10.0, pc=1.0)
        sol = dinkelbach_bisection(sc, FREE, 0, eps=1e-9)
        p = np.linspace(0.0, 10.0, 200001)
        ref = float(np.max(np.log2(1.0 + p) / (p / 0.38 + 1.0)))
        assert sol.attained
        assert sol.gamma_star == pytest.approx(ref, rel=1e-6)
        assert sol.gamma_star == pytest.approx(0.2753664658200642, rel=1e-9)

    def test_mrt_reduction_with_orthogonal_channels(self):
        # zero cross channels: the vector problem collapses to a scalar one
        # with gain |h_kk|^2, so gamma* must match the scalar solve.
        sc = generate_channels(5, 2, (3, 3), cross_gain=0.0, noise=1.0,
                               power_caps=10.0, circuit_power=1.0,
                               amp_efficiency=0.38)
        gain = float(np.real(sc.channel(0, 0).conj() @ sc.channel(0, 0)))
        sol = dinkelbach_bisection(sc, FREE, 0, eps=1e-9)
        p = np.linspace(0.0, 10.0, 400001)
        ref = float(np.max(np.log2(1.0 + gain * p) / (p / 0.38 + 1.0)))
        assert sol.gamma_star == pytest.approx(ref, rel=1e-6)


class TestDinkelbach:
    def test_frozen_bench_gammas(self):
        sc = bench_scenario()
        itv = ITVector.uniform(2, 0.1)
        s0 = dinkelbach_bisection(sc, itv.for_link(0), 0, eps=1e-8)
        s1 = dinkelbach_bisection(sc, itv.for_link(1), 1, eps=1e-8)
        assert s0.gamma_star == pytest.approx(0.06548342574707189, rel=1e-9)
        assert s1.gamma_star == pytest.approx(0.6251757409446541, rel=1e-9)
        assert s0.attained and s1.attained

    def test_rate_and_power_consistency(self):
        sc = bench_scenario()
        itv = ITVector.uniform(2, 0.1)
        sol = dinkelbach_bisection(sc, itv.for_link(0), 0, eps=1e-8)
        tr = float(sol.covariance.trace)
        assert sol.total_power == pytest.approx(tr / 0.38 + 1.0, rel=1e-12)
        nu = effective_noise(itv.for_link(0), sc.noise[0])
        rate = math.log2(1.0 + sol.signal / nu)
        assert sol.rate == pytest.approx(rate, rel=1e-12)
        # gamma* is the achieved worst-case ratio up to the residual
        assert sol.gamma_star == pytest.approx(rate / sol.total_power, rel=1e-5)
        assert abs(sol.f_residual) <= 1e-4

    def test_monotone_in_interference_levels(self):
        # raising the own budget can only help; raising the received
        # level can only hurt (worst-case noise grows).
        sc = bench_scenario()
        base = dinkelbach_bisection(
            sc, ITVector({(0, 1): 0.1, (1, 0): 0.1}).for_link(0), 0, eps=1e-8)
        up_own = dinkelbach_bisection(
            sc, ITVector({(0, 1): 0.5, (1, 0): 0.1}).for_link(0), 0, eps=1e-8)
        up_rec = dinkelbach_bisection(
            sc, ITVector({(0, 1): 0.1, (1, 0): 0.5}).for_link(0), 0, eps=1e-8)
        assert up_own.gamma_star >= base.gamma_star - 1e-7
        assert up_rec.gamma_star <= base.gamma_star + 1e-7
        assert up_own.gamma_star > base.gamma_star > up_rec.gamma_star

    def test_zero_forcing_at_zero_budget(self):
        # own budget 0 means no measurable interference may be caused
        sc = bench_scenario()
        sol = dinkelbach_bisection(
            sc, ITVector({(0, 1): 0.0, (1, 0): 0.1}).for_link(0), 0, eps=1e-8)
        assert sol.caused[1] <= 1e-20
        assert sol.gamma_star > 0.0
        assert float(sol.covariance.trace) > 0.0

    def test_inner_budget_exhaustion_raises(self):
        sc = bench_scenario()
        itv = ITVector.uniform(2, 0.1)
        with pytest.raises(ConvergenceError):
            dinkelbach_bisection(sc, itv.for_link(0), 0, eps=1e-8,
                                 max_inner_iter=3)

    def test_invalid_inputs(self):
        sc = bench_scenario()
        itv = ITVector.uniform(2, 0.1)
        with pytest.raises(ConfigurationError):
            dinkelbach_bisection(sc, itv.for_link(0), 1, eps=1e-8)  # link mismatch
        with pytest.raises(ConfigurationError):
            dinkelbach_bisection(sc, itv.for_link(0), 0, eps=0.0)

    def test_zero_circuit_power_never_attained(self):
        sc = bench_scenario(pc=0.0)
        itv = ITVector.uniform(2, 0.1)
        sol = dinkelbach_bisection(sc, itv.for_link(0), 0, eps=1e-8)
        assert not sol.attained
        assert sol.gamma_star > 0.0
        assert float(sol.covariance.trace) > 0.0

    def test_covariance_certificates(self):
        # PSD, near rank-one, and feasible across a seeded batch
        for seed in range(6):
            sc = bench_scenario(seed=seed)
            itv = ITVector.uniform(2, 0.05 + 0.1 * seed)
            for k in sc.links():
                sol = dinkelbach_bisection(sc, itv.for_link(k), k, eps=1e-7)
                w = np.linalg.eigvalsh(sol.covariance.matrix)
                assert w[0] >= -1e-10 * max(1.0, w[-1])
                if w[-1] > 0.0:
                    assert w[-2] / w[-1] <= 1e-8
                assert float(sol.covariance.trace) <= sc.power_caps[k] * (1 + 1e-8)
                for j, level in sol.caused.items():
                    cap = itv[(k, j)]
                    assert level <= cap * (1 + 1e-8) + 1e-15


class TestDualCertificates:
    def test_weak_duality_across_gammas(self):
        sc = bench_scenario()
        lit = ITVector.uniform(2, 0.1).for_link(0)
        for gamma in (0.01, 0.03, 0.0654, 0.2, 0.5):
            duals, f_val, cov = ellipsoid_solve(gamma, sc, lit, 0, tol=1e-9)
            primal = parametric_primal(sc, lit, 0, cov, gamma)
            assert f_val >= primal - 1e-7
            assert f_val - primal <= 1e-5

    def test_f_strictly_decreasing_in_gamma(self):
        sc = bench_scenario()
        lit = ITVector.uniform(2, 0.1).for_link(0)
        grid = np.linspace(0.005, 0.5, 10)
        vals = [ellipsoid_solve(g, sc, lit, 0, tol=1e-9)[1] for g in grid]
        for lo, hi in zip(vals, vals[1:]):
            assert hi < lo

    def test_inactive_constraints_have_zero_duals(self):
        sc = bench_scenario()
        lit = ITVector({(0, 1): 50.0, (1, 0): 0.1}).for_link(0)
        sol = dinkelbach_bisection(sc, lit, 0, eps=1e-8)
        assert sol.duals.it[1] <= 1e-8
        # generous power cap stays slack too
        assert sol.duals.power <= 1e-8

    def test_active_power_cap_binds(self):
        sc = bench_scenario(caps=0.05)
        lit = ITVector({(0, 1): 50.0, (1, 0): 0.1}).for_link(0)
        sol = dinkelbach_bisection(sc, lit, 0, eps=1e-8)
        assert float(sol.covariance.trace) == pytest.approx(0.05, rel=1e-8)
        assert sol.duals.power > 1e-3

    def test_ellipsoid_rejects_nonpositive_gamma(self):
        sc = bench_scenario()
        lit = ITVector.uniform(2, 0.1).for_link(0)
        with pytest.raises(ConfigurationError):
            ellipsoid_solve(0.0, sc, lit, 0)
        with pytest.raises(ConfigurationError):
            ellipsoid_solve(-1.0, sc, lit, 0)
