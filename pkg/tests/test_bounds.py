import itertools
import math
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pilothop.bounds import (
    BoundResult,
    CollisionScenario,
    McConfig,
    estimation_variances,
    per_device_rate,
    r1_bar,
    r2_bar,
    r3,
    ra,
    rate1,
    sinr1,
    sinr2,
    sinr3,
    sinr_components,
    sinra,
)
from pilothop.channels import LogNormalShadowing, UniformPowerError, analytic_moments, expect_beta, sample_beta
from pilothop.config import SystemConfig


def test_sinr1_hand_value():
    # lone device: numerator 10*100*1, denominator 1 + 11
    s = CollisionScenario(beta_0=1.0, colliders=(), K_a=1, tau_p=10, M=101)
    assert sinr1(s, []) == pytest.approx(1000.0 / 12.0, rel=1e-14)


def test_sinr1_contamination_limit():
    # equal-gain collider, enormous array: only the contamination term survives
    s = CollisionScenario(beta_0=2.0, colliders=(2.0,), K_a=2, tau_p=10, M=10**9)
    assert sinr1(s, []) == pytest.approx(1.0, rel=1e-5)


def test_sinr1_rejects_single_antenna():
    s = CollisionScenario(beta_0=1.0, colliders=(), K_a=1, tau_p=10, M=1)
    with pytest.raises(ValueError):
        sinr1(s, [])


def test_sinr1_checks_other_count():
    s = CollisionScenario(beta_0=1.0, colliders=(1.0,), K_a=4, tau_p=5, M=8)
    with pytest.raises(ValueError):
        sinr1(s, [1.0])  # needs K_a - 1 - |colliders| = 2 gains


def _random_scenario(rng):
    c = int(rng.integers(0, 6))
    extra = int(rng.integers(0, 8))
    K_a = 1 + c + extra
    betas = np.exp(rng.normal(1.0, 1.2, size=1 + c + extra))
    s = CollisionScenario(
        beta_0=float(betas[0]),
        colliders=tuple(betas[1 : 1 + c]),
        K_a=K_a,
        tau_p=int(rng.integers(1, 64)),
        M=int(rng.integers(2, 512)),
    )
    return s, betas[1 + c :]


def test_components_equal_closed_form(rng):
    for _ in range(1000):
        s, others = _random_scenario(rng)
        direct = sinr1(s, others)
        via_variances = 1.0 / sinr_components(s, others).inverse_sinr
        assert abs(direct - via_variances) <= 1e-12 * direct


@given(seed=st.integers(0, 10**9))
@settings(max_examples=200, deadline=None)
def test_components_equal_closed_form_property(seed):
    s, others = _random_scenario(np.random.default_rng(seed))
    direct = sinr1(s, others)
    assert abs(direct - 1.0 / sinr_components(s, others).inverse_sinr) <= 1e-12 * direct


def test_estimation_variances_values():
    est, err = estimation_variances(9.0, [4.0, 2.5], 16)
    s_yy = 16 * 15.5 + 1
    assert est == pytest.approx(16 * 81 / s_yy, rel=1e-14)
    assert err == pytest.approx(9.0 * (1 + 16 * 6.5) / s_yy, rel=1e-14)
    assert est + err == pytest.approx(9.0, rel=1e-14)  # estimate + error split the prior power


def test_rate1_arithmetic():
    s = CollisionScenario(beta_0=1.0, colliders=(), K_a=1, tau_p=33, M=101)
    got = rate1(s, [], 100)
    assert got == pytest.approx((67 / 100) * math.log2(1.0 + sinr1(s, [])), rel=1e-14)
    assert (67 / 100) * math.log2(4.0) == pytest.approx(1.34, abs=1e-12)  # the SINR=3 figure


def test_rate1_zero_when_all_training():
    s = CollisionScenario(beta_0=1.0, colliders=(), K_a=1, tau_p=50, M=16)
    assert rate1(s, [], 50) == 0.0
    with pytest.raises(ValueError):
        rate1(s, [], 49)


def test_sinr2_no_collider_single_device():
    mo = analytic_moments(UniformPowerError(10.0, 0.3))
    b0, tau_p, M = 7.0, 12, 32
    want = tau_p * (M - 1) * b0**2 / (b0 + (1 + b0 * tau_p))
    assert sinr2(0, 1, b0, mo, tau_p, M) == pytest.approx(want, rel=1e-14)


def test_sinr2_jensen_step_deterministic():
    # with a constant gain the identity-averaged denominator equals the
    # per-scenario one, so the two SINRs coincide
    model = UniformPowerError(10.0, 0.0)
    mo = analytic_moments(model)
    for c, K_a, tau_p, M in [(0, 1, 5, 16), (2, 9, 8, 64), (5, 30, 20, 100)]:
        s = CollisionScenario(10.0, (10.0,) * c, K_a, tau_p, M)
        others = [10.0] * (K_a - 1 - c)
        assert sinr2(c, K_a, 10.0, mo, tau_p, M) == pytest.approx(sinr1(s, others), rel=1e-12)


def test_sinr2_jensen_step_monte_carlo(rng):
    # identity-averaged denominator vs the empirical mean of per-scenario ones
    model = LogNormalShadowing(10.0, 0.3)
    mo = analytic_moments(model)
    c, K_a, tau_p, M, b0 = 3, 20, 12, 64, 7.0
    n = 10**5
    coll = sample_beta(model, rng, (n, c))
    others = sample_beta(model, rng, (n, K_a - 1 - c))
    S = b0 + coll.sum(axis=1)
    Q = b0**2 + (coll**2).sum(axis=1)
    den11 = (
        tau_p * (M - 1) * (coll**2).sum(axis=1)
        + S
        + tau_p * (S * S - Q)
        + (1 + others.sum(axis=1)) * (1 + tau_p * S)
    )
    den12 = tau_p * (M - 1) * b0**2 / sinr2(c, K_a, b0, mo, tau_p, M)
    se = den11.std(ddof=1) / math.sqrt(n)
    assert abs(den11.mean() - den12) <= 4 * se


def test_sinr2_large_M_limit():
    mo = analytic_moments(LogNormalShadowing(10.0, 0.4))
    got = sinr2(3, 10, 7.0, mo, 16, 10**12)
    assert got == pytest.approx(7.0**2 / (mo.mean_sq * 3), rel=1e-6)


def test_sinr3_collapse_at_one_active():
    mo = analytic_moments(UniformPowerError(10.0, 0.2))
    b0, tau_p, M, K = 9.0, 20, 64, 800
    p_a = 1.0 / K
    den = b0 + (1 + b0 * tau_p) + mo.mean**2 * (p_a**2 * K * (K - 1))
    assert sinr3(b0, mo, tau_p, p_a, K, M) == pytest.approx(tau_p * (M - 1) * b0**2 / den, rel=1e-12)


def test_sinr3_matches_sinra_at_scale():
    mo = analytic_moments(UniformPowerError(10.0, 0.0))
    for M, tau_p, paK, K in [(10**4, 500, 300, 10**5), (10**5, 1000, 1000, 10**6)]:
        s3 = sinr3(10.0, mo, tau_p, paK / K, K, M)
        sa = sinra(10.0, mo, tau_p, paK, M)
        assert abs(s3 - sa) / s3 < 0.05


def test_sinr3_monotone_in_activity():
    mo = analytic_moments(UniformPowerError(10.0, 0.3))
    K = 800
    vals = [sinr3(10.0, mo, 33, q / K, K, 100) for q in np.linspace(2, 400, 60)]
    assert all(a > b for a, b in zip(vals, vals[1:]))


def test_sinr3_requires_enough_activity():
    mo = analytic_moments(UniformPowerError(10.0, 0.0))
    with pytest.raises(ValueError, match="r1_bar"):
        sinr3(10.0, mo, 33, 0.5 / 800, 800, 100)


def test_sinra_three_term_decomposition():
    mo = analytic_moments(LogNormalShadowing(10.0, 0.2))
    b0, tau_p, paK, M = 6.0, 25, 40.0, 128
    s = sinra(b0, mo, tau_p, paK, M)
    terms = (
        mo.mean_sq * paK / (tau_p * b0**2),
        mo.mean**2 * paK**2 / (M * tau_p * b0**2),
        mo.mean * paK / (M * b0),
    )
    assert 1.0 / s == pytest.approx(sum(terms), rel=1e-14)


def test_ra_surface_unimodal_interior():
    # coarse scan of the large-system bound at M = tau_u = 400
    model = UniformPowerError(10.0, 0.0)
    cfg = SystemConfig(M=400, K=10**5, tau_u=400, seed=0)
    tps = np.arange(8, 400, 8)
    qs = np.geomspace(2.0, 4000.0, 40)
    surf = np.array(
        [[ra(replace(cfg, tau_p=int(tp), p_a=q / cfg.K), model).value for q in qs] for tp in tps]
    )
    i, j = np.unravel_index(surf.argmax(), surf.shape)
    assert 0 < i < tps.size - 1 and 0 < j < qs.size - 1
    assert 0.2 <= tps[i] / 400 <= 0.5
    interior = surf[1:-1, 1:-1]
    peaks = (
        (interior >= surf[:-2, 1:-1])
        & (interior >= surf[2:, 1:-1])
        & (interior >= surf[1:-1, :-2])
        & (interior >= surf[1:-1, 2:])
    )
    assert int(peaks.sum()) == 1


def test_ra_below_r3_at_scale():
    model = UniformPowerError(10.0, 0.0)
    for M, tau_u, tau_p, paK in [(4000, 2000, 600, 500), (10**4, 5000, 1500, 900)]:
        cfg = SystemConfig(M=M, K=10**5, tau_u=tau_u, tau_p=tau_p, p_a=paK / 10**5, seed=0)
        assert ra(cfg, model).value <= r3(cfg, model).value * (1 + 1e-9)


def _cfg(**kw):
    base = dict(M=100, K=800, tau_u=100, tau_p=33, p_a=30 / 800, seed=7, mc=McConfig(seed=7))
    base.update(kw)
    return SystemConfig(**base)


def test_averaged_bounds_zero_activity(power_controlled):
    cfg = _cfg(p_a=0.0)
    for fn in (lambda: r1_bar(cfg, power_controlled, cfg.mc), lambda: r2_bar(cfg, power_controlled, cfg.mc),
               lambda: r3(cfg, power_controlled), lambda: ra(cfg, power_controlled)):
        res = fn()
        assert res.value == 0.0 and res.mc_std_err == 0.0


def test_r1_bar_single_device_matches_quadrature(uniform_spread):
    cfg = SystemConfig(M=50, K=1, tau_u=80, tau_p=10, p_a=1.0, seed=2,
                       mc=McConfig(n_beta_samples=100000, seed=2))
    got = r1_bar(cfg, uniform_spread, cfg.mc)

    def rate_of_gain(b0):
        return (70 / 80) * math.log2(1.0 + sinr1(CollisionScenario(b0, (), 1, 10, 50), []))

    want = expect_beta(uniform_spread, rate_of_gain)
    assert abs(got.value - want) <= 4 * got.mc_std_err


def test_r1_bar_matches_exhaustive_enumeration():
    # tiny system, constant gains: enumerate every activation pattern and
    # every pilot assignment, score each active device's conditional SINR,
    # and average -- a from-scratch oracle for the whole summation skeleton
    K, tau_p, tau_u, M, p_a, beta = 4, 2, 10, 8, 0.6, 10.0
    total = 0.0
    for pattern in itertools.product([0, 1], repeat=K):
        K_a = sum(pattern)
        p_act = p_a**K_a * (1 - p_a) ** (K - K_a)
        if K_a == 0:
            continue
        for assign in itertools.product(range(tau_p), repeat=K_a):
            p_assign = (1 / tau_p) ** K_a
            rate_sum = 0.0
            for dev in range(K_a):
                c = sum(1 for j in range(K_a) if j != dev and assign[j] == assign[dev])
                s = CollisionScenario(beta, (beta,) * c, K_a, tau_p, M)
                rate_sum += rate1(s, [beta] * (K_a - 1 - c), tau_u)
            total += p_act * p_assign * rate_sum
    model = UniformPowerError(beta, 0.0)
    cfg = SystemConfig(M=M, K=K, tau_u=tau_u, tau_p=tau_p, p_a=p_a, seed=0,
                       mc=McConfig(eps_tail=1e-15, seed=0))
    got = r1_bar(cfg, model, cfg.mc)
    assert got.mc_samples == 0
    assert got.value == pytest.approx(total, rel=1e-12)


def test_r2_equals_r1_power_control(power_controlled):
    cfg = _cfg()
    v1 = r1_bar(cfg, power_controlled, cfg.mc)
    v2 = r2_bar(cfg, power_controlled, cfg.mc)
    assert v1.mc_samples == 0 and v2.mc_samples == 0
    assert v2.value == pytest.approx(v1.value, rel=1e-12)


def test_r2_equals_r1_single_device(uniform_spread):
    # one device, always active: no colliders exist and the two averaged
    # bounds coincide draw for draw
    cfg = SystemConfig(M=50, K=1, tau_u=80, tau_p=10, p_a=1.0, seed=6,
                       mc=McConfig(n_beta_samples=5000, seed=6))
    v1 = r1_bar(cfg, uniform_spread, cfg.mc)
    v2 = r2_bar(cfg, uniform_spread, cfg.mc)
    assert v2.value == pytest.approx(v1.value, rel=1e-12)


def test_bound_ordering_with_spread(uniform_spread):
    for tp, q in [(10, 8.0), (33, 30.0), (70, 150.0)]:
        cfg = _cfg(tau_p=tp, p_a=q / 800)
        v1 = r1_bar(cfg, uniform_spread, cfg.mc)
        v2 = r2_bar(cfg, uniform_spread, cfg.mc)
        v3 = r3(cfg, uniform_spread)
        slack = 3 * math.hypot(v1.mc_std_err, v2.mc_std_err) + 1e-9 * v1.value
        assert v2.value <= v1.value + slack
        assert v3.value <= v1.value + 3 * v1.mc_std_err + 1e-9 * v1.value


def test_r3_and_ra_zero_cases(power_controlled):
    cfg = _cfg(tau_p=100)
    assert r3(cfg, power_controlled).value == 0.0
    assert ra(cfg, power_controlled).value == 0.0


def test_r1_bar_is_deterministic(uniform_spread):
    cfg = _cfg()
    a = r1_bar(cfg, uniform_spread, cfg.mc)
    b = r1_bar(cfg, uniform_spread, cfg.mc)
    assert a.value == b.value and a.mc_std_err == b.mc_std_err
    c = r1_bar(cfg, uniform_spread, McConfig(seed=8))
    assert c.value != a.value  # different stream, different estimate


def test_r1_saturates_in_population(shadowed):
    values = []
    for K in (200, 400, 800, 1600):
        cfg = SystemConfig(M=100, K=K, tau_u=100, tau_p=33, p_a=30 / K, seed=3,
                           mc=McConfig(n_beta_samples=1000, seed=3))
        values.append(r1_bar(cfg, shadowed, cfg.mc).value)
    inc = np.abs(np.diff(values))
    assert inc[0] > inc[1] > inc[2]
    assert inc[-1] < 0.02 * values[-1]


def test_per_device_rate_symmetry(power_controlled):
    cfg = _cfg()
    per = per_device_rate(cfg, power_controlled, 10.0, cfg.mc)
    total = r1_bar(cfg, power_controlled, cfg.mc).value
    assert per * cfg.K == pytest.approx(total, rel=1e-12)


def test_per_device_rate_shrinks_with_population(power_controlled):
    rates = []
    for K in (400, 800, 1600):
        cfg = SystemConfig(M=100, K=K, tau_u=100, tau_p=33, p_a=0.05, seed=4, mc=McConfig(seed=4))
        rates.append(per_device_rate(cfg, power_controlled, 10.0, cfg.mc))
    assert rates[0] > rates[1] > rates[2]


def test_per_device_zero_activity(power_controlled):
    cfg = _cfg(p_a=0.0)
    assert per_device_rate(cfg, power_controlled, 10.0, cfg.mc) == 0.0


def test_bound_result_invariants():
    with pytest.raises(ValueError):
        BoundResult(-1.0, "R1")
    with pytest.raises(ValueError):
        BoundResult(1.0, "R1", mc_samples=0, mc_std_err=0.5)


@given(seed=st.integers(0, 10**9))
@settings(max_examples=60, deadline=None)
def test_sinrs_are_nonnegative(seed):
    s, others = _random_scenario(np.random.default_rng(seed))
    assert sinr1(s, others) >= 0.0
    assert rate1(s, others, s.tau_p + 10) >= 0.0
