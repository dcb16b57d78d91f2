from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from slvfx.errors import EstimationError, ValidationError
from slvfx.leverage import (LeverageSurface, MarketTerms, ParticleCloud, estimate_leverage_det_rates,
                            estimate_leverage_full, sigma_max)


def grid_surface(rng, nt=4, nx=6):
    t = np.cumsum(rng.uniform(0.1, 1.0, nt))
    x = np.cumsum(rng.uniform(0.05, 0.3, nx)) + 0.5
    return LeverageSurface(t, x, rng.uniform(0.2, 2.0, (nt, nx)))


def test_constant_surface():
    s = LeverageSurface.constant(1.399)
    assert s.eval(3.0, 7.0) == 1.399
    assert sigma_max(s) == 1.399
    assert sigma_max(LeverageSurface.constant(0.0)) == 0.0


def test_bilinear_cell_center():
    s = LeverageSurface(np.array([0.0, 1.0]), np.array([1.0, 2.0]), np.array([[1.0, 2.0], [3.0, 4.0]]))
    assert s.eval(0.5, 1.5) == pytest.approx(2.5, abs=1e-15)


def test_clamping(rng):
    s = grid_surface(rng)
    for _ in range(200):
        t = rng.uniform(0, 2 * s.t_knots[-1])
        x = rng.uniform(0.01, 3 * s.x_max)
        clamped = s.eval(min(t, s.t_knots[-1]), min(max(x, s.x_min), s.x_max))
        assert s.eval(t, x) == clamped
    assert s.eval(1.0, 2 * s.x_max) == s.eval(1.0, s.x_max)


def test_sigma_max_is_grid_max(rng):
    s = grid_surface(rng)
    assert s.sigma_max == s.values.max()
    pts = [s.eval(t, x) for t in np.linspace(0, 5, 40) for x in np.linspace(0.1, 3, 40)]
    assert max(pts) <= s.sigma_max


def test_lipschitz_in_x(rng):
    s = grid_surface(rng)
    for _ in range(300):
        t = rng.uniform(0, s.t_knots[-1])
        x, y = rng.uniform(0.2, 3.0, 2)
        assert abs(s.eval(t, x) - s.eval(t, y)) <= s.lipschitz_B * abs(x - y) + 1e-12


@settings(max_examples=25)
@given(st.integers(0, 2 ** 32 - 1))
def test_text_roundtrip_bit_exact(seed):
    s = grid_surface(np.random.default_rng(seed))
    back = LeverageSurface.from_text(s.to_text())
    assert back.values.tobytes() == s.values.tobytes()
    assert back.x_knots.tobytes() == s.x_knots.tobytes()
    assert back.t_knots.tobytes() == s.t_knots.tobytes()


def test_constant_v_cloud(rng):
    cloud = ParticleCloud(rng.lognormal(0, 0.2, 5000), np.full(5000, 0.09))
    for K in (0.8, 1.0, 1.3):
        assert estimate_leverage_det_rates(cloud, 0.3, K) == pytest.approx(1.0, rel=1e-12)
    assert estimate_leverage_det_rates(cloud, 0.0, 1.0) == 0.0


def test_independent_v(rng):
    n = 100_000
    v = rng.gamma(4.0, 0.01, n)
    cloud = ParticleCloud(rng.lognormal(0, 0.2, n), v)
    est = estimate_leverage_det_rates(cloud, 0.2, 1.0)
    # bin of n/100 particles; delta method on sigma/sqrt(mean v)
    m = 1000
    se = 0.2 * 0.5 * v.mean() ** -1.5 * v.std() / math.sqrt(m)
    assert abs(est - 0.2 / math.sqrt(v.mean())) < 3 * se


def test_insufficient_particles(rng):
    cloud = ParticleCloud(rng.lognormal(0, 0.2, 30), np.full(30, 0.04))
    with pytest.raises(EstimationError, match="insufficient particles in bin"):
        estimate_leverage_det_rates(cloud, 0.2, 1.0)


def test_permutation_invariance(rng):
    n = 10_000
    s = rng.lognormal(0, 0.2, n)
    v = rng.gamma(4.0, 0.01, n) + 0.02 / s
    perm = rng.permutation(n)
    a = estimate_leverage_det_rates(ParticleCloud(s, v), 0.2, 1.05)
    b = estimate_leverage_det_rates(ParticleCloud(s[perm], v[perm]), 0.2, 1.05)
    assert a == b


def test_monotone_cloud_gives_increasing_leverage(rng):
    n = 50_000
    s = rng.lognormal(0, 0.2, n)
    v = 0.04 / s ** 2
    strikes = np.linspace(0.75, 1.35, 8)
    est = [estimate_leverage_det_rates(ParticleCloud(s, v), 0.2, K) for K in strikes]
    assert all(b > a for a, b in zip(est, est[1:]))


def _oracle_bin(spot, strike, size):
    order = np.argsort(spot, kind="stable")
    n_bins = len(spot) // size
    b = min(int(np.sum(spot[order] < strike)) // size, n_bins - 1)
    hi = len(spot) if b == n_bins - 1 else (b + 1) * size
    return order[b * size:hi]


def test_full_estimator_matches_brute_force(rng):
    n = 20_000
    s = rng.lognormal(0, 0.15, n)
    v = rng.gamma(4.0, 0.01, n)
    rd = rng.normal(0.02, 0.01, n)
    rf = rng.normal(0.01, 0.01, n)
    d = np.exp(-rd * rng.uniform(0.9, 1.1, n))
    K, lv, mk = 1.02, 0.18, MarketTerms(0.021, 0.012, 2.7)
    got = estimate_leverage_full(ParticleCloud(s, v, d, rd, rf), lv, K, mk)

    members = _oracle_bin(s, K, max(50, n // 100))
    ratio = d[members].mean() / (d[members] * v[members]).mean()
    t1 = np.mean(d * (rf - mk.fwd_f) * np.maximum(s - K, 0))
    t2 = K * np.mean(d * (rd - mk.fwd_d) * (s >= K))
    t3 = K * np.mean(d * (rf - mk.fwd_f) * (s >= K))
    expect = ratio * (lv ** 2 + 2 / (K * K * mk.d2c_dk2) * (t1 - t2 + t3))
    assert got == pytest.approx(expect, rel=1e-12)


def test_full_collapses_with_deterministic_rates(rng):
    n = 20_000
    s = rng.lognormal(0, 0.15, n)
    v = rng.gamma(4.0, 0.01, n)
    cloud = ParticleCloud(s, v, np.full(n, 0.98), np.full(n, 0.02), np.full(n, 0.01))
    mk = MarketTerms(0.02, 0.01, 2.0)
    full = estimate_leverage_full(cloud, 0.2, 1.0, mk)
    det = estimate_leverage_det_rates(cloud, 0.2, 1.0)
    assert full == pytest.approx(det ** 2, rel=1e-12)
    const_v = ParticleCloud(s, np.full(n, 0.05), cloud.discount_d, cloud.rate_d, cloud.rate_f)
    assert estimate_leverage_full(const_v, 0.2, 1.0, mk) == pytest.approx(0.04 / 0.05, rel=1e-12)


def test_full_rejects_bad_density(rng):
    n = 1000
    cloud = ParticleCloud(rng.lognormal(0, 0.1, n), np.full(n, 0.04), np.ones(n), np.zeros(n), np.zeros(n))
    with pytest.raises(ValidationError, match="non-positive density input"):
        estimate_leverage_full(cloud, 0.2, 1.0, MarketTerms(0, 0, 0.0))
