from __future__ import annotations

import math
from fractions import Fraction

import numpy as np
import pytest

from asri.drivers import (
    DriverConfig,
    FinePath,
    block_rng,
    chen_aggregate,
    dump_samples,
    exact_integral,
    fourier_area,
    fourier_path,
    fourier_time_integral,
    hermite_power,
    levy_area_fourier,
    load_samples,
    oracle_fine_grid,
    refine_path,
    sample_step,
    zero_sample,
)
from asri.errors import DomainError, MissingIntegralError, UnsupportedWordError
from asri.words import TIME, JumpSpec, jump, wiener

W1, W2 = wiener(1), wiener(2)
J1 = jump(1)


def concat_paths(p1: FinePath, p2: FinePath) -> FinePath:
    """Path on [0, h1 + h2] from two adjacent step paths."""
    h1 = p1.h
    times = np.concatenate([p1.times, p2.times[1:] + h1])
    values = np.vstack([p1.values, p2.values[1:] + p1.values[-1]])
    events = {}
    for k in set(p1.events) | set(p2.events):
        t1, s1 = p1.events.get(k, (np.zeros(0), np.zeros(0)))
        t2, s2 = p2.events.get(k, (np.zeros(0), np.zeros(0)))
        events[k] = (np.concatenate([t1, t2 + h1]), np.concatenate([s1, s2]))
    return FinePath(times, values, events)


# closed forms ------------------------------------------------------------------------------
def test_compensated_poisson_closed_form():
    cfg = DriverConfig(wiener_count=0, jumps=(JumpSpec(1, Fraction(2)),), step=1.0, seed=1)
    s = sample_step(cfg, paths=4000)
    N = s.events[1].counts(4000)
    comp = N - 2.0
    np.testing.assert_allclose(s.integrals[(J1,)], comp, atol=1e-12)
    np.testing.assert_allclose(s.integrals[(J1, J1)], (comp**2 - N) / 2, atol=1e-12)
    three = N == 3
    assert three.any()
    np.testing.assert_allclose(s.integrals[(J1,)][three], 1.0)
    np.testing.assert_allclose(s.integrals[(J1, J1)][three], -1.0)


def test_wiener_square_closed_form():
    cfg = DriverConfig(wiener_count=1, step=0.2, seed=2)
    s = sample_step(cfg, paths=500)
    dW = s.dW[:, 0]
    np.testing.assert_allclose(s.integrals[(W1, W1)], (dW**2 - 0.2) / 2, rtol=1e-14, atol=1e-15)


@pytest.mark.parametrize("force_grid", [False, True])
def test_time_wiener_pair_sums_to_product(force_grid):
    cfg = DriverConfig(wiener_count=2, jumps=(JumpSpec(1, Fraction(3)),), step=0.1, seed=3, fourier_terms=4)
    s = sample_step(cfg, paths=300, force_grid=force_grid)
    for i, a in enumerate((W1, W2)):
        np.testing.assert_allclose(s.integrals[(TIME, a)] + s.integrals[(a, TIME)], 0.1 * s.dW[:, i], atol=1e-14)
    np.testing.assert_allclose(s.integrals[(W1, W2)] + s.integrals[(W2, W1)], s.dW[:, 0] * s.dW[:, 1], atol=1e-14)


def test_hermite_power():
    dW, h = np.array([0.3, -1.2]), 0.5
    np.testing.assert_allclose(hermite_power(dW, h, 2), (dW**2 - h) / 2)
    np.testing.assert_allclose(hermite_power(dW, h, 3), (dW**3 - 3 * h * dW) / 6)
    np.testing.assert_allclose(hermite_power(dW, h, 0), 1.0)


# Levy areas ---------------------------------------------------------------------------------
def test_fourier_area_antisymmetric():
    rng = np.random.default_rng(0)
    dW = rng.standard_normal(2)
    X, Y = rng.standard_normal((2, 2, 6))
    a = fourier_area(dW[0], dW[1], X[0], Y[0], X[1], Y[1], 0.7)
    b = fourier_area(dW[1], dW[0], X[1], Y[1], X[0], Y[0], 0.7)
    assert a == pytest.approx(-b, abs=1e-15)


def test_fourier_area_equals_area_of_fourier_path():
    rng = np.random.default_rng(1)
    h, p, n = 0.7, 6, 100_000
    dW = rng.standard_normal(2) * math.sqrt(h)
    X, Y = rng.standard_normal((2, 2, p))
    W1p = fourier_path(dW[0], X[0], Y[0], h, n)
    W2p = fourier_path(dW[1], X[1], Y[1], h, n)
    assert W1p[-1] == pytest.approx(dW[0]) and W2p[0] == pytest.approx(0.0, abs=1e-12)
    stratonovich = np.sum(0.5 * (W1p[1:] + W1p[:-1]) * np.diff(W2p))
    formula = 0.5 * dW[0] * dW[1] + fourier_area(dW[0], dW[1], X[0], Y[0], X[1], Y[1], h)
    assert formula == pytest.approx(stratonovich, rel=1e-6)
    tint = fourier_time_integral(dW, X, h, np.zeros(2))
    np.testing.assert_allclose(tint, [np.trapezoid(W, dx=h / n) for W in (W1p, W2p)], rtol=1e-6)


def test_levy_area_moments():
    h, n = 0.5, 100_000
    rng = np.random.default_rng(5)
    dW1, dW2 = rng.standard_normal((2, n)) * math.sqrt(h)
    i12, i21 = levy_area_fourier(dW1, dW2, 50, h, rng)
    np.testing.assert_allclose(i12 + i21, dW1 * dW2, atol=1e-14)
    se_mean = i12.std() / math.sqrt(n)
    assert abs(i12.mean()) < 3 * se_mean
    sq = i12**2
    assert abs(sq.mean() - h * h / 2) < 3 * sq.std() / math.sqrt(n)


def test_zero_fourier_terms_rejected():
    with pytest.raises(DomainError):
        levy_area_fourier(0.1, 0.2, 0, 1.0, np.random.default_rng(0))
    with pytest.raises(DomainError):
        DriverConfig(fourier_terms=0)


@pytest.mark.parametrize("force_grid", [False, True])
def test_time_integral_law(force_grid):
    # int_0^h W ds has mean 0 and variance h^3 / 3 on both branches
    cfg = DriverConfig(wiener_count=2, step=0.4, seed=9, fourier_terms=3, grid_points=64)
    n = 20_000
    s = sample_step(cfg, paths=n, force_grid=force_grid)
    v = s.integrals[(W1, TIME)]
    target = 0.4**3 / 3
    assert abs(v.mean()) < 4 * v.std() / math.sqrt(n)
    assert abs(np.mean(v**2) - target) < 4 * np.std(v**2) / math.sqrt(n) + 0.02 * target * force_grid


def test_jump_integral_moments():
    lam, h, n = 4.0, 0.25, 40_000
    cfg = DriverConfig(wiener_count=1, jumps=(JumpSpec(1, Fraction(4)),), step=h, seed=4, fourier_terms=2)
    s = sample_step(cfg, paths=n)
    for w, target in (((J1,), lam * h), ((W1, J1), lam * h * h / 2), ((J1, W1), lam * h * h / 2)):
        sq = s.integrals[w] ** 2
        assert abs(sq.mean() - target) < 4 * sq.std() / math.sqrt(n)


# oracle ---------------------------------------------------------------------------------------
def test_oracle_time_words():
    rng = np.random.default_rng(0)
    times = np.sort(np.concatenate([[0.0, 0.3], rng.uniform(0, 0.3, 17)]))
    path = FinePath(times, np.zeros((len(times), 1)))
    A = DriverConfig(wiener_count=1).alphabet(3)
    # trapezoid is exact for the linear integrand of the pair
    assert oracle_fine_grid((TIME, TIME), path, A) == pytest.approx(0.045, rel=1e-13)
    fine = FinePath(np.linspace(0, 0.3, 2001), np.zeros((2001, 1)))
    assert oracle_fine_grid((TIME, TIME, TIME), fine, A) == pytest.approx(0.3**3 / 6, rel=1e-5)


def test_oracle_pure_jump_words_exact_on_any_grid():
    cfg = DriverConfig(wiener_count=1, jumps=(JumpSpec(1, Fraction(2)),), step=1.0, seed=6)
    s = sample_step(cfg, paths=20, keep_paths=True, grid_points=7)
    A = cfg.alphabet(3)
    for k, path in enumerate(s.paths):
        for w in ((J1,), (J1, J1), (TIME, J1), (J1, TIME)):
            assert oracle_fine_grid(w, path, A) == pytest.approx(float(s.integrals[w][k]), abs=1e-9)
        N = len(path.events[1][0])
        exact3 = exact_integral((J1, J1, J1), s, k, A)
        assert exact3 == pytest.approx(charlier(3, N, 2.0) / 6, abs=1e-9)
        fine = refine_path(path, 50, np.random.default_rng(k))
        assert oracle_fine_grid((J1, J1, J1), fine, A) == pytest.approx(exact3, abs=5e-3)


def charlier(n: int, x: int, a: float) -> float:
    """Charlier polynomial: n-fold iterated integral of a compensated Poisson process times n!."""
    return sum(math.comb(n, k) * (-a) ** (n - k) * math.perm(x, k) for k in range(n + 1))


def test_oracle_product_identities_on_fixed_paths():
    cfg = DriverConfig(wiener_count=1, jumps=(JumpSpec(1, Fraction(2)),), step=0.1, seed=8)
    K = 20_000
    s = sample_step(cfg, paths=5, keep_paths=True, grid_points=K)
    A = cfg.alphabet(3)
    for path in s.paths:
        for u in A.words(1, 1):
            for v in A.words(2, 1):
                if len(u) + len(v) > 3:
                    continue
                lhs = oracle_fine_grid(u, path, A) * oracle_fine_grid(v, path, A)
                terms = [float(c) * oracle_fine_grid(x, path, A) for x, c in A.quasi_shuffle(u, v).items()]
                scale = max(sum(abs(t) for t in terms), abs(lhs), 0.1**1.5)
                assert abs(lhs - sum(terms)) < 50 * scale / math.sqrt(K)


def test_sampler_agrees_with_oracle_on_grid_paths():
    cfg = DriverConfig(wiener_count=2, jumps=(JumpSpec(1, Fraction(3), ((1, 1), (-1, 1))),), step=0.2, seed=10)
    K = 20_000
    s = sample_step(cfg, paths=4, keep_paths=True, grid_points=K)
    A = cfg.alphabet(2)
    for k, path in enumerate(s.paths):
        for w in A.words(2, 1):
            got = float(s.integrals[w][k])
            ref = oracle_fine_grid(w, path, A)
            assert abs(got - ref) < 30 * 0.2 / math.sqrt(K) * max(1.0, abs(ref)), w


# Chen aggregation ---------------------------------------------------------------------------------
def test_chen_with_zero_step_is_identity():
    cfg = DriverConfig(wiener_count=2, jumps=(JumpSpec(1, Fraction(2)),), step=0.1, seed=11)
    s = sample_step(cfg, paths=50)
    agg = chen_aggregate(s, zero_sample(s))
    for w, v in s.integrals.items():
        np.testing.assert_allclose(agg.integrals[w], v, atol=1e-15)
    agg2 = chen_aggregate(zero_sample(s, t0=s.t0), s)
    for w, v in s.integrals.items():
        np.testing.assert_allclose(agg2.integrals[w], v, atol=1e-15)


def test_chen_time_time():
    cfg = DriverConfig(wiener_count=1, step=0.3, seed=0)
    s1 = sample_step(cfg, paths=3, step_index=0)
    s2 = sample_step(cfg, paths=3, step_index=1)
    agg = chen_aggregate(s1, s2)
    np.testing.assert_allclose(agg.integrals[(TIME, TIME)], 0.6**2 / 2)
    assert agg.h == pytest.approx(0.6)


def test_chen_matches_oracle_on_joined_paths():
    cfg = DriverConfig(wiener_count=2, jumps=(JumpSpec(1, Fraction(4)),), step=0.1, seed=12)
    K = 20_000
    s1 = sample_step(cfg, paths=3, step_index=0, keep_paths=True, grid_points=K)
    s2 = sample_step(cfg, paths=3, step_index=1, keep_paths=True, grid_points=K)
    agg = chen_aggregate(s1, s2)
    A = cfg.alphabet(2)
    for k in range(3):
        path = concat_paths(s1.paths[k], s2.paths[k])
        for w in A.words(2, 1):
            ref = oracle_fine_grid(w, path, A)
            assert abs(agg.integrals[w][k] - ref) < 30 * 0.2 / math.sqrt(K) * max(1.0, abs(ref)), w


def test_chen_merges_events():
    cfg = DriverConfig(wiener_count=1, jumps=(JumpSpec(1, Fraction(20)),), step=0.1, seed=13)
    s1 = sample_step(cfg, paths=10, step_index=0)
    s2 = sample_step(cfg, paths=10, step_index=1)
    agg = chen_aggregate(s1, s2)
    assert len(agg.events[1]) == len(s1.events[1]) + len(s2.events[1])
    assert np.all((agg.events[1].time >= 0) & (agg.events[1].time <= 0.2))
    assert np.sum(agg.events[1].time > 0.1) == len(s2.events[1])
    with pytest.raises(DomainError):
        chen_aggregate(s1, sample_step(cfg, paths=5))


# streams and reproducibility ------------------------------------------------------------------------
def test_block_rng_is_counter_based():
    a = block_rng(1, 2, 3).standard_normal(4)
    b = block_rng(1, 2, 3).standard_normal(4)
    c = block_rng(1, 2, 4).standard_normal(4)
    np.testing.assert_array_equal(a, b)
    assert not np.allclose(a, c)


def test_first_block_reproduces_chunks():
    cfg = DriverConfig(wiener_count=2, jumps=(JumpSpec(1, Fraction(5)),), step=0.1, seed=14, block_size=16)
    full = sample_step(cfg, paths=48, step_index=3)
    chunk = sample_step(cfg, paths=16, step_index=3, first_block=2)
    for w, v in full.integrals.items():
        np.testing.assert_array_equal(chunk.integrals[w], v[32:48])


def test_sampling_is_deterministic():
    cfg = DriverConfig(wiener_count=2, jumps=(JumpSpec(1, Fraction(5)),), step=0.1, seed=15)
    a = sample_step(cfg, paths=40)
    b = sample_step(cfg, paths=40)
    for w in a.integrals:
        np.testing.assert_array_equal(a.integrals[w], b.integrals[w])


def test_required_words_are_validated():
    cfg = DriverConfig(wiener_count=1)
    with pytest.raises(UnsupportedWordError):
        sample_step(cfg, [(W1, W1, W1)])
    s = sample_step(cfg, [(W1, TIME)], paths=2)
    with pytest.raises(MissingIntegralError):
        s.integral((TIME, W1))


def test_dump_round_trip(tmp_path):
    cfg = DriverConfig(wiener_count=2, jumps=(JumpSpec(1, Fraction(5)),), step=0.1, seed=16)
    samples = [sample_step(cfg, paths=7, step_index=k) for k in range(3)]
    target = tmp_path / "drivers.bin"
    dump_samples(target, samples, cfg)
    header, loaded = load_samples(target)
    assert header["config_sha256"] == cfg.digest()
    for s, t in zip(samples, loaded):
        np.testing.assert_array_equal(s.dW, t.dW)
        for w in s.integrals:
            np.testing.assert_array_equal(s.integrals[w], t.integrals[w])


def test_refine_path_keeps_nodes():
    path = FinePath(np.array([0.0, 0.5, 1.0]), np.array([[0.0], [0.3], [-0.2]]))
    fine = refine_path(path, 4, np.random.default_rng(0))
    assert len(fine.times) == 9
    np.testing.assert_allclose(fine.values[::4, 0], path.values[:, 0])


def test_chen_is_associative():
    cfg = DriverConfig(wiener_count=2, jumps=(JumpSpec(1, Fraction(4)),), step=0.1, seed=17)
    s1, s2, s3 = (sample_step(cfg, paths=30, step_index=k) for k in range(3))
    left = chen_aggregate(chen_aggregate(s1, s2), s3)
    right = chen_aggregate(s1, chen_aggregate(s2, s3))
    assert set(left.integrals) == set(right.integrals)
    for w in left.integrals:
        np.testing.assert_allclose(left.integrals[w], right.integrals[w], rtol=1e-12, atol=1e-14)
