import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ajl.affine import cf_time_derivative
from ajl.levy import LevyMeasureSpec
from ajl.sim import BatesParams, IidPairs, LevyParams, ObservationSet, RandomDesign, build_observation_set
from ajl.smoother import (NoDataError, SmootherConfig, bandwidth_rule, epanechnikov, fd_cf_derivative,
                          gamma_matrices, kernel_moments, load_smoothed_table, local_linear_fit,
                          save_smoothed_cf, smoothed_cf_grid)

import oracles


def _obs(delta, x_end, design=None):
    delta = np.asarray(delta, dtype=float)
    x_end = np.asarray(x_end, dtype=float).reshape(-1, 1)
    return ObservationSet(design=design or RandomDesign(1.0), x=np.zeros(1), delta=delta,
                          x_start=np.zeros_like(x_end), x_end=x_end, seed=0)


def test_bandwidth_examples():
    assert bandwidth_rule(math.e) == pytest.approx(math.exp(-0.2), abs=5e-6)
    assert bandwidth_rule(1000, 0.2) == pytest.approx(0.3994, abs=5e-5)
    for N in [2, 3, 10, 100, 1000, 10 ** 5]:
        assert bandwidth_rule(16 * N) < bandwidth_rule(N)
    with pytest.raises(ValueError):
        bandwidth_rule(1)


def test_local_linear_matches_bruteforce_wls():
    obs = build_observation_set(LevyParams(sigma=1.0), RandomDesign(1.0), 200, seed=4)
    cfg = SmootherConfig(s=0.3, h=0.25)
    u = np.array([0.5, 2.0, -3.0, 7.0])
    phi, phis, st_ = local_linear_fit(obs, u, cfg)
    Y = np.exp(1j * np.outer(u, obs.x_end[:, 0]))
    b0, b1 = oracles.wls_bruteforce(obs.delta, Y, 0.3, 0.25, epanechnikov)
    assert np.max(np.abs(phi - b0)) < 1e-12
    assert np.max(np.abs(phis - b1)) < 1e-12


def test_weights_reproduce_constant_and_linear():
    rng = np.random.default_rng(1)
    delta = rng.uniform(0, 1, 300)
    obs = _obs(delta, np.zeros(300))
    st_ = gamma_matrices(obs, SmootherConfig(s=0.4, h=0.3, gamma0=1e-6))
    c = 0.3 - 0.7j
    assert st_.tau0 @ np.full(300, c) == pytest.approx(c, abs=1e-13)
    assert st_.tau1 @ np.full(300, c) == pytest.approx(0, abs=1e-12)
    a, b = 1.5 + 0.2j, -0.8 + 2.0j
    y = a + b * delta
    assert st_.tau0 @ y == pytest.approx(a + b * 0.4, abs=1e-12)
    assert st_.tau1 @ y == pytest.approx(b, abs=1e-11)


def test_constant_response_through_fit():
    obs = _obs(np.random.default_rng(2).uniform(0, 1, 100), np.zeros(100))
    phi, phis, _ = local_linear_fit(obs, 3.0, SmootherConfig(s=0.5, h=0.4))
    assert phi == pytest.approx(1.0, abs=1e-13) and abs(phis) < 1e-12


def test_u_zero_normalization_and_hermitian():
    obs = build_observation_set(LevyParams(sigma=1.0), RandomDesign(1.0), 500, seed=5)
    u = np.array([-4.0, -1.0, 0.0, 1.0, 4.0])
    cf = smoothed_cf_grid(obs, u, SmootherConfig(s=0.2))
    assert cf.phi_hat[2] == pytest.approx(1.0, abs=1e-13) and abs(cf.phi_s_hat[2]) < 1e-12
    assert np.allclose(cf.phi_hat[::-1], np.conj(cf.phi_hat), atol=1e-14)
    assert np.allclose(cf.phi_s_hat[::-1], np.conj(cf.phi_s_hat), atol=1e-13)


def test_kernel_moments_match_closed_form():
    d = RandomDesign(1.0)
    for s, h in [(0.5, 0.2), (0.05, 0.3), (0.9, 0.4)]:
        assert np.allclose(kernel_moments(d, s, h), oracles.epanechnikov_moments_uniform(s, h, 1.0), atol=1e-12)


def test_gamma_bar_interior_limit():
    obs = build_observation_set(LevyParams(sigma=1.0), RandomDesign(1.0), 2000, seed=1)
    st_ = gamma_matrices(obs, SmootherConfig(s=0.5, h=0.01))
    assert np.allclose(st_.GammaBar, [[1.0, 0.0], [0.0, 0.2]], atol=1e-12)
    assert float(np.linalg.eigvalsh(st_.GammaBar)[0]) == pytest.approx(0.2)


def test_symmetric_design_offdiagonal_small():
    N = 20000
    obs = build_observation_set(LevyParams(sigma=1.0), RandomDesign(1.0), N, seed=2)
    st_ = gamma_matrices(obs, SmootherConfig(s=0.5, h=0.2))
    assert abs(st_.Gamma[0, 1]) < 4 * math.sqrt(st_.Gamma[1, 1] / (N * 0.2))


def test_degenerate_design_truncates():
    obs = _obs(np.full(50, 0.3), np.linspace(-1, 1, 50))
    st_ = gamma_matrices(obs, SmootherConfig(s=0.3, h=0.2))
    assert st_.truncated
    cf = smoothed_cf_grid(obs, np.array([0.0, 1.0, 2.0]), SmootherConfig(s=0.3, h=0.2))
    assert np.all(cf.phi_hat == 0) and np.all(cf.phi_s_hat == 0)
    # deterministic: same answer every time
    assert gamma_matrices(obs, SmootherConfig(s=0.3, h=0.2)).lambda_min == st_.lambda_min


def test_truncation_monotone_in_gamma0():
    obs = build_observation_set(LevyParams(sigma=1.0), RandomDesign(1.0), 60, seed=9)
    flags = [gamma_matrices(obs, SmootherConfig(s=0.02, h=0.15, gamma0=g)).truncated
             for g in np.geomspace(1e-4, 10, 30)]
    first = flags.index(True)
    assert all(flags[first:])


def test_empty_window_is_no_data():
    obs = _obs([0.8, 0.9, 0.95], [0.0, 0.1, 0.2])
    with pytest.raises(NoDataError):
        local_linear_fit(obs, 1.0, SmootherConfig(s=0.1, h=0.2, gamma0=1e-9))


def test_missing_gamma0_without_density():
    obs = build_observation_set(LevyParams(sigma=1.0), IidPairs(0.1), 10, seed=1)
    with pytest.raises(ValueError):
        gamma_matrices(obs, SmootherConfig(s=0.1, h=0.2))


def test_fd_derivative_trivia():
    obs = build_observation_set(LevyParams(sigma=0.0), IidPairs(0.1), 20, seed=1)
    assert fd_cf_derivative(obs, 2.0) == 0
    obs = build_observation_set(LevyParams(sigma=1.0), IidPairs(0.1), 20, seed=1)
    assert fd_cf_derivative(obs, 0.0) == 0
    with pytest.raises(ValueError):
        fd_cf_derivative(_obs([0.1, 0.2], [0.0, 0.0]), 1.0)


def test_fd_derivative_matches_riccati_derivative():
    spec = LevyMeasureSpec("compound-poisson", rate=1.0, mean=0.0, std=0.5)
    p = BatesParams(2.0, 1.0, 0.3, jumps=spec)
    D, N = 0.01, 100_000
    obs = build_observation_set(p, IidPairs(D), N, seed=3, n_substeps=2)
    ch = p.characteristics()
    for u in (1.0, 2.0, 5.0):
        U = np.array([0.0, u])
        ref = complex(cf_time_derivative(U, 0.0, p.state, ch))
        d2 = max(abs(complex(cf_time_derivative(U, t, p.state, ch, order=2))) for t in (0.0, D))
        e = (np.exp(1j * u * obs.x_end[:, 0]) - 1.0) / D
        se = math.sqrt(np.var(e.real) + np.var(e.imag)) / math.sqrt(N)
        assert abs(fd_cf_derivative(obs, u) - ref) < 3 * se + D * d2


def test_weighted_errors_and_persistence(tmp_path):
    obs = build_observation_set(LevyParams(sigma=1.0), RandomDesign(1.0), 400, seed=6)
    u = np.linspace(-5, 5, 21)
    cf = smoothed_cf_grid(obs, u, SmootherConfig(s=0.1))
    ph = np.exp(-u * u * 0.05)
    e0, e1 = cf.weighted_errors(ph, -u * u / 2 * ph)
    assert 0 < e0 < 1 and e1 > 0
    save_smoothed_cf(cf, tmp_path / "sm.csv")
    uu, p0, p1, meta = load_smoothed_table(tmp_path / "sm.csv")
    assert np.array_equal(p0, cf.phi_hat) and np.array_equal(p1, cf.phi_s_hat)
    assert meta["h"] == cf.state.h and meta["truncated"] is False


@settings(max_examples=30, deadline=None)
@given(st.integers(min_value=5, max_value=80), st.integers(min_value=0, max_value=10 ** 6),
       st.floats(min_value=0.1, max_value=0.9))
def test_weight_sum_identities(n, seed, s):
    delta = np.random.default_rng(seed).uniform(0, 1, n)
    obs = _obs(delta, np.zeros(n))
    st_ = gamma_matrices(obs, SmootherConfig(s=s, h=0.5, gamma0=1e-12))
    if st_.S[0] > 0 and not st_.truncated:
        assert np.sum(st_.tau0) == pytest.approx(1.0, abs=1e-10)
        assert abs(np.sum(st_.tau1)) < 1e-8 / 0.5
