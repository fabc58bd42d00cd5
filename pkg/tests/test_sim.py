import math

import numpy as np
import pytest

from ajl.affine import cond_cf
from ajl.levy import LevyMeasureSpec, levy_exponent, stable_eta
from ajl.sim import (BatesParams, IidPairs, LevyParams, RandomDesign, build_observation_set, cir_step,
                     default_substeps, load_observation_set, record_rng, sample_jump_increment,
                     sample_stable_increment, save_observation_set, simulate_bates_pair, simulate_pair)

M = 100_000


def test_stable_zero_step():
    assert sample_stable_increment(0.5, 1.0, 0.0, np.random.default_rng(0)) == 0.0


def test_stable_empirical_cf():
    rng = np.random.default_rng(11)
    eta, dt = stable_eta(1.0, 0.5), 0.1
    y = sample_stable_increment(0.5, eta, dt, rng, M)
    for u in (1.0, 2.0, 5.0):
        emp = np.mean(np.exp(1j * u * y))
        assert abs(emp - math.exp(-eta * u ** 0.5 * dt)) < 3 / math.sqrt(M)


def test_stable_symmetry():
    y = sample_stable_increment(0.8, 1.0, 0.5, np.random.default_rng(3), M)
    assert abs(np.mean(np.sign(y))) < 3 / math.sqrt(M)


def test_compound_poisson_increment_cf():
    spec = LevyMeasureSpec("compound-poisson", rate=2.0, mean=0.5, std=0.8)
    dt = 0.7
    y = sample_jump_increment(spec, dt, np.random.default_rng(5), M)
    for u in (0.5, 2.0):
        ref = np.exp(dt * complex(levy_exponent(spec, u)))
        assert abs(np.mean(np.exp(1j * u * y)) - ref) < 3 / math.sqrt(M)


def test_tabulated_increment_cf():
    xg = np.linspace(-2, 2, 81)
    spec = LevyMeasureSpec("tabulated", x_grid=tuple(xg), values=tuple(np.exp(-xg * xg)))
    y = sample_jump_increment(spec, 0.5, np.random.default_rng(8), M)
    for u in (1.0, 3.0):
        ref = np.exp(0.5 * complex(levy_exponent(spec, u)))
        assert abs(np.mean(np.exp(1j * u * y)) - ref) < 3 / math.sqrt(M)


def test_cir_noiseless_limit():
    v = cir_step(2.0, 0.3, 1.5, 1.0, 0.0, None)
    assert v == pytest.approx(1.0 + (2.0 - 1.0) * math.exp(-0.45))


def test_cir_first_moment_and_nonnegativity():
    rng = np.random.default_rng(2)
    v = cir_step(np.full(M, 0.5), 0.2, 2.0, 1.0, 0.8, rng)
    assert np.all(v >= 0)
    m = 1.0 + (0.5 - 1.0) * math.exp(-0.4)
    assert abs(v.mean() - m) < 3 * v.std() / math.sqrt(M)


def test_cir_stationary_mean():
    v = cir_step(np.full(M, 1.0), 1.0, 2.0, 1.0, 0.3, np.random.default_rng(4))
    assert abs(v.mean() - 1.0) < 3 * v.std() / math.sqrt(M)


def test_bates_reduces_to_brownian_with_drift():
    p = BatesParams(lam=2.0, theta=1.0, zeta=0.0, v0=1.0)
    D = 0.1
    _, x = simulate_bates_pair(p, D, 20, np.random.default_rng(6), M)
    se_m = math.sqrt(D / M)
    assert abs(x.mean() + D / 2) < 3 * se_m
    se_v = D * math.sqrt(2.0 / M)
    assert abs(x.var() - D) < 3 * se_v


def test_bates_empirical_cf_matches_riccati():
    spec = LevyMeasureSpec("symmetric-stable", C=0.1, alpha=0.5)
    p = BatesParams(lam=2.0, theta=1.0, zeta=0.3, jumps=spec)
    D = 0.1
    _, x = simulate_bates_pair(p, D, default_substeps(D), np.random.default_rng(9), M)
    ch = p.characteristics()
    for u in (1.0, 2.0, 5.0, 10.0):
        e = np.exp(1j * u * x)
        ref = complex(cond_cf(np.array([0.0, u]), D, p.state, ch))
        se = math.sqrt(np.var(e.real) + np.var(e.imag)) / math.sqrt(M)
        assert abs(e.mean() - ref) < 3 * se + 1e-3


def test_bates_variance_never_negative():
    p = BatesParams(lam=0.5, theta=0.05, zeta=1.0, v0=0.01)
    s, e = simulate_bates_pair(p, 0.5, 100, np.random.default_rng(1), 2000, full_state=True)
    assert np.all(e[:, 0] >= 0)


def test_zero_lag_pair():
    p = BatesParams(2.0, 1.0, 0.3, x0=0.25)
    a, b = simulate_pair(p, 0.0, np.random.default_rng(0))
    assert np.array_equal(a, b)


def test_single_record():
    for design in (IidPairs(0.1), RandomDesign(1.0)):
        obs = build_observation_set(LevyParams(sigma=1.0), design, 1, seed=3)
        assert obs.N == 1 and obs.x_end.shape == (1, 1)


def test_random_design_lag_mean():
    N = 4000
    obs = build_observation_set(LevyParams(sigma=1.0), RandomDesign(1.0), N, seed=7)
    assert abs(obs.delta.mean() - 0.5) < 3 * math.sqrt(1 / 12 / N)
    assert obs.delta.min() >= 0 and obs.delta.max() <= 1


def test_paper_configuration_shape():
    p = BatesParams(2.0, 1.0, 0.3, jumps=LevyMeasureSpec("symmetric-stable", C=1.0, alpha=0.5))
    obs = build_observation_set(p, IidPairs(0.1), 1000, seed=0)
    assert obs.N == 1000 and np.all(obs.delta == 0.1) and np.all(obs.x_start == 0.0)
    assert obs.n_substeps == 20


def test_determinism_and_thread_invariance():
    p = BatesParams(2.0, 1.0, 0.3, jumps=LevyMeasureSpec("symmetric-stable", C=1.0, alpha=0.8))
    a = build_observation_set(p, IidPairs(0.1), 300, seed=42)
    b = build_observation_set(p, IidPairs(0.1), 300, seed=42, threads=4)
    c = build_observation_set(p, IidPairs(0.1), 300, seed=43)
    assert np.array_equal(a.x_end, b.x_end)
    assert not np.array_equal(a.x_end, c.x_end)


def test_record_streams_are_prefix_stable():
    # record n depends only on (seed, n): growing N keeps earlier records
    p = LevyParams(sigma=1.0)
    a = build_observation_set(p, RandomDesign(1.0), 50, seed=5)
    b = build_observation_set(p, RandomDesign(1.0), 80, seed=5)
    assert np.array_equal(a.delta, b.delta[:50]) and np.array_equal(a.x_end, b.x_end[:50])
    assert record_rng(5, 1, 0).random() != record_rng(5, 2, 0).random()


def test_iid_pairs_lag_one_correlation():
    N = 2000
    p = BatesParams(2.0, 1.0, 0.3, jumps=LevyMeasureSpec("compound-poisson", rate=1.0, mean=0.0, std=1.0))
    obs = build_observation_set(p, IidPairs(0.1), N, seed=12)
    y = (obs.x_end - obs.x_start)[:, 0]
    r = np.corrcoef(y[:-1], y[1:])[0, 1]
    assert abs(r) < 3 / math.sqrt(N)


def test_csv_roundtrip_is_exact(tmp_path):
    p = BatesParams(2.0, 1.0, 0.3, jumps=LevyMeasureSpec("symmetric-stable", C=1.0, alpha=0.5))
    obs = build_observation_set(p, RandomDesign(1.0), 40, seed=1, full_state=True)
    save_observation_set(obs, tmp_path / "obs.csv")
    back = load_observation_set(tmp_path / "obs.csv")
    assert np.array_equal(back.x_end, obs.x_end) and np.array_equal(back.delta, obs.delta)
    assert back.design == obs.design and back.model == obs.model and back.d == 2
    raw = (tmp_path / "obs.csv").read_bytes()
    assert b"\r" not in raw and raw.startswith(b"delta,x_start_1,x_start_2,x_end_1,x_end_2\n")


def test_load_rejects_row_count_mismatch(tmp_path):
    obs = build_observation_set(LevyParams(sigma=1.0), IidPairs(0.1), 5, seed=1)
    path, _ = save_observation_set(obs, tmp_path / "o.csv")
    lines = path.read_text().splitlines()
    path.write_text("\n".join(lines[:-1]) + "\n")
    with pytest.raises(ValueError):
        load_observation_set(path)
