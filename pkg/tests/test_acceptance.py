"""Acceptance criteria 1-10, one verdict line each (see the terminal summary)."""
import dataclasses
import math
import time

import numpy as np
import pytest

from ajl.affine import bates_characteristics, cf_time_derivative, cond_cf, levy_characteristics
from ajl.config import RunConfig
from ajl.levy import LevyMeasureSpec, rho_from_nu
from ajl.pipeline import replicate_paper
from ajl.sim import LevyParams, RandomDesign, build_observation_set
from ajl.smoother import (SmootherConfig, gamma_matrices, local_linear_fit, smoothed_cf_grid)
from ajl.spectral import (EstimatorConfig, invert_rho, psi_s_exact, run_spectral_pipeline, theoretical_U,
                          transform_psi)

import oracles

LAM, THETA, ZETA, V0 = 2.0, 1.0, 0.3, 1.0
CP = LevyMeasureSpec("compound-poisson", rate=1.0, mean=0.0, std=1.0)


# -- 1: Riccati vs closed-form Heston ----------------------------------------------------

def test_criterion_1_heston_oracle(verdict):
    ch = bates_characteristics(LAM, THETA, ZETA)
    u = np.linspace(-20, 20, 81)
    U = np.column_stack([np.zeros_like(u), u])
    t0 = time.perf_counter()
    worst = 0.0
    for s in (0.1, 1.0):
        got = cond_cf(U, s, [V0, 0.0], ch)
        ref = oracles.heston_cf(u, s, V0, LAM, THETA, ZETA)
        worst = max(worst, float(np.max(np.abs(got - ref) / np.abs(ref))))
    dt = time.perf_counter() - t0
    ok = worst <= 1e-6 and dt < 5.0
    verdict(1, ok, f"max rel err {worst:.2e} (<= 1e-6), runtime {dt:.2f}s (< 5s)")
    assert ok


# -- 2: no-jump null -----------------------------------------------------------------------

def test_criterion_2_brownian_null(verdict):
    sigma = 1.0
    est = run_spectral_pipeline(psi_s_exact(levy_characteristics(sigma=sigma), [0.0]), EstimatorConfig())
    sup = float(np.max(np.abs(est.rho_tilde)))
    dL = abs(est.L_hat - 2.0 / 3.0 * (sigma ** 2 / 2))
    ok = sup <= 1e-6 and dL <= 1e-8
    verdict(2, ok, f"sup|rho~| {sup:.1e} (<= 1e-6), |L - 1/3| {dL:.1e} (<= 1e-8), U={est.U_used:g}")
    assert ok


# -- 3: deconvolution oracle ---------------------------------------------------------------

def test_criterion_3_compound_poisson_deconvolution(verdict):
    U = 40.0
    ch = levy_characteristics(sigma=0.0, jumps=CP)
    fn = psi_s_exact(ch, [0.0])
    res = {}
    for mode in ("boundary", "kernel"):
        est = run_spectral_pipeline(fn, EstimatorConfig(U=U, limit_mode=mode))
        truth = rho_from_nu(CP, est.x).values
        res[mode] = float(np.max(np.abs(est.rho_tilde - truth)) / np.max(truth))
    # inversion alone with the exact constant (zero without a Gaussian part)
    x = EstimatorConfig().x_grid
    truth = rho_from_nu(CP, x).values
    r = invert_rho(lambda u: transform_psi(fn, u), 0.0, U, x)
    res["exact-L"] = float(np.max(np.abs(r - truth)) / np.max(truth))
    ok = res["boundary"] <= 0.01 and res["exact-L"] <= 0.01
    verdict(3, ok, f"sup err / peak: boundary-limit {res['boundary']:.1e}, exact-L {res['exact-L']:.1e} "
                   f"(<= 1e-2); kernel-limit {res['kernel']:.3f} (documented limit-kernel bias)")
    assert ok


# -- 4, 5, 10: seeded Bates study ----------------------------------------------------------

def _replicate_config(seeds=10):
    cfg = RunConfig()
    cfg.seed = 0
    cfg.replicate = dataclasses.replace(cfg.replicate, seeds=seeds, alphas=(0.5, 0.8), C=1.0, lam=LAM,
                                        theta=THETA, zeta=ZETA, N=1000, Delta=0.1)
    return cfg


@pytest.fixture(scope="module")
def paper_study(tmp_path_factory):
    out = tmp_path_factory.mktemp("replicate_t4")
    t0 = time.perf_counter()
    res = replicate_paper(_replicate_config(), out, threads=4)
    return res, out, time.perf_counter() - t0


def _case(res, alpha):
    return next(s for s in res["summary"] if s["alpha_true"] == alpha)


def test_criterion_4_index_replication(verdict, paper_study):
    res, _, dt = paper_study
    a5 = _case(res, 0.5)["median_alpha_tilde"]
    a8 = _case(res, 0.8)["median_alpha_tilde"]
    ok = (a5 is not None and 0.4 <= a5 <= 0.6) and (a8 is not None and 0.7 <= a8 <= 0.9) and dt < 600
    verdict(4, ok, f"median alpha~ {a5:.2f} (in [0.4, 0.6]) and {a8:.2f} (in [0.7, 0.9]) over 10 seeds; "
                   f"runtime {dt:.0f}s (< 600s)")
    assert ok


def test_criterion_5_density_replication(verdict, paper_study):
    res, _, _ = paper_study
    parts, ok = [], True
    for a in (0.5, 0.8):
        s = _case(res, a)
        l2, imp = s["median_l2_corrected"], s["median_improvement_near0"]
        ok &= l2 <= 0.35 and imp >= 0.30
        parts.append(f"alpha={a}: L2 {l2:.3f} (<= 0.35), near-0 gain {imp:.0%} (>= 30%)")
    verdict(5, ok, "; ".join(parts))
    assert ok


def test_criterion_10_determinism(verdict, paper_study, tmp_path):
    _, out4, _ = paper_study
    out1 = tmp_path / "replicate_t1"
    replicate_paper(_replicate_config(), out1, threads=1)
    names = sorted(p.name for p in out4.iterdir() if p.name != "timings.json")
    same = [p for p in names if (out4 / p).read_bytes() == (out1 / p).read_bytes()]
    files1 = sorted(p.name for p in out1.iterdir() if p.name != "timings.json")
    ok = names == files1 and len(same) == len(names) and "manifest.json" in names
    kinds = sorted({n.rsplit(".", 1)[1] for n in names})
    verdict(10, ok, f"{len(same)}/{len(names)} files byte-identical ({', '.join(kinds)}) "
                    "between 4-thread and 1-thread runs")
    assert ok


# -- 6: smoother rates as a trend ----------------------------------------------------------

def test_criterion_6_smoother_rates(verdict):
    s = 0.05
    u = np.linspace(-10, 10, 201)
    phi = np.exp(-u * u * s / 2)
    phi_s = -u * u / 2 * phi
    med = {}
    for N in (250, 4000):
        errs = []
        for seed in range(10):
            obs = build_observation_set(LevyParams(sigma=1.0), RandomDesign(1.0), N, seed)
            errs.append(smoothed_cf_grid(obs, u, SmootherConfig(s=s)).weighted_errors(phi, phi_s))
        med[N] = np.median(np.array(errs), axis=0)
    r0, r1 = med[250] / med[4000]
    ok = r0 >= 2.0 and r1 >= 1.5
    verdict(6, ok, f"median weighted sup-error ratio N=250/N=4000: phi {r0:.2f} (>= 2), "
                   f"phi_s {r1:.2f} (>= 1.5)")
    assert ok


# -- 7: WLS equivalence, reproduction, truncation ------------------------------------------

def test_criterion_7_wls_properties(verdict):
    from ajl.smoother import epanechnikov
    from ajl.sim import ObservationSet
    obs = build_observation_set(LevyParams(sigma=1.0), RandomDesign(1.0), 300, seed=11)
    cfg = SmootherConfig(s=0.4, h=0.3)
    u = np.array([0.5, 2.0, -3.0, 7.0])
    phi, phis, st = local_linear_fit(obs, u, cfg)
    Y = np.exp(1j * np.outer(u, obs.x_end[:, 0]))
    b0, b1 = oracles.wls_bruteforce(obs.delta, Y, cfg.s, cfg.h, epanechnikov)
    wls = max(float(np.max(np.abs(phi - b0))), float(np.max(np.abs(phis - b1))))
    a, b = 0.7 - 0.2j, 1.1 + 0.5j
    y = a + b * obs.delta
    rep = max(abs(st.tau0 @ np.ones(obs.N) - 1.0), abs(st.tau1 @ np.ones(obs.N)),
              abs(st.tau0 @ y - (a + b * cfg.s)), abs(st.tau1 @ y - b))
    n = 40
    flat = ObservationSet(design=RandomDesign(1.0), x=np.zeros(1), delta=np.full(n, 0.3),
                          x_start=np.zeros((n, 1)), x_end=np.linspace(-1, 1, n).reshape(-1, 1), seed=0)
    flags = {gamma_matrices(flat, SmootherConfig(s=0.3, h=0.2)).truncated for _ in range(3)}
    ok = wls <= 1e-12 and rep <= 1e-10 and flags == {True}
    verdict(7, ok, f"WLS diff {wls:.1e} (<= 1e-12), reproduction err {rep:.1e}, "
                   f"degenerate design truncated: {sorted(flags)}")
    assert ok


# -- 8: growth bound -----------------------------------------------------------------------

def test_criterion_8_growth_bound(verdict):
    ch = bates_characteristics(LAM, THETA, ZETA, LevyMeasureSpec("symmetric-stable", C=1.0, alpha=0.5))
    u = np.geomspace(10, 100, 13)
    U = np.column_stack([np.zeros_like(u), u])
    x = np.array([V0, 0.0])
    m = np.max([np.abs(cf_time_derivative(U, s, x, ch)) for s in np.linspace(0.0, 1.0, 21)], axis=0)
    r = m / u ** 2
    slope = float(np.polyfit(np.log(u), np.log(r), 1)[0])
    ok = bool(np.all(np.isfinite(r))) and slope <= 0 and r.max() <= r[0] * (1 + 1e-9)
    verdict(8, ok, f"max_s|d_s phi|/u^2 from {r[0]:.3f} (u=10) to {r[-1]:.3f} (u=100), "
                   f"log-log slope {slope:.3f} (<= 0)")
    assert ok


# -- 9: rate and lower bound are out of desk scale -----------------------------------------

def test_criterion_9_rate_not_reproduced(verdict):
    # The logarithmic rate needs astronomically large N; checked instead: the theoretical
    # cutoff it rests on is undefined at desk sizes and approaches sqrt(r log N / Lambda).
    small = theoretical_U(1000, 1.0)
    Ns = [10 ** k for k in (50, 500, 5000, 50000)]  # exact integers, far past float range
    logs = np.array([math.log(N) for N in Ns])
    scaled = np.array([theoretical_U(N, 1.0) for N in Ns]) / np.sqrt(logs)
    ok = small is None and bool(np.all(np.diff(scaled) > 0)) and scaled[-1] < math.sqrt(0.4)
    verdict(9, ok, "not reproducible at desk scale (documented); theoretical cutoff undefined at N=1000, "
                   f"U/sqrt(log N) rises to {scaled[-1]:.5f} (< sqrt(0.4) = 0.63246) by N = 1e50000; "
                   "substitutes: criteria 3, 5, 6")
    assert ok
