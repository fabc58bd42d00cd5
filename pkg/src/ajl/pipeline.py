"""Seeded end-to-end runs and their on-disk artifacts.

Every run writes delimited data files, optional SVG figures, a
``manifest.json`` (config echo, hashes, summary numbers; byte-stable for a
given config and seed) and a ``timings.json`` with wall-clock per stage.
"""
from __future__ import annotations

import hashlib
import json
import math
import os
import time
from concurrent.futures import ThreadPoolExecutor
from contextlib import contextmanager
from pathlib import Path

import numpy as np

from . import __version__
from .affine import SubmatrixBounds, cond_cf, submatrix_bounds, weight_profiles
from .config import ConfigError, RunConfig
from .levy import LevyMeasureSpec, levy_exponent, rho_from_nu
from .sim import (BatesParams, IidPairs, _atomic_write, build_observation_set, jumps_from_dict,
                  load_observation_set, save_observation_set)
from .smoother import save_smoothed_cf, smoothed_cf_grid
from .spectral import (EstimatorConfig, observed_component, psi_s_exact, psi_s_from_pairs,
                       psi_s_from_smoothed, run_spectral_pipeline)

OBS_NAME = "observations.csv"


# -- small I/O helpers -------------------------------------------------------------

def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, str):
        return v
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return repr(float(v))


def write_csv(path, header, columns) -> Path:
    """Comma-separated, header line, LF endings, shortest round-trip floats."""
    cols = [list(c) for c in columns]
    n = len(cols[0]) if cols else 0
    if any(len(c) != n for c in cols):
        raise ValueError("columns differ in length")
    lines = [",".join(header)]
    lines += [",".join(_fmt(c[i]) for c in cols) for i in range(n)]
    path = Path(path)
    _atomic_write(path, "\n".join(lines) + "\n")
    return path


def read_csv(path):
    """``(header, rows)`` with empty cells as ``None`` and numbers as float."""
    text = Path(path).read_text().splitlines()
    header = text[0].split(",")
    rows = []
    for line in text[1:]:
        if not line:
            continue
        vals = []
        for cell in line.split(","):
            try:
                vals.append(float(cell) if cell else None)
            except ValueError:
                vals.append(cell)
        rows.append(vals)
    return header, rows


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def _jsonable(v):
    if isinstance(v, dict):
        return {str(k): _jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    if isinstance(v, (np.floating, float)):
        f = float(v)
        return f if math.isfinite(f) else repr(f)
    if isinstance(v, np.integer):
        return int(v)
    if isinstance(v, np.bool_):
        return bool(v)
    return v


def write_json(path, obj) -> Path:
    path = Path(path)
    _atomic_write(path, json.dumps(_jsonable(obj), indent=2, sort_keys=True) + "\n")
    return path


class Timer:
    def __init__(self):
        self.stages = {}

    @contextmanager
    def stage(self, name):
        t0 = time.perf_counter()
        try:
            yield
        finally:
            self.stages[name] = self.stages.get(name, 0.0) + time.perf_counter() - t0


def resolve_threads(flag: int | None) -> int:
    if flag is not None:
        n = flag
    else:
        env = os.environ.get("AJL_THREADS", "")
        try:
            n = int(env) if env else 1
        except ValueError:
            raise ConfigError(f"AJL_THREADS must be an integer, got {env!r}")
    if n < 1:
        raise ConfigError("thread count must be >= 1")
    return n


def _finish(out: Path, command: str, cfg: RunConfig, inputs: dict, outputs: list, summary: dict,
            timer: Timer) -> Path:
    manifest = {
        "schema": "ajl.manifest/1",
        "command": command,
        "code_version": __version__,
        "config": cfg.to_dict(),
        "inputs": {name: sha256_file(p) for name, p in sorted(inputs.items())},
        "outputs": {Path(p).name: sha256_file(p) for p in sorted(outputs, key=lambda p: Path(p).name)},
        "summary": summary,
    }
    write_json(out / "timings.json", {k: round(v, 6) for k, v in timer.stages.items()})
    return write_json(out / "manifest.json", manifest)


# -- simulate ----------------------------------------------------------------------

def run_simulate(cfg: RunConfig, out, threads: int = 1) -> Path:
    out = Path(out)
    timer = Timer()
    model = cfg.build_model()
    design = cfg.build_design()
    full = cfg.design.get("observe", "price") == "state"
    with timer.stage("simulate"):
        obs = build_observation_set(model, design, cfg.N, cfg.seed,
                                    n_substeps=cfg.design.get("n_substeps"), threads=threads,
                                    full_state=full)
    with timer.stage("write"):
        csv_path, side = save_observation_set(obs, out / OBS_NAME)
    _finish(out, "simulate", cfg, {}, [csv_path, side], {"N": obs.N, "d": obs.d}, timer)
    return csv_path


# -- estimate ----------------------------------------------------------------------

def _true_rho(jumps: LevyMeasureSpec, x):
    if jumps.kind == "none":
        return np.zeros_like(x)
    if jumps.has_density and jumps.dim == 1:
        return rho_from_nu(jumps, x).values
    return None


def _model_section(cfg: RunConfig, obs):
    if cfg.model is not None:
        return cfg
    if obs is not None and obs.model:
        c = RunConfig(**{k: getattr(cfg, k) for k in cfg.__dataclass_fields__})
        c.model = dict(obs.model)
        return c
    return None


def _profiles(cfg: RunConfig, mcfg, T: float):
    if cfg.Lambda != "auto":
        lam = float(cfg.Lambda)
    else:
        if mcfg is None:
            raise ConfigError("spectral.Lambda = 'auto' needs a model section or sidecar model")
        chars, x, _ = mcfg.characteristics()
        lam = submatrix_bounds(chars, T, x).Lambda
    bounds = SubmatrixBounds(np.zeros((0, 0)), np.zeros((0, 0)), lam)
    return weight_profiles(bounds, d=1, safety=cfg.profile_safety), lam


def estimate_to_files(est, out: Path, truth=None, figures=True) -> list:
    out.mkdir(parents=True, exist_ok=True)
    files = []
    rc = est.rho_corrected if est.rho_corrected is not None else [None] * len(est.x)
    files.append(write_csv(out / "rho.csv", ["x", "rho_tilde", "rho_corrected"], [est.x, est.rho_tilde, rc]))
    files.append(write_csv(out / "psi.csv", ["u", "re_Psi", "im_Psi"],
                           [est.u, est.Psi_hat.real, est.Psi_hat.imag]))
    a = est.a_grid if est.a_grid is not None else []
    O = est.O_curve if est.O_curve is not None else []
    files.append(write_csv(out / "index.csv", ["a", "O"], [a, O]))
    if est.U_table is not None:
        t = est.U_table
        files.append(write_csv(out / "cutoff.csv", ["U", "tail", "roughness", "objective"],
                               [t[:, 0], t[:, 1], t[:, 2], t[:, 3]]))
    if figures:
        from .plotting import overlay_panels
        curves = [(est.x, est.rho_tilde, "estimate", "estimate")]
        if est.rho_corrected is not None:
            curves.append((est.x, est.rho_corrected, "corrected", "other"))
        if truth is not None:
            curves.append((est.x, truth, "true", "truth"))
        files.append(overlay_panels(out / "rho.svg", [("transformed jump density", curves)], "x"))
        if len(a):
            files.append(overlay_panels(out / "index.svg", [("index objective", [(a, O, "O(a)", "estimate")])], "a"))
    return files


def estimate_summary(est) -> dict:
    return {
        "U": est.U_used, "L": est.L_hat, "alpha_tilde": est.alpha_tilde,
        "epsilon": est.epsilon, "c_eps": est.c_eps, "correction": est.correction_status,
        "imag_residue": est.imag_residue, "sup_abs_rho_tilde": float(np.max(np.abs(est.rho_tilde))),
    }


def run_estimate(cfg: RunConfig, obs_path, out, exact_oracle: bool = False, threads: int = 1):
    """Estimate from an observation file (or from the analytic c.f. with ``exact_oracle``)."""
    out = Path(out)
    timer = Timer()
    obs = None
    inputs = {}
    if obs_path is not None and (not exact_oracle or Path(obs_path).exists()):
        with timer.stage("load"):
            obs = load_observation_set(obs_path)
        inputs = {Path(obs_path).name: Path(obs_path),
                  Path(obs_path).with_suffix(".json").name: Path(obs_path).with_suffix(".json")}
    mcfg = _model_section(cfg, obs)
    meta = {}
    files = []
    with timer.stage("smooth"):
        if exact_oracle:
            if mcfg is None:
                raise ConfigError("--exact-oracle needs a model section or sidecar model")
            chars, x, idx = mcfg.characteristics()
            psi = psi_s_exact(chars, x)
            if chars.d > 1:
                psi = observed_component(psi, chars.d, idx)
            meta["source"] = "exact"
        elif obs is None:
            raise ConfigError("no observation file given")
        elif obs.d != 1:
            raise ConfigError("estimation runs on one observed coordinate; simulate with observe = 'price'")
        elif isinstance(obs.design, IidPairs):
            psi = psi_s_from_pairs(obs)
            meta["source"] = "finite-difference"
        else:
            sp = cfg.spectral
            u = np.arange(int(math.ceil(sp.U_max / sp.du)) + 1) * sp.du
            smoothed = smoothed_cf_grid(obs, u, cfg.smoother)
            files += list(save_smoothed_cf(smoothed, out / "smoothed.csv"))
            profiles, lam = _profiles(cfg, mcfg, obs.design.T)
            meta.update(source="local-linear", Lambda=lam, h=smoothed.state.h,
                        lambda_min=smoothed.state.lambda_min, truncated=smoothed.state.truncated)
            psi = psi_s_from_smoothed(smoothed, profiles, cfg.spectral.t0_mode)
    with timer.stage("spectral"):
        est = run_spectral_pipeline(psi, cfg.spectral, meta=meta)
    truth = None
    if mcfg is not None and mcfg.model.get("kind") in ("bates", "levy", "affine"):
        truth = _true_rho(jumps_from_dict(mcfg.model.get("jumps")), est.x)
    with timer.stage("write"):
        files += estimate_to_files(est, out, truth, bool(cfg.output.get("figures", True)))
    summary = estimate_summary(est)
    summary.update(meta)
    _finish(out, "estimate", cfg, inputs, files, summary, timer)
    return est


# -- replicate ---------------------------------------------------------------------

NEAR_ZERO = 0.5
L2_BAND = (0.2, 3.0)
L2_MAX = 0.35
IMPROVE_MIN = 0.30


def rel_l2(est, truth, mask):
    return float(np.sqrt(np.sum((est[mask] - truth[mask]) ** 2) / np.sum(truth[mask] ** 2)))


def alpha_band(alpha: float):
    return (round(alpha - 0.1, 10), round(alpha + 0.1, 10))


def replicate_run(rcfg, alpha, seed: int, spectral: EstimatorConfig, sim_threads: int = 1):
    """One seeded run of the i.i.d.-pairs experiment; ``alpha=None`` disables jumps."""
    jumps = LevyMeasureSpec() if alpha is None else LevyMeasureSpec("symmetric-stable", C=rcfg.C, alpha=alpha)
    model = BatesParams(rcfg.lam, rcfg.theta, rcfg.zeta, jumps=jumps)
    obs = build_observation_set(model, IidPairs(rcfg.Delta), rcfg.N, seed, threads=sim_threads)
    est = run_spectral_pipeline(psi_s_from_pairs(obs), spectral)
    x = est.x
    truth = _true_rho(jumps, x)
    row = {"seed": seed, "U": est.U_used, "L": est.L_hat, "alpha_tilde": est.alpha_tilde,
           "epsilon": est.epsilon, "sup_abs_rho_tilde": float(np.max(np.abs(est.rho_tilde)))}
    if alpha is not None:
        band = (np.abs(x) >= L2_BAND[0]) & (np.abs(x) <= L2_BAND[1])
        near = np.abs(x) <= NEAR_ZERO
        rc = est.rho_corrected
        row["l2_tilde"] = rel_l2(est.rho_tilde, truth, band)
        row["l2_corrected"] = rel_l2(rc, truth, band)
        e0 = rel_l2(est.rho_tilde, truth, near)
        row["improvement_near0"] = 1.0 - rel_l2(rc, truth, near) / e0
    return row, est, truth


def _median(vals):
    v = [x for x in vals if x is not None]
    return float(np.median(v)) if v else None


def replicate_paper(cfg: RunConfig, out, threads: int = 1, figures: bool | None = None) -> dict:
    """Seeded replication of the stable-jump Bates study plus a no-jump row."""
    out = Path(out)
    timer = Timer()
    rcfg = cfg.replicate
    if figures is None:
        figures = bool(cfg.output.get("figures", True))
    cases = [(f"alpha={a:g}", a) for a in rcfg.alphas]
    if rcfg.null_case:
        cases.append(("no-jumps", None))
    tasks = [(name, a, cfg.seed + k) for name, a in cases for k in range(rcfg.seeds)]
    with timer.stage("runs"):
        work = lambda t: replicate_run(rcfg, t[1], t[2], cfg.spectral)
        if threads > 1:
            with ThreadPoolExecutor(max_workers=threads) as ex:
                results = list(ex.map(work, tasks))
        else:
            results = [work(t) for t in tasks]
    files = []
    with timer.stage("write"):
        cols = ["case", "seed", "U", "L", "alpha_tilde", "epsilon", "l2_tilde", "l2_corrected",
                "improvement_near0", "sup_abs_rho_tilde"]
        rows = [dict(r[0], case=t[0]) for t, r in zip(tasks, results)]
        files.append(write_csv(out / "runs.csv", cols, [[r.get(c) for r in rows] for c in cols]))
        summary_rows = []
        for name, a in cases:
            rs = [r for r in rows if r["case"] == name]
            s = {"case": name, "alpha_true": a, "n_seeds": len(rs),
                 "median_U": _median([r["U"] for r in rs]),
                 "median_alpha_tilde": _median([r["alpha_tilde"] for r in rs]),
                 "median_sup_abs_rho_tilde": _median([r["sup_abs_rho_tilde"] for r in rs])}
            if a is not None:
                lo, hi = alpha_band(a)
                s["median_l2_tilde"] = _median([r["l2_tilde"] for r in rs])
                s["median_l2_corrected"] = _median([r["l2_corrected"] for r in rs])
                s["median_improvement_near0"] = _median([r["improvement_near0"] for r in rs])
                ma = s["median_alpha_tilde"]
                s["alpha_pass"] = ma is not None and lo <= ma <= hi
                s["l2_pass"] = s["median_l2_corrected"] <= L2_MAX
                s["improvement_pass"] = s["median_improvement_near0"] >= IMPROVE_MIN
            summary_rows.append(s)
        scols = ["case", "alpha_true", "n_seeds", "median_U", "median_alpha_tilde", "median_l2_tilde",
                 "median_l2_corrected", "median_improvement_near0", "median_sup_abs_rho_tilde",
                 "alpha_pass", "l2_pass", "improvement_pass"]
        files.append(write_csv(out / "summary.csv", scols, [[s.get(c) for s in summary_rows] for c in scols]))
        # plot data from the first seed of each jump case
        panels = {"fig2": [], "fig3": [], "fig4": []}
        for name, a in cases:
            if a is None:
                continue
            i = tasks.index((name, a, cfg.seed))
            _, est, truth = results[i]
            tag = f"alpha{a:g}"
            files.append(write_csv(out / f"fig2_rho_{tag}.csv", ["x", "rho_true", "rho_tilde"],
                                   [est.x, truth, est.rho_tilde]))
            files.append(write_csv(out / f"fig3_objective_{tag}.csv", ["a", "O"], [est.a_grid, est.O_curve]))
            files.append(write_csv(out / f"fig4_corrected_{tag}.csv", ["x", "rho_true", "rho_corrected"],
                                   [est.x, truth, est.rho_corrected]))
            title = f"alpha = {a:g}"
            panels["fig2"].append((title, [(est.x, truth, "true", "truth"), (est.x, est.rho_tilde, "estimate", "estimate")]))
            panels["fig3"].append((title, [(est.a_grid, est.O_curve, "O(a)", "estimate")]))
            panels["fig4"].append((title, [(est.x, truth, "true", "truth"), (est.x, est.rho_corrected, "corrected", "estimate")]))
        if figures and panels["fig2"]:
            from .plotting import overlay_panels
            files.append(overlay_panels(out / "fig2_rho.svg", panels["fig2"], "x"))
            files.append(overlay_panels(out / "fig3_objective.svg", panels["fig3"], "a"))
            files.append(overlay_panels(out / "fig4_corrected.svg", panels["fig4"], "x"))
    _finish(out, "replicate-paper", cfg, {}, files, {"cases": summary_rows}, timer)
    return {"summary": summary_rows, "runs": rows, "results": results}


# -- oracle ------------------------------------------------------------------------

def run_oracle(cfg: RunConfig, what: str, out) -> Path:
    out = Path(out)
    timer = Timer()
    if cfg.model is None:
        raise ConfigError("oracle needs a [model] section")
    oc = cfg.oracle
    with timer.stage("oracle"):
        if what == "cf":
            chars, x, idx = cfg.characteristics()
            u = np.linspace(-oc.u_max, oc.u_max, oc.n_u)
            full = np.zeros((u.size, chars.d))
            full[:, idx] = u
            phi = cond_cf(full, oc.s, x, chars)
            path = write_csv(out / "oracle_cf.csv", ["u", "re_phi", "im_phi"], [u, phi.real, phi.imag])
        elif what == "rho":
            jumps = jumps_from_dict(cfg.model.get("jumps"))
            x = cfg.spectral.x_grid
            r = _true_rho(jumps, x)
            if r is None:
                raise ConfigError("jump measure has no one-dimensional density")
            path = write_csv(out / "oracle_rho.csv", ["x", "rho"], [x, r])
        elif what == "exponent":
            jumps = jumps_from_dict(cfg.model.get("jumps"))
            u = np.linspace(-oc.u_max, oc.u_max, oc.n_u)
            e = np.array([levy_exponent(jumps, v) for v in u], dtype=complex)
            path = write_csv(out / "oracle_exponent.csv", ["u", "re_exponent", "im_exponent"], [u, e.real, e.imag])
        else:
            raise ConfigError(f"unknown oracle kind {what!r}")
    _finish(out, f"oracle {what}", cfg, {}, [path], {}, timer)
    return path
