"""Simulation of Bates-type and Lévy models and observation designs.

Every record of an :class:`ObservationSet` is simulated from its own
counter-based RNG stream (Philox keyed by ``(seed, stream, record)``), so
the assembled set does not depend on how records are distributed across
threads.
"""
from __future__ import annotations

import csv
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .affine import bates_characteristics, levy_characteristics
from .levy import LevyMeasureSpec

SIM_STREAM = 1
DESIGN_STREAM = 2
SUBSTEP = 0.005


def record_rng(seed: int, stream: int, index: int) -> np.random.Generator:
    ss = np.random.SeedSequence(int(seed), spawn_key=(stream, index))
    return np.random.Generator(np.random.Philox(ss))


# -- primitive samplers --------------------------------------------------------

def sample_stable_increment(alpha, eta, dt, rng, size=None):
    """Symmetric ``alpha``-stable increment with c.f. ``exp(-eta |u|^alpha dt)``.

    Chambers-Mallows-Stuck transform of a uniform angle and a unit
    exponential.
    """
    if dt == 0:
        return 0.0 if size is None else np.zeros(size)
    V = rng.uniform(-0.5 * math.pi, 0.5 * math.pi, size)
    W = rng.exponential(1.0, size)
    s = (np.sin(alpha * V) / np.cos(V) ** (1.0 / alpha)
         * (np.cos((1.0 - alpha) * V) / W) ** ((1.0 - alpha) / alpha))
    return (eta * dt) ** (1.0 / alpha) * s


def sample_jump_increment(spec: LevyMeasureSpec, dt, rng, size=None):
    """Increment over ``dt`` of the pure-jump Lévy process with measure ``spec``.

    Includes the ``chi``-compensator drift so that the increment has
    exponent ``dt * spec.exponent(iu)``.
    """
    if spec.kind == "none" or dt == 0:
        return 0.0 if size is None else np.zeros(size)
    if spec.kind == "symmetric-stable":
        return sample_stable_increment(spec.alpha, spec.eta, dt, rng, size)
    if spec.dim != 1:
        raise NotImplementedError("simulation of 2-d jump measures")
    comp = float(spec._chi_mean()[0]) * dt
    if spec.kind == "compound-poisson":
        n = rng.poisson(spec.rate * dt, size)
        z = rng.standard_normal(size)
        m, s = float(spec.mean), float(spec.std)
        return n * m + np.sqrt(n) * s * z - comp
    xg = np.asarray(spec.x_grid)
    vals = np.asarray(spec.values)
    cdf = np.concatenate([[0.0], np.cumsum(0.5 * (vals[1:] + vals[:-1]) * np.diff(xg))])
    rate = cdf[-1]
    n = rng.poisson(rate * dt, size)
    total = int(np.sum(n))
    draws = np.interp(rng.uniform(0, rate, total), cdf, xg)
    if size is None:
        return float(np.sum(draws)) - comp
    out = np.zeros(int(np.prod(size)))
    idx = np.repeat(np.arange(out.size), np.ravel(n))
    np.add.at(out, idx, draws)
    return out.reshape(size) - comp


def cir_step(v, dt, lam, theta, zeta, rng):
    """Exact transition of ``dV = lam (theta - V) dt + zeta sqrt(V) dW``.

    Scaled non-central chi-square; reduces to the ODE solution when
    ``zeta == 0``.
    """
    v = np.asarray(v, dtype=float)
    decay = math.exp(-lam * dt)
    if zeta == 0 or dt == 0:
        out = theta + (v - theta) * decay
        return float(out) if out.ndim == 0 else out
    c = zeta * zeta * (1.0 - decay) / (4.0 * lam)
    df = 4.0 * lam * theta / (zeta * zeta)
    nc = v * decay / c
    out = c * rng.noncentral_chisquare(df, nc)
    return float(out) if np.ndim(out) == 0 else out


# -- models ----------------------------------------------------------------------

@dataclass(frozen=True)
class BatesParams:
    lam: float
    theta: float
    zeta: float
    v0: float = 1.0
    x0: float = 0.0
    jumps: LevyMeasureSpec = field(default_factory=LevyMeasureSpec)

    def __post_init__(self):
        for name in ("lam", "theta", "v0"):
            if getattr(self, name) <= 0:
                raise ValueError(f"Bates parameter {name} must be positive")
        if self.zeta < 0:
            raise ValueError("Bates parameter zeta must be non-negative")

    def characteristics(self):
        return bates_characteristics(self.lam, self.theta, self.zeta, self.jumps)

    @property
    def state(self):
        return np.array([self.v0, self.x0])

    @property
    def observed_index(self) -> int:
        return 1


@dataclass(frozen=True)
class LevyParams:
    """``X_t = x0 + mu t + sigma W_t + Z_t`` with ``Z`` pure jump."""

    sigma: float = 1.0
    mu: float = 0.0
    x0: float = 0.0
    jumps: LevyMeasureSpec = field(default_factory=LevyMeasureSpec)

    def characteristics(self):
        return levy_characteristics(self.sigma, self.mu, self.jumps)

    @property
    def state(self):
        return np.array([self.x0])

    @property
    def observed_index(self) -> int:
        return 0


def simulate_bates_pair(params: BatesParams, Delta: float, n_substeps: int, rng, size=None,
                        full_state: bool = False):
    """Simulate ``(X(0), X(Delta))`` of the Bates model.

    ``V`` moves by exact CIR transitions, ``X`` by Euler steps using the
    variance at the start of each substep; the jump part is added exactly
    per substep.  Vectorized over ``size`` draws from one generator.
    With ``full_state`` the pair holds ``(V, X)`` vectors along the last axis.
    """
    if n_substeps < 1:
        raise ValueError("n_substeps must be >= 1")
    shape = () if size is None else (size,) if np.isscalar(size) else tuple(size)
    x = np.full(shape, params.x0, dtype=float)
    v = np.full(shape, params.v0, dtype=float)
    if full_state:
        start = np.stack([v, x], axis=-1)
    if Delta == 0:
        if full_state:
            return start, start.copy()
        return (float(x), float(x)) if size is None else (x.copy(), x)
    dt = Delta / n_substeps
    sz = None if size is None else shape
    for _ in range(n_substeps):
        z = rng.standard_normal(sz)
        jump = sample_jump_increment(params.jumps, dt, rng, sz)
        v_next = cir_step(v, dt, params.lam, params.theta, params.zeta, rng)
        x = x - 0.5 * v * dt + np.sqrt(v * dt) * z + jump
        v = np.asarray(v_next, dtype=float)
    if full_state:
        return start, np.stack([v, x], axis=-1)
    start = np.full(shape, params.x0, dtype=float)
    if size is None:
        return float(start), float(x)
    return start, x


def simulate_levy_increment(params: LevyParams, dt: float, rng, size=None):
    g = rng.standard_normal(size)
    return params.mu * dt + params.sigma * math.sqrt(dt) * g + sample_jump_increment(params.jumps, dt, rng, size)


def simulate_pair(model, Delta: float, rng, n_substeps: int | None = None, full_state=False):
    """One ``(start, end)`` pair as 1-d arrays (observed price, or the full state)."""
    if isinstance(model, BatesParams):
        n = n_substeps or default_substeps(Delta)
        a, b = simulate_bates_pair(model, Delta, n, rng, full_state=full_state)
        return np.atleast_1d(a), np.atleast_1d(b)
    if isinstance(model, LevyParams):
        end = model.x0 if Delta == 0 else model.x0 + float(simulate_levy_increment(model, Delta, rng))
        return np.array([model.x0]), np.array([end])
    raise TypeError(f"unsupported model {type(model).__name__}")


def default_substeps(Delta: float) -> int:
    return max(1, int(math.ceil(Delta / SUBSTEP - 1e-9)))


# -- designs and observation sets --------------------------------------------------

@dataclass(frozen=True)
class RandomDesign:
    """Lags i.i.d. with density ``p_delta`` on ``[0, T]`` (uniform only)."""

    T: float = 1.0
    density: str = "uniform"
    kind: str = field(default="random-design", init=False)

    def __post_init__(self):
        if self.T <= 0:
            raise ValueError("random design horizon T must be positive")
        if self.density != "uniform":
            raise ValueError(f"unsupported design density {self.density!r}")

    def pdf(self, t):
        t = np.asarray(t, dtype=float)
        return np.where((t >= 0) & (t <= self.T), 1.0 / self.T, 0.0)

    def to_dict(self):
        return {"kind": self.kind, "T": self.T, "density": self.density}


@dataclass(frozen=True)
class IidPairs:
    Delta: float = 0.1
    kind: str = field(default="iid-pairs", init=False)

    def __post_init__(self):
        if self.Delta <= 0:
            raise ValueError("iid-pairs lag Delta must be positive")

    def to_dict(self):
        return {"kind": self.kind, "Delta": self.Delta}


def design_from_dict(d: dict):
    if d["kind"] == "random-design":
        return RandomDesign(T=float(d.get("T", 1.0)), density=d.get("density", "uniform"))
    if d["kind"] == "iid-pairs":
        return IidPairs(Delta=float(d["Delta"]))
    raise ValueError(f"unknown design kind {d['kind']!r}")


@dataclass(frozen=True)
class ObservationSet:
    design: object
    x: np.ndarray
    delta: np.ndarray
    x_start: np.ndarray
    x_end: np.ndarray
    seed: int
    n_substeps: int | None = None
    model: dict | None = None

    @property
    def N(self) -> int:
        return int(self.delta.size)

    @property
    def d(self) -> int:
        return int(self.x_end.shape[1])


def model_to_dict(model) -> dict:
    jumps = model.jumps
    jd = {"kind": jumps.kind}
    if jumps.kind == "symmetric-stable":
        jd.update(C=jumps.C, alpha=jumps.alpha)
    elif jumps.kind == "compound-poisson":
        jd.update(rate=jumps.rate, mean=jumps.mean, std=jumps.std)
    elif jumps.kind == "tabulated":
        jd.update(x_grid=list(jumps.x_grid), values=list(jumps.values))
    if isinstance(model, BatesParams):
        return {"kind": "bates", "lambda": model.lam, "theta": model.theta, "zeta": model.zeta,
                "v0": model.v0, "x0": model.x0, "jumps": jd}
    return {"kind": "levy", "sigma": model.sigma, "mu": model.mu, "x0": model.x0, "jumps": jd}


def jumps_from_dict(jd: dict | None) -> LevyMeasureSpec:
    if not jd or jd.get("kind", "none") == "none":
        return LevyMeasureSpec()
    kind = jd["kind"]
    if kind == "symmetric-stable":
        return LevyMeasureSpec(kind, C=float(jd["C"]), alpha=float(jd["alpha"]))
    if kind == "compound-poisson":
        return LevyMeasureSpec(kind, rate=float(jd["rate"]), mean=float(jd.get("mean", 0.0)),
                               std=float(jd.get("std", 1.0)))
    if kind == "tabulated":
        return LevyMeasureSpec(kind, x_grid=tuple(jd["x_grid"]), values=tuple(jd["values"]))
    raise ValueError(f"unknown jump kind {kind!r}")


def model_from_dict(d: dict):
    jumps = jumps_from_dict(d.get("jumps"))
    if d["kind"] == "bates":
        return BatesParams(lam=float(d["lambda"]), theta=float(d["theta"]), zeta=float(d["zeta"]),
                           v0=float(d.get("v0", 1.0)), x0=float(d.get("x0", 0.0)), jumps=jumps)
    if d["kind"] == "levy":
        return LevyParams(sigma=float(d.get("sigma", 1.0)), mu=float(d.get("mu", 0.0)),
                          x0=float(d.get("x0", 0.0)), jumps=jumps)
    raise ValueError(f"unknown model kind {d['kind']!r}")


def _simulate_record(model, design, seed, n, n_substeps, full_state):
    if isinstance(design, RandomDesign):
        delta = float(record_rng(seed, DESIGN_STREAM, n).uniform(0.0, design.T))
    else:
        delta = design.Delta
    steps = n_substeps or default_substeps(delta)
    start, end = simulate_pair(model, delta, record_rng(seed, SIM_STREAM, n), steps, full_state)
    return np.concatenate([[delta], start, end])


def build_observation_set(model, design, N: int, seed: int, n_substeps: int | None = None,
                          threads: int = 1, full_state: bool = False) -> ObservationSet:
    """Simulate ``N`` independent records under ``design``.

    Random-design segments restart at the model's initial state (same
    conditional law as harvesting level crossings of one long path).
    By default only the price coordinate is recorded; ``full_state`` keeps
    ``(V, X)`` for the Bates model.
    """
    if N < 1:
        raise ValueError("N must be >= 1")
    work = lambda n: _simulate_record(model, design, seed, n, n_substeps, full_state)
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            rows = list(ex.map(work, range(N)))
    else:
        rows = [work(n) for n in range(N)]
    arr = np.array(rows, dtype=float)
    if isinstance(design, IidPairs):
        steps = n_substeps or default_substeps(design.Delta)
    else:
        steps = n_substeps
    d = (arr.shape[1] - 1) // 2
    x = model.state if (full_state and isinstance(model, BatesParams)) else np.array([model.x0])
    return ObservationSet(
        design=design, x=np.asarray(x, dtype=float), delta=arr[:, 0],
        x_start=arr[:, 1:1 + d], x_end=arr[:, 1 + d:], seed=int(seed), n_substeps=steps,
        model=model_to_dict(model))


# -- persistence -----------------------------------------------------------------

def sidecar_path(csv_path) -> Path:
    p = Path(csv_path)
    return p.with_suffix(".json")


def save_observation_set(obs: ObservationSet, csv_path) -> tuple[Path, Path]:
    """Write ``delta, x_start_1..d, x_end_1..d`` plus a JSON sidecar."""
    csv_path = Path(csv_path)
    d = obs.d
    header = ["delta"] + [f"x_start_{k + 1}" for k in range(d)] + [f"x_end_{k + 1}" for k in range(d)]
    lines = [",".join(header)]
    for i in range(obs.N):
        vals = [obs.delta[i], *obs.x_start[i], *obs.x_end[i]]
        lines.append(",".join(repr(float(v)) for v in vals))
    _atomic_write(csv_path, "\n".join(lines) + "\n")
    meta = {
        "schema": "ajl.observations/1",
        "N": obs.N,
        "d": d,
        "design": obs.design.to_dict(),
        "x": [float(v) for v in obs.x],
        "seed": obs.seed,
        "n_substeps": obs.n_substeps,
        "model": obs.model,
    }
    side = sidecar_path(csv_path)
    _atomic_write(side, json.dumps(meta, indent=2, sort_keys=True) + "\n")
    return csv_path, side


def load_observation_set(csv_path) -> ObservationSet:
    csv_path = Path(csv_path)
    side = sidecar_path(csv_path)
    meta = json.loads(side.read_text())
    with open(csv_path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        rows = [[float(v) for v in r] for r in reader if r]
    d = int(meta["d"])
    expected = ["delta"] + [f"x_start_{k + 1}" for k in range(d)] + [f"x_end_{k + 1}" for k in range(d)]
    if header != expected:
        raise ValueError(f"unexpected observation columns {header}")
    arr = np.array(rows, dtype=float).reshape(-1, 1 + 2 * d)
    if arr.shape[0] != int(meta["N"]):
        raise ValueError("row count does not match sidecar N")
    return ObservationSet(
        design=design_from_dict(meta["design"]), x=np.array(meta["x"], dtype=float),
        delta=arr[:, 0], x_start=arr[:, 1:1 + d], x_end=arr[:, 1 + d:],
        seed=int(meta["seed"]), n_substeps=meta.get("n_substeps"), model=meta.get("model"))


def _atomic_write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "w", newline="\n") as fh:
        fh.write(text)
    tmp.replace(path)
