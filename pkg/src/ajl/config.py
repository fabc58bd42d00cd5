"""Run configuration: a versioned TOML file with defaults for everything
except the model kind and the sample size."""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

import numpy as np

from .affine import AffineCharacteristics
from .levy import LevyMeasureSpec, load_tabulated
from .sim import BatesParams, IidPairs, LevyParams, RandomDesign, jumps_from_dict, model_from_dict
from .smoother import SmootherConfig
from .spectral import EstimatorConfig

SCHEMA_VERSION = 1


class ConfigError(ValueError):
    pass


@dataclass
class ReplicateConfig:
    seeds: int = 10
    alphas: tuple = (0.5, 0.8)
    C: float = 1.0
    lam: float = 2.0
    theta: float = 1.0
    zeta: float = 0.3
    N: int = 1000
    Delta: float = 0.1
    null_case: bool = True


@dataclass
class OracleConfig:
    s: float = 0.1
    u_max: float = 20.0
    n_u: int = 81


@dataclass
class RunConfig:
    schema_version: int = SCHEMA_VERSION
    seed: int = 0
    model: dict | None = None
    design: dict = field(default_factory=lambda: {"kind": "iid-pairs", "Delta": 0.1})
    smoother: SmootherConfig = field(default_factory=SmootherConfig)
    spectral: EstimatorConfig = field(default_factory=EstimatorConfig)
    Lambda: float | str = "auto"
    profile_safety: float = 1.0
    output: dict = field(default_factory=lambda: {"dir": "out", "figures": True})
    replicate: ReplicateConfig = field(default_factory=ReplicateConfig)
    oracle: OracleConfig = field(default_factory=OracleConfig)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["replicate"]["alphas"] = list(self.replicate.alphas)
        return _plain(d)

    # -- typed views ------------------------------------------------------

    def build_model(self):
        if self.model is None:
            raise ConfigError("config has no [model] section")
        kind = self.model.get("kind")
        if kind in ("bates", "levy"):
            return model_from_dict(self.model)
        raise ConfigError(f"model kind {kind!r} cannot be simulated (bates or levy)")

    def characteristics(self):
        """``(chars, x, observed index)`` of the configured model."""
        if self.model is None:
            raise ConfigError("config has no [model] section")
        kind = self.model.get("kind")
        if kind in ("bates", "levy"):
            m = model_from_dict(self.model)
            return m.characteristics(), m.state, m.observed_index
        if kind == "affine":
            return _affine_from_dict(self.model)
        raise ConfigError(f"unknown model kind {kind!r}")

    def build_design(self):
        return design_from_section(self.design)

    @property
    def N(self) -> int:
        if "N" not in self.design:
            raise ConfigError("design.N is required")
        return int(self.design["N"])


def _plain(obj):
    if isinstance(obj, dict):
        return {k: _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, float) and math.isinf(obj):
        return "inf"
    return obj


def design_from_section(sec: dict):
    kind = sec.get("kind", "iid-pairs")
    try:
        if kind == "iid-pairs":
            return IidPairs(Delta=float(sec.get("Delta", 0.1)))
        if kind == "random-design":
            return RandomDesign(T=float(sec.get("T", 1.0)), density=sec.get("density", "uniform"))
    except ValueError as e:
        raise ConfigError(str(e)) from e
    raise ConfigError(f"unknown design kind {kind!r}")


def _affine_from_dict(m: dict):
    try:
        d = int(m["d"])
        jumps = jumps_from_dict(m.get("jumps"))
        chars = AffineCharacteristics(
            d=d, m=int(m.get("m", 0)),
            alpha0=np.array(m.get("alpha0", np.zeros((d, d))), dtype=float),
            alpha1=np.array(m.get("alpha1", np.zeros((d, d, d))), dtype=float),
            beta0=np.array(m.get("beta0", np.zeros(d)), dtype=float),
            beta1=np.array(m.get("beta1", np.zeros((d, d))), dtype=float),
            gamma0=float(m.get("gamma0", 0.0)),
            gamma1=np.array(m.get("gamma1", np.zeros(d)), dtype=float),
            nu0=jumps, jump_component=int(m.get("jump_component", -1)))
    except (KeyError, TypeError) as e:
        raise ConfigError(f"bad affine model section: {e}") from e
    x = np.array(m.get("x", np.zeros(d)), dtype=float)
    return chars, x, int(m.get("observed", d - 1))


def _dataclass_from(cls, sec: dict, where: str):
    names = {f.name for f in fields(cls)}
    extra = set(sec) - names
    if extra:
        raise ConfigError(f"unknown keys in [{where}]: {sorted(extra)}")
    try:
        return cls(**sec)
    except (TypeError, ValueError) as e:
        raise ConfigError(f"[{where}]: {e}") from e


def _resolve_tabulated(model: dict, base: Path):
    jd = model.get("jumps")
    if jd and jd.get("kind") == "tabulated" and "file" in jd:
        spec = load_tabulated(base / jd["file"])
        jd = dict(jd)
        del jd["file"]
        jd["x_grid"] = list(spec.x_grid)
        jd["values"] = list(spec.values)
        model = dict(model, jumps=jd)
    return model


def parse_config(data: dict, base: Path | None = None) -> RunConfig:
    """Validate a parsed TOML mapping into a :class:`RunConfig`."""
    base = base or Path(".")
    data = dict(data)
    ver = data.pop("schema_version", SCHEMA_VERSION)
    if ver != SCHEMA_VERSION:
        raise ConfigError(f"unsupported schema_version {ver} (expected {SCHEMA_VERSION})")
    known = {"seed", "model", "design", "smoother", "spectral", "output", "replicate", "oracle"}
    extra = set(data) - known
    if extra:
        raise ConfigError(f"unknown top-level keys: {sorted(extra)}")
    cfg = RunConfig()
    seed = data.get("seed", 0)
    if not isinstance(seed, int) or not 0 <= seed < 2 ** 64:
        raise ConfigError("seed must be an integer in [0, 2^64)")
    cfg.seed = seed
    if "model" in data:
        model = dict(data["model"])
        if "kind" not in model:
            raise ConfigError("model.kind is required")
        model = _resolve_tabulated(model, base)
        if model["kind"] in ("bates", "levy"):
            try:
                model_from_dict(model)
            except (KeyError, TypeError, ValueError) as e:
                raise ConfigError(f"[model]: {e}") from e
        cfg.model = model
    if "design" in data:
        cfg.design = dict(data["design"])
        design_from_section(cfg.design)
        if "N" in cfg.design and (not isinstance(cfg.design["N"], int) or cfg.design["N"] < 1):
            raise ConfigError("design.N must be a positive integer")
    sm = dict(data.get("smoother", {}))
    if sm.get("h") == "rule":
        sm["h"] = None
    if sm.get("gamma0") == "auto":
        sm["gamma0"] = None
    cfg.smoother = _dataclass_from(SmootherConfig, sm, "smoother")
    sp = dict(data.get("spectral", {}))
    if "Lambda" in sp:
        cfg.Lambda = sp.pop("Lambda")
        if cfg.Lambda != "auto" and not (isinstance(cfg.Lambda, (int, float)) and cfg.Lambda > 0):
            raise ConfigError("spectral.Lambda must be positive or 'auto'")
    if "profile_safety" in sp:
        cfg.profile_safety = float(sp.pop("profile_safety"))
    cfg.spectral = _dataclass_from(EstimatorConfig, sp, "spectral")
    out = dict(cfg.output)
    out.update(data.get("output", {}))
    cfg.output = out
    rep = dict(data.get("replicate", {}))
    if "lambda" in rep:
        rep["lam"] = rep.pop("lambda")
    if "alphas" in rep:
        rep["alphas"] = tuple(float(a) for a in rep["alphas"])
    cfg.replicate = _dataclass_from(ReplicateConfig, rep, "replicate")
    if cfg.replicate.seeds < 1:
        raise ConfigError("replicate.seeds must be >= 1")
    cfg.oracle = _dataclass_from(OracleConfig, dict(data.get("oracle", {})), "oracle")
    return cfg


def load_config(path) -> RunConfig:
    path = Path(path)
    with open(path, "rb") as fh:
        try:
            data = tomllib.load(fh)
        except tomllib.TOMLDecodeError as e:
            raise ConfigError(f"{path}: {e}") from e
    return parse_config(data, path.parent)
