"""Command line front end.

Exit codes: 0 success, 2 invalid input, 3 estimator unavailable
(design truncation or empty kernel window), 4 I/O failure.
"""
from __future__ import annotations

import argparse
import dataclasses
import logging
import sys
from pathlib import Path

from .config import ConfigError, RunConfig, load_config
from .smoother import NoDataError
from .spectral import EstimatorUnavailable

log = logging.getLogger("ajl")

EXIT_OK, EXIT_INVALID, EXIT_UNAVAILABLE, EXIT_IO = 0, 2, 3, 4


def _config(args) -> RunConfig:
    cfg = load_config(args.config) if args.config else RunConfig()
    if args.seed is not None:
        if not 0 <= args.seed < 2 ** 64:
            raise ConfigError("--seed must lie in [0, 2^64)")
        cfg.seed = args.seed
    if getattr(args, "limit_mode", None):
        cfg.spectral = dataclasses.replace(cfg.spectral, limit_mode=args.limit_mode)
    return cfg


def _out(args, cfg) -> Path:
    return Path(args.out if args.out else cfg.output.get("dir", "out"))


def cmd_simulate(args):
    from .pipeline import resolve_threads, run_simulate
    cfg = _config(args)
    path = run_simulate(cfg, _out(args, cfg), resolve_threads(args.threads))
    print(path)


def cmd_estimate(args):
    from .pipeline import OBS_NAME, estimate_summary, resolve_threads, run_estimate
    cfg = _config(args)
    out = _out(args, cfg)
    obs = args.obs
    if obs is None and not args.exact_oracle:
        obs = out / OBS_NAME
    est = run_estimate(cfg, obs, out, exact_oracle=args.exact_oracle, threads=resolve_threads(args.threads))
    s = estimate_summary(est)
    print(f"U={s['U']:.4g} L={s['L']:.6g} alpha_tilde={s['alpha_tilde']} epsilon={s['epsilon']}")


def cmd_replicate(args):
    from .pipeline import replicate_paper, resolve_threads
    cfg = _config(args)
    if args.seeds is not None:
        if args.seeds < 1:
            raise ConfigError("--seeds must be >= 1")
        cfg.replicate = dataclasses.replace(cfg.replicate, seeds=args.seeds)
    res = replicate_paper(cfg, _out(args, cfg), resolve_threads(args.threads))
    for s in res["summary"]:
        cells = [f"{k}={v:.4g}" if isinstance(v, float) else f"{k}={v}" for k, v in s.items()]
        print(" ".join(cells))


def cmd_oracle(args):
    from .pipeline import run_oracle
    cfg = _config(args)
    print(run_oracle(cfg, args.what, _out(args, cfg)))


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="ajl", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--config", type=Path, help="TOML run configuration")
        sp.add_argument("--seed", type=int, help="override the config seed")
        sp.add_argument("--out", type=Path, help="output directory (default: output.dir)")
        sp.add_argument("--threads", type=int, help="worker threads (default: $AJL_THREADS or 1)")
        sp.add_argument("--limit-mode", choices=["kernel", "boundary"], dest="limit_mode")

    sp = sub.add_parser("simulate", help="simulate an observation set")
    common(sp)
    sp.set_defaults(func=cmd_simulate)

    sp = sub.add_parser("estimate", help="estimate the transformed jump density")
    common(sp)
    sp.add_argument("--obs", type=Path, help="observation CSV (default: OUT/observations.csv)")
    sp.add_argument("--exact-oracle", action="store_true", help="use the analytic c.f. instead of data")
    sp.set_defaults(func=cmd_estimate)

    sp = sub.add_parser("replicate-paper", help="seeded stable-jump Bates study")
    common(sp)
    sp.add_argument("--seeds", type=int, help="number of seeds per case")
    sp.set_defaults(func=cmd_replicate)

    sp = sub.add_parser("oracle", help="write an analytic reference curve")
    common(sp)
    sp.add_argument("what", choices=["cf", "rho", "exponent"])
    sp.set_defaults(func=cmd_oracle)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        args.func(args)
    except (EstimatorUnavailable, NoDataError) as e:
        log.error("estimator unavailable: %s", e)
        return EXIT_UNAVAILABLE
    except OSError as e:
        log.error("I/O error: %s", e)
        return EXIT_IO
    except (ConfigError, ValueError, KeyError) as e:
        log.error("invalid input: %s", e)
        return EXIT_INVALID
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
