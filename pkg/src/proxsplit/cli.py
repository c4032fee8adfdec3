"""``proxsplit`` command line: run, check, ref and rate.

Exit codes: 0 ok, 1 divergence, 2 configuration error, 3 a theorem check failed.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from . import bench
from .bench import ConfigError, ExperimentConfig, RateError

EXIT_OK, EXIT_DIVERGED, EXIT_CONFIG, EXIT_CHECK = 0, 1, 2, 3


def _configs(spec: str, variant: str, algorithm: str | None) -> list:
    """A TOML file, a directory of TOML files or a preset name."""
    p = Path(spec)
    if p.is_dir():
        files = sorted(p.glob("*.toml"))
        if not files:
            raise ConfigError(f"no .toml configs in {p}")
        return [ExperimentConfig.load(f) for f in files]
    if p.suffix == ".toml" or p.exists():
        if not p.exists():
            raise ConfigError(f"config file {p} not found")
        return [ExperimentConfig.load(p)]
    return bench.preset(spec, variant, algorithm)


def _override(cfg: ExperimentConfig, args) -> ExperimentConfig:
    changes = {}
    if args.seed is not None:
        changes["seed"] = args.seed
    if args.max_iter is not None:
        changes["max_iter"] = args.max_iter
    if args.out is not None:
        changes["out"] = args.out
    return cfg.replace(**changes) if changes else cfg


def cmd_run(args) -> int:
    status = EXIT_OK
    for cfg in _configs(args.config, args.variant, args.algorithm):
        cfg = _override(cfg, args)
        res = bench.run_experiment(cfg, emit_gnuplot=args.emit_gnuplot, cache_dir=args.cache,
                                   mode=args.mode)
        last = res.trace[-1] if res.trace else None
        msg = f"{cfg.name}: {len(res.trace)} records -> {res.csv_path}"
        if last is not None:
            msg += f" (k={last.k}, psi_gap={last.psi_gap:.3e}, dist_sq={last.dist_sq:.3e})"
        print(msg)
        if res.diverged:
            print(f"{cfg.name}: diverged", file=sys.stderr)
            status = EXIT_DIVERGED
    return status


def cmd_check(args) -> int:
    configs = _configs(args.config, "all", None)
    traces, status = {}, EXIT_OK
    for cfg in configs:
        cfg = _override(cfg, args)
        res = bench.run_experiment(cfg, cache_dir=args.cache, write=args.out is not None)
        if res.diverged:
            status = EXIT_DIVERGED
        traces[bench.trace_key(cfg)] = res.trace
    rows = bench.check_theorems(traces)
    print(bench.format_report(rows))
    if status == EXIT_OK and any(r.status == "FAIL" for r in rows):
        status = EXIT_CHECK
    return status


def cmd_ref(args) -> int:
    for cfg in _configs(args.config, args.variant, args.algorithm):
        cfg = _override(cfg, args)
        ref = bench.reference_solution(cfg, cache_dir=args.cache, use_cache=not args.no_cache)
        print(f"{cfg.name}: psi*={ref.psi!r} key={bench.reference_key(cfg)} |x*|={float(ref.x @ ref.x) ** 0.5:.6g}")
    return EXIT_OK


def cmd_rate(args) -> int:
    try:
        data = bench.read_trace_csv(args.csv)
    except (OSError, ValueError) as e:
        raise ConfigError(str(e)) from None
    window = None
    if args.k_lo is not None or args.k_hi is not None:
        window = (args.k_lo if args.k_lo is not None else 0, args.k_hi if args.k_hi is not None else float("inf"))
    est = bench.estimate_rate(data, args.column, args.model, window=window)
    if est.model == "powerlaw":
        print(f"slope={est.slope:.6g} r2={est.r_squared:.6f} window={est.window[0]:g}..{est.window[1]:g}")
    else:
        print(f"factor={est.factor:.9g} slope={est.slope:.6g} r2={est.r_squared:.6f} "
              f"window={est.window[0]:g}..{est.window[1]:g}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="proxsplit", description="Proximal splitting benchmarks.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("config", help="TOML file, directory of TOML files, or preset name")
        sp.add_argument("--seed", type=int)
        sp.add_argument("--max-iter", type=int)
        sp.add_argument("--out")
        sp.add_argument("--cache", help="reference cache directory")

    sp = sub.add_parser("run", help="run experiments and write CSV traces")
    common(sp)
    sp.add_argument("--variant", default="nonaccelerated", choices=["nonaccelerated", "accelerated", "all"])
    sp.add_argument("--algorithm")
    sp.add_argument("--emit-gnuplot", action="store_true")
    sp.add_argument("--mode", default="sequential", choices=["sequential", "parallel_workers"])
    sp.set_defaults(func=cmd_run)

    sp = sub.add_parser("check", help="run a config set and report the rate checks")
    common(sp)
    sp.set_defaults(func=cmd_check)

    sp = sub.add_parser("ref", help="compute or load cached reference solutions")
    common(sp)
    sp.add_argument("--variant", default="nonaccelerated", choices=["nonaccelerated", "accelerated", "all"])
    sp.add_argument("--algorithm")
    sp.add_argument("--no-cache", action="store_true")
    sp.set_defaults(func=cmd_ref)

    sp = sub.add_parser("rate", help="fit a convergence rate to a CSV trace")
    sp.add_argument("csv")
    sp.add_argument("--column", default="dist_sq", choices=["psi_gap", "dist_sq", "ergodic_gap"])
    sp.add_argument("--model", default="powerlaw", choices=["powerlaw", "linear_geometric"])
    sp.add_argument("--k-lo", type=float)
    sp.add_argument("--k-hi", type=float)
    sp.set_defaults(func=cmd_rate)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except (ConfigError, RateError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except ValueError as e:
        # ParameterError and friends raised while building a problem
        print(f"error: {e}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
