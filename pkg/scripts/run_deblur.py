"""Deblurring sweep: every preset algorithm on tv, huber and none regularizers.

Writes CSV traces (and gnuplot scripts) under --out and prints the rate checks.
"""

import argparse
import logging

from proxsplit import bench

if __name__ == "__main__":
    ap = argparse.ArgumentParser()
    ap.add_argument("--n", type=int, default=64)
    ap.add_argument("--max-iter", type=int, default=10_000)
    ap.add_argument("--out", default="results/deblur")
    ap.add_argument("--cache", default=None)
    args = ap.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(message)s")

    traces = {}
    for reg in ("tv", "huber", "none"):
        variant = "all" if reg == "tv" else "nonaccelerated"
        iters = 3_000 if reg == "huber" else args.max_iter
        for cfg in bench.preset(f"deblur-{reg}-{args.n}", variant):
            cfg = cfg.replace(max_iter=iters)
            res = bench.run_experiment(cfg, out_dir=args.out, emit_gnuplot=True, cache_dir=args.cache)
            last = res.trace[-1]
            print(f"{cfg.name:40s} k={last.k:6d} psi_gap={last.psi_gap:.3e} dist_sq={last.dist_sq:.3e}")
            traces[bench.trace_key(cfg)] = res.trace
    print()
    print(bench.format_report(r for r in bench.check_theorems(traces) if r.status != "SKIPPED"))
