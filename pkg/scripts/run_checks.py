"""Full rate-check suite at the default size, equivalent to ``proxsplit check``."""

import argparse
import logging
import sys

from proxsplit import bench

SUITE = [
    ("deblur-tv-64", "all", 10_000),
    ("deblur-none-64", "nonaccelerated", 10_000),
    ("deblur-huber-64", "nonaccelerated", 3_000),
    ("svm-hinge-toy", "all", 10_000),
]

if __name__ == "__main__":
    ap = argparse.ArgumentParser()
    ap.add_argument("--out", default="results/checks")
    ap.add_argument("--cache", default=None)
    args = ap.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(message)s")

    traces = {}
    for name, variant, iters in SUITE:
        for cfg in bench.preset(name, variant):
            if cfg.algorithm.startswith("condat_vu"):
                continue
            res = bench.run_experiment(cfg.replace(max_iter=iters), out_dir=args.out, cache_dir=args.cache)
            traces[bench.trace_key(cfg)] = res.trace
    rows = bench.check_theorems(traces)
    print(bench.format_report(rows))
    sys.exit(0 if all(r.status == "PASS" for r in rows) else 3)
