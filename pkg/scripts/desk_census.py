#!/usr/bin/env python3
"""Desk-scale coalescence census over the random banded ensemble.

Runs 10 realizations each of full-bandwidth pencils at n = 10..30 on a
16 x 32 grid covering one period, then fits count ~ c * n^p. Resumable:
finished cells are kept on disk and skipped on rerun.
"""

import argparse
import os
import time

from pencilci.census import ExperimentSpec, run_census, summarize_exponents, write_report


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out-dir", default="desk_census_out")
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--workers", type=int, default=os.cpu_count() or 1)
    ap.add_argument("--realizations", type=int, default=10)
    ap.add_argument("--delta", type=float, default=0.45)
    args = ap.parse_args()

    spec = ExperimentSpec(
        seed=args.seed,
        n_list=(10, 15, 20, 25, 30),
        b_list=("full",),
        delta_list=(args.delta,),
        realizations=args.realizations,
        rows=16,
        cols=32,
    )
    t0 = time.perf_counter()
    report = run_census(spec, args.out_dir, workers=args.workers)
    paths = write_report(report, args.out_dir)
    elapsed = time.perf_counter() - t0

    print(f"census of {len(report.cells)} cells finished in {elapsed:.1f}s")
    for n in spec.n_list:
        print(f"  n={n:3d}: mean count {report.means[('full', 0, n)]:.1f}")
    for row in summarize_exponents(report.fits):
        ref = "" if row["reference_p"] is None else f" (reference p {row['reference_p']})"
        print(f"  b={row['b']}: p = {row['p']:.4f}{ref}")
    for name, path in sorted(paths.items()):
        print(f"  wrote {name}: {path}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
