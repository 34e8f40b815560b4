#!/usr/bin/env python3
"""Power-law fits of the bundled reference count table.

Fits mean coalescence counts against dimension for each bandwidth group
and prints the exponent next to the corresponding GOE-style reference
value.
"""

import argparse
import csv
import os
from collections import defaultdict

from pencilci.census import GOE_REFERENCE_EXPONENTS, fit_power_law

DEFAULT_DATA = os.path.join(
    os.path.dirname(__file__), "..", "tests", "data", "reference_counts.csv"
)


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--data", default=DEFAULT_DATA, help="CSV with bandwidth,n,mean_count")
    args = ap.parse_args()

    grouped = defaultdict(list)
    with open(args.data, newline="", encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            grouped[row["bandwidth"]].append((float(row["n"]), float(row["mean_count"])))

    for token in sorted(grouped):
        fit = fit_power_law(grouped[token])
        ref = GOE_REFERENCE_EXPONENTS.get(token)
        extra = "" if ref is None else f"  (reference p {ref}, diff {fit.p - ref:+.4f})"
        print(
            f"b={token:>4}: p = {fit.p:.4f}, c = {fit.c:.4f}, "
            f"rmsd = {fit.rmsd:.4e}, points = {fit.n_points}{extra}"
        )
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
