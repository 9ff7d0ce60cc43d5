"""Correlate network redundancy with measured robustness gains.

Input CSV rows: ``model,position,gamma,redundancy``. Per model both columns
are min-max normalised; the three layers with the highest gamma and the last
position are excluded (reporting convention), then the pooled Pearson r is
printed.

    python scripts/placement_correlation.py results.csv
"""

import argparse
import csv
from collections import defaultdict

import numpy as np

from adanca.placement import min_max_normalize, pearson_r


def pooled_points(rows, exclude_top: int = 3):
    by_model = defaultdict(list)
    for r in rows:
        by_model[r["model"]].append((int(r["position"]), float(r["gamma"]), float(r["redundancy"])))
    xs, ys = [], []
    for model, pts in sorted(by_model.items()):
        pts.sort()
        last = pts[-1][0]
        top = {p for p, _, _ in sorted(pts, key=lambda t: -t[1])[:exclude_top]}
        keep = [(p, g, k) for p, g, k in pts if p != last and p not in top]
        if len(keep) < 2:
            continue
        xs.extend(min_max_normalize([k for _, _, k in keep]))
        ys.extend(min_max_normalize([g for _, g, _ in keep]))
    return np.asarray(xs), np.asarray(ys)


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("results")
    p.add_argument("--exclude-top", type=int, default=3)
    args = p.parse_args(argv)
    with open(args.results, newline="", encoding="utf-8") as fh:
        rows = list(csv.DictReader(fh))
    x, y = pooled_points(rows, args.exclude_top)
    print(f"points = {len(x)}  pearson r = {pearson_r(x, y):.4f}")


if __name__ == "__main__":
    main()
