#!/usr/bin/env python3
"""Reconstruction-rate sweep on a dataset: thresholds x measures x references x methods.

Usage: python3 scripts/run_sweep.py dataset_dir rois.json out_dir [--thresholds 0.5,1,2]
"""

import argparse
import json
import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "src"))

from resp4d.evalharness import sweep, write_rates_csv
from resp4d.imgcore import load_dataset
from resp4d.tracker import rois_from_obj


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("dataset", type=Path)
    ap.add_argument("rois", type=Path)
    ap.add_argument("out", type=Path)
    ap.add_argument("--thresholds", default="0.5,1,2")
    args = ap.parse_args()

    dataset = load_dataset(args.dataset)
    rois = rois_from_obj(json.loads(args.rois.read_text()))
    thresholds = tuple(float(t) for t in args.thresholds.split(","))

    cells = sweep(dataset, rois, thresholds=thresholds)
    args.out.mkdir(parents=True, exist_ok=True)
    write_rates_csv(cells, args.out / "rates.csv")

    # side-by-side table: baseline vs updating per (reference, measure, threshold)
    by_key = {(c.reference, c.measure, c.threshold_px, c.method): c.rate for c in cells}
    print(f"{'ref':>3} {'measure':>13} {'t_px':>5} {'baseline':>9} {'updating':>9} {'delta':>7}")
    for ref in sorted({c.reference for c in cells}):
        for measure in sorted({c.measure for c in cells}):
            for t in thresholds:
                b = by_key[(ref, measure, t, "baseline")]
                u = by_key[(ref, measure, t, "updating")]
                print(f"{ref:>3} {measure:>13} {t:>5g} {b:>8.2f}% {u:>8.2f}% {u - b:>+6.2f}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
