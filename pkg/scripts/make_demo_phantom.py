#!/usr/bin/env python3
"""Generate a demo phantom dataset plus suggested ROIs and ground truth.

Usage: python3 scripts/make_demo_phantom.py out_dir [--seed N] [--spec spec.json]
"""

import argparse
import json
import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "src"))

from resp4d.imgcore import write_dataset
from resp4d.phantom import (
    PhantomSpec,
    generate_phantom,
    load_spec,
    save_spec,
    suggested_rois,
    write_ground_truth_csv,
)
from resp4d.tracker import rois_to_obj


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("out", type=Path)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--spec", type=Path, default=None)
    args = ap.parse_args()

    spec = load_spec(args.spec) if args.spec else PhantomSpec()
    dataset, truth = generate_phantom(spec, seed=args.seed)
    write_dataset(dataset, args.out)
    write_ground_truth_csv(truth, args.out / "ground_truth.csv")
    save_spec(spec, args.out / "phantom_spec.json")
    rois = suggested_rois(spec, truth)
    (args.out / "rois.json").write_text(json.dumps(rois_to_obj(rois), indent=2) + "\n")

    n_data = sum(len(s.data_frames()) for s in dataset.interleaved)
    print(f"{args.out}: {len(dataset.reference_1.frames)} ref frames x2, "
          f"{len(dataset.interleaved)} sequences, {n_data} data frames")
    return 0


if __name__ == "__main__":
    sys.exit(main())
