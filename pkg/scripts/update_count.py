"""PSNR against the number of adaptation updates, meta-trained vs pretrained.

Needs the checkpoints written by desk_experiment.py.

    python scripts/update_count.py --runs runs/desk --steps 0 1 2 5 10 --csv update_count.csv
"""
import argparse
import csv
import sys
from pathlib import Path

import numpy as np

from mzsr.experiments import DESK, held_out_cases
from mzsr.io import load_checkpoint
from mzsr.metrics import psnr_y
from mzsr.zssr import adapt


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--runs", type=Path, default=Path("runs/desk"))
    ap.add_argument("--steps", type=int, nargs="+", default=[0, 1, 2, 3, 5, 10])
    ap.add_argument("--width", type=float, default=1.5)
    ap.add_argument("--csv", type=Path)
    args = ap.parse_args()

    meta = load_checkpoint(args.runs / "meta.ckpt")
    pre = load_checkpoint(args.runs / "pretrained.ckpt")
    cases = held_out_cases(DESK, width=args.width)
    fh = open(args.csv, "w", newline="") if args.csv else sys.stdout
    w = csv.writer(fh)
    w.writerow(["steps", "meta_gd", "pretrained_adam"])
    for n in args.steps:
        m = [psnr_y(adapt(c.lr, c.kernel, c.mode, c.scale, meta, n, DESK.alpha).sr, c.hr, c.scale)
             for c in cases]
        p = [psnr_y(adapt(c.lr, c.kernel, c.mode, c.scale, pre, n, DESK.baseline_lr, optimizer="adam").sr,
                    c.hr, c.scale) for c in cases]
        w.writerow([n, f"{np.mean(m):.6f}", f"{np.mean(p):.6f}"])
        fh.flush()
    if args.csv:
        fh.close()


if __name__ == "__main__":
    main()
