"""Meta-test with a too-narrow, the true, and a too-wide kernel on held-out images.

    python scripts/kernel_mismatch.py --runs runs/desk
"""
import argparse
from pathlib import Path

from mzsr.experiments import DESK, PROBE_STEPS, held_out_cases, mismatch_kernels
from mzsr.io import load_checkpoint
from mzsr.zssr import mismatch_probe


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--runs", type=Path, default=Path("runs/desk"))
    ap.add_argument("--width", type=float, default=1.5)
    ap.add_argument("--steps", type=int, default=PROBE_STEPS)
    args = ap.parse_args()

    meta = load_checkpoint(args.runs / "meta.ckpt")
    probes = mismatch_kernels(DESK, args.width)
    wins = 0
    for i, c in enumerate(held_out_cases(DESK, width=args.width)):
        rows = mismatch_probe(c.lr, c.hr, c.kernel, probes, meta, c.mode, c.scale, args.steps, DESK.alpha)
        best = max(rows, key=lambda r: r.psnr)
        wins += best.name == "true"
        print(f"image {i}: " + "  ".join(f"{r.name}={r.psnr:.3f}" for r in rows) + f"  best={best.name}")
    print(f"true kernel best on {wins} images")


if __name__ == "__main__":
    main()
