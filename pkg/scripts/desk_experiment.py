"""Train the desk-scale pretrained and meta-trained models and save both.

    python scripts/desk_experiment.py --out runs/desk
"""
import argparse
from pathlib import Path

import numpy as np

from mzsr.experiments import DESK, adaptation_table, held_out_cases, train_desk


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--out", type=Path, default=Path("runs/desk"))
    ap.add_argument("--seed", type=int, default=DESK.seed)
    ap.add_argument("--meta-iters", type=int, default=DESK.meta_iters)
    ap.add_argument("--pretrain-iters", type=int, default=DESK.pretrain_iters)
    args = ap.parse_args()

    cfg = DESK.replace(seed=args.seed, meta_iters=args.meta_iters, pretrain_iters=args.pretrain_iters)
    models = train_desk(cfg, out_dir=args.out, verbose=True)
    print(f"trained in {models.seconds:.0f}s, checkpoints in {args.out}")
    table = adaptation_table(models, held_out_cases(cfg), steps=1)
    for name, values in table.items():
        print(f"{name:>12s}  " + "  ".join(f"{v:7.3f}" for v in values) + f"   mean {np.mean(values):.3f}")


if __name__ == "__main__":
    main()
