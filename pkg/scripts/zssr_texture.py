"""Internal learning on a self-similar texture: ZSSR from scratch vs bicubic.

    python scripts/zssr_texture.py --steps 2000
"""
import argparse

from mzsr.data import tiled_texture
from mzsr.degrade import DegradeSpec, degrade, upscale
from mzsr.kernels import named_kernel
from mzsr.metrics import psnr_y
from mzsr.network import ArchDescriptor
from mzsr.zssr import zssr_baseline


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--steps", type=int, default=2000)
    ap.add_argument("--depth", type=int, default=8)
    ap.add_argument("--features", type=int, default=16)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    kernel = named_kernel("g_d_2.0")
    hr = tiled_texture(seed=args.seed)
    lr = degrade(hr, DegradeSpec(kernel, 2, "direct"))
    sr = zssr_baseline(lr, kernel, "direct", 2, args.steps, seed=args.seed,
                       arch=ArchDescriptor(depth=args.depth, features=args.features), output_gain=0.1)
    print(f"bicubic {psnr_y(upscale(lr, 2), hr, 2):.3f} dB")
    print(f"zssr    {psnr_y(sr, hr, 2):.3f} dB")


if __name__ == "__main__":
    main()
