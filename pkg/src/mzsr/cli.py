"""Command line entry point: ``mzsr <subcommand> [options]``.

Exit codes: 0 success, 1 usage error, 2 runtime error.
"""
from __future__ import annotations

import argparse
import csv
import sys
from dataclasses import fields
from pathlib import Path
from typing import Optional, Sequence, TextIO

import numpy as np

from mzsr.config import RunConfig, load_config
from mzsr.data import load_corpus, synthetic_corpus
from mzsr.degrade import DegradeSpec, degrade
from mzsr.io import CheckpointError, load_checkpoint, read_png, save_checkpoint, write_png
from mzsr.kernels import NAMED_KERNELS, Kernel, KernelSpec, load_kernel_text, named_kernel, rasterize, save_kernel_text
from mzsr.meta import meta_train, pretrain
from mzsr.metrics import psnr_y, ssim_y
from mzsr.network import build
from mzsr.zssr import meta_test, mismatch_probe

SUBCOMMANDS = ("pretrain", "meta-train", "meta-test", "degrade", "kernel", "eval", "probe")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: error: {message}\n{self.format_usage()}")


def _flag(name: str) -> str:
    return "--" + name.replace("_", "-")


def _add_config_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", type=Path, help="flat 'key = value' config file")
    for f in fields(RunConfig):
        if f.name == "seed":  # shared --seed flag, see run_cli
            continue
        kind = {"int": int, "float": float, "str": str, "bool": str}[f.type]
        p.add_argument(_flag(f.name), dest=f"cfg_{f.name}", type=kind, default=None, metavar=f.type.upper())


def _resolve_config(args) -> RunConfig:
    overrides = {k[4:]: v for k, v in vars(args).items() if k.startswith("cfg_") and v is not None}
    return load_config(args.config, overrides)


def _echo_config(cfg: RunConfig) -> None:
    print("# resolved config", file=sys.stderr)
    for line in cfg.to_lines():
        print(f"# {line}", file=sys.stderr)


def _print_settings(**values) -> None:
    print("# resolved config", file=sys.stderr)
    for k, v in values.items():
        print(f"# {k} = {v}", file=sys.stderr)


def resolve_kernel(value: str) -> Kernel:
    """A named evaluation kernel or a path to a text grid."""
    if value in NAMED_KERNELS:
        return named_kernel(value)
    path = Path(value)
    if path.exists():
        return load_kernel_text(path)
    raise ValueError(f"kernel {value!r} is neither a known name ({', '.join(NAMED_KERNELS)}) nor a file")


def _kernel_mode(kernel: Kernel, mode: Optional[str]) -> str:
    return mode or kernel.mode or "direct"


def _corpus(args, cfg: RunConfig):
    if args.data:
        return load_corpus(args.data)
    return synthetic_corpus(args.synthetic, size=args.synthetic_size, seed=cfg.seed)


class _LossLog:
    def __init__(self, path: Optional[Path]):
        self._fh: TextIO = open(path, "w", newline="") if path else sys.stdout
        self._own = path is not None
        self._writer = csv.writer(self._fh)
        self._writer.writerow(["iter", "loss"])

    def __call__(self, it: int, loss: float) -> None:
        self._writer.writerow([it, f"{loss:.8g}"])

    def close(self):
        if self._own:
            self._fh.close()
        else:
            self._fh.flush()


# ---------------------------------------------------------------- commands


def cmd_pretrain(args) -> None:
    cfg = _resolve_config(args)
    _echo_config(cfg)
    corpus = _corpus(args, cfg)
    init = load_checkpoint(args.init) if args.init else None
    log = _LossLog(args.log)
    try:
        params = pretrain(corpus, cfg, init=init, progress=log)
    finally:
        log.close()
    save_checkpoint(params, args.out)


def cmd_meta_train(args) -> None:
    cfg = _resolve_config(args)
    corpus = _corpus(args, cfg)
    init = load_checkpoint(args.init) if args.init else build(cfg.arch, cfg.seed, cfg.init_output_gain)
    if init.arch != cfg.arch:
        print(f"# note: using checkpoint architecture {init.arch}", file=sys.stderr)
    cfg = cfg.replace(depth=init.arch.depth, features=init.arch.features, kernel_size=init.arch.kernel_size)
    _echo_config(cfg)
    log = _LossLog(args.log)
    ckpt_dir = args.checkpoint_dir

    def checkpoint(it, params):
        if ckpt_dir is not None:
            ckpt_dir.mkdir(parents=True, exist_ok=True)
            save_checkpoint(params, ckpt_dir / f"meta_{it:07d}.ckpt")

    try:
        params = meta_train(init, corpus, cfg, progress=log, checkpoint=checkpoint)
    finally:
        log.close()
    save_checkpoint(params, args.out)


def cmd_meta_test(args) -> None:
    kernel = resolve_kernel(args.kernel)
    mode = _kernel_mode(kernel, args.mode)
    _print_settings(input=args.inp, kernel=args.kernel, mode=mode, scale=args.scale, ckpt=args.ckpt,
                    steps=args.steps, alpha=args.alpha, seed=args.seed)
    params = load_checkpoint(args.ckpt)
    lr = read_png(args.inp)
    res = meta_test(lr, kernel, mode, args.scale, params, args.steps, args.alpha)
    write_png(res.sr, args.out)
    if args.trace:
        with open(args.trace, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["step", "loss"])
            for i, loss in enumerate(res.losses):
                w.writerow([i, f"{loss:.8g}"])


def cmd_degrade(args) -> None:
    kernel = resolve_kernel(args.kernel)
    mode = _kernel_mode(kernel, args.mode)
    _print_settings(input=args.inp, kernel=args.kernel, mode=mode, scale=args.scale,
                    noise=args.noise, seed=args.seed)
    img = read_png(args.inp)
    rng = np.random.default_rng(args.seed)
    write_png(degrade(img, DegradeSpec(kernel, args.scale, mode, args.noise), rng), args.out)


def cmd_kernel(args) -> None:
    if args.name:
        kernel = named_kernel(args.name)
    elif args.theta is not None and args.l1 is not None and args.l2 is not None:
        kernel = rasterize(KernelSpec(args.theta, args.l1, args.l2, size=args.size))
    else:
        raise UsageError("kernel: give --name or all of --theta, --l1, --l2")
    _print_settings(name=args.name, theta=args.theta, l1=args.l1, l2=args.l2, size=args.size, seed=args.seed)
    save_kernel_text(kernel, args.out)
    if args.png:
        k = kernel.weights
        write_png(k / k.max(), args.png)


def _pairs(ref: Path, test: Path) -> list[tuple[str, Path, Path]]:
    if ref.is_dir():
        out = []
        for r in sorted(ref.glob("*.png")):
            t = test / r.name
            if not t.exists():
                raise ValueError(f"no match for {r.name} in {test}")
            out.append((r.name, r, t))
        if not out:
            raise ValueError(f"no PNG files in {ref}")
        return out
    return [(ref.name, ref, test)]


def cmd_eval(args) -> None:
    border = args.scale if args.border is None else args.border
    _print_settings(ref=args.ref, test=args.test, border=border, seed=args.seed)
    rows = []
    for name, r, t in _pairs(args.ref, args.test):
        a, b = read_png(r), read_png(t)
        rows.append((name, psnr_y(b, a, border), ssim_y(b, a, border)))
    fh = open(args.out, "w", newline="") if args.out else sys.stdout
    try:
        w = csv.writer(fh)
        w.writerow(["image", "psnr", "ssim"])
        for name, p, s in rows:
            w.writerow([name, f"{p:.6f}", f"{s:.6f}"])
        w.writerow(["mean", f"{np.mean([r[1] for r in rows]):.6f}", f"{np.mean([r[2] for r in rows]):.6f}"])
    finally:
        if args.out:
            fh.close()


def cmd_probe(args) -> None:
    true_kernel = resolve_kernel(args.true_kernel)
    mode = _kernel_mode(true_kernel, args.mode)
    probes = {p: resolve_kernel(p) for p in args.probes}
    _print_settings(input=args.inp, hr=args.hr, true_kernel=args.true_kernel, probes=" ".join(args.probes),
                    mode=mode, scale=args.scale, steps=args.steps, alpha=args.alpha, seed=args.seed)
    params = load_checkpoint(args.ckpt)
    rows = mismatch_probe(read_png(args.inp), read_png(args.hr), true_kernel, probes, params, mode,
                          args.scale, args.steps, args.alpha)
    fh = open(args.out, "w", newline="") if args.out else sys.stdout
    try:
        w = csv.writer(fh)
        w.writerow(["probe", "psnr", "kernel_distance"])
        for r in rows:
            w.writerow([r.name, f"{r.psnr:.6f}", f"{r.kernel_distance:.6e}"])
    finally:
        if args.out:
            fh.close()


# ---------------------------------------------------------------- parser


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="mzsr", description="Meta-transfer learning for zero-shot super-resolution")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)

    def new(name, fn, help_):
        p = sub.add_parser(name, help=help_)
        p.set_defaults(func=fn)
        p.add_argument("--seed", type=int, default=None if name in ("pretrain", "meta-train") else 0)
        return p

    for name, fn, help_ in (
        ("pretrain", cmd_pretrain, "bicubic pretraining"),
        ("meta-train", cmd_meta_train, "meta-transfer learning"),
    ):
        p = new(name, fn, help_)
        _add_config_flags(p)
        p.set_defaults(cfg_seed=None)
        p.add_argument("--data", type=Path, nargs="+", help="PNG files or directories")
        p.add_argument("--synthetic", type=int, default=16, help="synthetic images when --data is absent")
        p.add_argument("--synthetic-size", type=int, default=96)
        p.add_argument("--init", type=Path, help="starting checkpoint")
        p.add_argument("--out", type=Path, required=True)
        p.add_argument("--log", type=Path, help="CSV loss log (default: stdout)")
        if name == "meta-train":
            p.add_argument("--checkpoint-dir", type=Path)

    p = new("meta-test", cmd_meta_test, "adapt to one LR image and super-resolve it")
    p.add_argument("--in", dest="inp", type=Path, required=True)
    p.add_argument("--kernel", required=True)
    p.add_argument("--mode", choices=("direct", "bicubic"))
    p.add_argument("--scale", type=int, default=2)
    p.add_argument("--ckpt", type=Path, required=True)
    p.add_argument("--steps", type=int, default=1)
    p.add_argument("--alpha", type=float, default=0.01)
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--trace", type=Path, help="CSV of per-step losses")

    p = new("degrade", cmd_degrade, "blur, subsample and add noise")
    p.add_argument("--in", dest="inp", type=Path, required=True)
    p.add_argument("--kernel", required=True)
    p.add_argument("--scale", type=int, default=2)
    p.add_argument("--mode", choices=("direct", "bicubic"))
    p.add_argument("--noise", type=float, default=0.0)
    p.add_argument("--out", type=Path, required=True)

    p = new("kernel", cmd_kernel, "write a blur kernel grid")
    p.add_argument("--name", choices=NAMED_KERNELS)
    p.add_argument("--theta", type=float)
    p.add_argument("--l1", type=float)
    p.add_argument("--l2", type=float)
    p.add_argument("--size", type=int, default=15)
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--png", type=Path)

    p = new("eval", cmd_eval, "PSNR/SSIM on the Y channel")
    p.add_argument("--ref", type=Path, required=True, help="ground-truth PNG or directory")
    p.add_argument("--test", type=Path, required=True, help="result PNG or directory")
    p.add_argument("--scale", type=int, default=2)
    p.add_argument("--border", type=int, help="crop in pixels (default: scale)")
    p.add_argument("--out", type=Path)

    p = new("probe", cmd_probe, "meta-test under several assumed kernels")
    p.add_argument("--in", dest="inp", type=Path, required=True)
    p.add_argument("--hr", type=Path, required=True)
    p.add_argument("--true-kernel", required=True)
    p.add_argument("--probes", nargs="*", default=[])
    p.add_argument("--mode", choices=("direct", "bicubic"))
    p.add_argument("--scale", type=int, default=2)
    p.add_argument("--ckpt", type=Path, required=True)
    p.add_argument("--steps", type=int, default=1)
    p.add_argument("--alpha", type=float, default=0.01)
    p.add_argument("--out", type=Path)
    return parser


def run_cli(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command is None:
            raise UsageError(parser.format_usage())
        if args.command in ("pretrain", "meta-train") and args.seed is not None:
            args.cfg_seed = args.seed
        args.func(args)
    except UsageError as exc:
        print(str(exc).rstrip(), file=sys.stderr)
        return 1
    except (ValueError, KeyError, OSError, CheckpointError) as exc:
        print(f"mzsr: error: {exc}", file=sys.stderr)
        return 2
    return 0


def main() -> None:
    sys.exit(run_cli())
