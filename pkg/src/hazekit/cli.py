"""Command-line entry points: synth, train, dehaze, eval, fit-inr.

Exit codes: 0 success, 1 runtime failure, 2 usage or configuration error.
"""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from . import config as config_mod
from .checkpoint import CheckpointError
from .dataio import ConfigurationError, generate_synthetic_set, list_pngs, load_image, save_image, unpaired_pools
from .inr import InrConfig, fit_image
from .metrics import psnr, ssim

log = logging.getLogger("hazekit")


def cmd_synth(args) -> int:
    entries = generate_synthetic_set(
        args.clean_dir, args.out_dir, args.count, args.seed,
        (args.beta_min, args.beta_max), (args.a_min, args.a_max),
    )
    print(f"wrote {len(entries)} hazy images to {args.out_dir}")
    return 0


def cmd_train(args) -> int:
    from .training import train_loop

    cfg = config_mod.load(args.config) if args.config else config_mod.TrainConfig()
    if args.iters is not None:
        cfg.iterations = args.iters
    if args.seed is not None:
        cfg.seed = args.seed
    if args.no_kan_cid:
        cfg.net.use_kan_cid = False
    if args.no_idrm:
        cfg.net.use_idrm = False
    if args.no_drem:
        cfg.net.use_drem = False
    batches = unpaired_pools(args.hazy_dir, args.clean_dir, cfg.crop, cfg.seed, cfg.batch_size)
    val = None
    if args.val_hazy_dir and args.val_clean_dir:
        val = [(load_image(h), load_image(c)) for h, c in _pair_dirs(args.val_hazy_dir, args.val_clean_dir)[0]]
    out = Path(args.out_ckpt)
    out.parent.mkdir(parents=True, exist_ok=True)
    from . import checkpoint

    def sink(it, result):
        target = out if it == cfg.iterations else out.with_name(f"{out.stem}_iter{it:07d}{out.suffix}")
        checkpoint.save(target, cfg, result.modules())

    trace = args.trace or out.with_suffix(".trace.txt")
    Path(trace).write_text("")
    train_loop(cfg, batches, val, sink, trace)
    print(f"saved checkpoint {out}")
    return 0


def cmd_dehaze(args) -> int:
    from .network import dehaze_image
    from .training import load_generator

    gen, _ = load_generator(args.ckpt)
    files = list_pngs(args.in_dir)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    for f in files:
        img = load_image(f)
        clean, t, _ = dehaze_image(gen, img)
        save_image(clean, out_dir / f.name)
        if args.dump_t:
            save_image(t, out_dir / f"{f.stem}_t.png")
    print(f"dehazed {len(files)} images into {out_dir}")
    return 0


def _pair_dirs(a_dir, b_dir):
    a = {p.name: p for p in list_pngs(a_dir)}
    b = {p.name: p for p in list_pngs(b_dir)}
    common = sorted(a.keys() & b.keys())
    unmatched = sorted(a.keys() ^ b.keys())
    return [(a[n], b[n]) for n in common], unmatched


def cmd_eval(args) -> int:
    pairs, unmatched = _pair_dirs(args.restored_dir, args.reference_dir)
    for name in unmatched:
        log.warning("no counterpart for %s; skipped", name)
    if not pairs:
        print("error: no filenames in common between the two directories", file=sys.stderr)
        return 1
    ps, ss = [], []
    for restored, ref in pairs:
        p = psnr(load_image(restored), load_image(ref))
        s = ssim(load_image(restored), load_image(ref))
        ps.append(p)
        ss.append(s)
        print(f"{restored.name}  PSNR {p:.2f}  SSIM {s:.2f}")
    print(f"mean ({len(pairs)} images, {len(unmatched)} unmatched)  PSNR {np.mean(ps):.2f}  SSIM {np.mean(ss):.2f}")
    return 0


def cmd_fit_inr(args) -> int:
    target = load_image(args.image)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    trace = args.trace or out.with_suffix(".loss.txt")
    with open(trace, "w") as fh:
        result = fit_image(
            target, InrConfig(L=args.L), args.iters, args.lr, args.seed,
            callback=lambda it, loss: fh.write(f"{it + 1}, mse, {loss:.9g}\n"),
        )
    save_image(result.reconstruction, out)
    print(f"PSNR {psnr(result.reconstruction, target):.2f} dB after {args.iters} iterations; wrote {out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="hazekit", description="Unpaired image dehazing toolkit.")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="synthesise hazy images from clean PNGs")
    p.add_argument("--clean-dir", required=True)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--count", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--beta-min", type=float, default=0.4)
    p.add_argument("--beta-max", type=float, default=1.2)
    p.add_argument("--a-min", type=float, default=0.7)
    p.add_argument("--a-max", type=float, default=1.0)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("train", help="train a generator on unpaired hazy/clean folders")
    p.add_argument("--hazy-dir", required=True)
    p.add_argument("--clean-dir", required=True)
    p.add_argument("--out-ckpt", required=True)
    p.add_argument("--config", help="key = value config file")
    p.add_argument("--iters", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--val-hazy-dir")
    p.add_argument("--val-clean-dir")
    p.add_argument("--trace", help="metrics trace path (default: <out-ckpt>.trace.txt)")
    p.add_argument("--no-kan-cid", action="store_true")
    p.add_argument("--no-idrm", action="store_true")
    p.add_argument("--no-drem", action="store_true")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("dehaze", help="dehaze every PNG in a folder")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--in-dir", required=True)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--dump-t", action="store_true", help="also write transmission maps as <name>_t.png")
    p.set_defaults(func=cmd_dehaze)

    p = sub.add_parser("eval", help="PSNR/SSIM between same-named PNGs in two folders")
    p.add_argument("--restored-dir", required=True)
    p.add_argument("--reference-dir", required=True)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("fit-inr", help="fit a coordinate MLP to one image")
    p.add_argument("--image", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--iters", type=int, default=2000)
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--L", type=int, default=4)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--trace", help="loss trace path (default: <out>.loss.txt)")
    p.set_defaults(func=cmd_fit_inr)
    return ap


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except (config_mod.ConfigError, ConfigurationError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except (CheckpointError, OSError, ValueError, RuntimeError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
