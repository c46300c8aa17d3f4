"""Toy end-to-end experiment: full model vs. all-modules-off on synthetic unpaired pools.

Writes the toy dataset, trains both variants with the same seed and prints
held-out PSNR/SSIM against the hazy-input baseline.

    python scripts/toy_train.py --out runs/toy --iters 2000
"""
import argparse
import logging
import time
from pathlib import Path

import numpy as np

from hazekit.config import toy_config
from hazekit.dataio import list_pngs, load_image, unpaired_pools
from hazekit.metrics import psnr, ssim
from hazekit.toydata import write_toy_dataset
from hazekit.training import evaluate, train_loop

VARIANTS = {
    "V1": dict(use_kan_cid=False, use_idrm=False, use_drem=False),
    "V2": dict(use_idrm=False),
    "V3": dict(use_drem=False),
    "V4": dict(use_kan_cid=False),
    "V5": dict(),
}


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--out", type=Path, default=Path("runs/toy"))
    ap.add_argument("--iters", type=int, default=2000)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--variants", nargs="+", default=["V5", "V1"], choices=sorted(VARIANTS))
    args = ap.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(asctime)s %(message)s")

    dirs = write_toy_dataset(args.out / "data", seed=args.seed)
    val = [(load_image(h), load_image(c)) for h, c in zip(list_pngs(dirs["val_hazy"]), list_pngs(dirs["val_clean"]))]
    base_p = np.mean([psnr(h, c) for h, c in val])
    base_s = np.mean([ssim(h, c) for h, c in val])
    print(f"hazy input       PSNR {base_p:.2f}  SSIM {base_s:.3f}")
    for name in args.variants:
        cfg = toy_config(iterations=args.iters, seed=args.seed, **VARIANTS[name])
        batches = unpaired_pools(dirs["hazy"], dirs["clean"], cfg.crop, cfg.seed, cfg.batch_size)
        t0 = time.time()
        result = train_loop(cfg, batches, val, args.out / name, args.out / f"{name}_trace.txt")
        p, s = evaluate(result.gen, val)
        print(f"{name} ({time.time() - t0:6.0f}s)  PSNR {p:.2f}  SSIM {s:.3f}  gain {p - base_p:+.2f} dB")


if __name__ == "__main__":
    main()
