#!/usr/bin/env python3
"""Full-scale overlay benchmark: 120k/10k/10k composed samples, three trainers.

Needs the published IDX files (train-images-idx3-ubyte, train-labels-idx1-ubyte,
t10k-images-idx3-ubyte, t10k-labels-idx1-ubyte) in --mnist-dir and, for the
fashion variants, in --fashion-dir. Each run takes hours on one core.

    scripts/reproduce_overlay.py --mtl build/mtl --mnist-dir ~/data/mnist --work runs/full
"""

import argparse
import json
import subprocess
import sys
from pathlib import Path

# Test accuracy (%) per (variant, trainer): task 1, task 2.
REFERENCE = {
    ("mnist", "ordinary"): (91.63, 89.67),
    ("mnist", "split-only"): (91.52, 89.52),
    ("mnist", "proposed"): (92.30, 90.38),
    ("fashion", "ordinary"): (81.97, 81.25),
    ("fashion", "split-only"): (81.88, 81.36),
    ("fashion", "proposed"): (82.41, 81.78),
    ("fashion+mnist", "ordinary"): (93.52, 83.84),
    ("fashion+mnist", "split-only"): (93.01, 83.67),
    ("fashion+mnist", "proposed"): (93.56, 84.28),
}
TOLERANCE = 1.5


def idx_lists(root):
    root = Path(root)
    images = [root / "train-images-idx3-ubyte", root / "t10k-images-idx3-ubyte"]
    labels = [root / "train-labels-idx1-ubyte", root / "t10k-labels-idx1-ubyte"]
    for p in images + labels:
        if not p.exists():
            sys.exit(f"missing {p}")
    return ",".join(map(str, images)), ",".join(map(str, labels))


def config_text(trainer, a, b, out_dir, seed, cache):
    lines = [
        f"trainer = {trainer}",
        "alpha = 0.001",
        "beta = 0.001",
        "head_step_size = 0.001",
        "batch_size = 256",
        f"seed = {seed}",
        "dataset = idx",
        f"source_a_images = {a[0]}",
        f"source_a_labels = {a[1]}",
        "train_size = 120000",
        "val_size = 10000",
        "test_size = 10000",
        "epochs = 100",
        "patience = 10",
        f"out_dir = {out_dir}",
    ]
    if b is not None:
        lines += [f"source_b_images = {b[0]}", f"source_b_labels = {b[1]}"]
    if cache:
        lines.append(f"cache_dir = {cache}")
    return "\n".join(lines) + "\n"


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--mtl", default="build/mtl")
    ap.add_argument("--mnist-dir")
    ap.add_argument("--fashion-dir")
    ap.add_argument("--work", default="runs/full")
    ap.add_argument("--cache")
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--trainers", default="ordinary,split-only,proposed")
    args = ap.parse_args()

    variants = []
    if args.mnist_dir:
        variants.append(("mnist", idx_lists(args.mnist_dir), None))
    if args.fashion_dir:
        variants.append(("fashion", idx_lists(args.fashion_dir), None))
    if args.mnist_dir and args.fashion_dir:
        variants.append(("fashion+mnist", idx_lists(args.fashion_dir), idx_lists(args.mnist_dir)))
    if not variants:
        sys.exit("give --mnist-dir and/or --fashion-dir")

    work = Path(args.work)
    work.mkdir(parents=True, exist_ok=True)
    failures = 0
    for name, a, b in variants:
        for trainer in args.trainers.split(","):
            run = work / f"{name.replace('+', '_')}_{trainer}"
            cfg = work / f"{run.name}.cfg"
            cfg.write_text(config_text(trainer, a, b, run, args.seed, args.cache))
            resume = ["--resume"] if (run / "RUNNING").exists() else []
            code = subprocess.call([args.mtl, "train", "--config", str(cfg), *resume])
            if code != 0:
                print(f"{name} {trainer}: exit {code}")
                failures += 1
                continue
            acc = json.loads((run / "summary.json").read_text())["reports"]["test"]["accuracy"]
            ref = REFERENCE[(name, trainer)]
            ok = all(abs(x - r) <= TOLERANCE for x, r in zip(acc, ref))
            failures += not ok
            print(f"{name:14s} {trainer:10s} {acc[0]:6.2f} {acc[1]:6.2f}   reference {ref[0]:.2f} {ref[1]:.2f}   "
                  f"{'ok' if ok else 'outside tolerance'}")
    return 1 if failures else 0


if __name__ == "__main__":
    sys.exit(main())
