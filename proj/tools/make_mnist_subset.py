#!/usr/bin/env python3
"""Build the MNIST subset shipped in data/mnist-subset/.

Source: the `mnist` npm package (MIT, 10k MNIST digits stored as JSON arrays of
pixel/255 rounded to 3 decimals). Fetch it with `npm pack mnist`, unpack, and
point this script at the `package/` directory.

Digits are pooled, shuffled with a fixed seed and split into disjoint train and
test sets written in IDX format.
"""
import argparse
import json
import random
import struct
from pathlib import Path


def write_idx_images(path, images, rows=28, cols=28):
    with open(path, "wb") as f:
        f.write(struct.pack(">IIII", 0x00000803, len(images), rows, cols))
        for img in images:
            f.write(bytes(img))


def write_idx_labels(path, labels):
    with open(path, "wb") as f:
        f.write(struct.pack(">II", 0x00000801, len(labels)))
        f.write(bytes(labels))


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("package_dir", type=Path)
    ap.add_argument("out_dir", type=Path)
    ap.add_argument("--train", type=int, default=5000)
    ap.add_argument("--test", type=int, default=2000)
    ap.add_argument("--seed", type=int, default=20241)
    args = ap.parse_args()

    pool = []
    for digit in range(10):
        raw = json.loads((args.package_dir / "src" / "digits" / f"{digit}.json").read_text())["data"]
        count = len(raw) // 784
        for i in range(count):
            px = [min(255, max(0, round(v * 255))) for v in raw[i * 784:(i + 1) * 784]]
            pool.append((px, digit))

    random.Random(args.seed).shuffle(pool)
    if args.train + args.test > len(pool):
        raise SystemExit(f"only {len(pool)} digits available")
    train = pool[:args.train]
    test = pool[args.train:args.train + args.test]

    args.out_dir.mkdir(parents=True, exist_ok=True)
    write_idx_images(args.out_dir / "train-images-idx3-ubyte", [p for p, _ in train])
    write_idx_labels(args.out_dir / "train-labels-idx1-ubyte", [y for _, y in train])
    write_idx_images(args.out_dir / "test-images-idx3-ubyte", [p for p, _ in test])
    write_idx_labels(args.out_dir / "test-labels-idx1-ubyte", [y for _, y in test])
    print(f"wrote {len(train)} train / {len(test)} test digits to {args.out_dir}")


if __name__ == "__main__":
    main()
