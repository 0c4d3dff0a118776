#!/usr/bin/env python3
"""Convert the digits bundled in the npm `mnist` package into gzipped IDX files.

The package ships 10,000 MNIST digits as normalized JSON arrays. This script
quantizes them back to bytes, shuffles them with a fixed seed, and writes an
8,000 / 2,000 train/test split in the canonical IDX layout:

    npm pack mnist && tar xzf mnist-*.tgz
    python3 tools/prepare_mnist.py package/src/digits data/mnist

Real MNIST IDX files (train-images-idx3-ubyte, ...) can be used instead; the
loader accepts both raw and gzipped files.
"""
import argparse
import gzip
import json
import random
import struct
from pathlib import Path


def write_images(path, images, rows=28, cols=28):
    with gzip.GzipFile(path, "wb", mtime=0) as f:
        f.write(struct.pack(">IIII", 0x00000803, len(images), rows, cols))
        for img in images:
            f.write(bytes(img))


def write_labels(path, labels):
    with gzip.GzipFile(path, "wb", mtime=0) as f:
        f.write(struct.pack(">II", 0x00000801, len(labels)))
        f.write(bytes(labels))


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("digits_dir", type=Path)
    ap.add_argument("out_dir", type=Path)
    ap.add_argument("--train", type=int, default=8000)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    samples = []
    for digit in range(10):
        data = json.loads((args.digits_dir / f"{digit}.json").read_text())["data"]
        for k in range(len(data) // 784):
            pixels = [min(255, max(0, round(v * 255))) for v in data[k * 784:(k + 1) * 784]]
            samples.append((pixels, digit))

    random.Random(args.seed).shuffle(samples)
    train, test = samples[:args.train], samples[args.train:]
    args.out_dir.mkdir(parents=True, exist_ok=True)
    for name, part in (("train", train), ("t10k", test)):
        write_images(args.out_dir / f"{name}-images-idx3-ubyte.gz", [s[0] for s in part])
        write_labels(args.out_dir / f"{name}-labels-idx1-ubyte.gz", [s[1] for s in part])
    print(f"wrote {len(train)} train / {len(test)} test examples to {args.out_dir}")


if __name__ == "__main__":
    main()
