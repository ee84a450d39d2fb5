#!/usr/bin/env python3
"""Build small MNIST IDX files from the digits bundled in the npm `mnist` package.

The package ships 10 000 MNIST digits as JSON (pixel values x/255 rounded to
three decimals). This script restores the u8 pixels, shuffles with a fixed
seed, and writes gzip-compressed IDX files:

    train-images-idx3-ubyte.gz  train-labels-idx1-ubyte.gz
    t10k-images-idx3-ubyte.gz   t10k-labels-idx1-ubyte.gz

Usage:
    npm pack mnist@1.1.0 && tar xzf mnist-1.1.0.tgz
    tools/make_mnist_subset.py package/src/digits data/mnist-subset
"""
import argparse
import gzip
import json
import pathlib
import random
import struct


def write_idx(path, magic, dims, payload):
    header = struct.pack(">I", magic) + b"".join(struct.pack(">I", d) for d in dims)
    # mtime=0 keeps the archives byte-reproducible
    with open(path, "wb") as raw, gzip.GzipFile(fileobj=raw, mode="wb", mtime=0, filename="") as gz:
        gz.write(header + bytes(payload))


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("digits_dir")
    ap.add_argument("out_dir")
    ap.add_argument("--train", type=int, default=6000)
    ap.add_argument("--test", type=int, default=1000)
    ap.add_argument("--seed", type=int, default=20240517)
    args = ap.parse_args()

    samples = []
    for label in range(10):
        flat = json.load(open(pathlib.Path(args.digits_dir) / f"{label}.json"))["data"]
        assert len(flat) % 784 == 0
        for k in range(len(flat) // 784):
            pix = [min(255, max(0, round(v * 255))) for v in flat[k * 784:(k + 1) * 784]]
            samples.append((pix, label))

    random.Random(args.seed).shuffle(samples)
    need = args.train + args.test
    if need > len(samples):
        raise SystemExit(f"only {len(samples)} samples available")

    out = pathlib.Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for name, part in (("train", samples[:args.train]), ("t10k", samples[args.train:need])):
        images = [p for pix, _ in part for p in pix]
        labels = [lab for _, lab in part]
        write_idx(out / f"{name}-images-idx3-ubyte.gz", 0x803, (len(part), 28, 28), images)
        write_idx(out / f"{name}-labels-idx1-ubyte.gz", 0x801, (len(part),), labels)
        print(f"{name}: {len(part)} samples")


if __name__ == "__main__":
    main()
