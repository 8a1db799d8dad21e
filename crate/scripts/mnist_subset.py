#!/usr/bin/env python3
"""Convert the 10,000 MNIST digits bundled in the `mnist` npm package into
gzipped IDX files (8,000 train / 2,000 test).

usage: mnist_subset.py <unpacked npm package dir> <output dir>

The npm package stores pixels as decimals rounded to three places; since
1/255 > 0.001 the original bytes are recovered exactly by round(v * 255).
"""
import gzip
import json
import os
import random
import struct
import sys

SIDE = 28
N_TRAIN = 8000


def write_idx(path, magic, dims, payload):
    header = struct.pack(">I", magic) + b"".join(struct.pack(">I", d) for d in dims)
    with open(path, "wb") as raw:
        # mtime=0 keeps the output byte-identical across runs
        with gzip.GzipFile(fileobj=raw, mode="wb", mtime=0, filename="") as gz:
            gz.write(header + payload)


def main():
    pkg, out = sys.argv[1], sys.argv[2]
    samples = []
    for digit in range(10):
        with open(os.path.join(pkg, "src", "digits", f"{digit}.json")) as f:
            data = json.load(f)["data"]
        n = len(data) // (SIDE * SIDE)
        for i in range(n):
            px = data[i * SIDE * SIDE:(i + 1) * SIDE * SIDE]
            samples.append((digit, bytes(int(round(v * 255)) for v in px)))

    random.Random(0).shuffle(samples)
    splits = {"train": samples[:N_TRAIN], "t10k": samples[N_TRAIN:]}
    os.makedirs(out, exist_ok=True)
    for name, rows in splits.items():
        write_idx(os.path.join(out, f"{name}-images-idx3-ubyte.gz"), 2051,
                  [len(rows), SIDE, SIDE], b"".join(px for _, px in rows))
        write_idx(os.path.join(out, f"{name}-labels-idx1-ubyte.gz"), 2049,
                  [len(rows)], bytes(d for d, _ in rows))
        print(name, len(rows))


if __name__ == "__main__":
    main()
