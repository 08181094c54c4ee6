#!/usr/bin/env python3
"""Convert the digits bundled with the npm `mnist` package (v1.1.0) into
gzipped IDX files under data/mnist-sample/.

Usage: npm pack mnist && tar xzf mnist-1.1.0.tgz && \
       python3 scripts/make_mnist_sample.py package/src/digits data/mnist-sample
"""
import gzip
import json
import random
import struct
import sys


def main(src, out):
    imgs, labs = [], []
    for d in range(10):
        with open(f"{src}/{d}.json") as fh:
            px = json.load(fh)["data"]
        for i in range(len(px) // 784):
            row = px[i * 784:(i + 1) * 784]
            imgs.append(bytes(max(0, min(255, round(v * 255))) for v in row))
            labs.append(d)
    order = list(range(len(labs)))
    random.Random(20240601).shuffle(order)

    def write(name, ids):
        with gzip.GzipFile(f"{out}/{name}-images-idx3-ubyte.gz", "wb", mtime=0) as f:
            f.write(struct.pack(">IIII", 0x803, len(ids), 28, 28))
            for i in ids:
                f.write(imgs[i])
        with gzip.GzipFile(f"{out}/{name}-labels-idx1-ubyte.gz", "wb", mtime=0) as f:
            f.write(struct.pack(">II", 0x801, len(ids)))
            f.write(bytes(labs[i] for i in ids))

    write("train", order[:8000])
    write("t10k", order[8000:])


if __name__ == "__main__":
    main(sys.argv[1], sys.argv[2])
