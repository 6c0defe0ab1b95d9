#!/usr/bin/env python3
"""Write a 5,000-image MNIST subset as IDX files.

The images come from the `mnist_5k.csv.gz` sample bundled with the mlxtend
wheel (500 images per digit). They are shuffled with a fixed seed and split
into 4,500 training and 500 test images.

    pip download mlxtend --no-deps -d /tmp/mlx
    python3 scripts/mnist_subset.py /tmp/mlx/mlxtend-*.whl data/mnist-5k
"""
import gzip
import io
import struct
import sys
import zipfile
from pathlib import Path

import numpy as np


def write_idx(path, images, labels, prefix):
    with open(path / f"{prefix}-images-idx3-ubyte", "wb") as f:
        f.write(struct.pack(">IIII", 0x00000803, len(images), 28, 28))
        f.write(images.astype(np.uint8).tobytes())
    with open(path / f"{prefix}-labels-idx1-ubyte", "wb") as f:
        f.write(struct.pack(">II", 0x00000801, len(labels)))
        f.write(labels.astype(np.uint8).tobytes())


def main():
    wheel, out = sys.argv[1], Path(sys.argv[2])
    out.mkdir(parents=True, exist_ok=True)
    with zipfile.ZipFile(wheel) as z:
        raw = z.read("mlxtend/data/data/mnist_5k.csv.gz")
    table = np.loadtxt(io.TextIOWrapper(gzip.GzipFile(fileobj=io.BytesIO(raw))), delimiter=",")
    images, labels = table[:, :-1], table[:, -1]
    order = np.random.RandomState(0).permutation(len(labels))
    images, labels = images[order], labels[order]
    write_idx(out, images[:4500], labels[:4500], "train")
    write_idx(out, images[4500:], labels[4500:], "t10k")


if __name__ == "__main__":
    main()
