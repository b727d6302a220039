"""Convert the 5,000-digit MNIST subset bundled with mlxtend into gzipped IDX files.

Usage: pip download mlxtend --no-deps -d /tmp/w && python3 scripts/make_mnist5k.py /tmp/w/mlxtend-*.whl data/mnist5k

Each class contributes its first 400 rows to the train files and the remaining
100 rows to the t10k files. Output names follow the standard MNIST layout.
"""
import gzip
import struct
import sys
import zipfile
from pathlib import Path

import numpy as np


def write_idx(path, magic, dims, payload):
    header = struct.pack(">I", magic) + b"".join(struct.pack(">I", d) for d in dims)
    with gzip.GzipFile(path, "wb", mtime=0) as f:
        f.write(header + payload.astype(np.uint8).tobytes())


def main(wheel, out):
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    raw = gzip.decompress(zipfile.ZipFile(wheel).read("mlxtend/data/data/mnist_5k.csv.gz"))
    rows = np.array([l.split(b",") for l in raw.strip().split(b"\n")], dtype=np.int64)
    pixels, labels = rows[:, :784], rows[:, 784]
    train, test = [], []
    for c in range(10):
        idx = np.flatnonzero(labels == c)
        train.extend(idx[:400])
        test.extend(idx[400:])
    for prefix, sel in (("train", train), ("t10k", test)):
        sel = np.array(sel)
        write_idx(out / f"{prefix}-images-idx3-ubyte.gz", 0x803, (len(sel), 28, 28), pixels[sel])
        write_idx(out / f"{prefix}-labels-idx1-ubyte.gz", 0x801, (len(sel),), labels[sel])


if __name__ == "__main__":
    main(sys.argv[1], sys.argv[2])
