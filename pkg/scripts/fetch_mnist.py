#!/usr/bin/env python3
"""Fetch MNIST and write the four canonical IDX files (gzip-compressed).

Sources, tried in order:
  1. local parquet files given via --train-parquet/--test-parquet
  2. the HuggingFace-hosted parquet copies of MNIST, downloaded from
     $MNIST_HF_BASE (default https://huggingface.co), which may point at a
     mirror such as an Artifactory remote repo.

Output: train-images-idx3-ubyte.gz, train-labels-idx1-ubyte.gz,
t10k-images-idx3-ubyte.gz, t10k-labels-idx1-ubyte.gz under --out.
"""

import argparse
import gzip
import io
import os
import struct
import sys
import urllib.request

import numpy as np

PARQUET_PATHS = {
    "train": "datasets/ylecun/mnist/resolve/main/mnist/train-00000-of-00001.parquet",
    "test": "datasets/ylecun/mnist/resolve/main/mnist/test-00000-of-00001.parquet",
}
EXPECTED_COUNTS = {"train": 60000, "test": 10000}
OUT_NAMES = {
    "train": ("train-images-idx3-ubyte.gz", "train-labels-idx1-ubyte.gz"),
    "test": ("t10k-images-idx3-ubyte.gz", "t10k-labels-idx1-ubyte.gz"),
}


def download(url, dest):
    print(f"downloading {url}")
    with urllib.request.urlopen(url, timeout=120) as resp, open(dest, "wb") as f:
        f.write(resp.read())


def decode_parquet(path):
    import polars as pl
    from PIL import Image

    df = pl.read_parquet(path)
    images = np.zeros((len(df), 28, 28), dtype=np.uint8)
    for i, cell in enumerate(df["image"]):
        png = cell["bytes"]
        img = Image.open(io.BytesIO(png))
        images[i] = np.asarray(img, dtype=np.uint8)
    labels = df["label"].to_numpy().astype(np.uint8)
    return images, labels


def write_idx(out_dir, split, images, labels):
    n = images.shape[0]
    if n != EXPECTED_COUNTS[split]:
        raise SystemExit(f"{split}: expected {EXPECTED_COUNTS[split]} examples, got {n}")
    img_name, lbl_name = OUT_NAMES[split]
    header = struct.pack(">iiii", 0x803, n, 28, 28)
    with gzip.open(os.path.join(out_dir, img_name), "wb", compresslevel=6) as f:
        f.write(header + images.tobytes())
    with gzip.open(os.path.join(out_dir, lbl_name), "wb", compresslevel=6) as f:
        f.write(struct.pack(">ii", 0x801, n) + labels.tobytes())
    print(f"wrote {img_name} / {lbl_name} ({n} examples)")


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", default="data/mnist")
    ap.add_argument("--train-parquet")
    ap.add_argument("--test-parquet")
    args = ap.parse_args()

    os.makedirs(args.out, exist_ok=True)
    base = os.environ.get("MNIST_HF_BASE", "https://huggingface.co").rstrip("/")
    local = {"train": args.train_parquet, "test": args.test_parquet}
    for split in ("train", "test"):
        path = local[split]
        if not path:
            path = os.path.join(args.out, f"{split}.parquet")
            if not os.path.exists(path):
                download(f"{base}/{PARQUET_PATHS[split]}", path)
        images, labels = decode_parquet(path)
        write_idx(args.out, split, images, labels)
    print("done")


if __name__ == "__main__":
    sys.exit(main())
