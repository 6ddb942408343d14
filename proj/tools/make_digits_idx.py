#!/usr/bin/env python3
"""Regenerate data/digits: the scikit-learn handwritten digits (1797 8x8
images) exported as IDX files, the same container format as MNIST.

The split is deterministic: a fixed-seed permutation followed by an 80/20
train/test cut.
"""
import struct
import sys
from pathlib import Path

import numpy as np
from sklearn.datasets import load_digits


def write_idx_images(path: Path, images: np.ndarray) -> None:
    n, h, w = images.shape
    with open(path, "wb") as f:
        f.write(struct.pack(">IIII", 0x00000803, n, h, w))
        f.write(images.astype(np.uint8).tobytes())


def write_idx_labels(path: Path, labels: np.ndarray) -> None:
    with open(path, "wb") as f:
        f.write(struct.pack(">II", 0x00000801, len(labels)))
        f.write(labels.astype(np.uint8).tobytes())


def main() -> None:
    out_dir = Path(sys.argv[1]) if len(sys.argv) > 1 else Path("data/digits")
    out_dir.mkdir(parents=True, exist_ok=True)

    digits = load_digits()
    # Pixels come in 0..16; rescale to the 0..255 byte range of IDX images.
    images = np.round(digits.images * 255.0 / 16.0).astype(np.uint8)
    labels = digits.target.astype(np.uint8)

    rng = np.random.RandomState(0)
    order = rng.permutation(len(labels))
    images, labels = images[order], labels[order]

    n_test = len(labels) // 5
    test_imgs, test_labels = images[:n_test], labels[:n_test]
    train_imgs, train_labels = images[n_test:], labels[n_test:]

    write_idx_images(out_dir / "train-images-idx3-ubyte", train_imgs)
    write_idx_labels(out_dir / "train-labels-idx1-ubyte", train_labels)
    write_idx_images(out_dir / "t10k-images-idx3-ubyte", test_imgs)
    write_idx_labels(out_dir / "t10k-labels-idx1-ubyte", test_labels)
    print(f"wrote {len(train_labels)} train / {len(test_labels)} test samples to {out_dir}")


if __name__ == "__main__":
    main()
