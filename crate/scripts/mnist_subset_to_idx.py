#!/usr/bin/env python3
"""Convert the 10,000 digits bundled with the npm `mnist` package into IDX files.

Usage:
    npm pack mnist && tar xzf mnist-*.tgz
    python3 scripts/mnist_subset_to_idx.py package/src/digits data/mnist-subset

The package stores each digit class as a flat list of 28x28 intensities in
[0, 1] quantized to multiples of 1/255 (rounded to three decimals). Pixels are
mapped back to bytes with round(v * 255). Samples are interleaved with a fixed
permutation so that any prefix is roughly class balanced.
"""
import json
import random
import struct
import sys
from pathlib import Path

ROWS = COLS = 28


def main(src: Path, dst: Path) -> None:
    samples = []
    for digit in range(10):
        data = json.loads((src / f"{digit}.json").read_text())["data"]
        assert len(data) % (ROWS * COLS) == 0
        for start in range(0, len(data), ROWS * COLS):
            pixels = bytes(
                min(255, max(0, round(v * 255))) for v in data[start : start + ROWS * COLS]
            )
            samples.append((pixels, digit))
    random.Random(0).shuffle(samples)

    dst.mkdir(parents=True, exist_ok=True)
    with open(dst / "images-idx3-ubyte", "wb") as f:
        f.write(struct.pack(">IIII", 0x00000803, len(samples), ROWS, COLS))
        for pixels, _ in samples:
            f.write(pixels)
    with open(dst / "labels-idx1-ubyte", "wb") as f:
        f.write(struct.pack(">II", 0x00000801, len(samples)))
        f.write(bytes(label for _, label in samples))
    print(f"wrote {len(samples)} samples to {dst}")


if __name__ == "__main__":
    main(Path(sys.argv[1]), Path(sys.argv[2]))
