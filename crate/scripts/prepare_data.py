#!/usr/bin/env python3
"""Fetch and convert the datasets used by the test suite into data/.

MUTAG comes from the TU files bundled with the grakel wheel. The MNIST
subset is built from the digits shipped in the npm `mnist` package:
500 training and 100 test images per class, written as IDX files.

Needs `pip` and `npm` on PATH (or pass already downloaded archives).
"""

import argparse
import json
import random
import struct
import subprocess
import tarfile
import tempfile
import zipfile
from pathlib import Path

GRAKEL = "grakel==0.1.11"
MNIST_NPM = "mnist@1.1.0"
SEED = 20170412
TRAIN_PER_CLASS = 500
TEST_PER_CLASS = 100


def fetch_wheel(work: Path) -> Path:
    subprocess.run(
        ["pip", "download", "--no-deps", "--only-binary=:all:", "-q", GRAKEL, "-d", str(work)],
        check=True,
    )
    return next(work.glob("grakel-*.whl"))


def fetch_npm(work: Path) -> Path:
    out = subprocess.run(["npm", "pack", MNIST_NPM], cwd=work, check=True, capture_output=True, text=True)
    return work / out.stdout.strip().splitlines()[-1]


def write_mutag(wheel: Path, dest: Path) -> None:
    dest.mkdir(parents=True, exist_ok=True)
    prefix = "grakel/tests/data/MUTAG/"
    with zipfile.ZipFile(wheel) as z:
        for name in z.namelist():
            if name.startswith(prefix) and not name.endswith("/"):
                (dest / name[len(prefix):]).write_bytes(z.read(name))


def write_idx(dest: Path, prefix: str, items) -> None:
    with open(dest / f"{prefix}-images-idx3-ubyte", "wb") as f:
        f.write(struct.pack(">IIII", 2051, len(items), 28, 28))
        for image, _ in items:
            f.write(bytes(min(255, max(0, round(v * 255))) for v in image))
    with open(dest / f"{prefix}-labels-idx1-ubyte", "wb") as f:
        f.write(struct.pack(">II", 2049, len(items)))
        f.write(bytes(label for _, label in items))


def write_mnist(tarball: Path, dest: Path) -> None:
    dest.mkdir(parents=True, exist_ok=True)
    rng = random.Random(SEED)
    train, test = [], []
    with tarfile.open(tarball) as tar:
        for digit in range(10):
            values = json.load(tar.extractfile(f"package/src/digits/{digit}.json"))["data"]
            images = [values[i:i + 784] for i in range(0, len(values), 784)]
            rng.shuffle(images)
            train += [(im, digit) for im in images[:TRAIN_PER_CLASS]]
            test += [(im, digit) for im in images[TRAIN_PER_CLASS:TRAIN_PER_CLASS + TEST_PER_CLASS]]
    rng.shuffle(train)
    rng.shuffle(test)
    write_idx(dest, "train", train)
    write_idx(dest, "t10k", test)


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--out", type=Path, default=Path(__file__).resolve().parent.parent / "data")
    parser.add_argument("--wheel", type=Path, help="local grakel wheel")
    parser.add_argument("--npm-tarball", type=Path, help="local mnist npm tarball")
    args = parser.parse_args()
    with tempfile.TemporaryDirectory() as tmp:
        work = Path(tmp)
        write_mutag(args.wheel or fetch_wheel(work), args.out / "MUTAG")
        write_mnist(args.npm_tarball or fetch_npm(work), args.out / "mnist")
    print(f"wrote {args.out / 'MUTAG'} and {args.out / 'mnist'}")


if __name__ == "__main__":
    main()
