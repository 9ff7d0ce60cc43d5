"""Convert a local CIFAR-10 python-pickle directory to ANCT stores.

Expects the standard ``data_batch_1..5`` and ``test_batch`` files from the
python version of the dataset; nothing is downloaded.

    python scripts/convert_cifar10.py --src cifar-10-batches-py --out data/
"""

import argparse
import pickle
from pathlib import Path

import numpy as np

from adanca.data import save_dataset


def read_batch(path: Path) -> tuple[np.ndarray, np.ndarray]:
    with open(path, "rb") as fh:
        d = pickle.load(fh, encoding="bytes")
    images = np.asarray(d[b"data"], dtype=np.uint8).reshape(-1, 3, 32, 32)
    return images, np.asarray(d[b"labels"], dtype=np.int64)


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--src", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--limit-train", type=int)
    p.add_argument("--limit-test", type=int)
    args = p.parse_args(argv)
    src, out = Path(args.src), Path(args.out)
    parts = [read_batch(src / f"data_batch_{k}") for k in range(1, 6)]
    train = (np.concatenate([a for a, _ in parts]), np.concatenate([b for _, b in parts]))
    test = read_batch(src / "test_batch")
    for name, (x, y), limit in (("train", train, args.limit_train), ("test", test, args.limit_test)):
        x, y = x[:limit], y[:limit]
        save_dataset(out / f"{name}.anct", x, y)
        print(f"wrote {out / f'{name}.anct'}: {x.shape}")


if __name__ == "__main__":
    main()
