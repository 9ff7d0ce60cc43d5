"""Write the procedural 10-class grating dataset as ANCT train/test stores.

    python scripts/make_synthetic.py --out data/ --train 4096 --test 1000
"""

import argparse
from pathlib import Path

from adanca.data import make_gratings, save_dataset
from adanca.numerics.rng import Rng


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--train", type=int, default=4096)
    p.add_argument("--test", type=int, default=1000)
    p.add_argument("--size", type=int, default=32)
    p.add_argument("--seed", type=int, default=0)
    args = p.parse_args(argv)
    out = Path(args.out)
    for name, n, stream in (("train", args.train, 1), ("test", args.test, 2)):
        images, labels = make_gratings(n, Rng(args.seed, stream), size=args.size)
        save_dataset(out / f"{name}.anct", images, labels)
        print(f"wrote {out / f'{name}.anct'}: {images.shape}")


if __name__ == "__main__":
    main()
