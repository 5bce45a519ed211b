#!/usr/bin/env python3
"""Materialize train/test files from an XMC repository data file and its split file.

The split files list 1-based instance indices, one column per random split:

    python scripts/split_xmc.py Bibtex_data.txt bibtex_trSplit.txt bibtex_tstSplit.txt \
        --name bibtex --out-dir data/
"""
import argparse
from pathlib import Path

import numpy as np

from proxml.data import read_xmc, write_xmc


def read_split(path, column):
    rows = np.loadtxt(path, dtype=np.int64, ndmin=2)
    return np.sort(rows[:, column] - 1)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("data")
    ap.add_argument("train_split")
    ap.add_argument("test_split")
    ap.add_argument("--name", required=True)
    ap.add_argument("--column", type=int, default=0, help="which split column to use")
    ap.add_argument("--out-dir", default=".")
    args = ap.parse_args()

    full = read_xmc(args.data)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for part, split in (("train", args.train_split), ("test", args.test_split)):
        subset = full.subset(read_split(split, args.column))
        with open(out / f"{args.name}_{part}.txt", "w", encoding="utf-8") as f:
            write_xmc(subset, f)
        print(f"{args.name}_{part}: N={subset.n_instances} D={subset.n_features} L={subset.n_labels}")


if __name__ == "__main__":
    main()
