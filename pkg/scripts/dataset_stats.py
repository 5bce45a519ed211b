#!/usr/bin/env python3
"""Dataset statistics table: N, D, L, average points per label, average labels
per point, and the algebraic connectivity of the label co-occurrence graph.

    python scripts/dataset_stats.py data/bibtex_train.txt data/mediamill_train.txt
"""
import argparse
import csv
import sys
import time
from pathlib import Path

import numpy as np

from proxml.data import label_counts, read_xmc
from proxml.labelgraph import algebraic_connectivity, build_graph


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("train_files", nargs="+")
    ap.add_argument("--tol", type=float, default=1e-6)
    args = ap.parse_args()

    w = csv.writer(sys.stdout, lineterminator="\n")
    w.writerow(["dataset", "N", "D", "L", "APpL", "ALpP", "lambda2", "components", "isolated", "seconds"])
    for path in args.train_files:
        d = read_xmc(path)
        counts = label_counts(d)
        t0 = time.perf_counter()
        r = algebraic_connectivity(build_graph(d), tol=args.tol)
        w.writerow([Path(path).stem, d.n_instances, d.n_features, d.n_labels,
                    f"{counts.mean():.1f}", f"{np.mean([l.size for l in d.labels]):.1f}",
                    f"{r.lambda2:.4f}", r.component_count, r.n_isolated, f"{time.perf_counter() - t0:.1f}"])


if __name__ == "__main__":
    main()
