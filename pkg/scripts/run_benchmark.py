#!/usr/bin/env python3
"""Cross-validate lambda, train, predict and evaluate on one train/test pair.

    python scripts/run_benchmark.py data/bibtex_train.txt data/bibtex_test.txt --threads 8
    python scripts/run_benchmark.py data/eurlex_train.txt data/eurlex_test.txt --lambda 0.1
"""
import argparse
import logging
import os
import time

import numpy as np

from proxml.data import read_xmc
from proxml.metrics import PROPENSITY_PRESETS, evaluate, propensities
from proxml.predictor import predict
from proxml.prox import ProxConfig
from proxml.trainer import cross_validate_lambda, save_model, train_all


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("train")
    ap.add_argument("test")
    ap.add_argument("--lambda", dest="lam", type=float, help="skip cross-validation and use this value")
    ap.add_argument("--grid", default="0.01,0.05,0.1,0.5")
    ap.add_argument("--folds", type=int, default=5)
    ap.add_argument("--preset", choices=sorted(PROPENSITY_PRESETS), default="default")
    ap.add_argument("--threads", type=int, default=os.cpu_count() or 1)
    ap.add_argument("--save-model")
    args = ap.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(asctime)s %(message)s")

    train, test = read_xmc(args.train), read_xmc(args.test)
    t0 = time.perf_counter()
    lam = args.lam
    if lam is None:
        grid = [float(v) for v in args.grid.split(",")]
        lam, scores = cross_validate_lambda(train, grid, "prox", ProxConfig(), args.folds, args.threads)
        print("cv P@1:", {k: round(100 * v, 2) for k, v in scores.items()}, "->", lam)
    model, rows = train_all(train, "prox", ProxConfig(lam=lam), parallelism=args.threads)
    t_train = time.perf_counter() - t0
    if args.save_model:
        save_model(model, args.save_model)
    A, B = PROPENSITY_PRESETS[args.preset]
    p = propensities(np.asarray(model.meta["label_counts"]), A, B, train.n_instances).p
    preds = predict(model, test, 5, threads=args.threads)
    report = evaluate([t.labels for t in preds], test.labels, p)
    print(report.table())
    dense = model.dim * model.n_labels
    print(f"lambda={lam} nnz={model.nnz} ({100 * model.nnz / dense:.2f}% of dense) "
          f"converged={sum(model.meta['converged'])}/{model.n_labels} train+cv time={t_train:.0f}s")


if __name__ == "__main__":
    main()
