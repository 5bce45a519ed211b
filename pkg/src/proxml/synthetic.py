"""Synthetic XMC-style data: power-law label frequencies, sparse features
drawn from per-label feature profiles. Only for tests and demos."""
from __future__ import annotations

import numpy as np
import scipy.sparse as sp

from proxml.data import Dataset


def make_xmc(n_instances: int = 500, n_features: int = 300, n_labels: int = 40,
             labels_per_point: float = 2.5, features_per_point: int = 20,
             profile_size: int = 12, noise: float = 0.3, zipf: float = 1.1,
             seed: int = 0) -> Dataset:
    rng = np.random.default_rng(seed)
    freq = 1.0 / np.arange(1, n_labels + 1) ** zipf
    freq /= freq.sum()
    profiles = [rng.choice(n_features, size=min(profile_size, n_features), replace=False)
                for _ in range(n_labels)]
    rows, cols, vals, labels = [], [], [], []
    for i in range(n_instances):
        k = max(1, rng.poisson(labels_per_point))
        lab = np.unique(rng.choice(n_labels, size=min(k, n_labels), replace=False, p=freq))
        labels.append(lab)
        pool = np.concatenate([profiles[l] for l in lab])
        n_signal = int(round(features_per_point * (1 - noise)))
        feats = np.concatenate([
            rng.choice(pool, size=n_signal),
            rng.integers(0, n_features, size=features_per_point - n_signal),
        ])
        feats, counts = np.unique(feats, return_counts=True)
        v = counts * rng.uniform(0.5, 1.5, size=feats.size)
        v /= np.linalg.norm(v)
        rows += [i] * feats.size
        cols += feats.tolist()
        vals += v.tolist()
    X = sp.csr_matrix((vals, (rows, cols)), shape=(n_instances, n_features))
    X.sort_indices()
    return Dataset(X, tuple(labels), n_labels)


def train_test_split(dataset: Dataset, test_fraction: float = 0.25, seed: int = 0):
    perm = np.random.default_rng(seed).permutation(dataset.n_instances)
    n_test = int(round(test_fraction * dataset.n_instances))
    return dataset.subset(np.sort(perm[n_test:])), dataset.subset(np.sort(perm[:n_test]))
