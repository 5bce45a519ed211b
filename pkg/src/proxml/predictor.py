"""Top-k prediction with a feature-major inverted index over the model."""
from __future__ import annotations

import heapq
import time
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Sequence, TextIO

import numpy as np

from proxml import _kernels
from proxml.data import Dataset, SparseVector
from proxml.trainer import Model

log = logging.getLogger(__name__)


class ModelMismatchError(ValueError):
    """The data does not live in the feature/label space the model was trained on."""


@dataclass(frozen=True)
class TopK:
    entries: tuple  # ((label_id, score), ...) by descending score, then ascending id

    @property
    def labels(self) -> list:
        return [l for l, _ in self.entries]

    @property
    def scores(self) -> list:
        return [v for _, v in self.entries]

    def __len__(self):
        return len(self.entries)


def _prepare(model: Model, x: SparseVector) -> tuple[np.ndarray, np.ndarray]:
    if x.dim != model.n_features:
        raise ModelMismatchError(f"instance dim {x.dim} != model n_features {model.n_features}")
    idx, val = x.indices, x.values
    if model.l2_normalize:
        norm = float(np.sqrt(val @ val))
        if norm > 0:
            val = val / norm
    if model.bias:
        idx = np.append(idx, model.n_features)
        val = np.append(val, 1.0)
    return idx, val


def score_all(model: Model, x: SparseVector, out: np.ndarray | None = None) -> np.ndarray:
    """Raw margins <w_l, x> for every label, accumulated over x's nonzeros."""
    idx, val = _prepare(model, x)
    W = model.inverted_index
    out = np.empty(model.n_labels) if out is None else out
    _kernels.inverted_scores(idx, val, W.indptr, W.indices, W.data, out)
    return out


def top_k(scores: Sequence[float], k: int) -> TopK:
    n = len(scores)
    if not 1 <= k <= n:
        raise ValueError(f"k must lie in [1, {n}], got {k}")
    best = heapq.nsmallest(k, zip((-float(v) for v in scores), range(n)))
    return TopK(tuple((l, -v) for v, l in best))


def check_compatible(model: Model, dataset: Dataset) -> None:
    if dataset.n_features != model.n_features or dataset.n_labels != model.n_labels:
        raise ModelMismatchError(
            f"dataset (D={dataset.n_features}, L={dataset.n_labels}) does not match model "
            f"(D={model.n_features}, L={model.n_labels})"
        )


def predict(model: Model, dataset: Dataset, k: int, threads: int = 1) -> list[TopK]:
    """Top-k labels per instance. Labels without a trained classifier
    (skipped or failed) rank below every trained label."""
    check_compatible(model, dataset)
    k = min(k, model.n_labels)
    untrained = np.array([st != "ok" for st in model.status], dtype=bool)
    model.inverted_index  # build once before fanning out

    def run(rows):
        scores = np.empty(model.n_labels)
        out = []
        for i in rows:
            score_all(model, dataset.row(i), scores)
            scores[untrained] = -np.inf
            out.append(top_k(scores, k))
        return out

    t0 = time.perf_counter()
    n = dataset.n_instances
    if threads <= 1 or n < 2 * threads:
        result = run(range(n))
    else:
        chunks = np.array_split(np.arange(n), threads)
        with ThreadPoolExecutor(threads) as pool:
            result = [t for part in pool.map(run, chunks) for t in part]
    if n:
        log.info("predicted %d instances, %.3f ms/instance", n, 1e3 * (time.perf_counter() - t0) / n)
    return result


def write_predictions(topks: Sequence[TopK], stream: TextIO, header_comment: str | None = None) -> None:
    if header_comment:
        stream.write(f"# {header_comment}\n")
    for t in topks:
        stream.write("\t".join(f"{l}:{v!r}" for l, v in t.entries) + "\n")


def read_predictions(stream) -> list[TopK]:
    out = []
    for line in stream:
        line = line.rstrip("\r\n")
        if line.startswith("#"):
            continue
        entries = []
        for tok in line.split("\t"):
            if tok:
                l, _, v = tok.partition(":")
                entries.append((int(l), float(v)))
        out.append(TopK(tuple(entries)))
    return out
