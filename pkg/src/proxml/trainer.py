"""One-vs-rest training over all labels, model persistence and lambda selection."""
from __future__ import annotations

import csv
import hashlib
import io
import json
import logging
import multiprocessing as mp
import os
import struct
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from functools import cached_property

import numpy as np
import scipy.sparse as sp

from proxml.ccd import CcdConfig, solve_ccd
from proxml.data import Dataset, SparseVector, design_matrix, label_counts
from proxml.prox import ProxConfig, solve_prox

log = logging.getLogger(__name__)

SOLVERS = {"prox": 0, "ccd": 1}
STATUS_CODES = {"ok": 0, "skipped": 1, "failed": 2}
MAGIC = b"PRXM"
FORMAT_VERSION = 1
_HEADER = struct.Struct("<4sHHQQdB")
LOG_FIELDS = ("label_id", "n_pos", "iters", "objective", "nnz", "seconds", "status")


class ModelFormatError(ValueError):
    pass


def feature_space_id(n_features: int, n_labels: int, bias: bool, l2_normalize: bool) -> str:
    key = f"D={n_features};L={n_labels};bias={int(bias)};l2={int(l2_normalize)}"
    return hashlib.sha256(key.encode()).hexdigest()[:16]


@dataclass(eq=False)
class Model:
    n_features: int
    n_labels: int
    weights: list
    status: list
    bias: bool = True
    l2_normalize: bool = False
    lam: float = 0.0
    solver: str = "prox"
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if len(self.weights) != self.n_labels or len(self.status) != self.n_labels:
            raise ValueError("need exactly one weight vector and status per label")
        for w in self.weights:
            if w.dim != self.dim:
                raise ValueError(f"weight dim {w.dim} != {self.dim}")

    @property
    def dim(self) -> int:
        return self.n_features + int(self.bias)

    @property
    def nnz(self) -> int:
        return sum(w.nnz for w in self.weights)

    @property
    def feature_space(self) -> str:
        return feature_space_id(self.n_features, self.n_labels, self.bias, self.l2_normalize)

    @cached_property
    def inverted_index(self) -> sp.csc_matrix:
        """Feature-major view of W: column d lists (label, weight) for feature d."""
        indptr = np.zeros(self.n_labels + 1, dtype=np.int64)
        indptr[1:] = np.cumsum([w.nnz for w in self.weights])
        indices = np.concatenate([w.indices for w in self.weights]) if self.weights else np.empty(0, np.int64)
        data = np.concatenate([w.values for w in self.weights]) if self.weights else np.empty(0)
        W = sp.csr_matrix((data, indices, indptr), shape=(self.n_labels, self.dim)).tocsc()
        W.sort_indices()
        return W

    def __eq__(self, other):
        if not isinstance(other, Model):
            return NotImplemented
        return (
            (self.n_features, self.n_labels, self.bias, self.l2_normalize, self.solver)
            == (other.n_features, other.n_labels, other.bias, other.l2_normalize, other.solver)
            and np.float64(self.lam).tobytes() == np.float64(other.lam).tobytes()
            and self.status == other.status
            and self.weights == other.weights
            and self.meta == other.meta
        )

    __hash__ = None


# -- per-label solving --------------------------------------------------------

_SHARED: dict = {}


def _run_task(label: int):
    X = _SHARED["X"]
    s = -np.ones(X.shape[0])
    s[_SHARED["positives"][label]] = 1.0
    return label, _SHARED["task"](X, s, label)


def map_labels(X, positives, labels, task, parallelism: int = 1):
    """Apply ``task(X, s, label)`` to every label, yielding ``(label, result)`` in input order.

    Workers are forked processes that inherit X; tasks are handed out one
    label at a time, so callers should order ``labels`` largest-first.
    """
    labels = list(labels)
    _SHARED.update(X=X, positives=positives, task=task)
    try:
        if parallelism == 1 or len(labels) <= 1:
            for label in labels:
                yield _run_task(label)
        else:
            ctx = mp.get_context("fork")
            with ProcessPoolExecutor(max_workers=parallelism, mp_context=ctx) as pool:
                for fut in [pool.submit(_run_task, l) for l in labels]:
                    yield fut.result()
    finally:
        _SHARED.clear()


def _default_solve(X, s, solver, config):
    if solver == "prox":
        r = solve_prox(X, s, config)
        return r.w, r.objective, r.iters, r.converged
    r = solve_ccd(X, s, config)
    return r.w, r.objective, r.outer_iters, r.converged


class _LabelSolve:
    def __init__(self, solver, config, solve_fn):
        self.solver, self.config, self.solve_fn = solver, config, solve_fn or _default_solve

    def __call__(self, X, s, label):
        t0 = time.perf_counter()
        try:
            w, obj, iters, converged = self.solve_fn(X, s, self.solver, self.config)
            status, error = "ok", None
        except Exception as exc:  # isolate the label; the run continues
            w, obj, iters, converged = SparseVector.zeros(X.shape[1]), None, 0, False
            status, error = "failed", f"{type(exc).__name__}: {exc}"
        return w, {
            "objective": None if obj is None else float(obj),
            "iters": int(iters),
            "converged": bool(converged),
            "status": status,
            "error": error,
            "seconds": time.perf_counter() - t0,
        }


def _config_dict(config) -> dict:
    return {k: getattr(config, k) for k in config.__dataclass_fields__}


def train_all(dataset: Dataset, solver: str = "prox", config=None, parallelism: int = 1,
              bias: bool = True, l2_normalize: bool = False, solve_fn=None):
    """Train one binary classifier per label.

    Labels are scheduled largest-first onto ``parallelism`` worker processes;
    each result lands in its own slot, so the model does not depend on the
    number of workers. Returns ``(model, log_rows)``.
    """
    if solver not in SOLVERS:
        raise ValueError(f"solver must be one of {sorted(SOLVERS)}")
    if config is None:
        config = ProxConfig() if solver == "prox" else CcdConfig()
    expected = ProxConfig if solver == "prox" else CcdConfig
    if not isinstance(config, expected):
        raise TypeError(f"solver {solver!r} needs a {expected.__name__}")
    if parallelism < 1:
        raise ValueError("parallelism must be >= 1")

    X = design_matrix(dataset, bias=bias, l2_normalize=l2_normalize)
    counts = label_counts(dataset)
    L = dataset.n_labels
    weights = [SparseVector.zeros(X.shape[1])] * L
    stats: list[dict] = [
        {"objective": None, "iters": 0, "converged": False, "status": "skipped", "error": None, "seconds": 0.0}
        for _ in range(L)
    ]
    todo = sorted((l for l in range(L) if counts[l] > 0), key=lambda l: (-counts[l], l))

    t0 = time.perf_counter()
    task = _LabelSolve(solver, config, solve_fn)
    for label, (w, st) in map_labels(X, dataset.label_index(), todo, task, parallelism):
        weights[label], stats[label] = w, st
    wall = time.perf_counter() - t0

    failed = [l for l in range(L) if stats[l]["status"] == "failed"]
    for l in failed:
        log.warning("label %d failed: %s", l, stats[l]["error"])

    log_rows = [
        {
            "label_id": l,
            "n_pos": int(counts[l]),
            "iters": stats[l]["iters"],
            "objective": stats[l]["objective"],
            "nnz": weights[l].nnz,
            "seconds": stats[l]["seconds"],
            "status": stats[l]["status"],
        }
        for l in range(L)
    ]
    meta = {
        "config": _config_dict(config),
        "dataset_fingerprint": dataset.fingerprint(),
        "n_train": dataset.n_instances,
        "label_counts": counts.tolist(),
        "objective": [st["objective"] for st in stats],
        "iters": [st["iters"] for st in stats],
        "converged": [st["converged"] for st in stats],
        "errors": {str(l): stats[l]["error"] for l in failed},
    }
    model = Model(
        n_features=dataset.n_features,
        n_labels=L,
        weights=weights,
        status=[st["status"] for st in stats],
        bias=bias,
        l2_normalize=l2_normalize,
        lam=float(config.lam),
        solver=solver,
        meta=meta,
    )
    log.info("trained %d labels (%d skipped, %d failed) in %.1fs, nnz=%d",
             len(todo), L - len(todo), len(failed), wall, model.nnz)
    return model, log_rows


def write_training_log(rows, stream, header_comment: str | None = None) -> None:
    if header_comment:
        stream.write(f"# {header_comment}\n")
    writer = csv.DictWriter(stream, fieldnames=LOG_FIELDS, lineterminator="\n")
    writer.writeheader()
    for row in rows:
        writer.writerow({**row, "objective": "" if row["objective"] is None else repr(row["objective"]),
                         "seconds": f"{row['seconds']:.6f}"})


# -- persistence ----------------------------------------------------------------


def model_to_bytes(model: Model) -> bytes:
    """Serialize: fixed header, per-label delta-encoded runs, JSON meta, sha256."""
    buf = io.BytesIO()
    flags = int(model.bias) | (int(model.l2_normalize) << 1)
    buf.write(_HEADER.pack(MAGIC, FORMAT_VERSION, flags, model.n_features, model.n_labels,
                           model.lam, SOLVERS[model.solver]))
    for w, st in zip(model.weights, model.status):
        buf.write(struct.pack("<BI", STATUS_CODES[st], w.nnz))
        if w.nnz:
            deltas = np.diff(w.indices, prepend=0).astype("<u4")
            buf.write(deltas.tobytes())
            buf.write(w.values.astype("<f8").tobytes())
    meta = json.dumps(model.meta, sort_keys=True, separators=(",", ":")).encode("utf-8")
    buf.write(struct.pack("<Q", len(meta)))
    buf.write(meta)
    body = buf.getvalue()
    return body + hashlib.sha256(body).digest()


def model_from_bytes(raw: bytes) -> Model:
    if len(raw) < _HEADER.size + 32:
        raise ModelFormatError("truncated model file")
    body, digest = raw[:-32], raw[-32:]
    magic, version, flags, D, L, lam, solver_id = _HEADER.unpack_from(body, 0)
    if magic != MAGIC:
        raise ModelFormatError("not a model file (bad magic)")
    if version != FORMAT_VERSION:
        raise ModelFormatError(f"unsupported model format version {version}")
    if hashlib.sha256(body).digest() != digest:
        raise ModelFormatError("checksum mismatch (corrupt or truncated file)")
    bias, l2 = bool(flags & 1), bool(flags & 2)
    dim = D + int(bias)
    codes = {v: k for k, v in STATUS_CODES.items()}
    solvers = {v: k for k, v in SOLVERS.items()}
    off = _HEADER.size
    weights, status = [], []
    try:
        for _ in range(L):
            code, nnz = struct.unpack_from("<BI", body, off)
            off += 5
            idx = np.cumsum(np.frombuffer(body, "<u4", nnz, off).astype(np.int64))
            off += 4 * nnz
            val = np.frombuffer(body, "<f8", nnz, off).astype(np.float64)
            off += 8 * nnz
            weights.append(SparseVector(idx, val, dim))
            status.append(codes[code])
        (meta_len,) = struct.unpack_from("<Q", body, off)
        off += 8
        meta = json.loads(body[off:off + meta_len].decode("utf-8"))
        off += meta_len
    except (struct.error, ValueError, KeyError) as exc:
        raise ModelFormatError(f"malformed model body: {exc}") from exc
    if off != len(body):
        raise ModelFormatError("trailing bytes after model body")
    return Model(D, L, weights, status, bias=bias, l2_normalize=l2, lam=lam,
                 solver=solvers[solver_id], meta=meta)


def save_model(model: Model, path) -> None:
    tmp = f"{os.fspath(path)}.tmp"
    with open(tmp, "wb") as f:
        f.write(model_to_bytes(model))
    os.replace(tmp, path)


def load_model(path) -> Model:
    with open(path, "rb") as f:
        return model_from_bytes(f.read())


# -- lambda selection -------------------------------------------------------


def cross_validate_lambda(dataset: Dataset, grid, solver: str = "prox", config=None, folds: int = 5,
                          parallelism: int = 1, bias: bool = True, l2_normalize: bool = False, seed: int = 0):
    """Pick lambda by instance-level k-fold CV on vanilla P@1.

    Returns ``(best_lambda, {lambda: mean P@1})``; ties go to the larger lambda
    (sparser model).
    """
    from proxml.predictor import predict
    from proxml.metrics import precision_at_k

    if config is None:
        config = ProxConfig() if solver == "prox" else CcdConfig()
    perm = np.random.default_rng(seed).permutation(dataset.n_instances)
    fold_of = np.empty(dataset.n_instances, dtype=np.int64)
    fold_of[perm] = np.arange(dataset.n_instances) % folds
    scores = {}
    for lam in grid:
        cfg = replace(config, lam=float(lam))
        hits = []
        for f in range(folds):
            train = dataset.subset(np.flatnonzero(fold_of != f))
            held = dataset.subset(np.flatnonzero(fold_of == f))
            model, _ = train_all(train, solver, cfg, parallelism, bias, l2_normalize)
            for top, truth in zip(predict(model, held, 1), held.labels):
                hits.append(precision_at_k(top.labels, truth, 1))
        scores[float(lam)] = float(np.mean(hits)) if hits else 0.0
        log.info("cv lambda=%g P@1=%.4f", lam, scores[float(lam)])
    best = max(scores, key=lambda l: (scores[l], l))
    return best, scores
