"""Sparse multi-label datasets in the XMC repository text format.

The format is a header line ``N D L`` followed by one line per instance::

    l1,l2,...,lk f1:v1 f2:v2 ...

Labels are comma-separated 0-based ids and may be empty; features are
0-based ``index:value`` pairs.
"""
from __future__ import annotations

import hashlib
import io
import os
from dataclasses import dataclass, field
from typing import Iterable, Sequence, TextIO

import numpy as np
import scipy.sparse as sp


class XmcFormatError(ValueError):
    """Raised for malformed XMC text input. Carries the 1-based line number."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


@dataclass(frozen=True)
class SparseVector:
    indices: np.ndarray
    values: np.ndarray
    dim: int

    def __post_init__(self):
        idx = np.asarray(self.indices, dtype=np.int64)
        val = np.asarray(self.values, dtype=np.float64)
        if idx.ndim != 1 or idx.shape != val.shape:
            raise ValueError("indices and values must be 1-D arrays of equal length")
        if idx.size:
            if idx[0] < 0 or idx[-1] >= self.dim or np.any(np.diff(idx) <= 0):
                raise ValueError("indices must be strictly increasing and within [0, dim)")
            if np.any(val == 0.0):
                raise ValueError("stored values must be non-zero")
        object.__setattr__(self, "indices", idx)
        object.__setattr__(self, "values", val)

    @classmethod
    def from_dense(cls, dense) -> "SparseVector":
        dense = np.asarray(dense, dtype=np.float64)
        nz = np.flatnonzero(dense)
        return cls(nz, dense[nz], dense.shape[0])

    @classmethod
    def zeros(cls, dim: int) -> "SparseVector":
        return cls(np.empty(0, np.int64), np.empty(0, np.float64), dim)

    @property
    def nnz(self) -> int:
        return int(self.indices.size)

    def to_dense(self) -> np.ndarray:
        out = np.zeros(self.dim)
        out[self.indices] = self.values
        return out

    def __eq__(self, other):
        if not isinstance(other, SparseVector):
            return NotImplemented
        return (
            self.dim == other.dim
            and np.array_equal(self.indices, other.indices)
            and np.array_equal(self.values, other.values)
        )

    __hash__ = None


@dataclass(frozen=True, eq=False)
class Dataset:
    """Immutable multi-label dataset: CSR features plus sorted label lists."""

    X: sp.csr_matrix
    labels: tuple
    n_labels: int
    _label_index: list = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        X = self.X
        if not sp.isspmatrix_csr(X):
            X = sp.csr_matrix(X)
            object.__setattr__(self, "X", X)
        if X.shape[0] != len(self.labels):
            raise ValueError("rows.len != labels.len")
        labels = tuple(np.asarray(lab, dtype=np.int64) for lab in self.labels)
        for i, lab in enumerate(labels):
            if lab.size and (lab[0] < 0 or lab[-1] >= self.n_labels or np.any(np.diff(lab) <= 0)):
                raise ValueError(f"instance {i}: label list must be sorted, unique and < L")
        object.__setattr__(self, "labels", labels)

    @classmethod
    def from_lists(cls, rows: Sequence[Sequence[tuple[int, float]]],
                   labels: Sequence[Sequence[int]], n_features: int, n_labels: int) -> "Dataset":
        indptr = [0]
        indices: list[int] = []
        data: list[float] = []
        for row in rows:
            for j, v in sorted(row):
                if v != 0.0:
                    indices.append(j)
                    data.append(v)
            indptr.append(len(indices))
        X = sp.csr_matrix(
            (np.asarray(data, dtype=np.float64), np.asarray(indices, dtype=np.int64), np.asarray(indptr)),
            shape=(len(rows), n_features),
        )
        return cls(X, tuple(sorted(set(lab)) for lab in labels), n_labels)

    @property
    def n_instances(self) -> int:
        return self.X.shape[0]

    @property
    def n_features(self) -> int:
        return self.X.shape[1]

    @property
    def n_empty_rows(self) -> int:
        return int(np.count_nonzero(np.diff(self.X.indptr) == 0))

    def row(self, i: int) -> SparseVector:
        lo, hi = self.X.indptr[i], self.X.indptr[i + 1]
        return SparseVector(self.X.indices[lo:hi], self.X.data[lo:hi], self.n_features)

    def label_index(self) -> list:
        """Per-label sorted positive instance ids, built once in O(total label entries)."""
        if self._label_index is None:
            counts = np.zeros(self.n_labels, dtype=np.int64)
            for lab in self.labels:
                counts[lab] += 1
            flat_inst = np.repeat(np.arange(self.n_instances), [lab.size for lab in self.labels])
            flat_lab = np.concatenate(self.labels) if self.labels else np.empty(0, np.int64)
            order = np.argsort(flat_lab, kind="stable")
            bounds = np.concatenate([[0], np.cumsum(counts)])
            sorted_inst = flat_inst[order]
            index = [sorted_inst[bounds[l]:bounds[l + 1]] for l in range(self.n_labels)]
            object.__setattr__(self, "_label_index", index)
        return self._label_index

    def fingerprint(self) -> str:
        h = hashlib.sha256()
        h.update(np.asarray([self.n_instances, self.n_features, self.n_labels], np.int64).tobytes())
        h.update(self.X.indptr.astype(np.int64).tobytes())
        h.update(self.X.indices.astype(np.int64).tobytes())
        h.update(self.X.data.astype(np.float64).tobytes())
        for lab in self.labels:
            h.update(np.int64(lab.size).tobytes())
            h.update(lab.tobytes())
        return h.hexdigest()

    def __eq__(self, other):
        if not isinstance(other, Dataset):
            return NotImplemented
        return (
            self.X.shape == other.X.shape
            and self.n_labels == other.n_labels
            and np.array_equal(self.X.indptr, other.X.indptr)
            and np.array_equal(self.X.indices, other.X.indices)
            and np.array_equal(self.X.data, other.X.data)
            and all(np.array_equal(a, b) for a, b in zip(self.labels, other.labels))
        )

    __hash__ = None

    def subset(self, rows) -> "Dataset":
        rows = np.asarray(rows, dtype=np.int64)
        return Dataset(self.X[rows], tuple(self.labels[i] for i in rows), self.n_labels)


@dataclass(frozen=True)
class LabelView:
    label_id: int
    positives: np.ndarray
    n_instances: int

    @property
    def n_pos(self) -> int:
        return int(self.positives.size)

    def signs(self) -> np.ndarray:
        """The +1/-1 vector: +1 exactly on the positive instances."""
        s = -np.ones(self.n_instances)
        s[self.positives] = 1.0
        return s


def _parse_int(tok: str, what: str, lineno: int) -> int:
    try:
        return int(tok)
    except ValueError:
        raise XmcFormatError(f"invalid {what} {tok!r}", lineno) from None


def parse_xmc(stream: TextIO | Iterable[str]) -> Dataset:
    """Parse an XMC-format text stream into a :class:`Dataset`."""
    it = iter(stream)
    try:
        header = next(it)
    except StopIteration:
        raise XmcFormatError("missing header", 1) from None
    parts = header.strip().split()
    if len(parts) != 3:
        raise XmcFormatError(f"header must be 'N D L', got {header.strip()!r}", 1)
    n, d, n_labels = (_parse_int(p, "header field", 1) for p in parts)
    if min(n, d, n_labels) < 0:
        raise XmcFormatError("header fields must be non-negative", 1)

    indptr = np.zeros(n + 1, dtype=np.int64)
    indices: list[int] = []
    data: list[float] = []
    labels: list[np.ndarray] = []
    lineno = 1
    for line in it:
        lineno += 1
        line = line.rstrip("\r\n")
        if len(labels) == n:
            if line.strip():
                raise XmcFormatError(f"more than N={n} instance lines", lineno)
            continue
        tokens = line.split(" ")
        first = tokens[0]
        if first and ":" not in first:
            lab = sorted(_parse_int(t, "label id", lineno) for t in first.split(","))
            tokens = tokens[1:]
        else:
            lab = []
            if not first:
                tokens = tokens[1:]
        for a, b in zip(lab, lab[1:]):
            if a == b:
                raise XmcFormatError(f"duplicate label id {a}", lineno)
        if lab and (lab[0] < 0 or lab[-1] >= n_labels):
            raise XmcFormatError(f"label id out of range [0, {n_labels})", lineno)
        feats = []
        for tok in tokens:
            if not tok:
                continue
            key, sep, val = tok.partition(":")
            if not sep:
                raise XmcFormatError(f"malformed feature {tok!r}", lineno)
            j = _parse_int(key, "feature index", lineno)
            if j < 0 or j >= d:
                raise XmcFormatError(f"feature index {j} out of range [0, {d})", lineno)
            try:
                v = float(val)
            except ValueError:
                raise XmcFormatError(f"invalid feature value {val!r}", lineno) from None
            feats.append((j, v))
        feats.sort()
        for (a, _), (b, _) in zip(feats, feats[1:]):
            if a == b:
                raise XmcFormatError(f"duplicate feature index {a}", lineno)
        for j, v in feats:
            if v != 0.0:
                indices.append(j)
                data.append(v)
        labels.append(np.asarray(lab, dtype=np.int64))
        indptr[len(labels)] = len(indices)
    if len(labels) != n:
        raise XmcFormatError(f"expected N={n} instance lines, found {len(labels)}", lineno)

    X = sp.csr_matrix(
        (np.asarray(data, dtype=np.float64), np.asarray(indices, dtype=np.int64), indptr),
        shape=(n, d),
    )
    return Dataset(X, tuple(labels), n_labels)


def read_xmc(path: str | os.PathLike) -> Dataset:
    with open(path, encoding="utf-8", newline=None) as f:
        return parse_xmc(f)


def write_xmc(dataset: Dataset, stream: TextIO) -> None:
    """Write in canonical form: sorted indices, ``repr`` floats, ``\\n`` endings."""
    X = dataset.X
    stream.write(f"{dataset.n_instances} {dataset.n_features} {dataset.n_labels}\n")
    for i in range(dataset.n_instances):
        lo, hi = X.indptr[i], X.indptr[i + 1]
        feats = " ".join(f"{j}:{float(v)!r}" for j, v in zip(X.indices[lo:hi], X.data[lo:hi]))
        labs = ",".join(str(l) for l in dataset.labels[i])
        stream.write(f"{labs} {feats}\n" if feats else f"{labs}\n")


def dumps_xmc(dataset: Dataset) -> str:
    buf = io.StringIO()
    write_xmc(dataset, buf)
    return buf.getvalue()


def label_view(dataset: Dataset, label_id: int) -> LabelView:
    if not 0 <= label_id < dataset.n_labels:
        raise IndexError(f"label id {label_id} out of range [0, {dataset.n_labels})")
    return LabelView(label_id, dataset.label_index()[label_id], dataset.n_instances)


def label_counts(dataset: Dataset) -> np.ndarray:
    """Number of positive instances per label."""
    counts = np.zeros(dataset.n_labels, dtype=np.int64)
    for lab in dataset.labels:
        counts[lab] += 1
    return counts


def design_matrix(dataset: Dataset, bias: bool = True, l2_normalize: bool = False) -> sp.csr_matrix:
    """Feature matrix used for training and scoring.

    Rows are optionally scaled to unit L2 norm, then a constant 1.0 column
    is appended at index D when ``bias`` is set.
    """
    X = dataset.X.astype(np.float64, copy=True)
    if l2_normalize:
        norms = np.sqrt(np.asarray(X.multiply(X).sum(axis=1)).ravel())
        norms[norms == 0] = 1.0
        X = sp.csr_matrix(sp.diags(1.0 / norms) @ X)
    if bias:
        ones = sp.csr_matrix(np.ones((X.shape[0], 1)))
        X = sp.hstack([X, ones], format="csr")
    X.sort_indices()
    return X
