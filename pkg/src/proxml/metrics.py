"""Ranking metrics: P@k, nDCG@k and their propensity-scored variants.

Propensity-scored metrics are reported in the normalized form
100 * G(predicted) / G(ideal), where G is the mean per-instance gain over the
test set and the ideal prediction ranks the true labels by descending
inverse propensity.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence, TextIO

import numpy as np

DEFAULT_A = 0.55
DEFAULT_B = 1.5
# XMC repository conventions by dataset source
PROPENSITY_PRESETS = {"wikipedia": (0.5, 0.4), "amazon": (0.6, 2.6), "default": (DEFAULT_A, DEFAULT_B)}


@dataclass(frozen=True)
class PropensityTable:
    p: np.ndarray
    A: float
    B: float
    C: float

    @property
    def inv(self) -> np.ndarray:
        return 1.0 / self.p


def propensities(label_counts, A: float = DEFAULT_A, B: float = DEFAULT_B, n_train: int = 1) -> PropensityTable:
    """p_l = 1 / (1 + C * exp(-A * log(N_l + B))) with C = (log n_train - 1) * (B + 1)^A.

    For training sets too small to make C positive (n_train <= e) C is clamped
    to 0, giving p = 1 everywhere.
    """
    if not A > 0:
        raise ValueError("A must be > 0")
    if not B >= 0:
        raise ValueError("B must be >= 0")
    if n_train < 1:
        raise ValueError("n_train must be >= 1")
    counts = np.asarray(label_counts, dtype=np.float64)
    if B == 0 and np.any(counts == 0):
        raise ValueError("B = 0 leaves labels with zero training count at propensity 0")
    C = max((math.log(n_train) - 1.0) * (B + 1.0) ** A, 0.0)
    p = 1.0 / (1.0 + C * np.exp(-A * np.log(counts + B)))
    return PropensityTable(p, float(A), float(B), float(C))


def _top(ranked, k):
    return list(ranked)[:k]


def _rank_discount(r: int) -> float:
    # rank r is 1-based
    return 1.0 / math.log2(r + 1)


def precision_at_k(ranked: Sequence[int], truth, k: int) -> float:
    truth = set(int(t) for t in truth)
    return sum(1 for l in _top(ranked, k) if l in truth) / k


def psp_at_k(ranked: Sequence[int], truth, p, k: int) -> float:
    truth = set(int(t) for t in truth)
    return sum(1.0 / p[l] for l in _top(ranked, k) if l in truth) / k


def _dcg(ranked, truth: set, k: int, inv_p=None) -> float:
    total = 0.0
    for r, l in enumerate(_top(ranked, k), start=1):
        if l in truth:
            total += (1.0 if inv_p is None else inv_p(l)) * _rank_discount(r)
    return total


def _idcg_norm(n_true: int, k: int) -> float:
    return sum(_rank_discount(r) for r in range(1, min(k, n_true) + 1))


def ndcg_at_k(ranked: Sequence[int], truth, k: int) -> float:
    truth = set(int(t) for t in truth)
    if not truth:
        return 0.0
    return _dcg(ranked, truth, k) / _idcg_norm(len(truth), k)


def psndcg_at_k(ranked: Sequence[int], truth, p, k: int) -> float:
    """PSDCG@k over the same normalizer as vanilla nDCG (which ignores p)."""
    truth = set(int(t) for t in truth)
    if not truth:
        return 0.0
    return _dcg(ranked, truth, k, lambda l: 1.0 / p[l]) / _idcg_norm(len(truth), k)


def ideal_ranking(truth, p) -> list:
    """True labels ordered by descending 1/p (ties by ascending id): the gain-maximizing prediction."""
    return sorted((int(t) for t in truth), key=lambda l: (-1.0 / p[l], l))


def normalized_gain(gains: Iterable[float], ideal_gains: Iterable[float]) -> float | None:
    """100 * mean(gains) / mean(ideal_gains); None when the ideal gain is zero."""
    gains = list(gains)
    ideal = list(ideal_gains)
    if len(gains) != len(ideal):
        raise ValueError("gains and ideal gains must have equal length")
    denom = math.fsum(ideal)
    if denom == 0.0:
        return None
    return 100.0 * math.fsum(gains) / denom


def coverage_at_k(ranked_lists, truths, p, k: int) -> float:
    """Propensity-weighted share of distinct true labels hit within the top k somewhere."""
    present: set = set()
    hit: set = set()
    for ranked, truth in zip(ranked_lists, truths):
        truth = set(int(t) for t in truth)
        present |= truth
        hit |= truth.intersection(_top(ranked, k))
    denom = math.fsum(1.0 / p[l] for l in sorted(present))
    if denom == 0.0:
        return 0.0
    return math.fsum(1.0 / p[l] for l in sorted(hit)) / denom


@dataclass
class EvalReport:
    ks: tuple
    n_instances: int
    n_empty_truth: int
    precision: dict = field(default_factory=dict)      # vanilla P@k, percent, mean over all instances
    ndcg: dict = field(default_factory=dict)           # vanilla nDCG@k, percent, mean over non-empty truth
    psp: dict = field(default_factory=dict)            # normalized PSP@k, percent
    psndcg: dict = field(default_factory=dict)         # normalized PSnDCG@k, percent
    psp_raw: dict = field(default_factory=dict)
    psndcg_raw: dict = field(default_factory=dict)
    coverage: dict = field(default_factory=dict)       # percent

    def rows(self, include_coverage: bool = False):
        names = [("P", self.precision), ("nDCG", self.ndcg), ("PSP", self.psp), ("PSnDCG", self.psndcg)]
        if include_coverage:
            names.append(("Coverage", self.coverage))
        for name, table in names:
            for k in self.ks:
                yield name, k, table[k]

    def write_csv(self, stream: TextIO, include_coverage: bool = False, header_comment: str | None = None):
        if header_comment:
            stream.write(f"# {header_comment}\n")
        w = csv.writer(stream, lineterminator="\n")
        w.writerow(["metric", "k", "value"])
        for name, k, v in self.rows(include_coverage):
            w.writerow([name, k, "N/A" if v is None else repr(float(v))])

    def table(self) -> str:
        cols = [f"{m}{k}" for m in ("N", "P") for k in self.ks]

        def fmt(v):
            return "  N/A" if v is None else f"{v:5.1f}"

        lines = [
            f"{'':>12} " + " ".join(f"{c:>5}" for c in cols),
            f"{'propensity':>12} " + " ".join(fmt(self.psndcg[k]) for k in self.ks)
            + " " + " ".join(fmt(self.psp[k]) for k in self.ks),
            f"{'vanilla':>12} " + " ".join(fmt(self.ndcg[k]) for k in self.ks)
            + " " + " ".join(fmt(self.precision[k]) for k in self.ks),
            f"{'coverage':>12} " + " ".join(f"C{k}={fmt(self.coverage[k]).strip()}" for k in self.ks),
            f"instances={self.n_instances} empty_truth={self.n_empty_truth}",
        ]
        return "\n".join(lines)


def evaluate(ranked_lists, truths, p, ks=(1, 3, 5)) -> EvalReport:
    """Compute every metric at each k over a test set.

    ``ranked_lists`` holds predicted label ids best-first; ``p`` is the
    per-label propensity array (all ones for vanilla-only evaluation).
    """
    ranked_lists = [list(r) for r in ranked_lists]
    truths = [set(int(t) for t in tr) for tr in truths]
    if len(ranked_lists) != len(truths):
        raise ValueError("need one prediction list per test instance")
    p = np.asarray(p, dtype=np.float64)
    M = len(truths)
    nonempty = [i for i in range(M) if truths[i]]
    report = EvalReport(tuple(ks), M, M - len(nonempty))
    ideals = [ideal_ranking(t, p) for t in truths]
    for k in ks:
        if k < 1:
            raise ValueError("k must be >= 1")
        prec = [precision_at_k(r, t, k) for r, t in zip(ranked_lists, truths)]
        report.precision[k] = 100.0 * math.fsum(prec) / M if M else None
        nd = [ndcg_at_k(ranked_lists[i], truths[i], k) for i in nonempty]
        report.ndcg[k] = 100.0 * math.fsum(nd) / len(nd) if nd else None

        psp = [psp_at_k(r, t, p, k) for r, t in zip(ranked_lists, truths)]
        psp_ideal = [psp_at_k(ideal, t, p, k) for ideal, t in zip(ideals, truths)]
        report.psp_raw[k] = math.fsum(psp) / M if M else None
        report.psp[k] = normalized_gain(psp, psp_ideal)

        psn = [psndcg_at_k(ranked_lists[i], truths[i], p, k) for i in nonempty]
        psn_ideal = [psndcg_at_k(ideals[i], truths[i], p, k) for i in nonempty]
        report.psndcg_raw[k] = math.fsum(psn) / len(psn) if psn else None
        report.psndcg[k] = normalized_gain(psn, psn_ideal)

        report.coverage[k] = 100.0 * coverage_at_k(ranked_lists, truths, p, k)
    return report
