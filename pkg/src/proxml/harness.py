"""Dataset-level certification: compare the two solvers label by label."""
from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import TextIO

import numpy as np

from proxml.ccd import CcdConfig, Certificate, certify
from proxml.data import Dataset, design_matrix, label_counts
from proxml.prox import ProxConfig
from proxml.trainer import map_labels


class _Certify:
    def __init__(self, lam, prox_cfg, ccd_cfg):
        self.lam, self.prox_cfg, self.ccd_cfg = lam, prox_cfg, ccd_cfg

    def __call__(self, X, s, label):
        return certify(X, s, self.lam, self.prox_cfg, self.ccd_cfg, label_id=label)


@dataclass
class CertificationSummary:
    certificates: list

    @property
    def n_labels(self) -> int:
        return len(self.certificates)

    def fraction_prox_lower(self, margin: float = 0.0) -> float:
        """Share of labels where the proximal objective is strictly lower."""
        if not self.certificates:
            return float("nan")
        return float(np.mean([c.gap > margin for c in self.certificates]))

    def ratio_quantiles(self, q=(0.1, 0.5, 0.9)) -> list:
        ratios = [c.opt_prox / c.opt_ccd for c in self.certificates if c.opt_ccd > 0]
        return np.quantile(ratios, q).tolist() if ratios else []

    def write_csv(self, stream: TextIO, header_comment: str | None = None) -> None:
        if header_comment:
            stream.write(f"# {header_comment}\n")
        w = csv.writer(stream, lineterminator="\n")
        w.writerow(["label", "opt_prox", "opt_ccd", "gap"])
        for c in self.certificates:
            w.writerow([c.label_id, repr(c.opt_prox), repr(c.opt_ccd), repr(c.gap)])


def certify_dataset(dataset: Dataset, lam: float, prox_cfg: ProxConfig | None = None,
                    ccd_cfg: CcdConfig | None = None, labels=None, min_pos: int = 1,
                    parallelism: int = 1, bias: bool = True, l2_normalize: bool = False) -> CertificationSummary:
    """Certify every label with at least ``min_pos`` positives (or the given ``labels``)."""
    prox_cfg = ProxConfig(lam=lam) if prox_cfg is None else prox_cfg
    ccd_cfg = CcdConfig(lam=lam) if ccd_cfg is None else ccd_cfg
    counts = label_counts(dataset)
    if labels is None:
        labels = [l for l in range(dataset.n_labels) if counts[l] >= min_pos]
    order = sorted(labels, key=lambda l: (-counts[l], l))
    X = design_matrix(dataset, bias=bias, l2_normalize=l2_normalize)
    found: dict[int, Certificate] = {}
    for label, cert in map_labels(X, dataset.label_index(), order, _Certify(lam, prox_cfg, ccd_cfg), parallelism):
        found[label] = cert
    return CertificationSummary([found[l] for l in sorted(found)])
