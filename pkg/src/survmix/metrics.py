"""Evaluation of selection accuracy, coefficient error, clustering agreement,
and predictive concordance."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import linear_sum_assignment

from .dataset import ModelIndex
from .errors import DataError


@dataclass(frozen=True)
class SelectionReport:
    sensitivity: float
    specificity: float
    fdr: float
    vacuous: bool = False  # set when a denominator was empty and a convention applied


def selection_metrics(true_model: ModelIndex, est_model: ModelIndex, p: int) -> SelectionReport:
    """Confusion-count metrics over the p covariates.

    An empty true model makes sensitivity vacuous (reported as 1, flagged);
    FDR is 0 when nothing is selected.
    """
    true_set, est_set = set(true_model.indices), set(est_model.indices)
    if (true_set | est_set) and max(true_set | est_set) >= p:
        raise DataError("model index out of range for p")
    tp = len(true_set & est_set)
    fp = len(est_set - true_set)
    tn = p - len(true_set | est_set)
    vacuous = False
    if true_set:
        sens = tp / len(true_set)
    else:
        sens, vacuous = 1.0, True
    if len(true_set) < p:
        spec = tn / (p - len(true_set))
    else:
        spec, vacuous = 1.0, True
    fdr = fp / len(est_set) if est_set else 0.0
    return SelectionReport(sens, spec, fdr, vacuous)


def contingency(labels_a, labels_b):
    """Cross-tabulation of two label vectors; returns (table, values_a, values_b)."""
    a = np.asarray(labels_a)
    b = np.asarray(labels_b)
    if a.shape != b.shape or a.size == 0:
        raise DataError("label vectors must be nonempty and of equal length")
    va, ia = np.unique(a, return_inverse=True)
    vb, ib = np.unique(b, return_inverse=True)
    table = np.zeros((va.size, vb.size), dtype=np.int64)
    np.add.at(table, (ia, ib), 1)
    return table, va, vb


def match_clusters(true_labels, est_labels):
    """Overlap-maximizing injective matching of estimated clusters to true groups.

    Returns a list of (true_value, est_value) pairs from the optimal
    assignment on the contingency table.
    """
    table, va, vb = contingency(true_labels, est_labels)
    rows, cols = linear_sum_assignment(table, maximize=True)
    return [(va[r], vb[c]) for r, c in zip(rows, cols)]


def l1_error(true_coefs, est_coefs: dict, true_labels, est_labels) -> float:
    """Summed |beta_hat - beta| over optimally matched (group, cluster) pairs.

    true_coefs: (G, p) array, row g for true-label value g (sorted order of the
    distinct true labels).  est_coefs: {estimated label: (p,) dense vector}.
    Unmatched estimated clusters contribute their full |beta_hat| mass and
    unmatched true groups their full |beta| mass.
    """
    true_coefs = np.atleast_2d(np.asarray(true_coefs, dtype=float))
    pairs = match_clusters(true_labels, est_labels)
    _, va, vb = contingency(true_labels, est_labels)
    missing = [v for v in vb if v not in est_coefs]
    if missing:
        raise DataError(f"no coefficient vector for estimated cluster {missing[0]}")
    total = 0.0
    matched_true = {g for g, _ in pairs}
    matched_est = {k for _, k in pairs}
    true_row = {g: i for i, g in enumerate(va)}
    for g, k in pairs:
        total += float(np.abs(np.asarray(est_coefs[k]) - true_coefs[true_row[g]]).sum())
    for g in va:
        if g not in matched_true:
            total += float(np.abs(true_coefs[true_row[g]]).sum())
    for k in vb:
        if k not in matched_est:
            total += float(np.abs(np.asarray(est_coefs[k])).sum())
    return total


def nmi(labels_a, labels_b) -> float:
    """Mutual information normalized by the geometric mean of the entropies.

    Two single-block partitions agree perfectly (1); one single-block
    partition against a split one has no shared information (0).
    """
    table, _, _ = contingency(labels_a, labels_b)
    n = table.sum()
    pa = table.sum(axis=1) / n
    pb = table.sum(axis=0) / n
    ha = -np.sum(pa[pa > 0] * np.log(pa[pa > 0]))
    hb = -np.sum(pb[pb > 0] * np.log(pb[pb > 0]))
    if ha == 0.0 or hb == 0.0:
        return 1.0 if (ha == 0.0 and hb == 0.0) else 0.0
    pj = table / n
    mask = pj > 0
    mi = np.sum(pj[mask] * (np.log(pj[mask]) - np.log(np.outer(pa, pb))[mask]))
    return float(min(1.0, max(0.0, mi / np.sqrt(ha * hb))))


def concordance_index(times, events, risk_scores):
    """Harrell's C over comparable pairs (the strictly earlier time is an event).

    The pair is concordant when the higher risk score has the earlier time;
    score ties count one half.  Returns None when no pair is comparable.
    """
    t = np.asarray(times, dtype=float)
    d = np.asarray(events, dtype=int)
    r = np.asarray(risk_scores, dtype=float)
    if not (t.shape == d.shape == r.shape):
        raise DataError("times, events and risk scores must have equal length")
    comparable = (t[:, None] < t[None, :]) & (d[:, None] == 1)
    n_comp = int(comparable.sum())
    if n_comp == 0:
        return None
    higher = (r[:, None] > r[None, :]) & comparable
    tied = (r[:, None] == r[None, :]) & comparable
    return float((higher.sum() + 0.5 * tied.sum()) / n_comp)
