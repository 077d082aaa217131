"""Ranking metrics for spam detection and their fairness deltas.

All metrics rank by descending score with ties broken by ascending node
id, which makes every value deterministic and invariant under strictly
increasing score transforms.

* ndcg: binary-gain DCG at full depth, normalized by the ideal ranking;
  gain (2^y - 1), discount 1/log2(rank + 1).
* delta_ndcg: within-group NDCG of the protected group minus the
  favored group.
* afrr: average false-rejection rate of a favored subgroup's spams --
  for each spam, the fraction of favored non-spams scored strictly
  above it, averaged over the subgroup's spams.
* auc: Mann-Whitney statistic with the half-tie convention.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import (
    DimensionMismatch,
    NoFavoredNonSpams,
    NoPositives,
    NoSubgroupSpams,
    OneClassOnly,
)
from .graph import FAVORED, PROTECTED


def _aligned(*arrays: np.ndarray) -> list[np.ndarray]:
    out = [np.asarray(a) for a in arrays]
    lengths = {a.shape[0] for a in out}
    if len(lengths) != 1:
        raise DimensionMismatch(f"metric arrays differ in length: {sorted(lengths)}")
    return out


def ndcg(
    scores: np.ndarray, labels: np.ndarray, node_ids: np.ndarray | None = None
) -> float:
    """Normalized DCG of the binary ranking (full depth)."""
    if node_ids is None:
        scores, labels = _aligned(scores, labels)
        node_ids = np.arange(scores.shape[0])
    else:
        scores, labels, node_ids = _aligned(scores, labels, node_ids)
    n_spam = int(np.sum(labels == 1))
    if scores.shape[0] == 0 or n_spam == 0:
        raise NoPositives("ndcg needs at least one spam item")
    order = np.lexsort((node_ids, -scores.astype(np.float64)))
    gains = (labels[order] == 1).astype(np.float64)      # 2^y - 1 for binary y
    discounts = np.log2(np.arange(2, scores.shape[0] + 2, dtype=np.float64))
    dcg = float(np.sum(gains / discounts))
    ideal = float(np.sum(1.0 / discounts[:n_spam]))
    return dcg / ideal


def delta_ndcg(scores: np.ndarray, labels: np.ndarray, group: np.ndarray,
               node_ids: np.ndarray | None = None) -> float:
    """Protected-group NDCG minus favored-group NDCG (within-group ranks)."""
    if node_ids is None:
        scores, labels, group = _aligned(scores, labels, group)
        node_ids = np.arange(scores.shape[0])
    else:
        scores, labels, group, node_ids = _aligned(scores, labels, group, node_ids)
    prot = group == PROTECTED
    fav = group == FAVORED
    return ndcg(scores[prot], labels[prot], node_ids[prot]) - ndcg(
        scores[fav], labels[fav], node_ids[fav]
    )


def afrr(
    scores: np.ndarray,
    labels: np.ndarray,
    group: np.ndarray,
    author_mixed: np.ndarray,
    subgroup: int,
) -> float:
    """False-rejection rate of favored spams in one subgroup.

    ``author_mixed`` flags each review with its author's mixed/pure
    attribute; ``subgroup`` selects mixed (1) or pure (0) spams. The
    comparison pool is every favored non-spam review regardless of
    subgroup; strictly greater scores count as outranking.
    """
    scores, labels, group, author_mixed = _aligned(
        scores, labels, group, author_mixed
    )
    fav = group == FAVORED
    nonspam_scores = scores[fav & (labels == 0)]
    spam_scores = scores[fav & (labels == 1) & (author_mixed == subgroup)]
    if spam_scores.size == 0:
        raise NoSubgroupSpams(
            f"no favored spam review with author_mixed == {subgroup}"
        )
    if nonspam_scores.size == 0:
        raise NoFavoredNonSpams("no favored non-spam review to compare against")
    above = (nonspam_scores[None, :] > spam_scores[:, None]).sum(axis=1)
    return float(np.mean(above / nonspam_scores.size))


def _midranks(values: np.ndarray) -> np.ndarray:
    """1-based ranks with ties sharing their average rank."""
    order = np.argsort(values, kind="stable")
    ranks = np.empty(values.size, dtype=np.float64)
    sorted_vals = values[order]
    i = 0
    while i < values.size:
        j = i
        while j + 1 < values.size and sorted_vals[j + 1] == sorted_vals[i]:
            j += 1
        ranks[order[i:j + 1]] = (i + j) / 2.0 + 1.0
        i = j + 1
    return ranks


def auc(pred: np.ndarray, truth: np.ndarray) -> float:
    """Mann-Whitney AUC; tied predictions count one half."""
    pred, truth = _aligned(pred, truth)
    pos = truth == 1
    neg = truth == 0
    n_pos, n_neg = int(pos.sum()), int(neg.sum())
    if n_pos == 0 or n_neg == 0:
        raise OneClassOnly(
            f"auc needs both classes, got {n_pos} positive / {n_neg} negative"
        )
    ranks = _midranks(np.asarray(pred, dtype=np.float64))
    return float(
        (ranks[pos].sum() - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg)
    )


@dataclass(eq=False)
class MetricsReport:
    """One experiment's evaluation row; mirrors the result CSV columns."""

    run_id: str
    dataset: str
    p: float
    detector_variant: str
    aprime_source: str
    seed: int
    k: int
    rho: float
    alpha: float
    lam: float
    ndcg_all: float
    ndcg_protected: float
    ndcg_favored: float
    delta_ndcg: float
    afrr_mixed: float
    afrr_pure: float
    auc_aprime: float | None
