"""Training objectives in score space.

Every loss returns its scalar value together with exact partial
derivatives with respect to the per-node scores, so the caller can feed
them straight into the network's backward pass. Scores must lie in the
open interval (0, 1).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import EmptyTrainingSet, NoPairs, NonFiniteValue
from .nn import ModelParams

# value bounds of the pairwise regularizer's per-pair average, reached
# in the limits score_spam - score_nonspam -> +-1
_FAIR_LOWER = -float(np.log1p(np.e))
_FAIR_UPPER = -float(np.log1p(np.exp(-1.0)))


@dataclass(eq=False)
class LossResult:
    """Scalar loss and d(loss)/d(score); zero on untouched nodes."""

    value: float
    score_grads: np.ndarray


def _check_scores(scores: np.ndarray, idx: np.ndarray, what: str) -> None:
    used = scores[idx]
    if not np.isfinite(used).all() or np.any(used <= 0.0) or np.any(used >= 1.0):
        raise NonFiniteValue(f"{what}: scores must lie strictly in (0, 1)")


def detection_loss(
    scores: np.ndarray, labels: np.ndarray, train_reviews: np.ndarray
) -> LossResult:
    """Mean cross-entropy of spam scores over the training reviews.

    Accepts soft labels in [0, 1]; the gradient w.r.t. a score s with
    label y is (s - y) / (s (1 - s)) / n.
    """
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.float64)
    idx = np.asarray(train_reviews, dtype=np.int64)
    if idx.size == 0:
        raise EmptyTrainingSet("detection loss over an empty training set")
    _check_scores(scores, idx, "detection_loss")
    s = scores[idx]
    y = labels[idx]
    n = idx.size
    value = float(np.mean(-y * np.log(s) - (1.0 - y) * np.log1p(-s)))
    grads = np.zeros_like(scores)
    np.add.at(grads, idx, (s - y) / (s * (1.0 - s)) / n)
    return LossResult(value=value, score_grads=grads)


def fairness_regularizer(
    scores: np.ndarray,
    labels: np.ndarray,
    favored_train_reviews: np.ndarray,
    pair_count: int | None = None,
) -> LossResult:
    """Pairwise ranking surrogate over the favored training reviews.

    For every (non-spam i, spam j) pair inside the set the term is
    -log(1 + exp(s_j - s_i)), averaged over all such pairs. Minimizing
    the value drives spam scores above non-spam scores within the
    favored group. ``pair_count`` may pre-supply the pair count; it must
    equal (#non-spam x #spam).
    """
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.float64)
    idx = np.asarray(favored_train_reviews, dtype=np.int64)
    nonspam = idx[labels[idx] == 0]
    spam = idx[labels[idx] == 1]
    n_pairs = nonspam.size * spam.size
    if pair_count is not None and pair_count != n_pairs:
        raise ValueError(
            f"pair_count {pair_count} != observed (non-spam x spam) {n_pairs}"
        )
    if n_pairs == 0:
        raise NoPairs(
            "favored training reviews contain no (non-spam, spam) pair "
            f"({nonspam.size} non-spam, {spam.size} spam)"
        )
    _check_scores(scores, idx, "fairness_regularizer")

    # score gaps live in (-1, 1), so exp never overflows and log1p(exp(.))
    # equals logaddexp(0, .); one shared exp serves both value and grads
    diff = scores[spam][None, :] - scores[nonspam][:, None]   # s_j - s_i
    np.exp(diff, out=diff)
    value = -float(np.sum(np.log1p(diff))) / n_pairs
    diff /= 1.0 + diff                                        # sigmoid of the gap
    grads = np.zeros_like(scores)
    np.add.at(grads, spam, -diff.sum(axis=0) / n_pairs)
    np.add.at(grads, nonspam, diff.sum(axis=1) / n_pairs)
    # per-pair average is bounded because score gaps live in (-1, 1)
    assert _FAIR_LOWER <= value <= _FAIR_UPPER, value
    return LossResult(value=value, score_grads=grads)


@dataclass(eq=False)
class ObjectiveSets:
    """Node index sets the detector objective is evaluated over."""

    train_reviews: np.ndarray
    favored_train_reviews: np.ndarray


@dataclass(eq=False)
class ObjectiveResult:
    """Detector objective: value, score grads, parameter-space decay grads."""

    value: float
    score_grads: np.ndarray
    decay_weight_grads: list[np.ndarray]
    decay_bias_grads: list[np.ndarray]


def detector_objective(
    scores: np.ndarray,
    labels: np.ndarray,
    sets: ObjectiveSets,
    lam: float,
    weight_decay: float,
    params: ModelParams,
) -> ObjectiveResult:
    """Detection loss + lam * ranking regularizer + L2 penalty.

    The decay term (weight_decay / 2) * ||params||^2 contributes the
    gradient weight_decay * p for every parameter entry, returned in
    parameter space; the score-space gradients combine the other two
    terms. lam = 0 skips the regularizer entirely.
    """
    det = detection_loss(scores, labels, sets.train_reviews)
    value = det.value
    grads = det.score_grads
    if lam != 0.0:
        fair = fairness_regularizer(scores, labels, sets.favored_train_reviews)
        value = value + lam * fair.value
        grads = grads + lam * fair.score_grads
    value = value + 0.5 * weight_decay * params.squared_norm()
    return ObjectiveResult(
        value=value,
        score_grads=grads,
        decay_weight_grads=[weight_decay * w for w in params.weights],
        decay_bias_grads=[weight_decay * b for b in params.biases],
    )


def subgroup_loss(
    scores: np.ndarray, targets: np.ndarray, train_users: np.ndarray
) -> LossResult:
    """Mean cross-entropy of mixed-user predictions over training users."""
    scores = np.asarray(scores, dtype=np.float64)
    targets = np.asarray(targets, dtype=np.float64)
    idx = np.asarray(train_users, dtype=np.int64)
    if idx.size == 0:
        raise EmptyTrainingSet("subgroup loss over an empty training user set")
    _check_scores(scores, idx, "subgroup_loss")
    s = scores[idx]
    y = targets[idx]
    n = idx.size
    value = float(np.mean(-y * np.log(s) - (1.0 - y) * np.log1p(-s)))
    grads = np.zeros_like(scores)
    np.add.at(grads, idx, (s - y) / (s * (1.0 - s)) / n)
    return LossResult(value=value, score_grads=grads)
