"""Estimator facades wrapping the training pipeline.

Both estimators follow the usual conventions: constructor arguments are
stored verbatim, ``fit`` learns everything and returns ``self``, and
learned state lives in trailing-underscore attributes.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .errors import MissingGroundTruth
from .graph import REVIEW, USER, ReviewGraph, assign_groups, assign_subgroups, split_users
from .metrics import MetricsReport, auc
from .nn import forward, propagation_for_graph
from .train import (
    TrainingConfig,
    evaluate,
    expand_features,
    train,
)


class FairSpamDetector(BaseEstimator):
    """Graph spam detector with subgroup-aware training.

    Scores every review's spamminess with a mean-aggregation network
    whose input features carry an extra mixed-user column. Where that
    column comes from is the ``aprime_source``: co-trained inferencer
    ("joint"), separately trained inferencer ("pretrained"), ground
    truth ("gt"), a coin flip ("random"), or nothing ("wo").
    """

    def __init__(
        self,
        epochs: int = 300,
        lam: float = 5.0,
        beta1: float = 1e-3,
        beta2: float = 1e-3,
        weight_decay: float = 1e-4,
        hidden_dims: tuple[int, ...] = (64,),
        percentile: float = 20.0,
        aprime_source: str = "joint",
        mixup_variant: str | None = "s1tr",
        mixup_count: int | None = None,
        alpha: float = 0.8,
        k: int = 50,
        rho: float = 0.5,
        pretrain_epochs: int | None = None,
        split_fractions: tuple[float, float, float] = (0.3, 0.1, 0.6),
        seed: int = 0,
    ):
        self.epochs = epochs
        self.lam = lam
        self.beta1 = beta1
        self.beta2 = beta2
        self.weight_decay = weight_decay
        self.hidden_dims = hidden_dims
        self.percentile = percentile
        self.aprime_source = aprime_source
        self.mixup_variant = mixup_variant
        self.mixup_count = mixup_count
        self.alpha = alpha
        self.k = k
        self.rho = rho
        self.pretrain_epochs = pretrain_epochs
        self.split_fractions = split_fractions
        self.seed = seed

    def _config(self) -> TrainingConfig:
        return TrainingConfig(
            epochs=self.epochs,
            lam=self.lam,
            beta1=self.beta1,
            beta2=self.beta2,
            weight_decay=self.weight_decay,
            hidden_dims=tuple(self.hidden_dims),
            percentile=self.percentile,
            aprime_source=self.aprime_source,
            mixup_variant=self.mixup_variant,
            mixup_count=self.mixup_count,
            alpha=self.alpha,
            k=self.k,
            rho=self.rho,
            pretrain_epochs=self.pretrain_epochs,
            split_fractions=tuple(self.split_fractions),
            seed=self.seed,
        ).resolve()

    def fit(self, X: ReviewGraph, y=None) -> "FairSpamDetector":
        """Train on a review graph (labels live on the graph itself)."""
        cfg = self._config()
        groups = assign_subgroups(X, assign_groups(X, cfg.percentile))
        split = split_users(X, cfg.split_fractions, seed=cfg.seed)
        models = train(X, groups, split, cfg)
        self.config_ = cfg
        self.graph_ = X
        self.groups_ = groups
        self.split_ = split
        self.models_ = models
        self.detector_ = models.detector
        self.inferencer_ = models.inferencer
        return self

    def _column(self, g: ReviewGraph, prop) -> np.ndarray | None:
        if self.config_.aprime_source == "wo":
            return None
        if self.inferencer_ is not None:
            scores, _ = forward(prop, self.inferencer_, g.features)
            return scores
        if g is not self.graph_:
            raise MissingGroundTruth(
                f"{self.config_.aprime_source!r} uses a fixed per-node column "
                "and cannot score a different graph"
            )
        return self.models_.aprime_input

    def predict_scores(self, X: ReviewGraph | None = None) -> np.ndarray:
        """Spam scores for every node of the clean graph."""
        check_is_fitted(self, "detector_")
        g = self.graph_ if X is None else X
        prop = propagation_for_graph(g)
        column = self._column(g, prop)
        feats = g.features if column is None else expand_features(
            g.features, g.kinds, column
        )
        scores, _ = forward(prop, self.detector_, feats)
        return scores

    def predict(
        self, X: ReviewGraph | None = None, threshold: float = 0.5
    ) -> np.ndarray:
        """Binary spam labels for reviews; -1 on users and products."""
        g = self.graph_ if X is None else X
        scores = self.predict_scores(g)
        out = np.full(g.n_nodes, -1, dtype=np.int8)
        reviews = g.reviews
        out[reviews] = (scores[reviews] >= threshold).astype(np.int8)
        return out

    def evaluate(self, dataset: str = "data") -> MetricsReport:
        """Test-split metrics of the fitted model on its own graph."""
        check_is_fitted(self, "detector_")
        return evaluate(
            self.graph_, self.groups_, self.split_, self.models_, dataset=dataset
        )


class MixedUserScorer(BaseEstimator):
    """Standalone mixed-user inferencer.

    Trains the user-attribute network alone (the pre-training phase of
    the pipeline) and exposes per-user mixed scores.
    """

    def __init__(
        self,
        epochs: int = 300,
        beta: float = 1e-3,
        weight_decay: float = 1e-4,
        hidden_dims: tuple[int, ...] = (64,),
        percentile: float = 20.0,
        k: int = 50,
        rho: float = 0.5,
        split_fractions: tuple[float, float, float] = (0.3, 0.1, 0.6),
        seed: int = 0,
    ):
        self.epochs = epochs
        self.beta = beta
        self.weight_decay = weight_decay
        self.hidden_dims = hidden_dims
        self.percentile = percentile
        self.k = k
        self.rho = rho
        self.split_fractions = split_fractions
        self.seed = seed

    def fit(self, X: ReviewGraph, y=None) -> "MixedUserScorer":
        from .train import train_pretrained

        cfg = TrainingConfig(
            epochs=0,
            pretrain_epochs=self.epochs,
            beta2=self.beta,
            weight_decay=self.weight_decay,
            hidden_dims=tuple(self.hidden_dims),
            percentile=self.percentile,
            aprime_source="pretrained",
            mixup_variant=None,
            k=self.k,
            rho=self.rho,
            split_fractions=tuple(self.split_fractions),
            seed=self.seed,
        ).resolve()
        groups = assign_subgroups(X, assign_groups(X, cfg.percentile))
        split = split_users(X, cfg.split_fractions, seed=cfg.seed)
        models = train_pretrained(X, groups, split, cfg)
        self.config_ = cfg
        self.graph_ = X
        self.groups_ = groups
        self.split_ = split
        self.inferencer_ = models.inferencer
        self.history_ = models.pretrain_history
        return self

    def predict_scores(self, X: ReviewGraph | None = None) -> np.ndarray:
        """Mixed-flag scores per node (meaningful on users)."""
        check_is_fitted(self, "inferencer_")
        g = self.graph_ if X is None else X
        prop = propagation_for_graph(g)
        scores, _ = forward(prop, self.inferencer_, g.features)
        return scores

    def predict(
        self, X: ReviewGraph | None = None, threshold: float = 0.5
    ) -> np.ndarray:
        """Binary mixed flags for users; -1 on reviews and products."""
        g = self.graph_ if X is None else X
        scores = self.predict_scores(g)
        out = np.full(g.n_nodes, -1, dtype=np.int8)
        users = g.users
        out[users] = (scores[users] >= threshold).astype(np.int8)
        return out

    def score(self, X: ReviewGraph | None = None, y=None) -> float:
        """AUC of the mixed scores over the fitted split's test users."""
        check_is_fitted(self, "inferencer_")
        g = self.graph_ if X is None else X
        scores = self.predict_scores(g)
        if X is None or X is self.graph_:
            users = self.split_.test_users
            truth = self.groups_.mixed[users]
        else:
            groups = assign_subgroups(X, assign_groups(X, self.percentile))
            users = X.users
            truth = groups.mixed[users]
        return auc(scores[users], truth)
