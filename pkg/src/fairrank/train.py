"""Training loops for the fair spam detector.

Two networks share a propagation operator over the (optionally
augmented, per-epoch pruned) training view:

* the detector scores every node's spamminess from features expanded
  with a mixed-user column;
* the inferencer predicts each user's mixed flag from raw features and
  supplies that column.

Per epoch: re-prune the replica edges, run the inferencer, expand the
detector's input features, sample synthetic mixup reviews, then update
both parameter sets by plain full-batch gradient descent. The detector
objective is cross-entropy over real plus synthetic training reviews,
the pairwise ranking regularizer over favored training reviews, and an
L2 penalty. The inferencer receives its own cross-entropy gradient plus
the detector objective's gradient chained through the expanded column
(the coupling that distinguishes joint training from the pre-trained
variant, where that chain is cut and the inferred column is a constant
w.r.t. the detector's optimization).

Everything is deterministic in the configured seed: parameter init,
splits, per-epoch masks, mixup pairs, and the random baseline column
all draw from per-purpose seeded streams.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .augment import (
    MIXUP_VARIANTS,
    AugmentedView,
    MixupPair,
    mixup_backward,
    mixup_predict,
    prune_nonspam_edges,
    replicate_mixed_users,
    sample_mixup_pairs,
    view_edges,
)
from .errors import (
    DimensionMismatch,
    MissingGroundTruth,
    NonFiniteValue,
)
from .graph import (
    FAVORED,
    REVIEW,
    TEST,
    USER,
    GroupAssignment,
    ReviewGraph,
    Split,
    assign_groups,
    assign_subgroups,
    split_users,
)
from .errors import NoFavoredNonSpams, NoSubgroupSpams
from .losses import detection_loss, fairness_regularizer, subgroup_loss
from .metrics import MetricsReport, afrr, auc, delta_ndcg, ndcg
from .nn import (
    GradientBundle,
    ModelParams,
    Propagation,
    forward,
    backward,
    init_params,
    mean_propagation,
    propagation_for_graph,
    zero_bundle,
)

APRIME_SOURCES = ("wo", "random", "gt", "pretrained", "joint")

# per-purpose seed stream tags
_TAG_DETECTOR_INIT = 0
_TAG_INFERENCER_INIT = 1
_TAG_PRUNE = 2
_TAG_MIXUP = 3
_TAG_RANDOM_APRIME = 4


@dataclass(frozen=True)
class TrainingConfig:
    """Full specification of one training run."""

    epochs: int = 300
    lam: float = 5.0
    beta1: float = 1e-3
    beta2: float = 1e-3
    weight_decay: float = 1e-4
    hidden_dims: tuple[int, ...] = (64,)
    percentile: float = 20.0
    aprime_source: str = "joint"
    mixup_variant: str | None = "s1tr"
    mixup_count: int | None = None
    alpha: float = 0.8
    k: int = 50
    rho: float = 0.5
    pretrain_epochs: int | None = None
    split_fractions: tuple[float, float, float] = (0.3, 0.1, 0.6)
    seed: int = 0

    @property
    def detector_variant(self) -> str:
        return "gnn" if self.mixup_variant is None else f"gnn-{self.mixup_variant}"

    def validate(self) -> None:
        if self.epochs < 0:
            raise ValueError(f"epochs must be >= 0, got {self.epochs}")
        if self.aprime_source not in APRIME_SOURCES:
            raise ValueError(
                f"aprime_source must be one of {APRIME_SOURCES}, "
                f"got {self.aprime_source!r}"
            )
        if self.mixup_variant is not None and self.mixup_variant not in MIXUP_VARIANTS:
            raise ValueError(
                f"mixup_variant must be None or one of {MIXUP_VARIANTS}, "
                f"got {self.mixup_variant!r}"
            )
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError(f"alpha must lie in [0, 1], got {self.alpha}")
        if self.k < 0:
            raise ValueError(f"k must be >= 0, got {self.k}")
        if not 0.0 <= self.rho < 1.0:
            raise ValueError(f"rho must lie in [0, 1), got {self.rho}")
        if self.beta1 < 0 or self.beta2 < 0 or self.weight_decay < 0:
            raise ValueError("learning rates and weight decay must be >= 0")
        if self.seed < 0:
            raise ValueError(f"seed must be non-negative, got {self.seed}")
        if not all(h >= 1 for h in self.hidden_dims):
            raise ValueError(f"hidden dims must be positive, got {self.hidden_dims}")

    def resolve(self) -> "TrainingConfig":
        """Normalize mode-dependent fields (wo has no mixed attribute,
        so no user can be selected for replication)."""
        self.validate()
        if self.aprime_source == "wo" and self.k != 0:
            return replace(self, k=0)
        return self


@dataclass(eq=False)
class TrainedModels:
    """Outcome of a training run."""

    config: TrainingConfig
    detector: ModelParams
    inferencer: ModelParams | None
    detector_history: np.ndarray
    inferencer_history: np.ndarray | None = None
    pretrain_history: np.ndarray | None = None
    aprime_input: np.ndarray | None = None   # constant column for random/gt


def expand_features(
    features: np.ndarray, kinds: np.ndarray, mixed_scores: np.ndarray
) -> np.ndarray:
    """Append the mixed-user column as a signed confidence.

    Scores/flags in [0, 1] are encoded as 2a - 1 so the appended dim is
    zero-mean with the same swing as the profile features; reviews and
    products get the neutral 0.
    """
    features = np.asarray(features, dtype=np.float64)
    mixed_scores = np.asarray(mixed_scores, dtype=np.float64)
    if mixed_scores.shape != (features.shape[0],):
        raise DimensionMismatch(
            f"mixed_scores shape {mixed_scores.shape} != ({features.shape[0]},)"
        )
    col = np.where(np.asarray(kinds) == USER, 2.0 * mixed_scores - 1.0, 0.0)
    return np.concatenate([features, col[:, None]], axis=1)


def assign_aprime_baseline(
    method: str, g: ReviewGraph, groups: GroupAssignment, seed: int
) -> np.ndarray | None:
    """Constant mixed-user column for the baseline modes.

    wo -> None; random -> one fair coin per user, drawn once for the
    whole run; gt -> the ground-truth mixed flags. Values are defined
    on user nodes, 0 elsewhere.
    """
    if method == "wo":
        return None
    if method == "random":
        rng = np.random.default_rng([seed, _TAG_RANDOM_APRIME])
        out = np.zeros(g.n_nodes, dtype=np.float64)
        users = g.users
        out[users] = rng.integers(0, 2, size=users.size).astype(np.float64)
        return out
    if method == "gt":
        if groups.mixed is None:
            raise MissingGroundTruth(
                "gt baseline needs subgroup attributes; run assign_subgroups"
            )
        return np.where(groups.mixed > 0, 1.0, 0.0)
    raise ValueError(f"unknown baseline method {method!r}")


@dataclass(eq=False)
class EpochContext:
    """Everything one epoch's gradient evaluation needs."""

    prop: Propagation
    kinds: np.ndarray
    features: np.ndarray              # raw input features, width d
    labels: np.ndarray                # float; spam labels on reviews
    train_reviews: np.ndarray
    favored_train_reviews: np.ndarray
    train_users: np.ndarray
    mixed_targets: np.ndarray         # float; ground-truth flags on users
    pairs: list[MixupPair]
    lam: float
    weight_decay: float


def detector_gradients(
    ctx: EpochContext,
    params: ModelParams,
    mixed_input: np.ndarray | None,
) -> tuple[float, GradientBundle]:
    """Detector objective value and its complete gradient.

    ``mixed_input`` is the per-node mixed-user column (None trains on
    raw features). Synthetic mixup reviews enter the detection loss
    alongside the real training reviews; the ranking regularizer sees
    real favored training reviews only. The returned bundle contains
    d(objective)/d(weights, biases, input features), decay included;
    feature gradients are w.r.t. the expanded features when a column
    was appended (its gradient sits in the last column).
    """
    if mixed_input is not None:
        x = expand_features(ctx.features, ctx.kinds, mixed_input)
    else:
        x = ctx.features
    scores, cache = forward(ctx.prop, params, x)
    n = scores.shape[0]

    mix_caches = []
    if ctx.pairs:
        mix_scores = np.empty(len(ctx.pairs))
        for i, pair in enumerate(ctx.pairs):
            mix_scores[i], mc = mixup_predict(cache, pair)
            mix_caches.append(mc)
        ext_scores = np.concatenate([scores, mix_scores])
        ext_labels = np.concatenate([ctx.labels, [p.label for p in ctx.pairs]])
        ext_train = np.concatenate(
            [ctx.train_reviews, n + np.arange(len(ctx.pairs))]
        )
    else:
        ext_scores, ext_labels, ext_train = scores, ctx.labels, ctx.train_reviews

    det = detection_loss(ext_scores, ext_labels, ext_train)
    value = det.value
    score_grads = det.score_grads[:n].copy()
    if ctx.lam != 0.0:
        fair = fairness_regularizer(scores, ctx.labels, ctx.favored_train_reviews)
        value += ctx.lam * fair.value
        score_grads += ctx.lam * fair.score_grads
    value += 0.5 * ctx.weight_decay * params.squared_norm()

    rep_grads: dict[int, np.ndarray] = {}
    extra = zero_bundle(params, n)
    for pair_cache, dscore in zip(mix_caches, det.score_grads[n:]):
        mixup_backward(
            cache, pair_cache, float(dscore),
            extra.weight_grads, extra.bias_grads, rep_grads,
        )
    bundle = backward(cache, score_grads, rep_grads or None)
    bundle.add_scaled(extra)
    for layer in range(params.n_layers):
        bundle.weight_grads[layer] += ctx.weight_decay * params.weights[layer]
        bundle.bias_grads[layer] += ctx.weight_decay * params.biases[layer]
    return value, bundle


@dataclass(eq=False)
class JointGrads:
    """One epoch's losses and gradients for both networks."""

    detector_value: float
    inferencer_value: float
    detector_bundle: GradientBundle
    inferencer_bundle: GradientBundle
    mixed_scores: np.ndarray


def joint_gradients(
    ctx: EpochContext,
    detector_params: ModelParams,
    inferencer_params: ModelParams,
    couple: bool = True,
) -> JointGrads:
    """Evaluate both objectives at the current parameters.

    The inferencer bundle always contains its own cross-entropy
    gradient plus decay; with ``couple`` the detector objective's
    gradient w.r.t. the expanded column is chained through the
    inferencer as well (zeroed otherwise, which reproduces the
    pre-trained variant's update rule exactly).
    """
    g_scores, g_cache = forward(ctx.prop, inferencer_params, ctx.features)
    det_value, det_bundle = detector_gradients(ctx, detector_params, g_scores)

    own = subgroup_loss(g_scores, ctx.mixed_targets, ctx.train_users)
    inf_value = own.value + 0.5 * ctx.weight_decay * inferencer_params.squared_norm()
    if couple:
        # d(column)/d(inferencer score) = 2 under the signed encoding
        chain = np.where(
            np.asarray(ctx.kinds) == USER,
            2.0 * det_bundle.feature_grads[:, -1],
            0.0,
        )
    else:
        chain = np.zeros_like(g_scores)
    inf_bundle = backward(g_cache, own.score_grads + chain)
    for layer in range(inferencer_params.n_layers):
        inf_bundle.weight_grads[layer] += (
            ctx.weight_decay * inferencer_params.weights[layer]
        )
        inf_bundle.bias_grads[layer] += (
            ctx.weight_decay * inferencer_params.biases[layer]
        )
    return JointGrads(
        detector_value=det_value,
        inferencer_value=inf_value,
        detector_bundle=det_bundle,
        inferencer_bundle=inf_bundle,
        mixed_scores=g_scores,
    )


@dataclass(eq=False)
class _TrainState:
    cfg: TrainingConfig
    g: ReviewGraph
    groups: GroupAssignment
    split: Split
    view: AugmentedView
    labels: np.ndarray
    train_reviews: np.ndarray
    favored_train_reviews: np.ndarray
    train_users: np.ndarray
    mixed_targets: np.ndarray
    aprime_input_view: np.ndarray | None
    static_prop: Propagation | None


def _make_state(
    g: ReviewGraph,
    groups: GroupAssignment,
    split: Split,
    cfg: TrainingConfig,
    aprime_input_base: np.ndarray | None = None,
) -> _TrainState:
    if groups.mixed is None:
        raise MissingGroundTruth(
            "training needs subgroup attributes; run assign_subgroups first"
        )
    view = replicate_mixed_users(g, groups, split, cfg.k)
    kinds = view.kinds
    is_review = kinds == REVIEW
    is_user = kinds == USER
    train_reviews = np.flatnonzero(is_review & view.is_train)
    favored_train_reviews = np.flatnonzero(
        is_review & view.is_train & (view.group == FAVORED)
    )
    train_users = np.flatnonzero(is_user & view.is_train)
    mixed_targets = np.where(is_user, view.mixed_truth, 0).astype(np.float64)
    aprime_view = None
    if aprime_input_base is not None:
        # replicas inherit their origin's column value
        aprime_view = aprime_input_base[view.origin]
    static_prop = None
    if view.n_maskable == 0:
        src, dst = view_edges(view, None)
        static_prop = mean_propagation(view.n_nodes, src, dst)
    return _TrainState(
        cfg=cfg,
        g=g,
        groups=groups,
        split=split,
        view=view,
        labels=view.labels.astype(np.float64),
        train_reviews=train_reviews,
        favored_train_reviews=favored_train_reviews,
        train_users=train_users,
        mixed_targets=mixed_targets,
        aprime_input_view=aprime_view,
        static_prop=static_prop,
    )


def _epoch_prop(st: _TrainState, epoch: int) -> Propagation:
    if st.static_prop is not None:
        return st.static_prop
    mask = prune_nonspam_edges(
        st.view, st.cfg.rho, [st.cfg.seed, _TAG_PRUNE, epoch]
    )
    src, dst = view_edges(st.view, mask)
    return mean_propagation(st.view.n_nodes, src, dst)


def _epoch_pairs(st: _TrainState, epoch: int) -> list[MixupPair]:
    if st.cfg.mixup_variant is None:
        return []
    return sample_mixup_pairs(
        st.g,
        st.groups,
        st.split,
        st.cfg.mixup_variant,
        st.cfg.mixup_count,
        st.cfg.alpha,
        [st.cfg.seed, _TAG_MIXUP, epoch],
    )


def _epoch_context(st: _TrainState, epoch: int, with_mixup: bool = True) -> EpochContext:
    return EpochContext(
        prop=_epoch_prop(st, epoch),
        kinds=st.view.kinds,
        features=st.view.features,
        labels=st.labels,
        train_reviews=st.train_reviews,
        favored_train_reviews=st.favored_train_reviews,
        train_users=st.train_users,
        mixed_targets=st.mixed_targets,
        pairs=_epoch_pairs(st, epoch) if with_mixup else [],
        lam=st.cfg.lam,
        weight_decay=st.cfg.weight_decay,
    )


def _detector_dims(cfg: TrainingConfig, feature_dim: int) -> tuple[int, ...]:
    width = feature_dim if cfg.aprime_source == "wo" else feature_dim + 1
    return (width, *cfg.hidden_dims, 1)


def _inferencer_dims(cfg: TrainingConfig, feature_dim: int) -> tuple[int, ...]:
    return (feature_dim, *cfg.hidden_dims, 1)


def train_detector_only(
    g: ReviewGraph,
    groups: GroupAssignment,
    split: Split,
    cfg: TrainingConfig,
    aprime_input: np.ndarray | None,
) -> TrainedModels:
    """Train the detector with a fixed (or absent) mixed-user column."""
    cfg = cfg.resolve()
    st = _make_state(g, groups, split, cfg, aprime_input)
    params = init_params(
        _detector_dims(cfg, g.feature_dim), [cfg.seed, _TAG_DETECTOR_INIT]
    )
    history = np.empty(cfg.epochs)
    for epoch in range(cfg.epochs):
        try:
            ctx = _epoch_context(st, epoch)
            value, bundle = detector_gradients(ctx, params, st.aprime_input_view)
            params = params.step(bundle, cfg.beta1)
            history[epoch] = value
        except NonFiniteValue as exc:
            raise NonFiniteValue(f"epoch {epoch}: {exc}") from exc
    return TrainedModels(
        config=cfg,
        detector=params,
        inferencer=None,
        detector_history=history,
        aprime_input=aprime_input,
    )


def _run_coupled_epochs(
    st: _TrainState,
    detector: ModelParams,
    inferencer: ModelParams,
    first_epoch: int,
    n_epochs: int,
    couple: bool,
) -> tuple[ModelParams, ModelParams, np.ndarray, np.ndarray]:
    cfg = st.cfg
    det_history = np.empty(n_epochs)
    inf_history = np.empty(n_epochs)
    for t in range(n_epochs):
        epoch = first_epoch + t
        try:
            ctx = _epoch_context(st, epoch)
            grads = joint_gradients(ctx, detector, inferencer, couple=couple)
            # simultaneous update from the same pre-step parameters
            detector = detector.step(grads.detector_bundle, cfg.beta1)
            inferencer = inferencer.step(grads.inferencer_bundle, cfg.beta2)
            det_history[t] = grads.detector_value
            inf_history[t] = grads.inferencer_value
        except NonFiniteValue as exc:
            raise NonFiniteValue(f"epoch {epoch}: {exc}") from exc
    return detector, inferencer, det_history, inf_history


def train_joint(
    g: ReviewGraph,
    groups: GroupAssignment,
    split: Split,
    cfg: TrainingConfig,
    ablate_coupling: bool = False,
) -> TrainedModels:
    """Co-train detector and inferencer from scratch.

    ``ablate_coupling`` zeroes the expanded column's gradient before it
    reaches the inferencer; the run then follows the pre-trained
    variant's update rule epoch for epoch.
    """
    cfg = cfg.resolve()
    st = _make_state(g, groups, split, cfg)
    detector = init_params(
        _detector_dims(cfg, g.feature_dim), [cfg.seed, _TAG_DETECTOR_INIT]
    )
    inferencer = init_params(
        _inferencer_dims(cfg, g.feature_dim), [cfg.seed, _TAG_INFERENCER_INIT]
    )
    detector, inferencer, det_history, inf_history = _run_coupled_epochs(
        st, detector, inferencer, 0, cfg.epochs, couple=not ablate_coupling
    )
    return TrainedModels(
        config=cfg,
        detector=detector,
        inferencer=inferencer,
        detector_history=det_history,
        inferencer_history=inf_history,
    )


def train_pretrained(
    g: ReviewGraph,
    groups: GroupAssignment,
    split: Split,
    cfg: TrainingConfig,
) -> TrainedModels:
    """Pre-train the inferencer, then train the detector on its column.

    Phase 1 minimizes the inferencer's own loss alone. Phase 2 runs the
    joint epoch loop with the detector-to-inferencer chain cut: the
    inferred column is a constant w.r.t. the detector objective (its
    gradient never reaches the inferencer), while the inferencer keeps
    following its own loss.
    """
    cfg = cfg.resolve()
    st = _make_state(g, groups, split, cfg)
    pretrain = cfg.epochs if cfg.pretrain_epochs is None else cfg.pretrain_epochs
    inferencer = init_params(
        _inferencer_dims(cfg, g.feature_dim), [cfg.seed, _TAG_INFERENCER_INIT]
    )
    pre_history = np.empty(pretrain)
    for epoch in range(pretrain):
        try:
            ctx = _epoch_context(st, epoch, with_mixup=False)
            scores, cache = forward(ctx.prop, inferencer, ctx.features)
            own = subgroup_loss(scores, ctx.mixed_targets, ctx.train_users)
            bundle = backward(cache, own.score_grads)
            for layer in range(inferencer.n_layers):
                bundle.weight_grads[layer] += cfg.weight_decay * inferencer.weights[layer]
                bundle.bias_grads[layer] += cfg.weight_decay * inferencer.biases[layer]
            pre_history[epoch] = (
                own.value + 0.5 * cfg.weight_decay * inferencer.squared_norm()
            )
            inferencer = inferencer.step(bundle, cfg.beta2)
        except NonFiniteValue as exc:
            raise NonFiniteValue(f"epoch {epoch}: {exc}") from exc

    detector = init_params(
        _detector_dims(cfg, g.feature_dim), [cfg.seed, _TAG_DETECTOR_INIT]
    )
    detector, inferencer, det_history, inf_history = _run_coupled_epochs(
        st, detector, inferencer, pretrain, cfg.epochs, couple=False
    )
    return TrainedModels(
        config=cfg,
        detector=detector,
        inferencer=inferencer,
        detector_history=det_history,
        inferencer_history=inf_history,
        pretrain_history=pre_history,
    )


def train(
    g: ReviewGraph,
    groups: GroupAssignment,
    split: Split,
    cfg: TrainingConfig,
) -> TrainedModels:
    """Dispatch on the configured mixed-column source."""
    cfg = cfg.resolve()
    if cfg.aprime_source == "joint":
        return train_joint(g, groups, split, cfg)
    if cfg.aprime_source == "pretrained":
        return train_pretrained(g, groups, split, cfg)
    column = assign_aprime_baseline(cfg.aprime_source, g, groups, cfg.seed)
    return train_detector_only(g, groups, split, cfg, column)


def evaluate(
    g: ReviewGraph,
    groups: GroupAssignment,
    split: Split,
    models: TrainedModels,
    dataset: str = "data",
) -> MetricsReport:
    """Score the clean base graph and report test-set metrics."""
    cfg = models.config
    if groups.mixed is None:
        raise MissingGroundTruth(
            "evaluation needs subgroup attributes; run assign_subgroups first"
        )
    prop = propagation_for_graph(g)
    if cfg.aprime_source == "wo":
        x = g.features
        aprime_eval = None
    elif models.inferencer is not None:
        aprime_eval, _ = forward(prop, models.inferencer, g.features)
        x = expand_features(g.features, g.kinds, aprime_eval)
    else:
        aprime_eval = models.aprime_input
        x = expand_features(g.features, g.kinds, aprime_eval)
    scores, _ = forward(prop, models.detector, x)

    is_review = g.kinds == REVIEW
    test_reviews = np.flatnonzero(is_review & (split.membership == TEST))
    s = scores[test_reviews]
    y = g.labels[test_reviews]
    grp = groups.group[test_reviews]
    author_mixed = groups.mixed[g.review_user[test_reviews]]

    ndcg_all = ndcg(s, y, test_reviews)
    prot_sel = grp == 1
    fav_sel = grp == 0
    ndcg_protected = ndcg(s[prot_sel], y[prot_sel], test_reviews[prot_sel])
    ndcg_favored = ndcg(s[fav_sel], y[fav_sel], test_reviews[fav_sel])

    auc_aprime = None
    if aprime_eval is not None:
        test_users = split.test_users
        truth = groups.mixed[test_users]
        auc_aprime = auc(aprime_eval[test_users], truth)

    def _afrr_or_nan(subgroup: int) -> float:
        # a test split can lack one subgroup's spams entirely; the rate
        # is undefined there, not zero
        try:
            return afrr(s, y, grp, author_mixed, subgroup)
        except (NoSubgroupSpams, NoFavoredNonSpams):
            return float("nan")

    return MetricsReport(
        run_id=run_id(dataset, cfg),
        dataset=dataset,
        p=cfg.percentile,
        detector_variant=cfg.detector_variant,
        aprime_source=cfg.aprime_source,
        seed=cfg.seed,
        k=cfg.k,
        rho=cfg.rho,
        alpha=cfg.alpha,
        lam=cfg.lam,
        ndcg_all=ndcg_all,
        ndcg_protected=ndcg_protected,
        ndcg_favored=ndcg_favored,
        delta_ndcg=ndcg_protected - ndcg_favored,
        afrr_mixed=_afrr_or_nan(1),
        afrr_pure=_afrr_or_nan(0),
        auc_aprime=auc_aprime,
    )


def run_id(dataset: str, cfg: TrainingConfig) -> str:
    return (
        f"{dataset}-p{cfg.percentile:g}-{cfg.detector_variant}-{cfg.aprime_source}"
        f"-k{cfg.k}-rho{cfg.rho:g}-a{cfg.alpha:g}-l{cfg.lam:g}-s{cfg.seed}"
    )


def run_experiment(
    cfg: TrainingConfig, g: ReviewGraph, dataset: str = "data"
) -> tuple[MetricsReport, TrainedModels]:
    """Group, subgroup, split, train, evaluate: one result row."""
    cfg = cfg.resolve()
    groups = assign_subgroups(g, assign_groups(g, cfg.percentile))
    split = split_users(g, cfg.split_fractions, seed=cfg.seed)
    models = train(g, groups, split, cfg)
    report = evaluate(g, groups, split, models, dataset=dataset)
    return report, models
