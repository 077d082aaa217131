"""Training-graph augmentation: user replication and review mixup.

Replication copies every favored mixed training user (reviews included)
k times so the scarce mixed subgroup is better represented; replicas
connect to the original products and count as favored, mixed, training
nodes. Each epoch, every replica's non-spam user-review edges are
independently dropped with probability rho, except one uniformly chosen
non-spam edge per replica that is force-kept; spam edges and all
original nodes are never touched.

Mixup synthesizes extra spam reviews: a favored training spam is paired
with a partner review, their input features are blended with weight
alpha, and the blend is propagated through both nodes' neighborhoods in
parallel, re-mixing the two branch representations after every layer.
The synthetic score trains the detection loss only.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import EmptySourceSet, MissingGroundTruth
from .graph import (
    FAVORED,
    PROTECTED,
    REVIEW,
    TEST,
    TRAIN,
    USER,
    GroupAssignment,
    ReviewGraph,
    Split,
)
from .nn import ForwardCache, GradientBundle, ModelParams

MIXUP_VARIANTS = ("s1tr", "s0te", "s1te")


@dataclass(frozen=True, eq=False)
class AugmentedView:
    """Base graph plus replica nodes; original node ids are preserved.

    Node annotations are extended to the replicas: group (favored),
    mixed flag (1), training membership (true). Edges are split into a
    fixed part (base edges, replica spam edges, replica review-product
    edges) and a maskable part (replica non-spam user-review edges),
    grouped per replica user for the force-keep rule.
    """

    base: ReviewGraph
    k: int
    n_nodes: int
    kinds: np.ndarray            # int8 [n_view]
    features: np.ndarray         # float64 [n_view, d]
    labels: np.ndarray           # int8 [n_view]
    group: np.ndarray            # int8 [n_view]; replicas favored
    mixed_truth: np.ndarray      # int8 [n_view]; users only, replicas 1
    is_train: np.ndarray         # bool [n_view]; replicas true
    is_replica: np.ndarray       # bool [n_view]
    origin: np.ndarray           # int64 [n_view]; original node id
    fixed_src: np.ndarray
    fixed_dst: np.ndarray
    mask_src: np.ndarray         # replica user per maskable edge
    mask_dst: np.ndarray         # replica non-spam review per maskable edge
    mask_owner_ptr: np.ndarray   # [n_replica_users + 1] into mask_src/dst
    replica_users: np.ndarray    # view ids, one per replica user

    @property
    def n_maskable(self) -> int:
        return int(self.mask_src.shape[0])

    @property
    def user_ids(self) -> np.ndarray:
        return np.flatnonzero(self.kinds == USER)

    @property
    def review_ids(self) -> np.ndarray:
        return np.flatnonzero(self.kinds == REVIEW)


def replicate_mixed_users(
    g: ReviewGraph, groups: GroupAssignment, split: Split, k: int
) -> AugmentedView:
    """Append k copies of every favored mixed training user.

    Deterministic: users are processed in ascending id order, copies in
    replica order, reviews in ascending id order. k = 0 yields a view
    identical to the base graph.
    """
    if k < 0:
        raise ValueError(f"k must be >= 0, got {k}")
    if groups.mixed is None:
        raise MissingGroundTruth(
            "replication needs subgroup attributes; run assign_subgroups first"
        )
    n_base = g.n_nodes
    base_edges = g.edge_array()

    mixed_train = [
        int(u)
        for u in np.flatnonzero(
            (g.kinds == USER)
            & (groups.group == FAVORED)
            & (groups.mixed == 1)
        )
        if split.membership[u] == TRAIN
    ]

    kinds = [g.kinds]
    feats = [g.features]
    labels = [g.labels]
    group = [groups.group]
    mixed = [np.where(g.kinds == USER, groups.mixed, -1).astype(np.int8)]
    is_train = [split.membership == TRAIN]
    origin = [np.arange(n_base, dtype=np.int64)]

    fixed_src = [base_edges[:, 0]]
    fixed_dst = [base_edges[:, 1]]
    mask_src: list[int] = []
    mask_dst: list[int] = []
    owner_ptr = [0]
    replica_users: list[int] = []

    next_id = n_base
    for u in mixed_train:
        reviews_u = np.sort(g.neighbors(u))
        for _ in range(k):
            rep_user = next_id
            next_id += 1
            replica_users.append(rep_user)
            kinds.append(np.array([USER], dtype=np.int8))
            feats.append(g.features[u:u + 1])
            labels.append(np.array([-1], dtype=np.int8))
            group.append(np.array([FAVORED], dtype=np.int8))
            mixed.append(np.array([1], dtype=np.int8))
            is_train.append(np.array([True]))
            origin.append(np.array([u], dtype=np.int64))
            for r in reviews_u:
                rep_review = next_id
                next_id += 1
                kinds.append(np.array([REVIEW], dtype=np.int8))
                feats.append(g.features[r:r + 1])
                labels.append(g.labels[r:r + 1])
                group.append(np.array([FAVORED], dtype=np.int8))
                mixed.append(np.array([-1], dtype=np.int8))
                is_train.append(np.array([True]))
                origin.append(np.array([r], dtype=np.int64))
                if g.labels[r] == 0:
                    mask_src.append(rep_user)
                    mask_dst.append(rep_review)
                else:
                    fixed_src.append(np.array([rep_user], dtype=np.int64))
                    fixed_dst.append(np.array([rep_review], dtype=np.int64))
                fixed_src.append(np.array([rep_review], dtype=np.int64))
                fixed_dst.append(np.array([int(g.review_product[r])], dtype=np.int64))
            owner_ptr.append(len(mask_src))

    n_view = next_id
    is_replica = np.zeros(n_view, dtype=bool)
    is_replica[n_base:] = True
    return AugmentedView(
        base=g,
        k=int(k),
        n_nodes=n_view,
        kinds=np.concatenate(kinds),
        features=np.concatenate(feats, axis=0),
        labels=np.concatenate(labels),
        group=np.concatenate(group),
        mixed_truth=np.concatenate(mixed),
        is_train=np.concatenate(is_train),
        is_replica=is_replica,
        origin=np.concatenate(origin),
        fixed_src=np.concatenate(fixed_src),
        fixed_dst=np.concatenate(fixed_dst),
        mask_src=np.asarray(mask_src, dtype=np.int64),
        mask_dst=np.asarray(mask_dst, dtype=np.int64),
        mask_owner_ptr=np.asarray(owner_ptr, dtype=np.int64),
        replica_users=np.asarray(replica_users, dtype=np.int64),
    )


@dataclass(frozen=True, eq=False)
class EdgeMask:
    """Per-epoch keep decisions over the view's maskable edges."""

    kept: np.ndarray    # bool [n_maskable]; independent keeps
    forced: np.ndarray  # int64 [n_replica_users]; force-kept edge index

    def effective(self) -> np.ndarray:
        out = self.kept.copy()
        if self.forced.size:
            out[self.forced] = True
        return out


def prune_nonspam_edges(view: AugmentedView, rho: float, epoch_seed) -> EdgeMask:
    """Drop replica non-spam user edges w.p. rho; force-keep one each.

    Original nodes and spam edges are untouched by construction (they
    are not in the maskable set). Deterministic in (view, rho, seed).
    """
    if not 0.0 <= rho < 1.0:
        raise ValueError(f"rho must lie in [0, 1), got {rho}")
    rng = np.random.default_rng(epoch_seed)
    kept = rng.random(view.n_maskable) >= rho
    ptr = view.mask_owner_ptr
    counts = np.diff(ptr)
    draws = rng.random(counts.size)
    forced = ptr[:-1] + np.floor(draws * counts).astype(np.int64)
    return EdgeMask(kept=kept, forced=forced)


def view_edges(view: AugmentedView, mask: EdgeMask | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Effective undirected edge endpoints under a mask (None = all kept)."""
    if view.n_maskable == 0:
        return view.fixed_src, view.fixed_dst
    if mask is None:
        keep = np.ones(view.n_maskable, dtype=bool)
    else:
        keep = mask.effective()
    return (
        np.concatenate([view.fixed_src, view.mask_src[keep]]),
        np.concatenate([view.fixed_dst, view.mask_dst[keep]]),
    )


@dataclass(frozen=True)
class MixupPair:
    """One synthetic review: source spam, partner, blend weight, label."""

    first: int
    second: int
    alpha: float
    label: float


def mixup_source_set(g: ReviewGraph, groups: GroupAssignment, split: Split) -> np.ndarray:
    """Favored training spams of the original graph."""
    return np.flatnonzero(
        (g.kinds == REVIEW)
        & (g.labels == 1)
        & (groups.group == FAVORED)
        & (split.membership == TRAIN)
    )


def mixup_partner_set(
    g: ReviewGraph, groups: GroupAssignment, split: Split, variant: str
) -> np.ndarray:
    """Partner pool per variant: s1tr, s0te, or s1te."""
    is_review = g.kinds == REVIEW
    if variant == "s1tr":
        sel = (
            is_review
            & (g.labels == 1)
            & (groups.group == PROTECTED)
            & (split.membership == TRAIN)
        )
    elif variant == "s0te":
        sel = is_review & (groups.group == FAVORED) & (split.membership == TEST)
    elif variant == "s1te":
        sel = is_review & (groups.group == PROTECTED) & (split.membership == TEST)
    else:
        raise ValueError(f"unknown mixup variant {variant!r}")
    return np.flatnonzero(sel)


def sample_mixup_pairs(
    g: ReviewGraph,
    groups: GroupAssignment,
    split: Split,
    variant: str,
    count: int | None,
    alpha: float,
    seed,
) -> list[MixupPair]:
    """Uniformly sample synthetic pairs (with replacement).

    The first node is a favored training spam; the partner comes from
    the variant's pool. When both labels are known the synthetic label
    is alpha * y_first + (1 - alpha) * y_second; otherwise it inherits
    the first node's label. count = None uses the source-set size.
    """
    if not 0.0 <= alpha <= 1.0:
        raise ValueError(f"alpha must lie in [0, 1], got {alpha}")
    source = mixup_source_set(g, groups, split)
    partners = mixup_partner_set(g, groups, split, variant)
    if source.size == 0:
        raise EmptySourceSet("no favored training spam to mix from")
    if partners.size == 0:
        raise EmptySourceSet(f"empty partner set for variant {variant!r}")
    if count is None:
        count = int(source.size)
    if count < 0:
        raise ValueError(f"count must be >= 0, got {count}")
    rng = np.random.default_rng(seed)
    firsts = rng.choice(source, size=count, replace=True)
    seconds = rng.choice(partners, size=count, replace=True)
    # blended label alpha * y_first + (1 - alpha) * y_second when the
    # partner is labeled (s1tr: both spam), y_first otherwise; every
    # case works out to exactly 1.0
    return [
        MixupPair(first=int(i), second=int(j), alpha=float(alpha), label=1.0)
        for i, j in zip(firsts, seconds)
    ]


@dataclass(eq=False)
class MixupCache:
    """Per-layer intermediates of one synthetic node's propagation."""

    pair: MixupPair
    nbrs_a: np.ndarray
    nbrs_b: np.ndarray
    inv_a: float
    inv_b: float
    mixes: list[np.ndarray]    # mixes[l] = mixed representation at level l
    agg_a: list[np.ndarray]
    agg_b: list[np.ndarray]
    h_a: list[np.ndarray]
    h_b: list[np.ndarray]


def mixup_predict(cache: ForwardCache, pair: MixupPair) -> tuple[float, MixupCache]:
    """Score a synthetic review against a full-graph forward cache.

    The blend starts at the mixed input features; at every layer each
    branch aggregates the current blend with one endpoint's neighbors
    (representations read from the cache), applies the layer, and the
    two branch outputs are re-mixed with weight alpha. The final mixed
    output is the synthetic spam score.

    Degenerate alphas reduce to the plain forward scores of the
    endpoints, and swapping (first, second) together with
    alpha -> 1 - alpha leaves the score unchanged.
    """
    prop = cache.prop
    params = cache.params
    a, b, al = pair.first, pair.second, pair.alpha
    nbrs_a = prop.neighbors(a)
    nbrs_b = prop.neighbors(b)
    inv_a = float(prop.inv_counts[a])
    inv_b = float(prop.inv_counts[b])

    m = al * cache.reps[0][a] + (1.0 - al) * cache.reps[0][b]
    mixes = [m]
    agg_a_list, agg_b_list, h_a_list, h_b_list = [], [], [], []
    n_layers = params.n_layers
    for layer, (w, bias) in enumerate(zip(params.weights, params.biases)):
        h_prev = cache.reps[layer]
        # aggregate the blend in each endpoint's neighborhood context
        agg_a = (m + h_prev[nbrs_a].sum(axis=0)) * inv_a
        agg_b = (m + h_prev[nbrs_b].sum(axis=0)) * inv_b
        z_a = w @ agg_a + bias
        z_b = w @ agg_b + bias
        if layer == n_layers - 1:
            h_a = 1.0 / (1.0 + np.exp(-z_a))
            h_b = 1.0 / (1.0 + np.exp(-z_b))
        else:
            h_a = np.maximum(z_a, 0.0)
            h_b = np.maximum(z_b, 0.0)
        m = al * h_a + (1.0 - al) * h_b
        agg_a_list.append(agg_a)
        agg_b_list.append(agg_b)
        h_a_list.append(h_a)
        h_b_list.append(h_b)
        mixes.append(m)
    score = float(m[0])
    return score, MixupCache(
        pair=pair,
        nbrs_a=nbrs_a,
        nbrs_b=nbrs_b,
        inv_a=inv_a,
        inv_b=inv_b,
        mixes=mixes,
        agg_a=agg_a_list,
        agg_b=agg_b_list,
        h_a=h_a_list,
        h_b=h_b_list,
    )


def mixup_backward(
    cache: ForwardCache,
    mix: MixupCache,
    dscore: float,
    weight_grads: list[np.ndarray],
    bias_grads: list[np.ndarray],
    rep_grads: dict[int, np.ndarray],
) -> None:
    """Accumulate the synthetic score's gradients in place.

    Parameter gradients go into weight_grads/bias_grads; gradients on
    real nodes' intermediate representations go into rep_grads (keyed
    by level), to be injected into the main backward pass.
    """
    params = cache.params
    al = mix.pair.alpha
    n_layers = params.n_layers
    dm = np.array([float(dscore)])
    for layer in range(n_layers - 1, -1, -1):
        dh_a = al * dm
        dh_b = (1.0 - al) * dm
        if layer == n_layers - 1:
            dz_a = dh_a * mix.h_a[layer] * (1.0 - mix.h_a[layer])
            dz_b = dh_b * mix.h_b[layer] * (1.0 - mix.h_b[layer])
        else:
            dz_a = dh_a * (mix.h_a[layer] > 0.0)
            dz_b = dh_b * (mix.h_b[layer] > 0.0)
        weight_grads[layer] += np.outer(dz_a, mix.agg_a[layer])
        weight_grads[layer] += np.outer(dz_b, mix.agg_b[layer])
        bias_grads[layer] += dz_a + dz_b
        dagg_a = params.weights[layer].T @ dz_a
        dagg_b = params.weights[layer].T @ dz_b
        da = mix.inv_a * dagg_a
        db = mix.inv_b * dagg_b
        level = layer
        if level not in rep_grads:
            rep_grads[level] = np.zeros_like(cache.reps[level])
        if mix.nbrs_a.size:
            np.add.at(rep_grads[level], mix.nbrs_a, da)
        if mix.nbrs_b.size:
            np.add.at(rep_grads[level], mix.nbrs_b, db)
        dm = da + db
    # remaining dm is the gradient on the blended input features
    level0 = rep_grads.setdefault(0, np.zeros_like(cache.reps[0]))
    level0[mix.pair.first] += al * dm
    level0[mix.pair.second] += (1.0 - al) * dm
