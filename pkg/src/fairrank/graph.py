"""Tripartite review graph: users, reviews, products.

Structural rules enforced at construction time:

* edges connect user-review or review-product, nothing else;
* every review has exactly one user neighbor and exactly one product
  neighbor (its author and its subject);
* every review carries a binary spam label; users and products are
  unlabeled.

On top of the graph this module assigns the degree-based group attribute
(favored = heavy reviewers above a percentile cutoff, protected = the
rest), the mixed/pure subgroup attribute (a user is mixed when its
reviews contain both classes), and seeded train/valid/test splits where
reviews follow their authors.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from fractions import Fraction
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import (
    BadFractions,
    DimensionMismatch,
    EdgeTypeViolation,
    EmptyUserSet,
    GraphError,
    MissingLabel,
    ReviewDegreeViolation,
)

USER, REVIEW, PRODUCT = 0, 1, 2
KIND_CHARS = ("U", "R", "P")
_KIND_BY_CHAR = {"U": USER, "R": REVIEW, "P": PRODUCT}

FAVORED, PROTECTED = 0, 1
TRAIN, VALID, TEST = 0, 1, 2


def _frozen(arr: np.ndarray) -> np.ndarray:
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class ReviewGraph:
    """Immutable tripartite review graph with CSR adjacency."""

    kinds: np.ndarray          # int8 [n]; USER/REVIEW/PRODUCT
    features: np.ndarray       # float64 [n, d]
    labels: np.ndarray         # int8 [n]; 0/1 for reviews, -1 elsewhere
    adj_indptr: np.ndarray     # int64 [n+1]
    adj_indices: np.ndarray    # int64 [total degree]; sorted per node
    review_user: np.ndarray    # int64 [n]; author id for reviews, -1 elsewhere
    review_product: np.ndarray # int64 [n]; product id for reviews, -1 elsewhere

    @property
    def n_nodes(self) -> int:
        return self.kinds.shape[0]

    @property
    def feature_dim(self) -> int:
        return self.features.shape[1]

    @property
    def users(self) -> np.ndarray:
        return np.flatnonzero(self.kinds == USER)

    @property
    def reviews(self) -> np.ndarray:
        return np.flatnonzero(self.kinds == REVIEW)

    @property
    def products(self) -> np.ndarray:
        return np.flatnonzero(self.kinds == PRODUCT)

    def degrees(self) -> np.ndarray:
        return np.diff(self.adj_indptr)

    def degree(self, node: int) -> int:
        return int(self.adj_indptr[node + 1] - self.adj_indptr[node])

    def neighbors(self, node: int) -> np.ndarray:
        return self.adj_indices[self.adj_indptr[node]:self.adj_indptr[node + 1]]

    def edge_array(self) -> np.ndarray:
        """Undirected edges, one row (a, b) per edge with a < b, sorted."""
        rows = np.repeat(np.arange(self.n_nodes), self.degrees())
        cols = self.adj_indices
        keep = rows < cols
        pairs = np.stack([rows[keep], cols[keep]], axis=1)
        order = np.lexsort((pairs[:, 1], pairs[:, 0]))
        return pairs[order]


def build_graph(
    nodes: Iterable[tuple[int, int | str, Sequence[float]]],
    edges: Iterable[tuple[int, int]],
    labels: Mapping[int, int],
    feature_dim: int,
) -> ReviewGraph:
    """Validate and assemble a ReviewGraph.

    ``nodes`` yields (id, kind, feature vector) with kind given either as
    one of the codes USER/REVIEW/PRODUCT or as a character "U"/"R"/"P".
    ``edges`` yields unordered node-id pairs. ``labels`` maps review ids
    to {0, 1}. Ids must be dense 0..n-1.
    """
    node_list = list(nodes)
    n = len(node_list)
    if n == 0:
        raise GraphError("graph has no nodes")
    if feature_dim < 1:
        raise DimensionMismatch(f"feature_dim must be >= 1, got {feature_dim}")

    kinds = np.full(n, -1, dtype=np.int8)
    features = np.zeros((n, feature_dim), dtype=np.float64)
    seen = np.zeros(n, dtype=bool)
    for node_id, kind, feats in node_list:
        if not 0 <= node_id < n:
            raise GraphError(f"node id {node_id} outside dense range 0..{n - 1}")
        if seen[node_id]:
            raise GraphError(f"duplicate node id {node_id}")
        seen[node_id] = True
        if isinstance(kind, str):
            if kind not in _KIND_BY_CHAR:
                raise GraphError(f"unknown node kind {kind!r}")
            kind = _KIND_BY_CHAR[kind]
        if kind not in (USER, REVIEW, PRODUCT):
            raise GraphError(f"unknown node kind {kind!r}")
        kinds[node_id] = kind
        vec = np.asarray(feats, dtype=np.float64)
        if vec.shape != (feature_dim,):
            raise DimensionMismatch(
                f"node {node_id}: feature vector has shape {vec.shape}, "
                f"expected ({feature_dim},)"
            )
        features[node_id] = vec

    edge_list = list(edges)
    src = np.empty(len(edge_list), dtype=np.int64)
    dst = np.empty(len(edge_list), dtype=np.int64)
    for pos, (a, b) in enumerate(edge_list):
        if not (0 <= a < n and 0 <= b < n):
            raise GraphError(f"edge ({a}, {b}) references unknown node")
        if a == b:
            raise EdgeTypeViolation(f"self loop at node {a}")
        ka, kb = kinds[a], kinds[b]
        if {ka, kb} not in ({USER, REVIEW}, {REVIEW, PRODUCT}):
            raise EdgeTypeViolation(
                f"edge ({a}, {b}) connects kinds "
                f"{KIND_CHARS[ka]}-{KIND_CHARS[kb]}; only U-R and R-P are legal"
            )
        src[pos], dst[pos] = min(a, b), max(a, b)

    if len(edge_list):
        enc = src * n + dst
        if np.unique(enc).size != enc.size:
            raise GraphError("duplicate edge (multi-edges are not allowed)")

    # symmetric CSR with sorted neighbor lists
    both_src = np.concatenate([src, dst])
    both_dst = np.concatenate([dst, src])
    order = np.lexsort((both_dst, both_src))
    both_src, both_dst = both_src[order], both_dst[order]
    indptr = np.zeros(n + 1, dtype=np.int64)
    np.add.at(indptr, both_src + 1, 1)
    indptr = np.cumsum(indptr)

    review_user = np.full(n, -1, dtype=np.int64)
    review_product = np.full(n, -1, dtype=np.int64)
    label_arr = np.full(n, -1, dtype=np.int8)
    for rid in np.flatnonzero(kinds == REVIEW):
        nbrs = both_dst[indptr[rid]:indptr[rid + 1]]
        nbr_kinds = kinds[nbrs]
        n_users = int(np.count_nonzero(nbr_kinds == USER))
        n_products = int(np.count_nonzero(nbr_kinds == PRODUCT))
        if n_users != 1 or n_products != 1:
            raise ReviewDegreeViolation(
                f"review {rid} has {n_users} user and {n_products} product "
                "neighbors; exactly one of each is required"
            )
        review_user[rid] = nbrs[nbr_kinds == USER][0]
        review_product[rid] = nbrs[nbr_kinds == PRODUCT][0]
        if rid not in labels:
            raise MissingLabel(f"review {rid} has no label")
        val = labels[rid]
        if val not in (0, 1):
            raise MissingLabel(f"review {rid}: label must be 0 or 1, got {val!r}")
        label_arr[rid] = val

    for node_id in labels:
        if kinds[node_id] != REVIEW:
            raise GraphError(f"label supplied for non-review node {node_id}")

    return ReviewGraph(
        kinds=_frozen(kinds),
        features=_frozen(features),
        labels=_frozen(label_arr),
        adj_indptr=_frozen(indptr),
        adj_indices=_frozen(both_dst),
        review_user=_frozen(review_user),
        review_product=_frozen(review_product),
    )


@dataclass(frozen=True, eq=False)
class GroupAssignment:
    """Degree-based group and (optional) mixed/pure subgroup attributes.

    ``group``: FAVORED/PROTECTED for users and reviews, -1 for products.
    ``mixed``: 1 for users whose reviews contain both classes, 0 for the
    rest; -1 for non-users; None until assign_subgroups has run.
    """

    percentile: float
    cutoff_degree: int
    group: np.ndarray
    mixed: np.ndarray | None = None


def nearest_rank_percentile(values: np.ndarray, q: float) -> int:
    """q-th percentile of a multiset by the nearest-rank rule.

    Rank ceil(q/100 * n) (1-based) in ascending order; exact rational
    arithmetic so integer q never trips float rounding.
    """
    ordered = np.sort(np.asarray(values))
    n = ordered.size
    if n == 0:
        raise EmptyUserSet("percentile of an empty multiset")
    rank = math.ceil(Fraction(q) * n / 100)
    rank = min(max(rank, 1), n)
    return int(ordered[rank - 1])


def assign_groups(g: ReviewGraph, percentile: float) -> GroupAssignment:
    """Split users into favored/protected by review-count percentile.

    The cutoff is the (100 - percentile)-th nearest-rank percentile of
    the user degree multiset; favored means degree strictly above it.
    Reviews inherit their author's group.
    """
    if not 0 < percentile < 100:
        raise ValueError(f"percentile must lie in (0, 100), got {percentile}")
    users = g.users
    if users.size == 0:
        raise EmptyUserSet("graph has no user nodes")
    degrees = g.degrees()[users]
    cutoff = nearest_rank_percentile(degrees, 100 - percentile)

    group = np.full(g.n_nodes, -1, dtype=np.int8)
    group[users] = np.where(degrees > cutoff, FAVORED, PROTECTED)
    reviews = g.reviews
    group[reviews] = group[g.review_user[reviews]]
    return GroupAssignment(
        percentile=float(percentile),
        cutoff_degree=cutoff,
        group=_frozen(group),
    )


def assign_subgroups(g: ReviewGraph, groups: GroupAssignment) -> GroupAssignment:
    """Mark every user as mixed (reviews in both classes) or pure.

    A user with no reviews, or with reviews all of one class, is pure.
    The attribute is computed for every user regardless of group.
    """
    users = g.users
    mixed = np.full(g.n_nodes, -1, dtype=np.int8)
    for u in users:
        nbrs = g.neighbors(u)
        spam = int(np.sum(g.labels[nbrs] == 1))
        mixed[u] = 1 if 0 < spam < nbrs.size else 0
    return replace(groups, mixed=_frozen(mixed))


@dataclass(frozen=True, eq=False)
class Split:
    """Seeded user partition; reviews follow their authors.

    ``membership``: TRAIN/VALID/TEST for users and reviews, -1 products.
    """

    seed: int
    train_users: np.ndarray
    valid_users: np.ndarray
    test_users: np.ndarray
    membership: np.ndarray


def split_users(
    g: ReviewGraph,
    fractions: tuple[float, float, float] = (0.3, 0.1, 0.6),
    seed: int = 0,
) -> Split:
    """Shuffle users with the seed and partition train/valid/test."""
    fr = tuple(float(f) for f in fractions)
    if len(fr) != 3 or any(f < 0 for f in fr) or abs(sum(fr) - 1.0) > 1e-9:
        raise BadFractions(f"fractions must be >= 0 and sum to 1, got {fractions}")
    users = g.users
    if users.size == 0:
        raise EmptyUserSet("graph has no user nodes")
    rng = np.random.default_rng(seed)
    shuffled = rng.permutation(users)
    n = users.size
    n_train = int(round(fr[0] * n))
    n_valid = int(round((fr[0] + fr[1]) * n)) - n_train
    train = np.sort(shuffled[:n_train])
    valid = np.sort(shuffled[n_train:n_train + n_valid])
    test = np.sort(shuffled[n_train + n_valid:])

    membership = np.full(g.n_nodes, -1, dtype=np.int8)
    membership[train] = TRAIN
    membership[valid] = VALID
    membership[test] = TEST
    reviews = g.reviews
    membership[reviews] = membership[g.review_user[reviews]]
    return Split(
        seed=int(seed),
        train_users=_frozen(train),
        valid_users=_frozen(valid),
        test_users=_frozen(test),
        membership=_frozen(membership),
    )
