"""Synthetic review-graph generator with controllable unfairness.

The generator plants the phenomenon the pipeline is built to detect:

* two degree bands drawn from truncated power laws -- a small favored
  band of heavy reviewers and a protected band of light reviewers --
  with deterministic per-value quotas so the percentile grouping rule
  recovers exactly the designated favored set;
* protected and pure favored users post single-class reviews (whole
  user spam or clean, by deterministic counts), while a designated
  fraction of favored users is mixed: mostly clean reviews hiding a few
  spams;
* mixed users' spams are camouflaged: by default their features are
  drawn from the genuine-review distribution itself, so no per-review
  evidence separates them -- catching them takes author context;
* review features are class-conditional Gaussians, and user/product
  profile features are the mean of their adjacent reviews plus noise,
  so a mixed heavy user's profile dilutes the evidence of its spams;
* the last feature dimension of a user is a behavioral dispersion
  trait (think erratic posting rhythm): a noisy, directly observable
  correlate of being a both-classes reviewer, the only signal from
  which the mixed subgroup can be inferred when camouflage is perfect.

All randomness flows through one seeded generator in a fixed call
order; serialization of the same config is byte-identical.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .errors import InfeasibleConfig
from .graph import PRODUCT, REVIEW, USER, ReviewGraph, build_graph, nearest_rank_percentile

__all__ = ["GenConfig", "generate", "PRESETS", "preset"]


@dataclass(frozen=True)
class GenConfig:
    """Knobs of the synthetic world; see the module docstring."""

    n_users: int = 2000
    n_products: int = 100
    feature_dim: int = 8
    protected_degree_max: int = 4
    protected_degree_exponent: float = 0.35
    favored_degree_min: int = 10
    favored_degree_max: int = 20
    favored_degree_exponent: float = 1.2
    favored_fraction: float = 0.05
    mixed_fraction: float = 0.30
    mixed_spam_fraction: float = 0.40
    favored_pure_spam_rate: float = 0.12
    protected_spam_rate: float = 0.20
    feature_gap: float = 3.0
    feature_noise: float = 1.0
    hub_noise: float = 0.25
    dispersion_gain: float = 2.0
    dispersion_noise: float = 0.4
    camouflage_shift: float = -1.0
    camouflage_noise: float = 1.0
    percentile_grid: tuple[float, ...] = (10.0, 15.0, 20.0)
    seed: int = 7

    def validate(self) -> None:
        if self.n_users < 2 or self.n_products < 1 or self.feature_dim < 2:
            raise InfeasibleConfig(
                "need >= 2 users, >= 1 product, and >= 2 feature dims "
                "(profile dims plus the dispersion channel)"
            )
        rates = {
            "favored_fraction": self.favored_fraction,
            "mixed_fraction": self.mixed_fraction,
            "mixed_spam_fraction": self.mixed_spam_fraction,
            "favored_pure_spam_rate": self.favored_pure_spam_rate,
            "protected_spam_rate": self.protected_spam_rate,
        }
        for name, val in rates.items():
            if not 0.0 <= val <= 1.0:
                raise InfeasibleConfig(f"{name} must lie in [0, 1], got {val}")
        if not 0 < self.favored_fraction < 1:
            raise InfeasibleConfig("favored_fraction must lie strictly in (0, 1)")
        if self.protected_degree_max < 1:
            raise InfeasibleConfig("protected_degree_max must be >= 1")
        if self.favored_degree_min <= self.protected_degree_max:
            raise InfeasibleConfig(
                "favored band must sit strictly above the protected band"
            )
        if self.favored_degree_min < 2:
            raise InfeasibleConfig("favored users need degree >= 2 to be mixed")
        if self.favored_degree_max < self.favored_degree_min:
            raise InfeasibleConfig("favored degree band is empty")
        if self.feature_noise < 0 or self.hub_noise < 0 or self.feature_gap < 0:
            raise InfeasibleConfig("noise and gap parameters must be >= 0")
        if self.dispersion_gain < 0 or self.dispersion_noise < 0:
            raise InfeasibleConfig("dispersion_gain and dispersion_noise must be >= 0")
        if not -1.0 <= self.camouflage_shift <= 1.0:
            raise InfeasibleConfig(
                "camouflage_shift must lie in [-1, 1] "
                "(-1 = genuine-looking, +1 = blatant)"
            )
        if self.camouflage_noise < 0:
            raise InfeasibleConfig("camouflage_noise must be >= 0")
        if self.mixed_fraction > 0 and (
            self.mixed_fraction * self.favored_fraction * self.n_users < 1
        ):
            raise InfeasibleConfig(
                "mixed_fraction * favored_fraction * n_users < 1: "
                "no mixed user can exist"
            )
        if self.seed < 0:
            raise InfeasibleConfig("seed must be non-negative")


def _quota_counts(lo: int, hi: int, exponent: float, total: int) -> np.ndarray:
    """Largest-remainder quotas for a truncated power-law pmf."""
    values = np.arange(lo, hi + 1, dtype=np.float64)
    weights = values ** (-exponent)
    pmf = weights / weights.sum()
    exact = pmf * total
    counts = np.floor(exact).astype(np.int64)
    short = total - int(counts.sum())
    if short > 0:
        order = np.argsort(-(exact - counts), kind="stable")
        counts[order[:short]] += 1
    return counts


def _band_degrees(lo: int, hi: int, exponent: float, total: int) -> np.ndarray:
    counts = _quota_counts(lo, hi, exponent, total)
    return np.repeat(np.arange(lo, hi + 1, dtype=np.int64), counts)


def generate(cfg: GenConfig) -> tuple[ReviewGraph, np.ndarray]:
    """Build the graph; returns it with the ground-truth mixed flags.

    The returned array holds 1/0 per user node (mixed/pure) and -1 on
    reviews and products. The flags agree with what the subgroup rule
    recomputes from labels, and the designated favored set agrees with
    the percentile grouping rule for every percentile in the config's
    grid (otherwise InfeasibleConfig is raised).
    """
    cfg.validate()
    rng = np.random.default_rng(cfg.seed)

    n_users = cfg.n_users
    n_fav = int(round(cfg.favored_fraction * n_users))
    if n_fav < 1 or n_fav >= n_users:
        raise InfeasibleConfig(f"favored_fraction yields {n_fav} favored users")
    n_prot = n_users - n_fav

    # favored users are ids [0, n_fav); degree multisets are quota-exact
    fav_degrees = rng.permutation(
        _band_degrees(
            cfg.favored_degree_min,
            cfg.favored_degree_max,
            cfg.favored_degree_exponent,
            n_fav,
        )
    )
    prot_degrees = rng.permutation(
        _band_degrees(1, cfg.protected_degree_max, cfg.protected_degree_exponent, n_prot)
    )
    degrees = np.concatenate([fav_degrees, prot_degrees])

    n_reviews = int(degrees.sum())
    review_product = rng.integers(0, cfg.n_products, size=n_reviews)

    n_mixed = int(round(cfg.mixed_fraction * n_fav))
    if cfg.mixed_fraction > 0 and n_mixed < 1:
        raise InfeasibleConfig("mixed_fraction too small for any mixed user")
    # mixed accounts post just enough to clear the heavy-reviewer bar:
    # they take the lowest favored degrees (ties broken by id)
    fav_rank = np.lexsort((np.arange(n_fav), fav_degrees))
    mixed_users = np.sort(fav_rank[:n_mixed])
    pure_fav = np.sort(fav_rank[n_mixed:])
    n_pure_spam = int(round(cfg.favored_pure_spam_rate * pure_fav.size))
    pure_order = rng.permutation(pure_fav.size)
    pure_spam_users = set(pure_fav[pure_order[:n_pure_spam]].tolist())

    n_prot_spam = int(round(cfg.protected_spam_rate * n_prot))
    prot_order = rng.permutation(n_prot)
    prot_spam_users = set((n_fav + prot_order[:n_prot_spam]).tolist())

    mixed_set = set(mixed_users.tolist())
    review_offsets = np.zeros(n_users + 1, dtype=np.int64)
    review_offsets[1:] = np.cumsum(degrees)
    labels = np.zeros(n_reviews, dtype=np.int8)
    for u in range(n_users):
        deg = int(degrees[u])
        lo = int(review_offsets[u])
        if u in mixed_set:
            spam_count = int(np.clip(round(cfg.mixed_spam_fraction * deg), 1, deg - 1))
            pos = rng.choice(deg, size=spam_count, replace=False)
            labels[lo + pos] = 1
        elif u in pure_spam_users or u in prot_spam_users:
            labels[lo:lo + deg] = 1

    d = cfg.feature_dim
    half = cfg.feature_gap / 2.0
    # per-review feature mean and noise scale: non-spam at -half, overt
    # spam at +half, camouflaged spam (mixed authors) shifted toward the
    # genuine cluster (shift -1 lands exactly on it)
    camo = np.zeros(n_reviews, dtype=bool)
    for u in mixed_users:
        lo, hi = review_offsets[u], review_offsets[u + 1]
        camo[lo:hi] = labels[lo:hi] == 1
    means = np.where(labels == 1, half, -half)
    means[camo] = cfg.camouflage_shift * half
    scales = np.full(n_reviews, cfg.feature_noise)
    scales[camo] = cfg.feature_noise * cfg.camouflage_noise
    review_feats = means[:, None] + scales[:, None] * rng.standard_normal(
        (n_reviews, d)
    )
    # profile dims mirror the adjacent reviews plus hub noise; the last
    # user dim is the behavioral dispersion trait: +-gain/2 by the
    # mixed flag, blurred by gain * dispersion_noise
    user_feats = np.empty((n_users, d))
    for u in range(n_users):
        lo, hi = review_offsets[u], review_offsets[u + 1]
        user_feats[u, :d - 1] = review_feats[lo:hi, :d - 1].mean(axis=0)
    user_feats[:, :d - 1] += rng.normal(
        0.0, cfg.hub_noise, size=(n_users, d - 1)
    )
    is_mixed_user = np.zeros(n_users)
    is_mixed_user[mixed_users] = 1.0
    user_feats[:, d - 1] = cfg.dispersion_gain * (
        is_mixed_user - 0.5 + rng.normal(0.0, cfg.dispersion_noise, size=n_users)
    )
    product_feats = np.zeros((cfg.n_products, d))
    for pid in range(cfg.n_products):
        sel = review_product == pid
        if np.any(sel):
            product_feats[pid, :d - 1] = review_feats[sel, :d - 1].mean(axis=0)
    product_feats += rng.normal(
        0.0, cfg.hub_noise, size=(cfg.n_products, d)
    )

    # node ids: users, then reviews grouped by author, then products
    review_base = n_users
    product_base = n_users + n_reviews
    nodes = []
    for u in range(n_users):
        nodes.append((u, USER, user_feats[u]))
    for r in range(n_reviews):
        nodes.append((review_base + r, REVIEW, review_feats[r]))
    for pid in range(cfg.n_products):
        nodes.append((product_base + pid, PRODUCT, product_feats[pid]))
    edges = []
    for u in range(n_users):
        for r in range(int(review_offsets[u]), int(review_offsets[u + 1])):
            edges.append((u, review_base + r))
    for r in range(n_reviews):
        edges.append((review_base + r, product_base + int(review_product[r])))
    label_map = {review_base + r: int(labels[r]) for r in range(n_reviews)}

    g = build_graph(nodes, edges, label_map, d)

    aprime = np.full(g.n_nodes, -1, dtype=np.int8)
    aprime[:n_users] = 0
    aprime[mixed_users] = 1

    # the percentile rule must recover exactly the designated favored set
    user_degrees = g.degrees()[:n_users]
    designated = np.zeros(n_users, dtype=bool)
    designated[:n_fav] = True
    for p in cfg.percentile_grid:
        cutoff = nearest_rank_percentile(user_degrees, 100 - p)
        recovered = user_degrees > cutoff
        if not np.array_equal(recovered, designated):
            raise InfeasibleConfig(
                f"degree bands are inconsistent with the percentile rule at p={p}"
            )
    return g, aprime


PRESETS: dict[str, GenConfig] = {
    "default": GenConfig(),
    "separable": GenConfig(
        n_users=1000,
        n_products=60,
        favored_fraction=0.10,
        mixed_fraction=0.35,
        mixed_spam_fraction=0.50,
        favored_pure_spam_rate=0.05,
        protected_spam_rate=0.05,
        feature_gap=4.0,
        feature_noise=0.5,
        hub_noise=0.15,
        dispersion_gain=3.0,
        dispersion_noise=0.15,
        camouflage_shift=1.0,
        seed=11,
    ),
    "chi20": GenConfig(
        n_users=2000,
        n_products=100,
        favored_fraction=0.0178,
        favored_degree_min=25,
        favored_degree_max=40,
        favored_degree_exponent=1.0,
        mixed_fraction=0.30,
        mixed_spam_fraction=0.02,
        favored_pure_spam_rate=0.0,
        protected_spam_rate=0.25,
        seed=13,
    ),
}


def preset(name: str) -> GenConfig:
    if name not in PRESETS:
        raise KeyError(
            f"unknown preset {name!r}; available: {sorted(PRESETS)}"
        )
    return PRESETS[name]
