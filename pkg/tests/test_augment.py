"""Replication, per-epoch pruning, and mixup synthesis."""

import numpy as np
import pytest

from fairrank.augment import (
    mixup_backward,
    mixup_partner_set,
    mixup_predict,
    mixup_source_set,
    prune_nonspam_edges,
    replicate_mixed_users,
    sample_mixup_pairs,
    view_edges,
    MixupPair,
)
from fairrank.errors import EmptySourceSet, MissingGroundTruth
from fairrank.graph import (
    FAVORED,
    REVIEW,
    USER,
    assign_groups,
    assign_subgroups,
)
from fairrank.nn import (
    backward,
    forward,
    grad_check,
    init_params,
    mean_propagation,
    propagation_for_graph,
)

from conftest import manual_split


@pytest.fixture()
def toy_setup(toy):
    groups = assign_subgroups(toy, assign_groups(toy, 20.0))
    split = manual_split(toy, train=[0, 1, 2], valid=[3], test=[4])
    return toy, groups, split


def test_replication_counts_and_annotations(toy_setup):
    g, groups, split = toy_setup
    view = replicate_mixed_users(g, groups, split, k=2)
    # u0 (5 reviews) is the only favored mixed training user
    assert view.k == 2
    assert view.n_nodes == 16 + 2 * 6
    np.testing.assert_array_equal(view.replica_users, [16, 22])
    # replica blocks: user then its reviews in ascending original id
    np.testing.assert_array_equal(view.kinds[16:22], [USER] + [REVIEW] * 5)
    np.testing.assert_array_equal(
        view.origin[16:28], [0, 5, 6, 7, 8, 9, 0, 5, 6, 7, 8, 9]
    )
    np.testing.assert_array_equal(view.labels[17:22], [1, 1, 0, 0, 0])
    assert np.all(view.group[16:] == FAVORED)
    assert np.all(view.mixed_truth[[16, 22]] == 1)
    assert np.all(view.is_train[16:])
    assert np.all(view.is_replica[16:]) and not np.any(view.is_replica[:16])
    # features copied from the origins
    np.testing.assert_array_equal(view.features[16], g.features[0])
    np.testing.assert_array_equal(view.features[19], g.features[7])


def test_replication_edge_partition(toy_setup):
    g, groups, split = toy_setup
    view = replicate_mixed_users(g, groups, split, k=2)
    # fixed: 18 base + per replica 2 spam user-review + 5 review-product
    assert view.fixed_src.shape == (18 + 2 * 7,)
    assert view.n_maskable == 6
    np.testing.assert_array_equal(view.mask_src, [16, 16, 16, 22, 22, 22])
    np.testing.assert_array_equal(view.mask_dst, [19, 20, 21, 25, 26, 27])
    np.testing.assert_array_equal(view.mask_owner_ptr, [0, 3, 6])
    # maskable edges are exactly the replica non-spam user-review edges
    assert np.all(view.labels[view.mask_dst] == 0)
    assert np.all(view.is_replica[view.mask_src])
    # replica reviews keep their origin's product
    src, dst = view_edges(view, None)
    pairs = set(zip(src.tolist(), dst.tolist()))
    assert (17, 14) in pairs and (18, 15) in pairs  # copies of r5->p14, r6->p15


def test_replication_k_zero_is_identity(toy_setup):
    g, groups, split = toy_setup
    view = replicate_mixed_users(g, groups, split, k=0)
    assert view.n_nodes == g.n_nodes
    assert view.n_maskable == 0
    src, dst = view_edges(view, None)
    np.testing.assert_array_equal(
        np.stack([src, dst], axis=1), g.edge_array()
    )


def test_replication_skips_non_training_mixed(toy):
    groups = assign_subgroups(toy, assign_groups(toy, 20.0))
    # u0 in the test fold: nothing to replicate
    split = manual_split(toy, train=[1, 2], valid=[3], test=[0, 4])
    view = replicate_mixed_users(toy, groups, split, k=3)
    assert view.n_nodes == toy.n_nodes


def test_replication_requires_subgroups(toy_setup):
    g, _, split = toy_setup
    plain = assign_groups(g, 20.0)  # mixed is None
    with pytest.raises(MissingGroundTruth):
        replicate_mixed_users(g, plain, split, k=1)
    groups = assign_subgroups(g, plain)
    with pytest.raises(ValueError):
        replicate_mixed_users(g, groups, split, k=-1)


def test_prune_validates_rho(toy_setup):
    g, groups, split = toy_setup
    view = replicate_mixed_users(g, groups, split, k=1)
    for bad in (-0.1, 1.0, 1.5):
        with pytest.raises(ValueError):
            prune_nonspam_edges(view, bad, epoch_seed=0)


def test_prune_deterministic_and_epoch_varying(toy_setup):
    g, groups, split = toy_setup
    view = replicate_mixed_users(g, groups, split, k=4)
    a = prune_nonspam_edges(view, 0.5, [7, 2, 0])
    b = prune_nonspam_edges(view, 0.5, [7, 2, 0])
    c = prune_nonspam_edges(view, 0.5, [7, 2, 1])
    np.testing.assert_array_equal(a.kept, b.kept)
    np.testing.assert_array_equal(a.forced, b.forced)
    assert not np.array_equal(a.kept, c.kept) or not np.array_equal(
        a.forced, c.forced
    )


def test_prune_force_keeps_one_edge_per_replica(toy_setup):
    g, groups, split = toy_setup
    view = replicate_mixed_users(g, groups, split, k=5)
    ptr = view.mask_owner_ptr
    for epoch in range(50):
        mask = prune_nonspam_edges(view, 0.9, [0, 2, epoch])
        eff = mask.effective()
        assert mask.forced.shape == (5,)
        for r in range(5):
            lo, hi = ptr[r], ptr[r + 1]
            assert lo <= mask.forced[r] < hi
            assert eff[mask.forced[r]]
            # every replica keeps at least one non-spam edge
            assert eff[lo:hi].any()


def test_prune_keep_rate_matches_rho(toy_setup):
    g, groups, split = toy_setup
    view = replicate_mixed_users(g, groups, split, k=20)
    rho = 0.5
    kept = np.mean(
        [
            prune_nonspam_edges(view, rho, [1, 2, e]).kept.mean()
            for e in range(200)
        ]
    )
    assert kept == pytest.approx(1.0 - rho, abs=0.02)
    # rho = 0 keeps everything
    none = prune_nonspam_edges(view, 0.0, [1, 2, 0])
    assert none.kept.all()


def test_view_edges_respects_mask(toy_setup):
    g, groups, split = toy_setup
    view = replicate_mixed_users(g, groups, split, k=2)
    mask = prune_nonspam_edges(view, 0.5, [3, 2, 0])
    src, dst = view_edges(view, mask)
    n_eff = int(mask.effective().sum())
    assert src.shape == (view.fixed_src.shape[0] + n_eff,)
    assert dst.shape == src.shape


def test_mixup_source_and_partner_sets(toy_setup):
    g, groups, split = toy_setup
    np.testing.assert_array_equal(mixup_source_set(g, groups, split), [5, 6])
    np.testing.assert_array_equal(
        mixup_partner_set(g, groups, split, "s1tr"), [10]
    )
    # u0 is in train, so no favored test review exists
    np.testing.assert_array_equal(
        mixup_partner_set(g, groups, split, "s0te"), []
    )
    np.testing.assert_array_equal(
        mixup_partner_set(g, groups, split, "s1te"), [13]
    )
    with pytest.raises(ValueError):
        mixup_partner_set(g, groups, split, "s9xx")


def test_sample_mixup_pairs_oracle(toy_setup):
    g, groups, split = toy_setup
    pairs = sample_mixup_pairs(g, groups, split, "s1tr", None, 0.8, seed=[0, 3, 1])
    assert len(pairs) == 2  # count defaults to the source-set size
    for p in pairs:
        assert p.first in (5, 6)
        assert p.second == 10
        assert p.alpha == 0.8
        assert p.label == 1.0
    many = sample_mixup_pairs(g, groups, split, "s1te", 7, 0.5, seed=[0, 3, 1])
    assert len(many) == 7 and all(p.second == 13 for p in many)
    again = sample_mixup_pairs(g, groups, split, "s1tr", None, 0.8, seed=[0, 3, 1])
    assert [(p.first, p.second) for p in again] == [
        (p.first, p.second) for p in pairs
    ]


def test_sample_mixup_pairs_validation(toy_setup):
    g, groups, split = toy_setup
    with pytest.raises(ValueError):
        sample_mixup_pairs(g, groups, split, "s1tr", None, 1.5, seed=0)
    with pytest.raises(ValueError):
        sample_mixup_pairs(g, groups, split, "s1tr", -1, 0.8, seed=0)
    with pytest.raises(EmptySourceSet):
        sample_mixup_pairs(g, groups, split, "s0te", None, 0.8, seed=0)
    # no favored training spam at all
    empty_split = manual_split(g, train=[2, 3], valid=[], test=[0, 1, 4])
    with pytest.raises(EmptySourceSet):
        sample_mixup_pairs(g, groups, empty_split, "s1tr", None, 0.8, seed=0)


@pytest.fixture()
def toy_cache(toy):
    prop = propagation_for_graph(toy)
    params = init_params((3, 4, 1), seed=13)
    scores, cache = forward(prop, params, toy.features)
    return prop, params, scores, cache


def test_mixup_alpha_degeneracy(toy_cache):
    _, _, scores, cache = toy_cache
    s_first, _ = mixup_predict(cache, MixupPair(5, 10, 1.0, 1.0))
    s_second, _ = mixup_predict(cache, MixupPair(5, 10, 0.0, 1.0))
    assert s_first == pytest.approx(scores[5], abs=1e-12)
    assert s_second == pytest.approx(scores[10], abs=1e-12)


def test_mixup_exchange_symmetry(toy_cache):
    _, _, _, cache = toy_cache
    for alpha in (0.2, 0.5, 0.8):
        s_ab, _ = mixup_predict(cache, MixupPair(5, 10, alpha, 1.0))
        s_ba, _ = mixup_predict(cache, MixupPair(10, 5, 1.0 - alpha, 1.0))
        assert s_ab == pytest.approx(s_ba, abs=1e-12)


def test_mixup_score_in_unit_interval(toy_cache):
    _, _, _, cache = toy_cache
    rng = np.random.default_rng(0)
    for _ in range(20):
        a, b = rng.choice(np.arange(5, 14), size=2, replace=False)
        s, _ = mixup_predict(cache, MixupPair(int(a), int(b), 0.7, 1.0))
        assert 0.0 < s < 1.0


def test_mixup_backward_matches_finite_differences(toy):
    # d(synthetic score)/d(params, features) through both the branch
    # computations and the cached neighbor representations
    prop = propagation_for_graph(toy)
    params = init_params((3, 4, 1), seed=3)
    pair = MixupPair(5, 10, 0.7, 1.0)

    def loss_and_grad(p, x):
        _, cache = forward(prop, p, x)
        score, mc = mixup_predict(cache, pair)
        wg = [np.zeros_like(w) for w in p.weights]
        bg = [np.zeros_like(b) for b in p.biases]
        rg = {}
        mixup_backward(cache, mc, 1.0, wg, bg, rg)
        bundle = backward(cache, np.zeros(toy.n_nodes), rg)
        for layer in range(p.n_layers):
            bundle.weight_grads[layer] += wg[layer]
            bundle.bias_grads[layer] += bg[layer]
        return score, bundle

    feats = toy.features.copy()
    assert grad_check(loss_and_grad, params, feats, eps=1e-5) < 1e-5


def test_mixup_isolated_pair_closed_form():
    # two isolated nodes, one layer: each branch aggregates the blend
    # alone (inv = 1), so both branches coincide at sigmoid(w m + b)
    prop = mean_propagation(2, np.array([], dtype=int), np.array([], dtype=int))
    params = init_params((1, 1), seed=0)
    params.weights[0][:] = [[2.0]]
    params.biases[0][:] = [0.1]
    feats = np.array([[1.0], [-0.5]])
    _, cache = forward(prop, params, feats)
    alpha = 0.3
    score, _ = mixup_predict(cache, MixupPair(0, 1, alpha, 1.0))
    m = alpha * 1.0 + (1 - alpha) * (-0.5)
    z = 2.0 * m + 0.1  # isolated: inv = 1/(1+0) = 1
    expected = 1.0 / (1.0 + np.exp(-z))
    assert score == pytest.approx(expected, abs=1e-14)
