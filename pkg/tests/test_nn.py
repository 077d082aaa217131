"""Network forward/backward, the aggregation operator, and checkpoints."""

import numpy as np
import pytest

from fairrank.errors import (
    BadDimensions,
    CacheMismatch,
    DimensionMismatch,
    NonFiniteValue,
    ParseError,
)
from fairrank.nn import (
    backward,
    forward,
    grad_check,
    init_params,
    load_params,
    mean_propagation,
    neighborhood_mean,
    propagation_for_graph,
    save_params,
    zero_bundle,
)


def _path_prop(n=4):
    # path graph 0-1-2-3
    src = np.arange(n - 1)
    dst = np.arange(1, n)
    return mean_propagation(n, src, dst)


def test_init_params_shapes_and_bounds():
    params = init_params((5, 8, 1), seed=0)
    assert params.layer_dims == (5, 8, 1)
    assert params.n_layers == 2
    assert params.weights[0].shape == (8, 5)
    assert params.weights[1].shape == (1, 8)
    for w in params.weights:
        limit = np.sqrt(6.0 / sum(w.shape))
        assert np.all(np.abs(w) <= limit)
    for b in params.biases:
        assert np.all(b == 0.0)
    # deterministic in the seed
    again = init_params((5, 8, 1), seed=0)
    assert all(np.array_equal(a, b) for a, b in zip(params.weights, again.weights))
    other = init_params((5, 8, 1), seed=1)
    assert not np.array_equal(params.weights[0], other.weights[0])


def test_init_params_rejects_bad_dims():
    with pytest.raises(BadDimensions):
        init_params((5,))
    with pytest.raises(BadDimensions):
        init_params((5, 0, 1))
    with pytest.raises(BadDimensions):
        init_params((5, 8, 2))


def test_propagation_matrix_rows():
    prop = _path_prop(4)
    dense = prop.matrix.toarray()
    # row i: 1/(1+deg) on self and neighbors
    expected = np.array(
        [
            [1 / 2, 1 / 2, 0, 0],
            [1 / 3, 1 / 3, 1 / 3, 0],
            [0, 1 / 3, 1 / 3, 1 / 3],
            [0, 0, 1 / 2, 1 / 2],
        ]
    )
    np.testing.assert_allclose(dense, expected)
    np.testing.assert_allclose(
        prop.matrix_t.toarray(), expected.T
    )
    np.testing.assert_array_equal(prop.neighbors(1), [0, 2])
    np.testing.assert_allclose(prop.inv_counts, [1 / 2, 1 / 3, 1 / 3, 1 / 2])


def test_neighborhood_mean_matches_matrix():
    prop = _path_prop(5)
    rng = np.random.default_rng(0)
    reps = rng.standard_normal((5, 3))
    full = prop.matrix @ reps
    for node in range(5):
        np.testing.assert_allclose(
            neighborhood_mean(prop, reps, node), full[node], atol=1e-12
        )


def test_propagation_for_graph_matches_manual(toy):
    prop = propagation_for_graph(toy)
    edges = toy.edge_array()
    manual = mean_propagation(toy.n_nodes, edges[:, 0], edges[:, 1])
    np.testing.assert_allclose(
        prop.matrix.toarray(), manual.matrix.toarray()
    )


def test_forward_hand_computed_single_node():
    # isolated node, one layer: score = sigmoid(w.x + b)
    prop = mean_propagation(1, np.array([], dtype=int), np.array([], dtype=int))
    params = init_params((2, 1), seed=0)
    params.weights[0][:] = [[0.5, -1.0]]
    params.biases[0][:] = [0.25]
    x = np.array([[2.0, 1.0]])
    scores, cache = forward(prop, params, x)
    z = 0.5 * 2.0 - 1.0 * 1.0 + 0.25
    assert scores[0] == pytest.approx(1.0 / (1.0 + np.exp(-z)), abs=1e-15)
    assert len(cache.reps) == 2 and len(cache.aggs) == 1


def test_forward_two_layer_hand_computed():
    # pair 0-1, hidden relu width 2 then sigmoid
    prop = mean_propagation(2, np.array([0]), np.array([1]))
    params = init_params((1, 2, 1), seed=0)
    params.weights[0][:] = [[1.0], [-1.0]]
    params.biases[0][:] = [0.0, 0.0]
    params.weights[1][:] = [[1.0, 1.0]]
    params.biases[1][:] = [-0.5]
    x = np.array([[1.0], [3.0]])
    scores, _ = forward(prop, params, x)
    # both nodes aggregate to 2.0 -> h = [relu(2), relu(-2)] = [2, 0]
    # second layer aggregates identical h -> sigmoid(2 - 0.5)
    expected = 1.0 / (1.0 + np.exp(-1.5))
    np.testing.assert_allclose(scores, [expected, expected], atol=1e-15)


def test_forward_scores_in_open_unit_interval(toy):
    prop = propagation_for_graph(toy)
    params = init_params((3, 8, 1), seed=1)
    scores, _ = forward(prop, params, toy.features)
    assert scores.shape == (toy.n_nodes,)
    assert np.all((scores > 0.0) & (scores < 1.0))


def test_forward_validates_shapes(toy):
    prop = propagation_for_graph(toy)
    params = init_params((3, 4, 1), seed=0)
    with pytest.raises(DimensionMismatch):
        forward(prop, params, toy.features[:, :2])
    with pytest.raises(DimensionMismatch):
        forward(prop, params, toy.features[:5])
    with pytest.raises(DimensionMismatch):
        forward(prop, params, toy.features[:, 0])


def test_forward_rejects_nonfinite():
    prop = _path_prop(2)
    params = init_params((1, 1), seed=0)
    with pytest.raises(NonFiniteValue):
        forward(prop, params, np.array([[np.nan], [0.0]]))


def test_backward_matches_finite_differences_random_graphs():
    # quadratic-in-score losses over random small graphs; exact layers
    # mean FD agreement to ~1e-8
    rng = np.random.default_rng(7)
    for trial in range(5):
        n = int(rng.integers(3, 8))
        n_edges = int(rng.integers(1, n))
        src = rng.integers(0, n, size=n_edges)
        dst = (src + 1 + rng.integers(0, n - 1, size=n_edges)) % n
        keep = src != dst
        enc = np.unique(np.stack([np.minimum(src, dst), np.maximum(src, dst)])[
            :, keep
        ], axis=1)
        prop = mean_propagation(n, enc[0], enc[1])
        d = int(rng.integers(1, 4))
        params = init_params((d, 3, 1), seed=int(rng.integers(1 << 30)))
        feats = rng.standard_normal((n, d))
        target = rng.random(n)

        def loss_and_grad(p, x):
            scores, cache = forward(prop, p, x)
            value = 0.5 * float(np.sum((scores - target) ** 2))
            return value, backward(cache, scores - target)

        assert grad_check(loss_and_grad, params, feats, eps=1e-5) < 1e-6


def test_grad_check_flags_corrupted_gradient():
    prop = _path_prop(3)
    params = init_params((2, 3, 1), seed=0)
    feats = np.random.default_rng(1).standard_normal((3, 2))

    def corrupted(p, x):
        scores, cache = forward(prop, p, x)
        value = float(np.sum(scores**2))
        bundle = backward(cache, 2.0 * scores)
        bundle.weight_grads[0][0, 0] += 0.5
        return value, bundle

    assert grad_check(corrupted, params, feats) > 0.1


def test_backward_rep_grads_level_zero_is_additive():
    prop = _path_prop(4)
    params = init_params((2, 3, 1), seed=2)
    rng = np.random.default_rng(3)
    feats = rng.standard_normal((4, 2))
    _, cache = forward(prop, params, feats)
    sg = rng.standard_normal(4)
    extra = rng.standard_normal((4, 2))
    plain = backward(cache, sg)
    injected = backward(cache, sg, {0: extra})
    np.testing.assert_allclose(
        injected.feature_grads, plain.feature_grads + extra, atol=1e-12
    )
    for a, b in zip(plain.weight_grads, injected.weight_grads):
        np.testing.assert_array_equal(a, b)


def test_backward_validates_rep_grads():
    prop = _path_prop(3)
    params = init_params((2, 3, 1), seed=0)
    feats = np.zeros((3, 2))
    _, cache = forward(prop, params, feats)
    with pytest.raises(CacheMismatch):
        backward(cache, np.zeros(2))
    with pytest.raises(CacheMismatch):
        backward(cache, np.zeros(3), {5: np.zeros((3, 2))})
    with pytest.raises(CacheMismatch):
        backward(cache, np.zeros(3), {1: np.zeros((3, 2))})


def test_backward_permutation_equivariance():
    # relabeling nodes permutes feature gradients and leaves weight
    # gradients unchanged
    rng = np.random.default_rng(11)
    n = 6
    src = np.array([0, 1, 2, 3, 4])
    dst = np.array([1, 2, 3, 4, 5])
    feats = rng.standard_normal((n, 2))
    sg = rng.standard_normal(n)
    params = init_params((2, 4, 1), seed=5)

    perm = rng.permutation(n)
    inv = np.argsort(perm)

    prop = mean_propagation(n, src, dst)
    _, cache = forward(prop, params, feats)
    base = backward(cache, sg)

    prop_p = mean_propagation(n, perm[src], perm[dst])
    _, cache_p = forward(prop_p, params, feats[inv])
    permuted = backward(cache_p, sg[inv])

    np.testing.assert_allclose(
        permuted.feature_grads, base.feature_grads[inv], atol=1e-12
    )
    for a, b in zip(base.weight_grads, permuted.weight_grads):
        np.testing.assert_allclose(a, b, atol=1e-12)


def test_step_and_zero_bundle():
    params = init_params((2, 3, 1), seed=0)
    zero = zero_bundle(params, n_nodes=4)
    assert zero.feature_grads.shape == (4, 2)
    same = params.step(zero, lr=0.5)
    for a, b in zip(params.weights, same.weights):
        np.testing.assert_array_equal(a, b)
    # lr 0 is the identity for any gradient
    zero.weight_grads[0] += 1.0
    still = params.step(zero, lr=0.0)
    for a, b in zip(params.weights, still.weights):
        np.testing.assert_array_equal(a, b)


def test_squared_norm_oracle():
    params = init_params((2, 2, 1), seed=0)
    params.weights[0][:] = [[1.0, 2.0], [0.0, -1.0]]
    params.weights[1][:] = [[3.0, 0.0]]
    params.biases[0][:] = [1.0, 1.0]
    params.biases[1][:] = [-2.0]
    assert params.squared_norm() == pytest.approx(1 + 4 + 1 + 9 + 1 + 1 + 4)


def test_save_load_round_trip_bit_exact(tmp_path):
    params = init_params((3, 5, 1), seed=9)
    # make values non-trivial, including tiny and large magnitudes
    params.weights[0] *= 1e-9
    params.biases[1][:] = np.pi
    path = tmp_path / "ckpt.txt"
    save_params(params, str(path))
    loaded = load_params(str(path))
    assert loaded.layer_dims == params.layer_dims
    for a, b in zip(params.weights, loaded.weights):
        np.testing.assert_array_equal(a, b)
    for a, b in zip(params.biases, loaded.biases):
        np.testing.assert_array_equal(a, b)
    # second save is byte-identical
    path2 = tmp_path / "ckpt2.txt"
    save_params(loaded, str(path2))
    assert path.read_bytes() == path2.read_bytes()


def test_load_params_error_cases(tmp_path):
    empty = tmp_path / "empty.txt"
    empty.write_text("\n")
    with pytest.raises(ParseError):
        load_params(str(empty))

    bad_dims = tmp_path / "bad_dims.txt"
    bad_dims.write_text("3 x 1\n0 0 0\n0\n")
    with pytest.raises(ParseError):
        load_params(str(bad_dims))

    short_chain = tmp_path / "short.txt"
    short_chain.write_text("3\n")
    with pytest.raises(BadDimensions):
        load_params(str(short_chain))

    wrong_lines = tmp_path / "lines.txt"
    wrong_lines.write_text("2 1\n0.0 0.0\n")
    with pytest.raises(ParseError):
        load_params(str(wrong_lines))

    bad_float = tmp_path / "float.txt"
    bad_float.write_text("2 1\n0.0 oops\n0.0\n")
    with pytest.raises(ParseError) as exc:
        load_params(str(bad_float))
    assert exc.value.line == 2

    wrong_count = tmp_path / "count.txt"
    wrong_count.write_text("2 1\n0.0 0.0 0.0\n0.0\n")
    with pytest.raises(ParseError):
        load_params(str(wrong_count))
