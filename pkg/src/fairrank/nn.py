"""From-scratch graph neural network over a fixed propagation operator.

Layer rule: every node's current representation is averaged together
with its neighbors' (divisor 1 + degree, the node itself included),
then passed through an affine map. Hidden layers use ReLU; the final
layer has width one and a logistic output, so scores live in (0, 1).

Everything is full-batch float64 numpy. The backward pass returns exact
analytic gradients for all weights, biases and input features, and
accepts extra gradient injections on intermediate representations so
that synthetic-node paths (see augment.mixup_predict) can chain through
the same cache.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Mapping

import numpy as np
from scipy import sparse
from scipy.special import expit

from .errors import (
    BadDimensions,
    CacheMismatch,
    DimensionMismatch,
    NonFiniteValue,
    ParseError,
)
from .graph import ReviewGraph


@dataclass
class ModelParams:
    """Per-layer weight matrices (out x in) and bias vectors."""

    weights: list[np.ndarray]
    biases: list[np.ndarray]

    @property
    def layer_dims(self) -> tuple[int, ...]:
        return (self.weights[0].shape[1],) + tuple(w.shape[0] for w in self.weights)

    @property
    def n_layers(self) -> int:
        return len(self.weights)

    def copy(self) -> "ModelParams":
        return ModelParams(
            weights=[w.copy() for w in self.weights],
            biases=[b.copy() for b in self.biases],
        )

    def squared_norm(self) -> float:
        total = 0.0
        for w, b in zip(self.weights, self.biases):
            total += float(np.sum(w * w)) + float(np.sum(b * b))
        return total

    def step(self, grads: "GradientBundle", lr: float) -> "ModelParams":
        """New parameters after one plain gradient-descent step."""
        return ModelParams(
            weights=[w - lr * gw for w, gw in zip(self.weights, grads.weight_grads)],
            biases=[b - lr * gb for b, gb in zip(self.biases, grads.bias_grads)],
        )


def init_params(layer_dims: tuple[int, ...] | list[int], seed: int = 0) -> ModelParams:
    """Glorot-uniform weights, zero biases, for the given dim chain.

    The chain must have at least one layer and end in output width 1.
    """
    dims = tuple(int(d) for d in layer_dims)
    if len(dims) < 2:
        raise BadDimensions(f"need input and output dims, got {dims}")
    if any(d < 1 for d in dims):
        raise BadDimensions(f"dims must be positive, got {dims}")
    if dims[-1] != 1:
        raise BadDimensions(f"final output width must be 1, got {dims[-1]}")
    rng = np.random.default_rng(seed)
    weights, biases = [], []
    for d_in, d_out in zip(dims[:-1], dims[1:]):
        limit = np.sqrt(6.0 / (d_in + d_out))
        weights.append(rng.uniform(-limit, limit, size=(d_out, d_in)))
        biases.append(np.zeros(d_out, dtype=np.float64))
    return ModelParams(weights=weights, biases=biases)


@dataclass(frozen=True, eq=False)
class Propagation:
    """Row-normalized mean-aggregation operator with self loops.

    ``matrix[i, j] = 1 / (1 + deg(i))`` for j in N(i) or j == i.
    Neighbor CSR (without self loops) is kept for per-node queries.
    """

    n_nodes: int
    matrix: sparse.csr_matrix
    matrix_t: sparse.csr_matrix
    nbr_indptr: np.ndarray
    nbr_indices: np.ndarray
    inv_counts: np.ndarray  # 1 / (1 + degree)

    def neighbors(self, node: int) -> np.ndarray:
        return self.nbr_indices[self.nbr_indptr[node]:self.nbr_indptr[node + 1]]


def mean_propagation(n_nodes: int, src: np.ndarray, dst: np.ndarray) -> Propagation:
    """Build the aggregation operator from undirected edge endpoints."""
    src = np.asarray(src, dtype=np.int64)
    dst = np.asarray(dst, dtype=np.int64)
    if src.shape != dst.shape:
        raise DimensionMismatch("edge endpoint arrays differ in length")
    both_src = np.concatenate([src, dst])
    both_dst = np.concatenate([dst, src])
    order = np.lexsort((both_dst, both_src))
    both_src, both_dst = both_src[order], both_dst[order]

    degrees = np.zeros(n_nodes, dtype=np.int64)
    np.add.at(degrees, src, 1)
    np.add.at(degrees, dst, 1)
    inv_counts = 1.0 / (1.0 + degrees)

    rows = np.concatenate([both_src, np.arange(n_nodes, dtype=np.int64)])
    cols = np.concatenate([both_dst, np.arange(n_nodes, dtype=np.int64)])
    vals = inv_counts[rows]
    matrix = sparse.csr_matrix((vals, (rows, cols)), shape=(n_nodes, n_nodes))
    matrix_t = matrix.transpose().tocsr()

    indptr = np.zeros(n_nodes + 1, dtype=np.int64)
    np.add.at(indptr, both_src + 1, 1)
    indptr = np.cumsum(indptr)
    return Propagation(
        n_nodes=n_nodes,
        matrix=matrix,
        matrix_t=matrix_t,
        nbr_indptr=indptr,
        nbr_indices=both_dst,
        inv_counts=inv_counts,
    )


def propagation_for_graph(g: ReviewGraph) -> Propagation:
    edges = g.edge_array()
    return mean_propagation(g.n_nodes, edges[:, 0], edges[:, 1])


def neighborhood_mean(prop: Propagation, reps: np.ndarray, node: int) -> np.ndarray:
    """Mean of the node's representation and its neighbors' (direct sum)."""
    nbrs = prop.neighbors(node)
    return (reps[node] + reps[nbrs].sum(axis=0)) / (1.0 + nbrs.size)


@dataclass(eq=False)
class ForwardCache:
    """Intermediates of one forward pass, consumed by backward."""

    prop: Propagation
    params: ModelParams
    reps: list[np.ndarray]   # reps[0] = input features; reps[l] = layer-l output
    aggs: list[np.ndarray]   # aggs[l-1] = aggregated input of layer l

    @property
    def n_nodes(self) -> int:
        return self.reps[0].shape[0]


def forward(
    prop: Propagation, params: ModelParams, features: np.ndarray
) -> tuple[np.ndarray, ForwardCache]:
    """Full-batch forward pass; returns per-node scores and the cache."""
    features = np.asarray(features, dtype=np.float64)
    if features.ndim != 2:
        raise DimensionMismatch(f"features must be 2-d, got shape {features.shape}")
    if features.shape[0] != prop.n_nodes:
        raise DimensionMismatch(
            f"features rows {features.shape[0]} != graph nodes {prop.n_nodes}"
        )
    if features.shape[1] != params.layer_dims[0]:
        raise DimensionMismatch(
            f"feature width {features.shape[1]} != first-layer input "
            f"{params.layer_dims[0]}"
        )
    n_layers = params.n_layers
    h = features
    reps = [features]
    aggs = []
    for layer, (w, b) in enumerate(zip(params.weights, params.biases)):
        agg = prop.matrix @ h
        z = agg @ w.T + b
        h = expit(z) if layer == n_layers - 1 else np.maximum(z, 0.0)
        if not np.isfinite(h).all():
            raise NonFiniteValue(f"non-finite activation at layer {layer + 1}")
        aggs.append(agg)
        reps.append(h)
    scores = reps[-1][:, 0]
    return scores, ForwardCache(prop=prop, params=params, reps=reps, aggs=aggs)


@dataclass(eq=False)
class GradientBundle:
    """Gradients of a scalar loss w.r.t. parameters and input features."""

    weight_grads: list[np.ndarray]
    bias_grads: list[np.ndarray]
    feature_grads: np.ndarray

    def add_scaled(self, other: "GradientBundle", scale: float = 1.0) -> None:
        for mine, theirs in zip(self.weight_grads, other.weight_grads):
            mine += scale * theirs
        for mine, theirs in zip(self.bias_grads, other.bias_grads):
            mine += scale * theirs
        self.feature_grads += scale * other.feature_grads


def zero_bundle(params: ModelParams, n_nodes: int) -> GradientBundle:
    return GradientBundle(
        weight_grads=[np.zeros_like(w) for w in params.weights],
        bias_grads=[np.zeros_like(b) for b in params.biases],
        feature_grads=np.zeros((n_nodes, params.layer_dims[0])),
    )


def backward(
    cache: ForwardCache,
    score_grads: np.ndarray,
    rep_grads: Mapping[int, np.ndarray] | None = None,
) -> GradientBundle:
    """Exact gradients given d(loss)/d(score) per node.

    ``rep_grads`` optionally injects extra d(loss)/d(h^(level)) arrays,
    keyed by representation level 0..L-1, merged as the backward sweep
    reaches that level (level 0 is the input features).
    """
    params = cache.params
    prop = cache.prop
    n = cache.n_nodes
    score_grads = np.asarray(score_grads, dtype=np.float64)
    if score_grads.shape != (n,):
        raise CacheMismatch(
            f"score_grads shape {score_grads.shape} != ({n},)"
        )
    if rep_grads:
        dims = cache.params.layer_dims
        for level, arr in rep_grads.items():
            if not 0 <= level < params.n_layers:
                raise CacheMismatch(f"rep_grads level {level} out of range")
            if arr.shape != (n, dims[level]):
                raise CacheMismatch(
                    f"rep_grads[{level}] shape {arr.shape} != {(n, dims[level])}"
                )

    weight_grads = [np.empty(0)] * params.n_layers
    bias_grads = [np.empty(0)] * params.n_layers
    dh = score_grads[:, None]
    for layer in range(params.n_layers - 1, -1, -1):
        h = cache.reps[layer + 1]
        if layer == params.n_layers - 1:
            dz = dh * (h * (1.0 - h))
        else:
            dz = dh * (h > 0.0)
        weight_grads[layer] = dz.T @ cache.aggs[layer]
        bias_grads[layer] = dz.sum(axis=0)
        dagg = dz @ params.weights[layer]
        dh = prop.matrix_t @ dagg
        if rep_grads and layer in rep_grads:
            dh = dh + rep_grads[layer]
    return GradientBundle(
        weight_grads=weight_grads, bias_grads=bias_grads, feature_grads=dh
    )


def grad_check(
    loss_and_grad: Callable[[ModelParams, np.ndarray], tuple[float, GradientBundle]],
    params: ModelParams,
    features: np.ndarray,
    eps: float = 1e-5,
) -> float:
    """Max relative error of analytic gradients vs central differences.

    ``loss_and_grad(params, features)`` must be deterministic and return
    the scalar loss plus its full GradientBundle. Every weight, bias and
    feature coordinate is perturbed by +-eps.
    """
    _, bundle = loss_and_grad(params, features)
    worst = 0.0

    def fd_at(setter: Callable[[float], None], base: float, analytic: float) -> float:
        setter(base + eps)
        up, _ = loss_and_grad(params, features)
        setter(base - eps)
        down, _ = loss_and_grad(params, features)
        setter(base)
        fd = (up - down) / (2.0 * eps)
        return abs(analytic - fd) / max(abs(analytic), abs(fd), 1e-8)

    for layer, w in enumerate(params.weights):
        for idx in np.ndindex(w.shape):
            def set_w(v, w=w, idx=idx):
                w[idx] = v
            worst = max(worst, fd_at(set_w, w[idx], bundle.weight_grads[layer][idx]))
    for layer, b in enumerate(params.biases):
        for idx in np.ndindex(b.shape):
            def set_b(v, b=b, idx=idx):
                b[idx] = v
            worst = max(worst, fd_at(set_b, b[idx], bundle.bias_grads[layer][idx]))
    features = np.asarray(features)
    for idx in np.ndindex(features.shape):
        def set_x(v, idx=idx):
            features[idx] = v
        worst = max(worst, fd_at(set_x, features[idx], bundle.feature_grads[idx]))
    return worst


def save_params(params: ModelParams, path: str) -> None:
    """Text checkpoint: dim chain, then per layer row-major W and b.

    Floats are written with repr, which round-trips float64 bit-exactly.
    """
    lines = [" ".join(str(d) for d in params.layer_dims)]
    for w, b in zip(params.weights, params.biases):
        lines.append(" ".join(repr(float(v)) for v in w.ravel(order="C")))
        lines.append(" ".join(repr(float(v)) for v in b))
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def load_params(path: str) -> ModelParams:
    """Inverse of save_params; validates the dimension chain."""
    with open(path) as fh:
        lines = [ln.strip() for ln in fh if ln.strip()]
    if not lines:
        raise ParseError("empty checkpoint", line=1)
    try:
        dims = tuple(int(tok) for tok in lines[0].split())
    except ValueError as exc:
        raise ParseError(f"bad dimension chain: {exc}", line=1) from exc
    if len(dims) < 2:
        raise BadDimensions(f"checkpoint dim chain too short: {dims}")
    expected = 1 + 2 * (len(dims) - 1)
    if len(lines) != expected:
        raise ParseError(
            f"expected {expected} lines for dims {dims}, found {len(lines)}",
            line=len(lines),
        )
    weights, biases = [], []
    for layer, (d_in, d_out) in enumerate(zip(dims[:-1], dims[1:])):
        w_line = lines[1 + 2 * layer]
        b_line = lines[2 + 2 * layer]
        try:
            w = np.array([float(t) for t in w_line.split()], dtype=np.float64)
            b = np.array([float(t) for t in b_line.split()], dtype=np.float64)
        except ValueError as exc:
            raise ParseError(f"bad float: {exc}", line=2 + 2 * layer) from exc
        if w.size != d_in * d_out:
            raise ParseError(
                f"layer {layer}: expected {d_in * d_out} weights, got {w.size}",
                line=2 + 2 * layer,
            )
        if b.size != d_out:
            raise ParseError(
                f"layer {layer}: expected {d_out} biases, got {b.size}",
                line=3 + 2 * layer,
            )
        weights.append(w.reshape(d_out, d_in))
        biases.append(b)
    return ModelParams(weights=weights, biases=biases)
