"""Shared fixtures: one handmade toy graph and one small generated world."""

import numpy as np
import pytest

# verdict lines collected by the acceptance tests, echoed after the run
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)

from fairrank.datagen import GenConfig, generate
from fairrank.graph import (
    TEST,
    TRAIN,
    VALID,
    ReviewGraph,
    Split,
    build_graph,
)


def make_toy_graph() -> ReviewGraph:
    """Five users, nine reviews, two products.

    u0 is heavy (5 reviews: 2 spam, 3 clean -> mixed, favored at p=20),
    u1 posts one spam (pure), u2..u4 post one clean review each.
    Node ids: users 0..4, reviews 5..13, products 14..15.
    """
    rng = np.random.default_rng(42)
    feats = rng.standard_normal((16, 3))
    kinds = ["U"] * 5 + ["R"] * 9 + ["P"] * 2
    nodes = [(i, kinds[i], feats[i]) for i in range(16)]
    edges = [
        (0, 5), (0, 6), (0, 7), (0, 8), (0, 9),
        (5, 14), (6, 15), (7, 14), (8, 15), (9, 14),
        (1, 10), (10, 14),
        (2, 11), (11, 15),
        (3, 12), (12, 14),
        (4, 13), (13, 15),
    ]
    labels = {5: 1, 6: 1, 7: 0, 8: 0, 9: 0, 10: 1, 11: 0, 12: 0, 13: 0}
    return build_graph(nodes, edges, labels, feature_dim=3)


def manual_split(g: ReviewGraph, train, valid, test) -> Split:
    """Hand-picked user split; reviews follow their authors."""
    train = np.asarray(sorted(train), dtype=np.int64)
    valid = np.asarray(sorted(valid), dtype=np.int64)
    test = np.asarray(sorted(test), dtype=np.int64)
    membership = np.full(g.n_nodes, -1, dtype=np.int8)
    membership[train] = TRAIN
    membership[valid] = VALID
    membership[test] = TEST
    reviews = g.reviews
    membership[reviews] = membership[g.review_user[reviews]]
    return Split(
        seed=-1,
        train_users=train,
        valid_users=valid,
        test_users=test,
        membership=membership,
    )


@pytest.fixture(scope="session")
def toy() -> ReviewGraph:
    return make_toy_graph()


SMALL_CFG = GenConfig(
    n_users=100,
    n_products=10,
    favored_fraction=0.05,
    seed=3,
)


@pytest.fixture(scope="session")
def small_world():
    """A feasible 100-user generated graph with its ground-truth flags."""
    g, mixed_truth = generate(SMALL_CFG)
    return SMALL_CFG, g, mixed_truth
