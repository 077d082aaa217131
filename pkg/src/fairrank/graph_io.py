"""On-disk graph format: nodes.tsv, edges.tsv, groups.tsv.

nodes.tsv   id <TAB> kind (U|R|P) <TAB> label (0|1|-) <TAB> features
            (comma-separated floats)
edges.tsv   src_id <TAB> dst_id, one undirected edge per line
groups.tsv  user_id <TAB> group <TAB> mixed flag (ground truth)

Floats are written with repr and parsed with float(), which round-trips
float64 bit-exactly. Loaders report the offending line on parse errors;
structural violations surface as the graph builder's errors.
"""

from __future__ import annotations

import os

import numpy as np

from .errors import ParseError
from .graph import KIND_CHARS, REVIEW, USER, GroupAssignment, ReviewGraph, build_graph

NODES_FILE = "nodes.tsv"
EDGES_FILE = "edges.tsv"
GROUPS_FILE = "groups.tsv"


def write_graph(
    g: ReviewGraph,
    directory: str,
    groups: GroupAssignment | None = None,
    aprime: np.ndarray | None = None,
) -> None:
    """Serialize a graph (and optional ground-truth groups) to a directory."""
    os.makedirs(directory, exist_ok=True)
    with open(os.path.join(directory, NODES_FILE), "w") as fh:
        for i in range(g.n_nodes):
            kind = KIND_CHARS[g.kinds[i]]
            label = str(int(g.labels[i])) if g.kinds[i] == REVIEW else "-"
            feats = ",".join(repr(float(v)) for v in g.features[i])
            fh.write(f"{i}\t{kind}\t{label}\t{feats}\n")
    with open(os.path.join(directory, EDGES_FILE), "w") as fh:
        for a, b in g.edge_array():
            fh.write(f"{a}\t{b}\n")
    if groups is not None or aprime is not None:
        with open(os.path.join(directory, GROUPS_FILE), "w") as fh:
            for u in g.users:
                grp = int(groups.group[u]) if groups is not None else -1
                if aprime is not None:
                    mix = int(aprime[u])
                elif groups is not None and groups.mixed is not None:
                    mix = int(groups.mixed[u])
                else:
                    mix = -1
                fh.write(f"{u}\t{grp}\t{mix}\n")


def read_graph(directory: str) -> ReviewGraph:
    """Load and validate a graph from nodes.tsv / edges.tsv."""
    nodes_path = os.path.join(directory, NODES_FILE)
    edges_path = os.path.join(directory, EDGES_FILE)

    nodes = []
    labels: dict[int, int] = {}
    feature_dim: int | None = None
    with open(nodes_path) as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.rstrip("\n")
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) != 4:
                raise ParseError(
                    f"{NODES_FILE}: expected 4 tab-separated fields, got {len(parts)}",
                    line=lineno,
                )
            id_s, kind_s, label_s, feats_s = parts
            try:
                node_id = int(id_s)
            except ValueError:
                raise ParseError(f"{NODES_FILE}: bad node id {id_s!r}", line=lineno)
            if kind_s not in KIND_CHARS:
                raise ParseError(f"{NODES_FILE}: bad kind {kind_s!r}", line=lineno)
            try:
                feats = [float(tok) for tok in feats_s.split(",")] if feats_s else []
            except ValueError:
                raise ParseError(f"{NODES_FILE}: bad feature float", line=lineno)
            if feature_dim is None:
                feature_dim = len(feats)
            elif len(feats) != feature_dim:
                raise ParseError(
                    f"{NODES_FILE}: feature width {len(feats)} != {feature_dim}",
                    line=lineno,
                )
            if label_s == "-":
                pass
            elif label_s in ("0", "1"):
                labels[node_id] = int(label_s)
            else:
                raise ParseError(
                    f"{NODES_FILE}: bad label {label_s!r} (want 0, 1 or -)",
                    line=lineno,
                )
            nodes.append((node_id, kind_s, feats))
    if not nodes:
        raise ParseError(f"{NODES_FILE}: no nodes", line=1)

    edges = []
    with open(edges_path) as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.rstrip("\n")
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) != 2:
                raise ParseError(
                    f"{EDGES_FILE}: expected 2 tab-separated fields, got {len(parts)}",
                    line=lineno,
                )
            try:
                edges.append((int(parts[0]), int(parts[1])))
            except ValueError:
                raise ParseError(f"{EDGES_FILE}: bad edge endpoint", line=lineno)

    return build_graph(nodes, edges, labels, feature_dim or 0)


def read_groups(directory: str, n_nodes: int) -> tuple[np.ndarray, np.ndarray]:
    """Load groups.tsv; returns (group, mixed) arrays with -1 elsewhere."""
    path = os.path.join(directory, GROUPS_FILE)
    group = np.full(n_nodes, -1, dtype=np.int8)
    mixed = np.full(n_nodes, -1, dtype=np.int8)
    with open(path) as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.rstrip("\n")
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) != 3:
                raise ParseError(
                    f"{GROUPS_FILE}: expected 3 tab-separated fields, got {len(parts)}",
                    line=lineno,
                )
            try:
                u, grp, mix = int(parts[0]), int(parts[1]), int(parts[2])
            except ValueError:
                raise ParseError(f"{GROUPS_FILE}: bad integer", line=lineno)
            if not 0 <= u < n_nodes:
                raise ParseError(f"{GROUPS_FILE}: user id {u} out of range", line=lineno)
            group[u] = grp
            mixed[u] = mix
    return group, mixed
