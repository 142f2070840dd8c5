"""Immutable undirected attributed graphs and dataset containers.

Edges are stored once with ``i < j``; symmetry of the adjacency is a
representation guarantee rather than data that could drift.  Self-loops
are rejected at construction (encoder normalization adds them
transiently).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .errors import InvalidFlip, SplitTooSmall, ValidationError

Pair = tuple[int, int]

NODE_TASK = "node"
GRAPH_TASK = "graph"


def canonical_edges(pairs: Iterable[Sequence[int]], num_nodes: int,
                    allow_duplicates: bool = False) -> tuple[Pair, ...]:
    """Normalize pairs to sorted, deduplicated ``(i, j)`` with ``i < j``.

    Self-loops and out-of-range endpoints always raise; duplicates raise
    unless ``allow_duplicates`` (used by file loaders, which dedupe).
    """
    seen = set()
    for pair in pairs:
        i, j = int(pair[0]), int(pair[1])
        if i == j:
            raise ValidationError(f"self-loop edge ({i}, {i})")
        if not (0 <= i < num_nodes and 0 <= j < num_nodes):
            raise ValidationError(f"edge ({i}, {j}) out of range for n={num_nodes}")
        key = (i, j) if i < j else (j, i)
        if key in seen and not allow_duplicates:
            raise ValidationError(f"duplicate edge {key}")
        seen.add(key)
    return tuple(sorted(seen))


def _frozen_array(values, dtype) -> np.ndarray:
    arr = np.array(values, dtype=dtype)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class Graph:
    """One undirected attributed graph.

    ``edges`` must already be canonical (``i < j``, sorted, unique); use
    :func:`canonical_edges` when building from untrusted pairs.
    """

    num_nodes: int
    edges: tuple[Pair, ...]
    features: np.ndarray
    node_labels: np.ndarray | None = None
    graph_label: int | None = None
    train_mask: np.ndarray | None = None
    test_mask: np.ndarray | None = None
    edge_set: frozenset[Pair] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        n = self.num_nodes
        if n < 1:
            raise ValidationError("graph must have at least one node")
        prev = None
        for i, j in self.edges:
            if not (0 <= i < j < n):
                raise ValidationError(f"edge ({i}, {j}) violates 0 <= i < j < n")
            if prev is not None and (i, j) <= prev:
                raise ValidationError("edges must be sorted and duplicate-free")
            prev = (i, j)
        feats = _frozen_array(self.features, np.float64)
        if feats.ndim != 2 or feats.shape[0] != n:
            raise ValidationError(f"features must be (n, f), got {feats.shape}")
        object.__setattr__(self, "features", feats)
        if self.node_labels is not None:
            labels = _frozen_array(self.node_labels, np.int64)
            if labels.shape != (n,):
                raise ValidationError("node_labels length must equal num_nodes")
            object.__setattr__(self, "node_labels", labels)
        for name in ("train_mask", "test_mask"):
            mask = getattr(self, name)
            if mask is not None:
                mask = _frozen_array(mask, bool)
                if mask.shape != (n,):
                    raise ValidationError(f"{name} length must equal num_nodes")
                object.__setattr__(self, name, mask)
        if self.train_mask is not None and self.test_mask is not None:
            if np.any(self.train_mask & self.test_mask):
                raise ValidationError("train and test masks overlap")
        object.__setattr__(self, "edge_set", frozenset(self.edges))

    @property
    def num_edges(self) -> int:
        return len(self.edges)

    @property
    def num_features(self) -> int:
        return self.features.shape[1]

    def replace_edges(self, edges: tuple[Pair, ...]) -> "Graph":
        return Graph(self.num_nodes, edges, self.features, self.node_labels,
                     self.graph_label, self.train_mask, self.test_mask)


def dense_adjacency(g: Graph) -> np.ndarray:
    """Symmetric 0/1 adjacency matrix with zero diagonal."""
    A = np.zeros((g.num_nodes, g.num_nodes))
    if g.edges:
        idx = np.array(g.edges)
        A[idx[:, 0], idx[:, 1]] = 1.0
        A[idx[:, 1], idx[:, 0]] = 1.0
    return A


def random_split(n: int, train_fraction: float, seed: int) -> tuple[np.ndarray, np.ndarray]:
    """Seeded partition of ``0..n-1`` with ``round(train_fraction * n)`` train items.

    The train size is clamped to ``[1, n-1]`` so both sides stay nonempty.
    """
    if n < 2:
        raise SplitTooSmall(f"cannot split {n} items into train and test")
    if not 0.0 < train_fraction < 1.0:
        raise ValidationError("train_fraction must be in (0, 1)")
    k = min(max(int(round(train_fraction * n)), 1), n - 1)
    perm = np.random.default_rng(seed).permutation(n)
    return np.sort(perm[:k]), np.sort(perm[k:])


def apply_perturbation(g: Graph, flips: Iterable[Sequence[int]]) -> Graph:
    """Toggle each listed pair (present becomes absent and vice versa).

    Applying the same flip set twice returns the original graph.
    """
    edges = set(g.edges)
    for pair in flips:
        i, j = int(pair[0]), int(pair[1])
        if i == j:
            raise InvalidFlip(f"self-loop flip ({i}, {i})")
        if not (0 <= i < g.num_nodes and 0 <= j < g.num_nodes):
            raise InvalidFlip(f"flip ({i}, {j}) out of range for n={g.num_nodes}")
        key = (i, j) if i < j else (j, i)
        if key in edges:
            edges.remove(key)
        else:
            edges.add(key)
    return g.replace_edges(tuple(sorted(edges)))


@dataclass(frozen=True)
class GraphDataset:
    """Ordered graph collection with task metadata and a train/test split.

    Node classification holds exactly one graph and splits node indices;
    graph classification splits graph indices.
    """

    graphs: tuple[Graph, ...]
    task: str
    num_classes: int
    train_indices: np.ndarray
    test_indices: np.ndarray

    def __post_init__(self):
        if self.task not in (NODE_TASK, GRAPH_TASK):
            raise ValidationError(f"unknown task {self.task!r}")
        if not self.graphs:
            raise ValidationError("dataset holds no graphs")
        if self.num_classes < 2:
            raise ValidationError("need at least two classes")
        object.__setattr__(self, "train_indices", _frozen_array(self.train_indices, np.int64))
        object.__setattr__(self, "test_indices", _frozen_array(self.test_indices, np.int64))
        if self.task == NODE_TASK:
            if len(self.graphs) != 1:
                raise ValidationError("node task requires exactly one graph")
            g = self.graphs[0]
            if g.node_labels is None:
                raise ValidationError("node task requires node_labels")
            self._check_indices(g.num_nodes)
            if np.any(g.node_labels < 0) or np.any(g.node_labels >= self.num_classes):
                raise ValidationError("node_labels out of class range")
        else:
            for k, g in enumerate(self.graphs):
                if g.graph_label is None:
                    raise ValidationError(f"graphs[{k}] missing graph_label")
                if not 0 <= g.graph_label < self.num_classes:
                    raise ValidationError(f"graphs[{k}] label out of class range")
            self._check_indices(len(self.graphs))

    def _check_indices(self, limit: int) -> None:
        combined = np.concatenate([self.train_indices, self.test_indices])
        if len(np.unique(combined)) != len(combined):
            raise ValidationError("train/test indices overlap")
        if combined.size and (combined.min() < 0 or combined.max() >= limit):
            raise ValidationError("split index out of range")
        if self.train_indices.size == 0 or self.test_indices.size == 0:
            raise ValidationError("both split sides must be nonempty")

    @property
    def graph(self) -> Graph:
        """The single graph of a node-classification dataset."""
        if self.task != NODE_TASK:
            raise ValidationError("dataset is not a node task")
        return self.graphs[0]

    @property
    def feature_dim(self) -> int:
        return self.graphs[0].num_features
