"""Dataset ingestion (canonical JSON) and synthetic generators.

The canonical file is one JSON document::

    {"task": "node" | "graph",
     "num_classes": k,
     "graphs": [{"num_nodes": n, "edges": [[i, j], ...],
                 "features": [[...], ...],
                 "node_labels": [...]?, "graph_label": l?}, ...],
     "split": {"train": [...], "test": [...]}?}

Edges may appear in either order and may repeat; the loader normalizes
and deduplicates.  A missing split is generated 80/20 from a seed.
Planted-partition generators provide desk-scale node and graph
classification datasets with controllable structure signal.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ParseError, ValidationError
from .graphs import (GRAPH_TASK, NODE_TASK, Graph, GraphDataset, canonical_edges,
                     random_split)
from .seeding import derive_rng, derive_seed

DEFAULT_TRAIN_FRACTION = 0.8


@dataclass(frozen=True)
class SbmSpec:
    """Planted two-or-more-block graph with Gaussian class-coded features."""

    blocks: int = 2
    nodes_per_block: int = 100
    p_in: float = 0.1
    p_out: float = 0.01
    feature_dim: int = 8
    feature_signal: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.blocks < 1 or self.nodes_per_block < 1:
            raise ValidationError("blocks and nodes_per_block must be positive")
        for name in ("p_in", "p_out"):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise ValidationError(f"{name} must be a probability")
        if self.p_out > self.p_in:
            raise ValidationError("p_out must not exceed p_in")
        if self.feature_dim < 1:
            raise ValidationError("feature_dim must be positive")


def _sbm_graph(spec: SbmSpec, rng: np.random.Generator,
               with_labels: bool) -> Graph:
    n = spec.blocks * spec.nodes_per_block
    labels = np.repeat(np.arange(spec.blocks), spec.nodes_per_block)
    iu, ju = np.triu_indices(n, k=1)
    prob = np.where(labels[iu] == labels[ju], spec.p_in, spec.p_out)
    keep = rng.random(len(iu)) < prob
    edges = tuple(zip(iu[keep].tolist(), ju[keep].tolist()))
    means = spec.feature_signal * rng.standard_normal((spec.blocks, spec.feature_dim))
    features = means[labels] + rng.standard_normal((n, spec.feature_dim))
    return Graph(num_nodes=n, edges=edges, features=features,
                 node_labels=labels if with_labels else None)


def generate_sbm_node_dataset(spec: SbmSpec,
                              train_fraction: float = DEFAULT_TRAIN_FRACTION) -> GraphDataset:
    """Single planted-partition graph; node label = block id."""
    rng = derive_rng(spec.seed, "sbm-node")
    g = _sbm_graph(spec, rng, with_labels=True)
    train_idx, test_idx = random_split(g.num_nodes, train_fraction,
                                       derive_seed(spec.seed, "split"))
    return GraphDataset(graphs=(g,), task=NODE_TASK, num_classes=spec.blocks,
                        train_indices=train_idx, test_indices=test_idx)


def generate_graph_classification_dataset(num_graphs: int, spec_a: SbmSpec,
                                          spec_b: SbmSpec, seed: int,
                                          train_fraction: float = DEFAULT_TRAIN_FRACTION,
                                          ) -> GraphDataset:
    """Half the graphs from each spec (labels 0/1), shuffled and split 80/20."""
    if num_graphs < 2:
        raise ValidationError("need at least two graphs")
    graphs = []
    for k in range(num_graphs):
        label = k % 2
        spec = spec_a if label == 0 else spec_b
        rng = derive_rng(seed, "sbm-graph", k)
        g = _sbm_graph(spec, rng, with_labels=False)
        graphs.append(Graph(g.num_nodes, g.edges, g.features, graph_label=label))
    order = derive_rng(seed, "shuffle").permutation(num_graphs)
    graphs = tuple(graphs[i] for i in order)
    train_idx, test_idx = random_split(num_graphs, train_fraction,
                                       derive_seed(seed, "split"))
    return GraphDataset(graphs=graphs, task=GRAPH_TASK, num_classes=2,
                        train_indices=train_idx, test_indices=test_idx)


def _parse_graph(entry: dict, index: int, task: str) -> Graph:
    where = f"graphs[{index}]"
    try:
        n = int(entry["num_nodes"])
        edges = canonical_edges(entry.get("edges", []), n, allow_duplicates=True)
        features = np.asarray(entry["features"], dtype=np.float64)
        node_labels = entry.get("node_labels")
        graph_label = entry.get("graph_label")
        return Graph(num_nodes=n, edges=edges, features=features,
                     node_labels=None if node_labels is None else node_labels,
                     graph_label=None if graph_label is None else int(graph_label))
    except KeyError as exc:
        raise ParseError(f"{where}: missing field {exc}") from exc
    except (TypeError, ValueError) as exc:
        raise ParseError(f"{where}: {exc}") from exc
    except ValidationError as exc:
        raise ValidationError(f"{where}: {exc}") from exc


def load_dataset(path: str | Path, split_seed: int = 0) -> GraphDataset:
    """Parse and validate a canonical dataset file.

    Malformed JSON raises :class:`ParseError` with the line/column;
    invariant violations raise :class:`ValidationError` naming the graph.
    """
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: line {exc.lineno} column {exc.colno}: {exc.msg}") \
            from exc
    if not isinstance(doc, dict):
        raise ParseError(f"{path}: top level must be an object")
    task = doc.get("task")
    if task not in (NODE_TASK, GRAPH_TASK):
        raise ParseError(f"{path}: task must be 'node' or 'graph', got {task!r}")
    try:
        num_classes = int(doc["num_classes"])
        raw_graphs = doc["graphs"]
    except KeyError as exc:
        raise ParseError(f"{path}: missing field {exc}") from exc
    graphs = tuple(_parse_graph(entry, k, task) for k, entry in enumerate(raw_graphs))

    split = doc.get("split")
    if split is not None:
        try:
            train_idx = np.asarray(split["train"], dtype=np.int64)
            test_idx = np.asarray(split["test"], dtype=np.int64)
        except (KeyError, TypeError, ValueError) as exc:
            raise ParseError(f"{path}: bad split: {exc}") from exc
    else:
        count = graphs[0].num_nodes if task == NODE_TASK else len(graphs)
        train_idx, test_idx = random_split(count, DEFAULT_TRAIN_FRACTION,
                                           derive_seed(split_seed, "split"))
    return GraphDataset(graphs=graphs, task=task, num_classes=num_classes,
                        train_indices=train_idx, test_indices=test_idx)


def save_dataset(dataset: GraphDataset, path: str | Path) -> None:
    doc = {
        "task": dataset.task,
        "num_classes": dataset.num_classes,
        "graphs": [],
        "split": {"train": dataset.train_indices.tolist(),
                  "test": dataset.test_indices.tolist()},
    }
    for g in dataset.graphs:
        entry = {"num_nodes": g.num_nodes,
                 "edges": [list(e) for e in g.edges],
                 "features": g.features.tolist()}
        if g.node_labels is not None:
            entry["node_labels"] = g.node_labels.tolist()
        if g.graph_label is not None:
            entry["graph_label"] = int(g.graph_label)
        doc["graphs"].append(entry)
    Path(path).write_text(json.dumps(doc))


def _read_csv_rows(path: Path) -> list[list[str]]:
    try:
        with path.open(newline="") as fh:
            return [row for row in csv.reader(fh) if row]
    except OSError as exc:
        raise ParseError(f"{path}: {exc}") from exc


def convert_edgelist(edges_csv: str | Path, features_csv: str | Path,
                     labels_csv: str | Path, out_path: str | Path,
                     num_classes: int | None = None, split_seed: int = 0) -> None:
    """Convert an (edges.csv, features.csv, labels.csv) triple to the
    canonical node-task JSON file.

    ``edges.csv`` holds one ``i,j`` pair per row; ``features.csv`` one row
    of floats per node; ``labels.csv`` one integer per node.
    """
    features = np.asarray([[float(x) for x in row]
                           for row in _read_csv_rows(Path(features_csv))])
    labels = np.asarray([int(row[0]) for row in _read_csv_rows(Path(labels_csv))],
                        dtype=np.int64)
    if features.ndim != 2 or len(labels) != len(features):
        raise ParseError("features and labels must have one row per node")
    n = len(features)
    pairs = [(int(row[0]), int(row[1])) for row in _read_csv_rows(Path(edges_csv))]
    edges = canonical_edges(pairs, n, allow_duplicates=True)
    graph = Graph(num_nodes=n, edges=edges, features=features, node_labels=labels)
    k = num_classes if num_classes is not None else int(labels.max()) + 1
    train_idx, test_idx = random_split(n, DEFAULT_TRAIN_FRACTION,
                                       derive_seed(split_seed, "split"))
    dataset = GraphDataset(graphs=(graph,), task=NODE_TASK, num_classes=k,
                           train_indices=train_idx, test_indices=test_idx)
    save_dataset(dataset, out_path)
