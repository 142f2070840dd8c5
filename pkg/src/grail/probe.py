"""Linear classification on frozen encoder representations.

The probe is the only trainable piece in step two: representations are
computed once on the clean graphs and cached, the classifier is fit with
cross-entropy, and the encoder checksum is asserted unchanged.  The same
module also trains the supervised (non-contrastive) baselines end-to-end,
which then enter step three exactly like a frozen encoder + probe pair.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor, as_tensor
from .encoders import (EncoderConfig, EncoderModel, checksum_params, encode_nodes,
                       load_params, readout, save_params)
from .errors import EmptySelection, TrainingDiverged, ValidationError
from .graphs import NODE_TASK, Graph, GraphDataset, dense_adjacency
from .optim import Adam
from .seeding import derive_rng


@dataclass(frozen=True)
class ProbeConfig:
    epochs: int = 300
    lr: float = 1e-2
    seed: int = 0


class LinearProbe:
    def __init__(self, in_dim: int, num_classes: int, seed: int = 0):
        rng = derive_rng(seed, "probe-init")
        scale = np.sqrt(2.0 / (in_dim + num_classes))
        self.weight = Tensor(rng.normal(0, scale, (in_dim, num_classes)),
                             requires_grad=True)
        self.bias = Tensor(np.zeros((1, num_classes)), requires_grad=True)

    @property
    def params(self) -> dict[str, Tensor]:
        return {"weight": self.weight, "bias": self.bias}

    def parameters(self) -> list[Tensor]:
        return [self.weight, self.bias]

    def logits(self, H) -> Tensor:
        return as_tensor(H) @ self.weight + self.bias

    def checksum(self) -> str:
        return checksum_params(self.params)


def cross_entropy(logits, labels, mask=None) -> Tensor:
    """Mean negative log-likelihood over the selected rows.

    ``mask`` may be a boolean vector or an index array; omitted means all
    rows.  Uses a stabilized log-softmax.
    """
    logits = as_tensor(logits)
    labels = np.asarray(labels, dtype=np.int64)
    if mask is not None:
        mask = np.asarray(mask)
        idx = np.flatnonzero(mask) if mask.dtype == bool else mask.astype(np.intp)
        if idx.size == 0:
            raise EmptySelection("mask selects no rows")
        logits = ad.rows(logits, idx)
        labels = labels[idx]
    n, k = logits.data.shape
    if labels.shape != (n,):
        raise ValidationError(f"labels shape {labels.shape} does not match {n} rows")
    if labels.min() < 0 or labels.max() >= k:
        raise ValidationError("label out of range")
    log_norm = ad.logsumexp(logits, axis=1, keepdims=True)
    log_probs = logits - log_norm
    one_hot = np.zeros((n, k))
    one_hot[np.arange(n), labels] = 1.0
    return -ad.tmean(ad.tsum(log_probs * Tensor(one_hot), axis=1))


def _node_embeddings(encoder: EncoderModel, graph: Graph) -> np.ndarray:
    A = dense_adjacency(graph)
    return encode_nodes(encoder, A, graph.features, train_mode=False).data


def _graph_embeddings(encoder: EncoderModel, graphs: Sequence[Graph]) -> np.ndarray:
    rows = [readout(encode_nodes(encoder, dense_adjacency(g), g.features),
                    encoder.config.readout).data
            for g in graphs]
    return np.concatenate(rows, axis=0)


def embeddings_and_labels(encoder: EncoderModel,
                          dataset: GraphDataset) -> tuple[np.ndarray, np.ndarray]:
    """Eval-mode representations for every item (node or graph) with labels."""
    if dataset.task == NODE_TASK:
        g = dataset.graph
        return _node_embeddings(encoder, g), np.asarray(g.node_labels)
    H = _graph_embeddings(encoder, dataset.graphs)
    labels = np.array([g.graph_label for g in dataset.graphs], dtype=np.int64)
    return H, labels


def train_probe(encoder: EncoderModel, dataset: GraphDataset,
                config: ProbeConfig = ProbeConfig()) -> LinearProbe:
    """Fit the linear classifier on cached clean representations.

    Only probe parameters update; the encoder is read, never written,
    which the caller can verify via checksums.
    """
    H, labels = embeddings_and_labels(encoder, dataset)
    probe = LinearProbe(H.shape[1], dataset.num_classes, seed=config.seed)
    train_idx = dataset.train_indices
    if train_idx.size == 0:
        raise EmptySelection("empty training split")
    opt = Adam(probe.parameters(), lr=config.lr)
    H_train = H[train_idx]
    y_train = labels[train_idx]
    for epoch in range(config.epochs):
        opt.zero_grad()
        loss = cross_entropy(probe.logits(H_train), y_train)
        if not np.isfinite(loss.data):
            raise TrainingDiverged(f"probe loss non-finite at epoch {epoch}", epoch)
        loss.backward()
        opt.step()
    return probe


def _resolve_override(dataset: GraphDataset, graph_override) -> list[Graph]:
    graphs = list(dataset.graphs)
    if graph_override is None:
        return graphs
    if isinstance(graph_override, Graph):
        if dataset.task != NODE_TASK:
            raise ValidationError("single-graph override requires a node task")
        return [graph_override]
    if isinstance(graph_override, Mapping):
        for idx, g in graph_override.items():
            graphs[int(idx)] = g
        return graphs
    return list(graph_override)


def predictions(probe: LinearProbe, encoder: EncoderModel, dataset: GraphDataset,
                graph_override=None) -> np.ndarray:
    """Argmax class per node/graph; ties resolve to the lowest class index."""
    graphs = _resolve_override(dataset, graph_override)
    if dataset.task == NODE_TASK:
        H = _node_embeddings(encoder, graphs[0])
    else:
        H = _graph_embeddings(encoder, graphs)
    scores = H @ probe.weight.data + probe.bias.data
    return np.argmax(scores, axis=1)


def accuracy(probe: LinearProbe, encoder: EncoderModel, dataset: GraphDataset,
             split: str | np.ndarray = "test", graph_override=None) -> float:
    """Share of correct argmax predictions over a split.

    ``graph_override`` swaps in perturbed structure (evasion semantics):
    a Graph for node tasks, or a {graph index: Graph} mapping / full list
    for graph tasks.  Representations are recomputed on the override.
    """
    if isinstance(split, str):
        if split == "train":
            idx = dataset.train_indices
        elif split == "test":
            idx = dataset.test_indices
        else:
            raise ValidationError(f"unknown split {split!r}")
    else:
        idx = np.asarray(split, dtype=np.int64)
    if idx.size == 0:
        raise EmptySelection("empty evaluation split")
    preds = predictions(probe, encoder, dataset, graph_override)
    if dataset.task == NODE_TASK:
        labels = np.asarray(dataset.graph.node_labels)
    else:
        labels = np.array([g.graph_label for g in dataset.graphs], dtype=np.int64)
    return float(np.mean(preds[idx] == labels[idx]))


def train_supervised(dataset: GraphDataset, encoder_config: EncoderConfig,
                     epochs: int = 200, lr: float = 1e-2, seed: int = 0,
                     patience: int | None = None,
                     batch_size: int = 64) -> tuple[EncoderModel, LinearProbe]:
    """End-to-end supervised baseline: encoder and linear head trained
    jointly with cross-entropy on the training split, then frozen."""
    encoder = EncoderModel(encoder_config, dataset.feature_dim, seed=seed)
    head = LinearProbe(encoder.out_dim, dataset.num_classes, seed=seed)
    opt = Adam(encoder.parameters() + head.parameters(), lr=lr)
    best, bad = np.inf, 0
    for epoch in range(epochs):
        rng = derive_rng(seed, "supervised-epoch", epoch)
        opt.zero_grad()
        if dataset.task == NODE_TASK:
            g = dataset.graph
            H = encode_nodes(encoder, dense_adjacency(g), g.features,
                             train_mode=True, rng=rng)
            loss = cross_entropy(head.logits(H), np.asarray(g.node_labels),
                                 mask=dataset.train_indices)
        else:
            idx = dataset.train_indices
            take = idx if len(idx) <= batch_size else rng.choice(
                idx, size=batch_size, replace=False)
            rows = [readout(encode_nodes(encoder, dense_adjacency(dataset.graphs[i]),
                                         dataset.graphs[i].features,
                                         train_mode=True, rng=rng),
                            encoder_config.readout)
                    for i in take]
            labels = np.array([dataset.graphs[i].graph_label for i in take])
            loss = cross_entropy(ad.concat(rows, axis=0) @ head.weight + head.bias,
                                 labels)
        value = float(loss.data)
        if not np.isfinite(value):
            raise TrainingDiverged(f"supervised loss non-finite at epoch {epoch}",
                                   epoch)
        loss.backward()
        opt.step()
        if value < best:
            best, bad = value, 0
        else:
            bad += 1
            if patience is not None and bad >= patience:
                break
    return encoder, head


def save_probe(probe: LinearProbe, stem: str | Path) -> None:
    meta = {"type": "probe", "in_dim": probe.weight.data.shape[0],
            "num_classes": probe.weight.data.shape[1]}
    save_params(probe.params, meta, stem)


def load_probe(stem: str | Path) -> LinearProbe:
    arrays, meta = load_params(stem)
    if meta.get("type") != "probe":
        raise ValidationError(f"{stem}: not a probe checkpoint")
    probe = LinearProbe(meta["in_dim"], meta["num_classes"], seed=0)
    probe.weight = Tensor(arrays["weight"], requires_grad=True)
    probe.bias = Tensor(arrays["bias"], requires_grad=True)
    return probe
