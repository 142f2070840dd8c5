"""Self-supervised objectives and training loops for graph encoders.

Five objectives are provided: summary-contrast training with feature-row
corruption (``dgi``), batch patch/summary mutual information (``infograph``),
two-view augmentation contrast at node or graph level (``graphcl``),
the same with adaptive centrality-weighted augmentations (``gca``), and
the adversarial learned-augmenter game (``adgcl``).  Training returns the
encoder with parameters frozen thereafter; objective heads are discarded.
"""

from __future__ import annotations

import dataclasses
import json
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor, as_tensor
from .augment import AugmentSpec, LearnedAugmenter, augment, learned_edge_drop_sample
from .encoders import (EncoderConfig, EncoderModel, dgi_summary, encode_nodes,
                       readout, relaxed_adjacency)
from .errors import NeedNegatives, TrainingDiverged, ValidationError
from .graphs import GRAPH_TASK, NODE_TASK, Graph, GraphDataset, dense_adjacency
from .optim import Adam
from .seeding import derive_rng, derive_seed

OBJECTIVES = ("dgi", "infograph", "graphcl", "gca", "adgcl")

# Augmentations that re-index nodes; unusable for node-level contrast where
# row k of both views must be the same node.
_NODE_BREAKING = ("node_drop", "subgraph")


@dataclass(frozen=True)
class ObjectiveConfig:
    kind: str
    tau: float = 0.5
    aug_pair: tuple[AugmentSpec, AugmentSpec] | None = None
    reg_lambda: float = 5.0  # adgcl edge-keep regularizer weight
    augmenter_hidden: int = 16
    augmenter_temperature: float = 1.0
    centrality: str = "degree"  # gca default centrality

    def __post_init__(self):
        if self.kind not in OBJECTIVES:
            raise ValidationError(f"unknown objective kind {self.kind!r}")
        if self.tau <= 0:
            raise ValidationError("temperature tau must be positive")
        if self.reg_lambda < 0:
            raise ValidationError("reg_lambda must be nonnegative")


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 100
    lr: float = 1e-3
    patience: int | None = None
    batch_size: int = 64
    seed: int = 0
    loss_log: str | Path | None = None


class Projector:
    """Two-layer ReLU MLP mapping representations to the contrast space."""

    def __init__(self, dim: int, seed: int):
        rng = derive_rng(seed, "projector-init")
        scale = np.sqrt(2.0 / (2 * dim))
        self.params = {
            "w1": Tensor(rng.normal(0, scale, (dim, dim)), requires_grad=True),
            "b1": Tensor(np.zeros((1, dim)), requires_grad=True),
            "w2": Tensor(rng.normal(0, scale, (dim, dim)), requires_grad=True),
            "b2": Tensor(np.zeros((1, dim)), requires_grad=True),
        }

    def __call__(self, Z) -> Tensor:
        hidden = ad.relu(as_tensor(Z) @ self.params["w1"] + self.params["b1"])
        return hidden @ self.params["w2"] + self.params["b2"]

    def parameters(self) -> list[Tensor]:
        return list(self.params.values())


class IdentityProjector:
    def __call__(self, Z) -> Tensor:
        return as_tensor(Z)

    def parameters(self) -> list[Tensor]:
        return []


class MlpDiscriminator:
    """Scores (patch, summary) pairs: two-layer MLP on their concatenation."""

    def __init__(self, dim: int, seed: int, hidden: int | None = None):
        hidden = hidden or dim
        rng = derive_rng(seed, "discriminator-init")
        self.params = {
            "w1": Tensor(rng.normal(0, np.sqrt(2.0 / (2 * dim + hidden)),
                                    (2 * dim, hidden)), requires_grad=True),
            "b1": Tensor(np.zeros((1, hidden)), requires_grad=True),
            "w2": Tensor(rng.normal(0, np.sqrt(2.0 / (hidden + 1)), (hidden, 1)),
                         requires_grad=True),
            "b2": Tensor(np.zeros((1, 1)), requires_grad=True),
        }

    def __call__(self, pairs) -> Tensor:
        hidden = ad.relu(as_tensor(pairs) @ self.params["w1"] + self.params["b1"])
        return hidden @ self.params["w2"] + self.params["b2"]

    def parameters(self) -> list[Tensor]:
        return list(self.params.values())


class Objective:
    """Runtime heads for one objective kind, sized to an encoder."""

    def __init__(self, config: ObjectiveConfig, dim: int, in_dim: int, seed: int):
        self.config = config
        self.tau = config.tau
        self.projector = Projector(dim, seed)
        self.bilinear: Tensor | None = None
        self.discriminator: MlpDiscriminator | None = None
        self.augmenter: LearnedAugmenter | None = None
        if config.kind == "dgi":
            rng = derive_rng(seed, "bilinear-init")
            self.bilinear = Tensor(rng.normal(0, 1.0 / np.sqrt(dim), (dim, dim)),
                                   requires_grad=True)
        elif config.kind == "infograph":
            self.discriminator = MlpDiscriminator(dim, seed)
        elif config.kind == "adgcl":
            self.augmenter = LearnedAugmenter(in_dim, config.augmenter_hidden,
                                              config.augmenter_temperature,
                                              seed=derive_seed(seed, "augmenter"))

    def encoder_side_parameters(self) -> list[Tensor]:
        params = self.projector.parameters()
        if self.bilinear is not None:
            params = params + [self.bilinear]
        if self.discriminator is not None:
            params = params + self.discriminator.parameters()
        return params


def info_nce_loss(Z1, Z2, objective: Objective) -> Tensor:
    """Mini-batch InfoNCE with temperature-scaled projected dot products.

    Row k of ``Z1`` and ``Z2`` are the two views of item k.  Each item's
    denominator runs over the other items' second views only (the positive
    pair is excluded), and the whole thing is averaged over the batch.
    """
    Z1, Z2 = as_tensor(Z1), as_tensor(Z2)
    batch = Z1.data.shape[0]
    if batch < 2:
        raise NeedNegatives("InfoNCE needs at least one negative (batch >= 2)")
    P1, P2 = objective.projector(Z1), objective.projector(Z2)
    scores = (P1 @ ad.transpose(P2)) * (1.0 / objective.tau)
    eye = np.eye(batch)
    positives = ad.tsum(scores * Tensor(eye), axis=1)
    masked = scores + Tensor(-1e30 * eye)
    negatives = ad.logsumexp(masked, axis=1)
    return -ad.tmean(positives - negatives)


def js_mi_estimate(pos_scores, neg_scores) -> Tensor:
    """Jensen-Shannon mutual information estimate from raw discriminator
    scores: ``mean(-softplus(-pos)) - mean(softplus(neg))``."""
    pos, neg = as_tensor(pos_scores), as_tensor(neg_scores)
    if pos.data.size == 0 or neg.data.size == 0:
        raise ValidationError("score vectors must be nonempty")
    return -ad.tmean(ad.softplus(-pos)) - ad.tmean(ad.softplus(neg))


def dgi_loss(H_clean, H_corrupt, s, bilinear) -> Tensor:
    """Binary cross-entropy of bilinear patch/summary scores.

    Clean patches paired with the clean summary are the positives, patches
    of the corrupted graph the negatives; averaged over all 2n pairs.
    """
    H_clean, H_corrupt, s = as_tensor(H_clean), as_tensor(H_corrupt), as_tensor(s)
    s_col = ad.transpose(s)
    pos = H_clean @ as_tensor(bilinear) @ s_col
    neg = H_corrupt @ as_tensor(bilinear) @ s_col
    n_pos, n_neg = pos.data.shape[0], neg.data.shape[0]
    total = ad.tsum(ad.softplus(-pos)) + ad.tsum(ad.softplus(neg))
    return total * (1.0 / (n_pos + n_neg))


def infograph_loss(graphs: list[Graph], encoder: EncoderModel,
                   discriminator: MlpDiscriminator, train_mode: bool = False,
                   rng: np.random.Generator | None = None) -> Tensor:
    """Negative JS mutual information between patches and graph summaries.

    For each graph in the batch, its own node (patch) representations score
    against its sum-readout summary as positives; patches of every other
    batch graph against that summary are the negatives.  Averaged over the
    batch.
    """
    if len(graphs) < 2:
        raise NeedNegatives("patch/summary contrast needs a batch of >= 2 graphs")
    patches, summaries, sizes = [], [], []
    for g in graphs:
        H = encode_nodes(encoder, dense_adjacency(g), g.features, train_mode, rng)
        patches.append(H)
        summaries.append(readout(H, "sum"))
        sizes.append(g.num_nodes)
    all_patches = ad.concat(patches, axis=0)
    total_nodes = sum(sizes)
    offsets = np.cumsum([0] + sizes)
    mi_terms = []
    for j, s_j in enumerate(summaries):
        tiled = Tensor(np.ones((total_nodes, 1))) @ s_j
        scores = discriminator(ad.concat([all_patches, tiled], axis=1))
        own = np.arange(offsets[j], offsets[j + 1])
        rest = np.concatenate([np.arange(0, offsets[j]),
                               np.arange(offsets[j + 1], total_nodes)])
        mi_terms.append(js_mi_estimate(ad.rows(scores, own), ad.rows(scores, rest)))
    total = mi_terms[0]
    for term in mi_terms[1:]:
        total = total + term
    return -total * (1.0 / len(graphs))


def _graph_embedding(encoder: EncoderModel, g: Graph, W=None, train_mode=False,
                     rng=None) -> Tensor:
    A = dense_adjacency(g) if W is None else W
    H = encode_nodes(encoder, A, g.features, train_mode, rng)
    return readout(H, encoder.config.readout)


def adgcl_step(graphs: list[Graph], encoder: EncoderModel, objective: Objective,
               enc_opt: Adam, aug_opt: Adam, step_seed: int,
               train_mode: bool = True,
               rng: np.random.Generator | None = None) -> tuple[float, float]:
    """One alternating adversarial update on a batch of graphs.

    (a) The encoder (plus projector) maximizes InfoNCE agreement between
    each anchor graph and a sampled edge-dropped view.  (b) The augmenter
    then minimizes the same agreement, regularized by ``reg_lambda`` times
    the mean dropped-edge mass so it cannot trivially delete the graph.
    Both phases draw fresh Gumbel samples.
    """
    aug = objective.augmenter

    def views(phase: str) -> tuple[Tensor, Tensor, list[Tensor]]:
        anchors, augmented, keep_weights = [], [], []
        for k, g in enumerate(graphs):
            anchors.append(_graph_embedding(encoder, g, None, train_mode, rng))
            if g.num_edges:
                p = learned_edge_drop_sample(g, aug, derive_seed(step_seed, phase, k))
                idx = np.array(g.edges)
                W = relaxed_adjacency(np.zeros((g.num_nodes, g.num_nodes)),
                                      idx[:, 0], idx[:, 1], p)
                keep_weights.append(p)
            else:
                W = np.zeros((g.num_nodes, g.num_nodes))
            augmented.append(_graph_embedding(encoder, g, W, train_mode, rng))
        return ad.concat(anchors, axis=0), ad.concat(augmented, axis=0), keep_weights

    enc_opt.zero_grad()
    aug_opt.zero_grad()
    Za, Zt, _ = views("encoder")
    enc_loss = info_nce_loss(Za, Zt, objective)
    enc_loss.backward()
    enc_opt.step()

    enc_opt.zero_grad()
    aug_opt.zero_grad()
    Za, Zt, keep_weights = views("augmenter")
    agreement = -info_nce_loss(Za, Zt, objective)
    if keep_weights:
        kept = ad.tmean(ad.concat(keep_weights, axis=0))
        aug_loss = agreement + objective.config.reg_lambda * (1.0 - kept)
    else:
        aug_loss = agreement
    aug_loss.backward()
    aug_opt.step()
    return float(enc_loss.data), float(aug_loss.data)


def default_aug_pair(kind: str, task: str, centrality: str) -> tuple[AugmentSpec, AugmentSpec]:
    if kind == "gca":
        return (AugmentSpec("adaptive_edge_drop", 0.2, centrality=centrality),
                AugmentSpec("adaptive_attr_mask", 0.2, centrality=centrality))
    if task == NODE_TASK:
        return (AugmentSpec("edge_perturb", 0.2), AugmentSpec("attr_mask", 0.2))
    return (AugmentSpec("node_drop", 0.2), AugmentSpec("attr_mask", 0.2))


def _check_kind_task(kind: str, task: str) -> None:
    node_only = {"dgi", "gca"}
    graph_only = {"infograph", "adgcl"}
    if kind in node_only and task != NODE_TASK:
        raise ValidationError(f"{kind} trains on a single-graph node task")
    if kind in graph_only and task != GRAPH_TASK:
        raise ValidationError(f"{kind} trains on a graph-classification task")


def _batches(indices: np.ndarray, batch_size: int) -> list[np.ndarray]:
    chunks = [indices[k:k + batch_size] for k in range(0, len(indices), batch_size)]
    return [c for c in chunks if len(c) >= 2]


def train_encoder(dataset: GraphDataset, objective_config: ObjectiveConfig,
                  encoder_config: EncoderConfig,
                  config: TrainConfig) -> tuple[EncoderModel, list[float]]:
    """Run the objective-specific training loop; returns the trained encoder
    and the per-epoch loss trace.

    Single-graph objectives train full-batch on the one graph; graph-level
    objectives shuffle the training graphs into mini-batches each epoch.
    Early stopping triggers after ``patience`` epochs without improvement.
    Raises :class:`TrainingDiverged` when the loss becomes non-finite.
    """
    kind = objective_config.kind
    _check_kind_task(kind, dataset.task)
    encoder = EncoderModel(encoder_config, dataset.feature_dim,
                           seed=derive_seed(config.seed, "encoder"))
    objective = Objective(objective_config, encoder.out_dim, dataset.feature_dim,
                          seed=derive_seed(config.seed, "heads"))
    opt = Adam(encoder.parameters() + objective.encoder_side_parameters(), config.lr)
    aug_opt = (Adam(objective.augmenter.parameters(), config.lr)
               if kind == "adgcl" else None)

    aug_pair = objective_config.aug_pair or default_aug_pair(
        kind, dataset.task, objective_config.centrality)
    if dataset.task == NODE_TASK and kind in ("graphcl", "gca"):
        for spec in aug_pair:
            if spec.kind in _NODE_BREAKING:
                raise ValidationError(
                    f"{spec.kind} re-indexes nodes and cannot build node-level views")

    losses: list[float] = []
    log_path = Path(config.loss_log) if config.loss_log else None
    if log_path is not None:
        log_path.parent.mkdir(parents=True, exist_ok=True)
        log_path.write_text("")
    best, bad = np.inf, 0
    train_graphs = (list(dataset.train_indices)
                    if dataset.task == GRAPH_TASK else None)

    for epoch in range(config.epochs):
        started = time.perf_counter()
        rng = derive_rng(config.seed, "epoch", epoch)
        if kind == "dgi":
            loss_value = _dgi_epoch(dataset.graph, encoder, objective, opt, rng,
                                    derive_seed(config.seed, "corrupt", epoch))
        elif kind in ("graphcl", "gca") and dataset.task == NODE_TASK:
            loss_value = _two_view_node_epoch(dataset.graph, encoder, objective,
                                              opt, aug_pair, rng,
                                              derive_seed(config.seed, "views", epoch))
        else:
            order = rng.permutation(len(train_graphs))
            batches = _batches(np.array(train_graphs, dtype=np.intp)[order],
                               config.batch_size)
            if not batches:
                raise ValidationError("no batch with >= 2 graphs; grow the dataset")
            batch_losses = []
            for b, batch_idx in enumerate(batches):
                graphs = [dataset.graphs[i] for i in batch_idx]
                if kind == "adgcl":
                    enc_loss, _ = adgcl_step(graphs, encoder, objective, opt,
                                             aug_opt,
                                             derive_seed(config.seed, "adgcl",
                                                         epoch, b),
                                             train_mode=True, rng=rng)
                    batch_losses.append(enc_loss)
                else:
                    if kind == "infograph":
                        loss = infograph_loss(graphs, encoder,
                                              objective.discriminator,
                                              train_mode=True, rng=rng)
                    else:
                        loss = _graph_batch_loss(graphs, encoder, objective,
                                                 aug_pair, rng,
                                                 derive_seed(config.seed, "views",
                                                             epoch, b))
                    opt.zero_grad()
                    loss.backward()
                    opt.step()
                    batch_losses.append(float(loss.data))
            loss_value = float(np.mean(batch_losses))

        if not np.isfinite(loss_value):
            raise TrainingDiverged(f"loss became non-finite at epoch {epoch}",
                                   epoch=epoch)
        losses.append(loss_value)
        if log_path is not None:
            wall_ms = (time.perf_counter() - started) * 1000.0
            with log_path.open("a") as fh:
                fh.write(json.dumps({"epoch": epoch, "loss": loss_value,
                                     "wall_ms": wall_ms}) + "\n")
        if loss_value < best:
            best, bad = loss_value, 0
        else:
            bad += 1
            if config.patience is not None and bad >= config.patience:
                break
    return encoder, losses


def _dgi_epoch(g: Graph, encoder, objective, opt, rng, corrupt_seed) -> float:
    A, X = dense_adjacency(g), g.features
    corrupted = augment(g, AugmentSpec("feature_shuffle", seed=corrupt_seed))
    opt.zero_grad()
    H = encode_nodes(encoder, A, X, train_mode=True, rng=rng)
    H_corrupt = encode_nodes(encoder, A, corrupted.features, train_mode=True, rng=rng)
    loss = dgi_loss(H, H_corrupt, dgi_summary(H), objective.bilinear)
    loss.backward()
    opt.step()
    return float(loss.data)


def _two_view_node_epoch(g: Graph, encoder, objective, opt, aug_pair, rng,
                         view_seed) -> float:
    g1 = augment(g, dataclasses.replace(aug_pair[0], seed=derive_seed(view_seed, 1)))
    g2 = augment(g, dataclasses.replace(aug_pair[1], seed=derive_seed(view_seed, 2)))
    opt.zero_grad()
    H1 = encode_nodes(encoder, dense_adjacency(g1), g1.features, True, rng)
    H2 = encode_nodes(encoder, dense_adjacency(g2), g2.features, True, rng)
    loss = info_nce_loss(H1, H2, objective)
    loss.backward()
    opt.step()
    return float(loss.data)


def _graph_batch_loss(graphs, encoder, objective, aug_pair, rng,
                      view_seed) -> Tensor:
    rows1, rows2 = [], []
    for k, g in enumerate(graphs):
        s1 = dataclasses.replace(aug_pair[0], seed=derive_seed(view_seed, 1, k))
        s2 = dataclasses.replace(aug_pair[1], seed=derive_seed(view_seed, 2, k))
        rows1.append(_graph_embedding(encoder, augment(g, s1), None, True, rng))
        rows2.append(_graph_embedding(encoder, augment(g, s2), None, True, rng))
    return info_nce_loss(ad.concat(rows1, axis=0), ad.concat(rows2, axis=0), objective)
