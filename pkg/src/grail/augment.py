"""Graph augmentation and corruption operators for contrastive training.

Covers the four stochastic graph-level augmentations, feature-row
shuffling as the corruption for summary-contrast training, adaptive
centrality-weighted variants, and a learnable Gumbel edge-drop augmenter.
All stochastic operators are deterministic functions of (graph, spec,
seed).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .encoders import normalize_adjacency
from .errors import CentralityDiverged, DegenerateAugmentation, ValidationError
from .graphs import Graph, dense_adjacency
from .seeding import derive_rng

KINDS = ("node_drop", "edge_perturb", "attr_mask", "subgraph", "feature_shuffle",
         "adaptive_edge_drop", "adaptive_attr_mask", "learned_edge_drop")
CENTRALITIES = ("degree", "eigenvector", "pagerank")

_LOG_FLOOR = 1e-12


@dataclass(frozen=True)
class AugmentSpec:
    kind: str
    strength: float = 0.2
    centrality: str = "degree"  # adaptive kinds only
    rho_cut: float = 0.7  # cap for adaptive per-edge/per-dim probabilities
    seed: int = 0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValidationError(f"unknown augmentation kind {self.kind!r}")
        if not 0.0 <= self.strength <= 1.0:
            raise ValidationError("strength must be in [0, 1]")
        if self.centrality not in CENTRALITIES:
            raise ValidationError(f"unknown centrality {self.centrality!r}")
        if self.kind.startswith("adaptive") and not self.strength <= self.rho_cut <= 1.0:
            raise ValidationError("need strength <= rho_cut <= 1")


def _connected_components(g: Graph) -> list[np.ndarray]:
    neighbors: list[list[int]] = [[] for _ in range(g.num_nodes)]
    for i, j in g.edges:
        neighbors[i].append(j)
        neighbors[j].append(i)
    seen = np.zeros(g.num_nodes, dtype=bool)
    components = []
    for start in range(g.num_nodes):
        if seen[start]:
            continue
        stack, members = [start], []
        seen[start] = True
        while stack:
            u = stack.pop()
            members.append(u)
            for v in neighbors[u]:
                if not seen[v]:
                    seen[v] = True
                    stack.append(v)
        components.append(np.array(sorted(members)))
    return components


def centrality_scores(g: Graph, kind: str) -> np.ndarray:
    """Per-node centrality: degree counts, principal eigenvector (per
    connected component, power iteration), or PageRank (damping 0.85)."""
    A = dense_adjacency(g)
    if kind == "degree":
        return A.sum(axis=1)
    if kind == "eigenvector":
        scores = np.zeros(g.num_nodes)
        for comp in _connected_components(g):
            sub = A[np.ix_(comp, comp)]
            if sub.sum() == 0.0:
                scores[comp] = 1.0 / np.sqrt(len(comp))
                continue
            # Iterating on A + I avoids sign oscillation on bipartite
            # components while keeping the same principal eigenvector.
            v = np.full(len(comp), 1.0 / np.sqrt(len(comp)))
            shifted = sub + np.eye(len(comp))
            for _ in range(1000):
                nxt = shifted @ v
                nxt /= np.linalg.norm(nxt)
                if np.abs(nxt - v).max() <= 1e-8:
                    v = nxt
                    break
                v = nxt
            else:
                raise CentralityDiverged("power iteration exceeded 1000 iterations")
            if v.sum() < 0:
                v = -v
            scores[comp] = np.abs(v)
        return scores
    if kind == "pagerank":
        n = g.num_nodes
        deg = A.sum(axis=1)
        out = np.where(deg > 0, deg, 1.0)
        T = A / out[:, None]
        dangling = deg == 0
        r = np.full(n, 1.0 / n)
        for _ in range(10000):
            spread = 0.85 * (T.T @ r + r[dangling].sum() / n)
            nxt = spread + 0.15 / n
            if np.abs(nxt - r).sum() <= 1e-10:
                return nxt
            r = nxt
        raise CentralityDiverged("pagerank exceeded 10000 iterations")
    raise ValidationError(f"unknown centrality {kind!r}")


def _gap_probabilities(s: np.ndarray, rho_base: float, rho_cut: float) -> np.ndarray:
    """Map importance scores to drop probabilities via the normalized gap.

    Low-importance items get probabilities near ``rho_base`` (capped at
    ``rho_cut``); the most important item gets 0.  Degenerate score
    spreads fall back to a uniform ``rho_base``.
    """
    s_max, s_mean = s.max(), s.mean()
    if s_max <= s_mean:
        return np.full(s.shape, rho_base)
    return np.minimum((s_max - s) / (s_max - s_mean) * rho_base, rho_cut)


def adaptive_edge_drop_probs(g: Graph, kind: str, rho_base: float,
                             rho_cut: float) -> np.ndarray:
    """Per-edge drop probabilities from endpoint centralities.

    Edge importance is the mean log-centrality of its endpoints
    (centralities floored at 1e-12); unimportant edges are the most likely
    to be dropped.
    """
    if not rho_base <= rho_cut <= 1.0:
        raise ValidationError("need rho_base <= rho_cut <= 1")
    if not g.edges:
        return np.zeros(0)
    cent = np.maximum(centrality_scores(g, kind), _LOG_FLOOR)
    logc = np.log(cent)
    idx = np.array(g.edges)
    s = 0.5 * (logc[idx[:, 0]] + logc[idx[:, 1]])
    return _gap_probabilities(s, rho_base, rho_cut)


def adaptive_attr_mask_probs(g: Graph, kind: str, rho_base: float,
                             rho_cut: float) -> np.ndarray:
    """Per-dimension mask probabilities; dimension importance is the
    centrality-weighted absolute feature mass, mapped like the edge rule."""
    cent = np.maximum(centrality_scores(g, kind), _LOG_FLOOR)
    importance = np.abs(g.features).T @ cent
    s = np.log(np.maximum(importance, _LOG_FLOOR))
    return _gap_probabilities(s, rho_base, rho_cut)


def _induced_subgraph(g: Graph, keep: np.ndarray) -> Graph:
    if keep.size == 0:
        raise DegenerateAugmentation("augmentation removed every node")
    remap = {int(old): new for new, old in enumerate(keep)}
    kept = set(int(v) for v in keep)
    edges = tuple(sorted((remap[i], remap[j]) for i, j in g.edges
                         if i in kept and j in kept))
    return Graph(
        num_nodes=len(keep),
        edges=edges,
        features=g.features[keep],
        node_labels=None if g.node_labels is None else g.node_labels[keep],
        graph_label=g.graph_label,
        train_mask=None if g.train_mask is None else g.train_mask[keep],
        test_mask=None if g.test_mask is None else g.test_mask[keep],
    )


def _sample_non_edges(g: Graph, count: int, rng) -> list[tuple[int, int]]:
    n = g.num_nodes
    pool_size = n * (n - 1) // 2 - g.num_edges
    count = min(count, pool_size)
    if count == 0:
        return []
    chosen: set[tuple[int, int]] = set()
    attempts = 0
    while len(chosen) < count and attempts < 100 * count + 1000:
        i, j = int(rng.integers(n)), int(rng.integers(n))
        attempts += 1
        if i == j:
            continue
        pair = (i, j) if i < j else (j, i)
        if pair in g.edge_set or pair in chosen:
            continue
        chosen.add(pair)
    if len(chosen) < count:
        # Dense graph: fall back to enumerating the complement.
        complement = [(i, j) for i in range(n) for j in range(i + 1, n)
                      if (i, j) not in g.edge_set and (i, j) not in chosen]
        extra = rng.choice(len(complement), size=count - len(chosen), replace=False)
        chosen.update(complement[k] for k in extra)
    return sorted(chosen)


def _random_walk_keep(g: Graph, keep_count: int, rng) -> np.ndarray:
    neighbors: list[list[int]] = [[] for _ in range(g.num_nodes)]
    for i, j in g.edges:
        neighbors[i].append(j)
        neighbors[j].append(i)
    visited: list[int] = []
    seen = set()
    current = int(rng.integers(g.num_nodes))
    steps = 0
    while len(visited) < keep_count and steps < 50 * g.num_nodes:
        steps += 1
        if current not in seen:
            seen.add(current)
            visited.append(current)
        hood = neighbors[current]
        if not hood:
            current = int(rng.integers(g.num_nodes))  # restart
        else:
            current = hood[int(rng.integers(len(hood)))]
    if len(visited) < keep_count:
        rest = [v for v in range(g.num_nodes) if v not in seen]
        order = rng.permutation(len(rest))
        visited.extend(rest[k] for k in order[: keep_count - len(visited)])
    return np.array(sorted(visited))


def augment(g: Graph, spec: AugmentSpec) -> Graph:
    """Sample one augmented view of ``g`` (deterministic per spec.seed)."""
    rng = derive_rng(spec.seed, "augment", spec.kind)
    rho = spec.strength

    if spec.kind == "node_drop":
        drop = int(np.floor(rho * g.num_nodes))
        if drop >= g.num_nodes:
            raise DegenerateAugmentation("node_drop would remove every node")
        dropped = rng.choice(g.num_nodes, size=drop, replace=False)
        keep = np.setdiff1d(np.arange(g.num_nodes), dropped)
        return _induced_subgraph(g, keep)

    if spec.kind == "subgraph":
        keep_count = int(np.ceil((1.0 - rho) * g.num_nodes))
        if keep_count == 0:
            raise DegenerateAugmentation("subgraph would keep zero nodes")
        return _induced_subgraph(g, _random_walk_keep(g, keep_count, rng))

    if spec.kind == "edge_perturb":
        removed_mask = rng.random(g.num_edges) < rho
        survivors = [e for e, gone in zip(g.edges, removed_mask) if not gone]
        added = _sample_non_edges(g, int(removed_mask.sum()), rng)
        return g.replace_edges(tuple(sorted(set(survivors) | set(added))))

    if spec.kind == "attr_mask":
        mask = rng.random(g.num_features) < rho
        feats = np.array(g.features)
        feats[:, mask] = 0.0
        return Graph(g.num_nodes, g.edges, feats, g.node_labels, g.graph_label,
                     g.train_mask, g.test_mask)

    if spec.kind == "feature_shuffle":
        perm = rng.permutation(g.num_nodes)
        return Graph(g.num_nodes, g.edges, g.features[perm], g.node_labels,
                     g.graph_label, g.train_mask, g.test_mask)

    if spec.kind == "adaptive_edge_drop":
        probs = adaptive_edge_drop_probs(g, spec.centrality, rho, spec.rho_cut)
        gone = rng.random(g.num_edges) < probs
        return g.replace_edges(tuple(e for e, dead in zip(g.edges, gone) if not dead))

    if spec.kind == "adaptive_attr_mask":
        probs = adaptive_attr_mask_probs(g, spec.centrality, rho, spec.rho_cut)
        mask = rng.random(g.num_features) < probs
        feats = np.array(g.features)
        feats[:, mask] = 0.0
        return Graph(g.num_nodes, g.edges, feats, g.node_labels, g.graph_label,
                     g.train_mask, g.test_mask)

    raise ValidationError(
        f"{spec.kind!r} needs a LearnedAugmenter; use learned_edge_drop_sample")


class LearnedAugmenter:
    """GNN that scores each edge with a keep logit, plus a Gumbel temperature.

    One normalized convolution produces node embeddings; a two-layer MLP on
    concatenated endpoint embeddings yields the per-edge logit.
    """

    def __init__(self, in_dim: int, hidden_dim: int = 16,
                 temperature: float = 1.0, seed: int = 0):
        if temperature <= 0:
            raise ValidationError("temperature must be positive")
        self.temperature = temperature
        rng = derive_rng(seed, "augmenter-init")
        scale = np.sqrt(2.0 / (in_dim + hidden_dim))
        self.params: dict[str, Tensor] = {
            "conv.weight": Tensor(rng.normal(0, scale, (in_dim, hidden_dim)),
                                  requires_grad=True),
            "conv.bias": Tensor(np.zeros((1, hidden_dim)), requires_grad=True),
            "head0.weight": Tensor(rng.normal(0, np.sqrt(2.0 / (3 * hidden_dim)),
                                              (2 * hidden_dim, hidden_dim)),
                                   requires_grad=True),
            "head0.bias": Tensor(np.zeros((1, hidden_dim)), requires_grad=True),
            "head1.weight": Tensor(rng.normal(0, np.sqrt(2.0 / (hidden_dim + 1)),
                                              (hidden_dim, 1)), requires_grad=True),
            "head1.bias": Tensor(np.zeros((1, 1)), requires_grad=True),
        }

    def parameters(self) -> list[Tensor]:
        return list(self.params.values())

    def edge_logits(self, g: Graph) -> Tensor:
        """Keep logits for every edge of ``g`` in canonical edge order, (m, 1)."""
        norm = normalize_adjacency(dense_adjacency(g))
        Z = ad.relu(norm @ Tensor(g.features) @ self.params["conv.weight"]
                    + self.params["conv.bias"])
        idx = np.array(g.edges)
        pair = ad.concat([ad.rows(Z, idx[:, 0]), ad.rows(Z, idx[:, 1])], axis=1)
        hidden = ad.relu(pair @ self.params["head0.weight"] + self.params["head0.bias"])
        return hidden @ self.params["head1.weight"] + self.params["head1.bias"]


def learned_edge_drop_sample(g: Graph, aug: LearnedAugmenter, seed: int) -> Tensor:
    """Relaxed per-edge keep weights in [0, 1], shape (m, 1).

    Gumbel-style reparametrization: with logistic noise ``log u - log(1-u)``
    added to the logits, weights are ``sigmoid((logit + noise) / T)`` and
    stay differentiable w.r.t. the augmenter parameters.
    """
    logits = aug.edge_logits(g)
    rng = derive_rng(seed, "gumbel")
    u = np.clip(rng.random(logits.data.shape), 1e-12, 1.0 - 1e-12)
    noise = Tensor(np.log(u) - np.log1p(-u))
    return ad.sigmoid((logits + noise) / aug.temperature)
