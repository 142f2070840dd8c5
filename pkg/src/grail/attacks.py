"""Evasion attacks on graph structure under a symmetric flip budget.

All attacks optimize over the set of unordered node pairs (never
self-loops) and commit at most ``delta`` flips; encoder and probe
parameters are read-only throughout.  The gradient-based attacks relax
candidate entries to [0, 1], follow the loss gradient with an
inverse-square-root step schedule, project back onto the budget, and
finally discretize by sampling.  The greedy variant flips committed
chunks at the current discrete graph instead.
"""

from __future__ import annotations

import time
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import autodiff as ad
from . import kernels as K
from .autodiff import Tensor, backward
from .encoders import EncoderModel, encode_nodes, readout, relaxed_adjacency
from .errors import BudgetInfeasible, ValidationError
from .graphs import Graph, Pair, dense_adjacency
from .probe import LinearProbe, cross_entropy
from .seeding import derive_rng

KINDS = ("random", "pgd", "prbcd", "grbcd")
LOSSES = ("neg_ce", "margin")


@dataclass(frozen=True)
class Budget:
    """Maximum number of edge flips; ``|A' - A|_0 <= 2 * delta`` by symmetry."""

    delta: int

    def __post_init__(self):
        if self.delta < 0:
            raise ValidationError("budget must be nonnegative")

    @staticmethod
    def from_fraction(fraction: float, num_edges: int) -> "Budget":
        return Budget(int(round(fraction * num_edges)))


@dataclass(frozen=True)
class AttackConfig:
    kind: str = "prbcd"
    steps: int = 125
    lr: float | None = None  # None resolves to max(1, 0.2 * delta)
    block_size: int | None = None  # None resolves to min(C, max(1024, 4 * delta))
    resample_keep_fraction: float = 0.5
    discretize_samples: int = 20
    loss: str = "neg_ce"
    seed: int = 0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValidationError(f"unknown attack kind {self.kind!r}")
        if self.steps < 1:
            raise ValidationError("steps must be >= 1")
        if self.lr is not None and self.lr < 0:
            raise ValidationError("lr must be nonnegative")
        if not 0.0 < self.resample_keep_fraction <= 1.0:
            raise ValidationError("resample_keep_fraction must be in (0, 1]")
        if self.discretize_samples < 1:
            raise ValidationError("discretize_samples must be >= 1")
        if self.loss not in LOSSES:
            raise ValidationError(f"unknown attack loss {self.loss!r}")


@dataclass
class AttackResult:
    kind: str
    delta: int
    flips: tuple[Pair, ...]
    loss_trace: list[float]
    seed: int
    wall_ms: float = 0.0
    attacked_accuracy: float | None = None
    relaxed_final: np.ndarray | None = None
    final_pairs: tuple[Pair, ...] | None = None

    def to_record(self) -> dict:
        return {
            "attack": self.kind,
            "delta": self.delta,
            "flips": [list(pair) for pair in self.flips],
            "acc_adv": self.attacked_accuracy,
            "loss_trace": self.loss_trace,
            "seed": self.seed,
        }


def pair_count(n: int) -> int:
    return n * (n - 1) // 2


def pairs_from_linear(lin: np.ndarray, n: int) -> tuple[np.ndarray, np.ndarray]:
    """Map linear indices over the strict upper triangle to (i, j) pairs.

    Enumeration is row-major: (0,1), (0,2), ..., (0,n-1), (1,2), ...
    """
    lin = np.asarray(lin, dtype=np.int64)
    b = 2 * n - 1
    i = ((b - np.sqrt(b * b - 8.0 * lin)) / 2.0).astype(np.int64)
    # One correction step each way guards against float rounding.
    offset = i * (2 * n - i - 1) // 2
    i = np.where(offset > lin, i - 1, i)
    offset = i * (2 * n - i - 1) // 2
    next_offset = (i + 1) * (2 * n - i - 2) // 2
    i = np.where(next_offset <= lin, i + 1, i)
    offset = i * (2 * n - i - 1) // 2
    j = lin - offset + i + 1
    return i, j


def linear_from_pairs(rows: np.ndarray, cols: np.ndarray, n: int) -> np.ndarray:
    rows = np.asarray(rows, dtype=np.int64)
    cols = np.asarray(cols, dtype=np.int64)
    return rows * (2 * n - rows - 1) // 2 + (cols - rows - 1)


def attack_loss(encoder: EncoderModel, probe: LinearProbe, graph: Graph, *,
                labels: Sequence[int], target_idx: np.ndarray | None = None,
                kind: str = "neg_ce", W=None) -> Tensor:
    """Attack objective, differentiable w.r.t. a relaxed adjacency ``W``.

    ``target_idx`` selects the attacked node predictions (global attack
    over all test nodes jointly); ``None`` means the graph-level readout
    prediction.  ``neg_ce`` is the negated cross-entropy over targets (the
    attack minimizes it); ``margin`` is the mean tanh margin between the
    true-class logit and the best other logit.
    """
    adjacency = dense_adjacency(graph) if W is None else W
    H = encode_nodes(encoder, adjacency, graph.features, train_mode=False)
    if target_idx is None:
        logits = readout(H, encoder.config.readout) @ probe.weight + probe.bias
        labels = np.asarray(labels, dtype=np.int64)
    else:
        logits = ad.rows(H, np.asarray(target_idx, dtype=np.intp)) @ probe.weight \
            + probe.bias
        labels = np.asarray(labels, dtype=np.int64)[np.asarray(target_idx)]
    if kind == "neg_ce":
        return -cross_entropy(logits, labels)
    if kind == "margin":
        k = logits.data.shape[1]
        one_hot = np.zeros((len(labels), k))
        one_hot[np.arange(len(labels)), labels] = 1.0
        true_logit = ad.tsum(logits * Tensor(one_hot), axis=1)
        best_other = ad.amax(logits + Tensor(-1e30 * one_hot), axis=1)
        return ad.tmean(ad.tanh(true_logit - best_other))
    raise ValidationError(f"unknown attack loss {kind!r}")


def project_budget(p: np.ndarray, delta: int) -> np.ndarray:
    """Projection onto ``{p in [0,1]^E : sum(p) <= delta}`` (see kernels)."""
    return K.project_budget(np.asarray(p, dtype=np.float64), float(delta))


def random_flip_attack(g: Graph, budget: Budget, seed: int) -> AttackResult:
    """Toggle exactly ``delta`` distinct uniformly chosen node pairs."""
    started = time.perf_counter()
    total = pair_count(g.num_nodes)
    if budget.delta > total:
        raise BudgetInfeasible(f"budget {budget.delta} exceeds {total} candidate pairs")
    rng = derive_rng(seed, "random-flip")
    lin = np.sort(rng.choice(total, size=budget.delta, replace=False))
    rows, cols = pairs_from_linear(lin, g.num_nodes)
    flips = tuple((int(i), int(j)) for i, j in zip(rows, cols))
    return AttackResult(kind="random", delta=budget.delta, flips=flips,
                        loss_trace=[], seed=seed,
                        wall_ms=(time.perf_counter() - started) * 1e3)


def chunk_sizes(delta: int, steps: int) -> list[int]:
    """Split a budget into near-equal greedy chunks, remainder first."""
    return [delta // steps + (1 if s < delta % steps else 0) for s in range(steps)]


def _resolve_lr(config: AttackConfig, delta: int) -> float:
    return config.lr if config.lr is not None else max(1.0, 0.2 * delta)


def _resolve_block_size(config: AttackConfig, delta: int, total: int) -> int:
    if config.block_size is not None:
        return min(config.block_size, total)
    return min(total, max(1024, 4 * delta))


def _sample_fresh(rng, total: int, need: int, excluded: np.ndarray) -> np.ndarray:
    """Uniform draw of ``need`` distinct linear indices outside ``excluded``."""
    chosen: list[int] = []
    seen = set(int(x) for x in excluded)
    while len(chosen) < need:
        draw = rng.integers(0, total, size=max(2 * (need - len(chosen)), 16))
        for value in draw:
            value = int(value)
            if value not in seen:
                seen.add(value)
                chosen.append(value)
                if len(chosen) == need:
                    break
    return np.array(chosen, dtype=np.int64)


def _discretize(g: Graph, encoder, probe, labels, target_idx, config,
                A: np.ndarray, rows: np.ndarray, cols: np.ndarray,
                p: np.ndarray, delta: int) -> tuple[tuple[Pair, ...], float]:
    """Pick the best feasible binary flip set supported by the relaxed weights.

    Evaluates the top-``delta`` heuristic (restricted to positive weights)
    plus ``discretize_samples`` Bernoulli draws, exactly, and returns the
    flip set with the lowest attack loss.
    """
    rng = derive_rng(config.seed, "discretize")

    def exact_loss(mask: np.ndarray) -> float:
        W = K.assemble_relaxed(A, rows, cols, mask.astype(np.float64))
        value = attack_loss(encoder, probe, g, labels=labels,
                            target_idx=target_idx, kind=config.loss, W=W)
        return float(value.data)

    order = np.argsort(-p, kind="stable")
    top = np.zeros(len(p))
    chosen = order[:delta]
    top[chosen[p[chosen] > 0.0]] = 1.0
    best_mask, best_loss = top, exact_loss(top)
    for _ in range(config.discretize_samples):
        sample = (rng.random(len(p)) < p).astype(np.float64)
        if sample.sum() > delta:
            continue
        value = exact_loss(sample)
        if value < best_loss:
            best_mask, best_loss = sample, value
    idx = np.flatnonzero(best_mask)
    flips = tuple((int(rows[e]), int(cols[e])) for e in idx)
    return flips, best_loss


def _relaxed_descent(g: Graph, encoder, probe, budget: Budget,
                     config: AttackConfig, labels, target_idx,
                     full_block: bool) -> AttackResult:
    started = time.perf_counter()
    n = g.num_nodes
    total = pair_count(n)
    delta = budget.delta
    if delta > total:
        raise BudgetInfeasible(f"budget {delta} exceeds {total} candidate pairs")
    A = dense_adjacency(g)
    lr = _resolve_lr(config, delta)

    rng_block = derive_rng(config.seed, "block")
    if full_block:
        block = np.arange(total, dtype=np.int64)
    else:
        size = _resolve_block_size(config, delta, total)
        if size < delta:
            raise BudgetInfeasible(f"block size {size} cannot hold {delta} flips")
        if size >= total:
            block = np.arange(total, dtype=np.int64)
        else:
            block = np.sort(rng_block.choice(total, size=size, replace=False))
    rows, cols = pairs_from_linear(block, n)
    p = np.zeros(len(block))
    covers_all = len(block) == total

    trace: list[float] = []
    for step in range(1, config.steps + 1):
        p_t = Tensor(p, requires_grad=True)
        W = relaxed_adjacency(A, rows, cols, p_t)
        loss = attack_loss(encoder, probe, g, labels=labels,
                           target_idx=target_idx, kind=config.loss, W=W)
        backward(loss)
        trace.append(float(loss.data))
        p = p - (lr / np.sqrt(step)) * p_t.grad
        p = K.project_budget(p, float(delta))
        # Survival-of-the-fittest block resampling between gradient steps.
        # A block covering every candidate pair is the whole coordinate
        # space, so there is nothing to resample and the trajectory
        # coincides with plain projected gradient descent.
        if not covers_all and step < config.steps:
            keep = int(round(config.resample_keep_fraction * len(block)))
            order = np.argsort(-p, kind="stable")[:keep]
            kept_ids, kept_w = block[order], p[order]
            fresh = _sample_fresh(rng_block, total, len(block) - keep, kept_ids)
            merged = np.concatenate([kept_ids, fresh])
            weights = np.concatenate([kept_w, np.zeros(len(fresh))])
            sorter = np.argsort(merged)
            block, p = merged[sorter], weights[sorter]
            rows, cols = pairs_from_linear(block, n)

    flips, final_loss = _discretize(g, encoder, probe, labels, target_idx,
                                    config, A, rows, cols, p, delta)
    trace.append(final_loss)
    return AttackResult(kind=config.kind, delta=delta, flips=flips,
                        loss_trace=trace, seed=config.seed,
                        wall_ms=(time.perf_counter() - started) * 1e3,
                        relaxed_final=p,
                        final_pairs=tuple((int(i), int(j))
                                          for i, j in zip(rows, cols)))


def pgd_attack(g: Graph, encoder, probe, budget: Budget, config: AttackConfig,
               *, labels, target_idx=None) -> AttackResult:
    """Projected gradient descent over all candidate pairs at once."""
    return _relaxed_descent(g, encoder, probe, budget, config, labels,
                            target_idx, full_block=True)


def prbcd_attack(g: Graph, encoder, probe, budget: Budget, config: AttackConfig,
                 *, labels, target_idx=None) -> AttackResult:
    """Projected descent restricted to a resampled random coordinate block."""
    return _relaxed_descent(g, encoder, probe, budget, config, labels,
                            target_idx, full_block=False)


def grbcd_attack(g: Graph, encoder, probe, budget: Budget, config: AttackConfig,
                 *, labels, target_idx=None) -> AttackResult:
    """Greedy block descent: commit near-equal chunks of flips per step.

    Each step samples a fresh block (excluding already-committed pairs),
    takes the gradient at the current discrete graph, and flips the chunk
    entries with the most loss-decreasing gradient.  A chunk is skipped
    if re-evaluation shows it would increase the attack loss, so the
    discrete loss trace is non-increasing and flips are never reverted.
    """
    started = time.perf_counter()
    n = g.num_nodes
    total = pair_count(n)
    delta = budget.delta
    if delta > total:
        raise BudgetInfeasible(f"budget {delta} exceeds {total} candidate pairs")
    chunks = chunk_sizes(delta, config.steps)
    A = dense_adjacency(g)
    committed: list[Pair] = []
    committed_lin = np.zeros(0, dtype=np.int64)
    trace: list[float] = []

    def current_loss(W: np.ndarray) -> float:
        value = attack_loss(encoder, probe, g, labels=labels,
                            target_idx=target_idx, kind=config.loss, W=W)
        return float(value.data)

    for step, chunk in enumerate(chunks):
        if chunk == 0:
            continue
        rng = derive_rng(config.seed, "block", step)
        size = min(_resolve_block_size(config, delta, total),
                   total - len(committed_lin))
        if size == 0:
            break
        block = np.sort(_sample_fresh(rng, total, size, committed_lin))
        rows, cols = pairs_from_linear(block, n)
        p_t = Tensor(np.zeros(len(block)), requires_grad=True)
        W = relaxed_adjacency(A, rows, cols, p_t)
        loss = attack_loss(encoder, probe, g, labels=labels,
                           target_idx=target_idx, kind=config.loss, W=W)
        backward(loss)
        loss_before = float(loss.data)
        grad = p_t.grad
        order = np.argsort(grad, kind="stable")
        chosen = order[grad[order] < 0.0][:chunk]
        if chosen.size == 0:
            trace.append(loss_before)
            continue
        mask = np.zeros(len(block))
        mask[chosen] = 1.0
        A_new = K.assemble_relaxed(A, rows, cols, mask)
        loss_after = current_loss(A_new)
        if loss_after <= loss_before:
            A = A_new
            new_pairs = [(int(rows[e]), int(cols[e])) for e in chosen]
            committed.extend(new_pairs)
            committed_lin = np.concatenate(
                [committed_lin, block[chosen]]).astype(np.int64)
            trace.append(loss_after)
        else:
            trace.append(loss_before)

    return AttackResult(kind="grbcd", delta=delta, flips=tuple(sorted(committed)),
                        loss_trace=trace, seed=config.seed,
                        wall_ms=(time.perf_counter() - started) * 1e3)


def run_attack(g: Graph, encoder, probe, budget: Budget, config: AttackConfig,
               *, labels, target_idx=None) -> AttackResult:
    """Dispatch one attack by its configured kind."""
    if config.kind == "random":
        return random_flip_attack(g, budget, config.seed)
    if config.kind == "pgd":
        return pgd_attack(g, encoder, probe, budget, config,
                          labels=labels, target_idx=target_idx)
    if config.kind == "prbcd":
        return prbcd_attack(g, encoder, probe, budget, config,
                            labels=labels, target_idx=target_idx)
    if config.kind == "grbcd":
        return grbcd_attack(g, encoder, probe, budget, config,
                            labels=labels, target_idx=target_idx)
    raise ValidationError(f"unknown attack kind {config.kind!r}")
