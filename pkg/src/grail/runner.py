"""Orchestration of the three-step robustness evaluation protocol.

For every seed: train the self-supervised encoder (step 1, or a
supervised baseline end-to-end), fit the frozen-encoder linear probe
(step 2), measure clean accuracy, then run every configured structure
attack and measure attacked accuracy (step 3).  Results append to a
JSONL record file keyed by (model, dataset, seed, attack), which makes
interrupted runs resumable: completed keys are skipped on rerun.
"""

from __future__ import annotations

import dataclasses
import json
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .attacks import AttackConfig, Budget, run_attack
from .augment import AugmentSpec
from .contrastive import ObjectiveConfig, TrainConfig, train_encoder
from .data import (SbmSpec, generate_graph_classification_dataset,
                   generate_sbm_node_dataset, load_dataset)
from .encoders import EncoderConfig, save_encoder
from .errors import ValidationError
from .graphs import NODE_TASK, GraphDataset, apply_perturbation
from .metrics import CLEAN, EvalRecord, drops_by_dataset, model_delta, summarize
from .probe import ProbeConfig, accuracy, save_probe, train_probe, train_supervised
from .seeding import derive_seed

SUPERVISED_KINDS = ("gcn", "gin")
CONTRASTIVE_KINDS = ("dgi", "infograph", "graphcl", "gca", "adgcl")

# Per-(model kind, task) training defaults, mirroring the documented
# reference settings at desk scale; everything is overridable from the
# experiment config.
MODEL_DEFAULTS: dict[tuple[str, str], dict] = {
    ("gcn", "node"): dict(lr=1e-2, epochs=200, patience=10, encoder=dict(
        kind="gcn", num_layers=2, hidden_dim=16, dropout=0.5)),
    ("gcn", "graph"): dict(lr=5e-3, epochs=50, patience=None, encoder=dict(
        kind="gcn", num_layers=4, hidden_dim=32)),
    ("gin", "node"): dict(lr=1e-2, epochs=200, patience=10, encoder=dict(
        kind="gin", num_layers=2, hidden_dim=16)),
    ("gin", "graph"): dict(lr=1e-4, epochs=20, patience=None, encoder=dict(
        kind="gin", num_layers=4, hidden_dim=32)),
    ("dgi", "node"): dict(lr=1e-3, epochs=1000, patience=20, encoder=dict(
        kind="gcn", num_layers=1, hidden_dim=512, activation="prelu")),
    ("graphcl", "node"): dict(lr=1e-3, epochs=1000, patience=20, encoder=dict(
        kind="gcn", num_layers=1, hidden_dim=512)),
    ("graphcl", "graph"): dict(lr=1e-4, epochs=20, patience=None, encoder=dict(
        kind="gin", num_layers=4, hidden_dim=32)),
    ("gca", "node"): dict(lr=1e-3, epochs=500, patience=20, encoder=dict(
        kind="gcn", num_layers=2, hidden_dim=256)),
    ("infograph", "graph"): dict(lr=1e-3, epochs=100, patience=None, encoder=dict(
        kind="gin", num_layers=8, hidden_dim=256, readout="sum")),
    ("adgcl", "graph"): dict(lr=1e-2, epochs=150, patience=20, encoder=dict(
        kind="gin", num_layers=5, hidden_dim=32, dropout=0.5)),
}


@dataclass(frozen=True)
class ModelSpec:
    model_id: str
    kind: str
    encoder: EncoderConfig
    objective: ObjectiveConfig | None
    epochs: int
    lr: float
    patience: int | None
    batch_size: int = 64
    probe_epochs: int = 300
    probe_lr: float = 1e-2


@dataclass(frozen=True)
class ExperimentConfig:
    dataset: dict
    dataset_id: str
    model: ModelSpec
    attacks: tuple[AttackConfig, ...]
    output_dir: Path
    budget_fraction: float = 0.05
    num_seeds: int = 15
    base_seed: int = 0
    save_checkpoints: bool = False

    def __post_init__(self):
        if self.num_seeds < 1:
            raise ValidationError("num_seeds must be >= 1")
        if not 0.0 < self.budget_fraction < 1.0:
            raise ValidationError("budget_fraction must be in (0, 1)")
        if not self.attacks:
            raise ValidationError("configure at least one attack")


def build_model_spec(raw: dict, task: str) -> ModelSpec:
    kind = raw.get("kind")
    if kind not in SUPERVISED_KINDS + CONTRASTIVE_KINDS:
        raise ValidationError(f"unknown model kind {kind!r}")
    defaults = MODEL_DEFAULTS.get((kind, task), {})
    enc_fields = dict(defaults.get("encoder", {}))
    enc_fields.update(raw.get("encoder", {}))
    encoder = EncoderConfig(**enc_fields)
    objective = None
    if kind in CONTRASTIVE_KINDS:
        obj_fields = dict(raw.get("objective", {}))
        obj_fields.setdefault("kind", kind)
        if obj_fields.get("aug_pair") is not None:
            obj_fields["aug_pair"] = tuple(
                spec if isinstance(spec, AugmentSpec) else AugmentSpec(**spec)
                for spec in obj_fields["aug_pair"])
        objective = ObjectiveConfig(**obj_fields)
    train = raw.get("train", {})
    return ModelSpec(
        model_id=raw.get("id", kind),
        kind=kind,
        encoder=encoder,
        objective=objective,
        epochs=train.get("epochs", defaults.get("epochs", 200)),
        lr=train.get("lr", defaults.get("lr", 1e-3)),
        patience=train.get("patience", defaults.get("patience")),
        batch_size=train.get("batch_size", 64),
        probe_epochs=train.get("probe_epochs", 300),
        probe_lr=train.get("probe_lr", 1e-2),
    )


def resolve_dataset(spec: dict) -> GraphDataset:
    if "path" in spec:
        return load_dataset(spec["path"])
    if "sbm_node" in spec:
        return generate_sbm_node_dataset(SbmSpec(**spec["sbm_node"]))
    if "sbm_graphs" in spec:
        raw = dict(spec["sbm_graphs"])
        return generate_graph_classification_dataset(
            num_graphs=raw.pop("num_graphs"),
            spec_a=SbmSpec(**raw.pop("spec_a")),
            spec_b=SbmSpec(**raw.pop("spec_b")),
            seed=raw.pop("seed", 0), **raw)
    raise ValidationError("dataset spec needs 'path', 'sbm_node' or 'sbm_graphs'")


def load_experiment_config(doc: dict, base_dir: Path | None = None) -> ExperimentConfig:
    """Build a validated config from a parsed experiment JSON document."""
    base_dir = base_dir or Path.cwd()
    dataset_spec = doc.get("dataset")
    if not isinstance(dataset_spec, dict):
        raise ValidationError("config needs a 'dataset' object")
    if "path" in dataset_spec:
        dataset_spec = dict(dataset_spec)
        dataset_spec["path"] = str((base_dir / dataset_spec["path"]).resolve())
    task = NODE_TASK if ("sbm_node" in dataset_spec or
                         _peek_task(dataset_spec) == NODE_TASK) else "graph"
    model = build_model_spec(doc.get("model", {}), task)
    attacks = tuple(AttackConfig(**raw) for raw in doc.get("attacks", []))
    output_dir = base_dir / doc.get("output_dir", "grail-out")
    return ExperimentConfig(
        dataset=dataset_spec,
        dataset_id=doc.get("dataset_id", "dataset"),
        model=model,
        attacks=attacks,
        output_dir=output_dir,
        budget_fraction=doc.get("budget_fraction", 0.05),
        num_seeds=doc.get("num_seeds", 15),
        base_seed=doc.get("base_seed", 0),
        save_checkpoints=doc.get("save_checkpoints", False),
    )


def _peek_task(dataset_spec: dict) -> str:
    if "sbm_node" in dataset_spec:
        return NODE_TASK
    if "sbm_graphs" in dataset_spec:
        return "graph"
    head = json.loads(Path(dataset_spec["path"]).read_text())
    return head.get("task", "graph")


def train_model(dataset: GraphDataset, model: ModelSpec, seed: int):
    """Steps 1+2 for one seed: returns (encoder, probe, loss trace)."""
    if model.kind in SUPERVISED_KINDS:
        encoder, head = train_supervised(
            dataset, model.encoder, epochs=model.epochs, lr=model.lr,
            seed=derive_seed(seed, "supervised"), patience=model.patience,
            batch_size=model.batch_size)
        return encoder, head, []
    encoder, losses = train_encoder(
        dataset, model.objective, model.encoder,
        TrainConfig(epochs=model.epochs, lr=model.lr, patience=model.patience,
                    batch_size=model.batch_size, seed=derive_seed(seed, "encoder")))
    probe = train_probe(encoder, dataset,
                        ProbeConfig(epochs=model.probe_epochs, lr=model.probe_lr,
                                    seed=derive_seed(seed, "probe")))
    return encoder, probe, losses


def _attack_once(dataset: GraphDataset, encoder, probe, attack: AttackConfig,
                 budget_fraction: float, attack_seed: int) -> tuple[float, int]:
    """Run one attack over the dataset; returns (acc_adv, total budget)."""
    if dataset.task == NODE_TASK:
        g = dataset.graph
        budget = Budget.from_fraction(budget_fraction, g.num_edges)
        config = dataclasses.replace(attack, seed=attack_seed)
        result = run_attack(g, encoder, probe, budget, config,
                            labels=np.asarray(g.node_labels),
                            target_idx=dataset.test_indices)
        perturbed = apply_perturbation(g, result.flips)
        acc_adv = accuracy(probe, encoder, dataset, "test", graph_override=perturbed)
        return acc_adv, budget.delta
    overrides = {}
    total = 0
    for graph_idx in dataset.test_indices:
        g = dataset.graphs[int(graph_idx)]
        budget = Budget.from_fraction(budget_fraction, g.num_edges)
        total += budget.delta
        config = dataclasses.replace(
            attack, seed=derive_seed(attack_seed, int(graph_idx)))
        result = run_attack(g, encoder, probe, budget, config,
                            labels=[g.graph_label], target_idx=None)
        overrides[int(graph_idx)] = apply_perturbation(g, result.flips)
    acc_adv = accuracy(probe, encoder, dataset, "test", graph_override=overrides)
    return acc_adv, total


def run_seed(config: ExperimentConfig, seed_index: int,
             missing: set[str]) -> list[EvalRecord]:
    """All records for one seed, restricted to the still-missing attack ids."""
    dataset = resolve_dataset(config.dataset)
    model = config.model
    started = time.perf_counter()
    encoder, probe, _ = train_model(dataset, model,
                                    derive_seed(config.base_seed, seed_index))
    train_ms = (time.perf_counter() - started) * 1e3
    acc_clean = accuracy(probe, encoder, dataset, "test")

    if config.save_checkpoints:
        ckpt_dir = config.output_dir / "checkpoints"
        ckpt_dir.mkdir(parents=True, exist_ok=True)
        save_encoder(encoder, ckpt_dir / f"{model.model_id}-seed{seed_index}-encoder")
        save_probe(probe, ckpt_dir / f"{model.model_id}-seed{seed_index}-probe")

    records = []
    if CLEAN in missing:
        records.append(EvalRecord(model.model_id, config.dataset_id, CLEAN,
                                  seed_index, acc_clean, acc_clean, 0, train_ms))
    for attack in config.attacks:
        if attack.kind not in missing:
            continue
        attack_seed = derive_seed(config.base_seed, seed_index, "attack", attack.kind)
        started = time.perf_counter()
        acc_adv, delta = _attack_once(dataset, encoder, probe, attack,
                                      config.budget_fraction, attack_seed)
        wall_ms = (time.perf_counter() - started) * 1e3
        records.append(EvalRecord(model.model_id, config.dataset_id, attack.kind,
                                  seed_index, acc_clean, acc_adv, delta, wall_ms))
    return records


def _record_key(record: EvalRecord) -> tuple:
    return (record.model_id, record.dataset_id, record.seed, record.attack_id)


def read_records(path: str | Path) -> list[EvalRecord]:
    path = Path(path)
    if not path.exists():
        return []
    records = []
    for line in path.read_text().splitlines():
        line = line.strip()
        if line:
            records.append(EvalRecord.from_json(line))
    return records


def _worker(config: ExperimentConfig, seed_index: int,
            missing: list[str]) -> list[EvalRecord]:
    return run_seed(config, seed_index, set(missing))


def run_protocol(config: ExperimentConfig) -> list[EvalRecord]:
    """Execute the full protocol for every seed, appending records.

    Seeds already present in the record file are skipped (resume).  Seeds
    run in parallel worker processes when ``GRAIL_THREADS`` (or the CPU
    count) allows; the record file is written only by this parent process,
    in seed order, so reruns are reproducible and appends never interleave.
    """
    config.output_dir.mkdir(parents=True, exist_ok=True)
    records_path = config.output_dir / "records.jsonl"
    existing = read_records(records_path)
    done_keys = {_record_key(r) for r in existing}

    wanted_ids = [CLEAN] + [a.kind for a in config.attacks]
    pending: list[tuple[int, list[str]]] = []
    for seed_index in range(config.num_seeds):
        missing = [attack_id for attack_id in wanted_ids
                   if (config.model.model_id, config.dataset_id, seed_index,
                       attack_id) not in done_keys]
        if missing:
            pending.append((seed_index, missing))

    if not pending:
        return existing

    env_cap = os.environ.get("GRAIL_THREADS")
    workers = min(len(pending),
                  int(env_cap) if env_cap else (os.cpu_count() or 1))

    fresh: list[EvalRecord] = []
    if workers <= 1:
        for seed_index, missing in pending:
            fresh.extend(run_seed(config, seed_index, set(missing)))
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            futures = [pool.submit(_worker, config, seed_index, missing)
                       for seed_index, missing in pending]
            for future in futures:
                fresh.extend(future.result())

    with records_path.open("a") as fh:
        for record in fresh:
            fh.write(record.to_json() + "\n")
    return existing + fresh


def format_table(summary: dict) -> str:
    """Plain-text robustness table: one block per (model, dataset) with a
    clean row, one row per attack with its drop, and the worst-case row."""
    lines = []
    for cell in summary["cells"]:
        lines.append("=" * 64)
        lines.append(f"model: {cell['model']}    dataset: {cell['dataset']}")
        lines.append("-" * 64)
        lines.append(f"  {'Attack':<12}{'Accuracy':<22}{'Drop %':>8}")
        lines.append(f"  {'Clean':<12}"
                     f"{_pm(cell['acc_clean_mean'], cell['acc_clean_std']):<22}")
        for attack_id, info in cell["attacks"].items():
            lines.append(f"  {attack_id:<12}{_pm(info['acc_mean'], info['acc_std']):<22}"
                         f"{100 * info['drop']:>8.2f}")
        if "min" in cell:
            info = cell["min"]
            lines.append(f"  {'Min':<12}{_pm(info['acc_mean'], info['acc_std']):<22}"
                         f"{100 * info['drop']:>8.2f}  [{info['attack']}]")
    lines.append("=" * 64)
    return "\n".join(lines)


def _pm(mean: float, std: float) -> str:
    return f"{100 * mean:.2f} +/- {100 * std:.2f}"


def format_reference_section(summary: dict, reference: str) -> str:
    """Per-model mean drop difference vs. the reference model (percentage
    points; positive means the model is less robust than the reference)."""
    ref_drops = drops_by_dataset(summary, reference)
    if not ref_drops:
        raise ValidationError(f"reference model {reference!r} has no records")
    lines = [f"drop delta vs reference '{reference}' "
             "(positive = larger drop = less robust)"]
    for model in summary["models"]:
        drops = drops_by_dataset(summary, model)
        shared = sorted(set(drops) & set(ref_drops))
        if not shared:
            continue
        delta = model_delta(drops, ref_drops, shared)
        lines.append(f"  {model:<16}{100 * delta:>+8.2f} pp over {shared}")
    return "\n".join(lines)


def report(records_path: str | Path, reference: str | None = None) -> tuple[dict, str]:
    """Summarize a record file; returns (summary dict, formatted table)."""
    records = read_records(records_path)
    summary = summarize(records)
    text = format_table(summary)
    if reference is not None:
        text += "\n" + format_reference_section(summary, reference)
    return summary, text


__all__ = [
    "ExperimentConfig", "ModelSpec", "MODEL_DEFAULTS", "build_model_spec",
    "load_experiment_config", "resolve_dataset", "train_model", "run_seed",
    "run_protocol", "read_records", "report", "format_table",
    "format_reference_section",
]
