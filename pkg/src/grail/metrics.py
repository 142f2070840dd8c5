"""Standardized robustness metrics and record aggregation.

The central quantity is the relative accuracy drop
``(acc_clean - acc_adv) / acc_clean``: 0 means the attack changed nothing,
1 means accuracy collapsed to zero.  Per-cell drops are computed from
seed-mean accuracies, worst-case rows take the attack with the lowest
mean attacked accuracy, and model comparisons average per-dataset drop
differences against a reference model.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from typing import Iterable, Mapping

import numpy as np

from .errors import IncompleteCoverage, NoRecords, UndefinedDrop

CLEAN = "clean"


@dataclass(frozen=True)
class EvalRecord:
    """One (model, dataset, attack, seed) outcome."""

    model_id: str
    dataset_id: str
    attack_id: str
    seed: int
    acc_clean: float
    acc_adv: float
    delta_budget: int
    wall_ms: float = 0.0

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True)

    @staticmethod
    def from_json(line: str) -> "EvalRecord":
        return EvalRecord(**json.loads(line))


def relative_drop(acc_clean: float, acc_adv: float) -> float:
    """Relative accuracy reduction ``(acc_clean - acc_adv) / acc_clean``.

    A lucky perturbation that raises accuracy yields a negative value,
    which is passed through unclamped.
    """
    if acc_clean == 0.0:
        raise UndefinedDrop("relative drop undefined for zero clean accuracy")
    return (acc_clean - acc_adv) / acc_clean


def min_over_attacks(group: Mapping[str, object]) -> tuple[str, float]:
    """Worst-case attack for one (model, dataset) cell.

    ``group`` maps attack id either to an already-computed drop value or
    to that attack's records; selection picks the attack with the lowest
    seed-mean attacked accuracy (equivalently the largest drop), breaking
    ties by lexicographic attack id.  Returns ``(attack_id, drop)``.
    """
    if not group:
        raise NoRecords("no attacks to aggregate")
    drops: dict[str, float] = {}
    for attack_id, value in group.items():
        if isinstance(value, (int, float)):
            drops[attack_id] = float(value)
        else:
            records = list(value)
            if not records:
                raise NoRecords(f"no records for attack {attack_id!r}")
            acc_adv = float(np.mean([r.acc_adv for r in records]))
            acc_clean = float(np.mean([r.acc_clean for r in records]))
            drops[attack_id] = relative_drop(acc_clean, acc_adv)
    best = max(sorted(drops), key=lambda a: drops[a])
    return best, drops[best]


def model_delta(model_drops: Mapping[str, float], reference_drops: Mapping[str, float],
                datasets: Iterable[str]) -> float:
    """Mean per-dataset drop difference (model minus reference).

    Positive values mean the model loses more accuracy under attack than
    the reference, i.e. it is less robust.
    """
    datasets = list(datasets)
    if not datasets:
        raise IncompleteCoverage("no datasets requested")
    diffs = []
    for name in datasets:
        if name not in model_drops or name not in reference_drops:
            raise IncompleteCoverage(f"missing drop for dataset {name!r}")
        diffs.append(model_drops[name] - reference_drops[name])
    return float(np.mean(diffs))


def summarize(records: Iterable[EvalRecord]) -> dict:
    """Aggregate records into per-(model, dataset) summary cells.

    Each cell carries the clean accuracy mean/std over seeds, the same per
    attack together with its drop, and the worst-case ("min") attack row.
    """
    records = list(records)
    if not records:
        raise NoRecords("no records to summarize")
    cells: dict[tuple[str, str], dict[str, list[EvalRecord]]] = {}
    for record in records:
        cell = cells.setdefault((record.model_id, record.dataset_id), {})
        cell.setdefault(record.attack_id, []).append(record)

    summary: dict = {"models": sorted({m for m, _ in cells}),
                     "datasets": sorted({d for _, d in cells}),
                     "cells": []}
    for (model_id, dataset_id), by_attack in sorted(cells.items()):
        clean_values = [r.acc_clean for group in by_attack.values() for r in group]
        clean_mean = float(np.mean(clean_values))
        clean_std = float(np.std(clean_values))
        attacks = {}
        for attack_id, group in sorted(by_attack.items()):
            if attack_id == CLEAN:
                continue
            adv = [r.acc_adv for r in group]
            mean_adv = float(np.mean(adv))
            attacks[attack_id] = {
                "acc_mean": mean_adv,
                "acc_std": float(np.std(adv)),
                "drop": relative_drop(clean_mean, mean_adv),
                "delta_budget": int(group[0].delta_budget),
                "num_seeds": len(group),
            }
        cell = {"model": model_id, "dataset": dataset_id,
                "acc_clean_mean": clean_mean, "acc_clean_std": clean_std,
                "attacks": attacks}
        if attacks:
            worst_id, worst_drop = min_over_attacks(
                {a: info["drop"] for a, info in attacks.items()})
            cell["min"] = {"attack": worst_id, "drop": worst_drop,
                           "acc_mean": attacks[worst_id]["acc_mean"],
                           "acc_std": attacks[worst_id]["acc_std"]}
        summary["cells"].append(cell)
    return summary


def drops_by_dataset(summary: dict, model_id: str) -> dict[str, float]:
    """Worst-case drop per dataset for one model, from a summary dict."""
    out = {}
    for cell in summary["cells"]:
        if cell["model"] == model_id and "min" in cell:
            out[cell["dataset"]] = cell["min"]["drop"]
    return out
