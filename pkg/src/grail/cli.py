"""Command line interface.

Subcommands:
  gen-data  generate a synthetic dataset file from a generator spec
  run       execute the full multi-seed protocol from an experiment config
  report    summarize a record file into a table and summary JSON
  attack    run one attack against saved encoder/probe checkpoints
  convert   convert an edge-list CSV triple to the canonical JSON format

Exit codes: 0 success, 1 configuration error, 2 runtime failure.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from pathlib import Path

import numpy as np

from .attacks import AttackConfig, Budget, run_attack
from .data import (SbmSpec, convert_edgelist, generate_graph_classification_dataset,
                   generate_sbm_node_dataset, load_dataset, save_dataset)
from .encoders import load_encoder
from .errors import GrailError, ParseError, ValidationError
from .graphs import NODE_TASK, apply_perturbation
from .probe import accuracy, load_probe
from .runner import load_experiment_config, report, run_protocol
from .seeding import derive_seed

CONFIG_ERRORS = (ParseError, ValidationError, FileNotFoundError, KeyError,
                 TypeError, json.JSONDecodeError)


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # config errors exit 1, not argparse's 2
        raise ValidationError(message)


def _build_parser() -> _Parser:
    parser = _Parser(prog="grail", description=__doc__,
                     formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("gen-data", help="generate a synthetic dataset")
    gen.add_argument("spec", help="generator spec JSON file")
    gen.add_argument("-o", "--output", required=True, help="output dataset path")

    run = sub.add_parser("run", help="run the full evaluation protocol")
    run.add_argument("config", help="experiment config JSON file")

    rep = sub.add_parser("report", help="summarize a records file")
    rep.add_argument("records", help="records JSONL file")
    rep.add_argument("--reference", default=None,
                     help="model id to compare drops against")

    atk = sub.add_parser("attack", help="attack saved checkpoints")
    atk.add_argument("encoder", help="encoder checkpoint stem")
    atk.add_argument("probe", help="probe checkpoint stem")
    atk.add_argument("data", help="canonical dataset JSON file")
    atk.add_argument("--kind", default="prbcd",
                     choices=["random", "pgd", "prbcd", "grbcd"])
    atk.add_argument("--budget", type=float, default=0.05,
                     help="budget as a fraction of edges")
    atk.add_argument("--steps", type=int, default=125)
    atk.add_argument("--seed", type=int, default=0)
    atk.add_argument("-o", "--output", default=None, help="write result JSONL here")

    conv = sub.add_parser("convert", help="convert foreign formats")
    conv.add_argument("--from", dest="source", required=True, choices=["edgelist"])
    conv.add_argument("edges", help="edges.csv with one i,j row per edge")
    conv.add_argument("features", help="features.csv with one row per node")
    conv.add_argument("labels", help="labels.csv with one integer per node")
    conv.add_argument("-o", "--output", required=True)
    return parser


def _cmd_gen_data(args) -> int:
    spec = json.loads(Path(args.spec).read_text())
    task = spec.pop("task", NODE_TASK)
    if task == NODE_TASK:
        dataset = generate_sbm_node_dataset(SbmSpec(**spec))
    else:
        dataset = generate_graph_classification_dataset(
            num_graphs=spec.pop("num_graphs"),
            spec_a=SbmSpec(**spec.pop("spec_a")),
            spec_b=SbmSpec(**spec.pop("spec_b")),
            seed=spec.pop("seed", 0))
    save_dataset(dataset, args.output)
    print(f"wrote {args.output}: task={dataset.task} graphs={len(dataset.graphs)}")
    return 0


def _cmd_run(args) -> int:
    config_path = Path(args.config)
    doc = json.loads(config_path.read_text())
    config = load_experiment_config(doc, config_path.parent)
    records = run_protocol(config)
    print(f"{len(records)} records in {config.output_dir / 'records.jsonl'}")
    return 0


def _cmd_report(args) -> int:
    records_path = Path(args.records)
    summary, text = report(records_path, args.reference)
    summary_path = records_path.with_name("summary.json")
    table_path = records_path.with_name("table.txt")
    summary_path.write_text(json.dumps(summary, indent=1))
    table_path.write_text(text + "\n")
    print(text)
    print(f"\nwrote {summary_path} and {table_path}")
    return 0


def _cmd_attack(args) -> int:
    encoder = load_encoder(args.encoder)
    probe = load_probe(args.probe)
    dataset = load_dataset(args.data)
    config = AttackConfig(kind=args.kind, steps=args.steps, seed=args.seed)
    lines = []
    if dataset.task == NODE_TASK:
        g = dataset.graph
        budget = Budget.from_fraction(args.budget, g.num_edges)
        result = run_attack(g, encoder, probe, budget, config,
                            labels=np.asarray(g.node_labels),
                            target_idx=dataset.test_indices)
        perturbed = apply_perturbation(g, result.flips)
        result.attacked_accuracy = accuracy(probe, encoder, dataset, "test",
                                            graph_override=perturbed)
        lines.append(json.dumps(result.to_record()))
    else:
        overrides = {}
        for graph_idx in dataset.test_indices:
            g = dataset.graphs[int(graph_idx)]
            budget = Budget.from_fraction(args.budget, g.num_edges)
            per_graph = dataclasses.replace(
                config, seed=derive_seed(args.seed, int(graph_idx)))
            result = run_attack(g, encoder, probe, budget, per_graph,
                                labels=[g.graph_label])
            overrides[int(graph_idx)] = apply_perturbation(g, result.flips)
            record = result.to_record()
            record["graph_index"] = int(graph_idx)
            lines.append(json.dumps(record))
        acc_adv = accuracy(probe, encoder, dataset, "test", graph_override=overrides)
        lines.append(json.dumps({"attack": args.kind, "acc_adv": acc_adv}))
    output = "\n".join(lines)
    if args.output:
        Path(args.output).write_text(output + "\n")
    print(output)
    return 0


def _cmd_convert(args) -> int:
    convert_edgelist(args.edges, args.features, args.labels, args.output)
    print(f"wrote {args.output}")
    return 0


def main(argv: list[str] | None = None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
        handler = {"gen-data": _cmd_gen_data, "run": _cmd_run,
                   "report": _cmd_report, "attack": _cmd_attack,
                   "convert": _cmd_convert}[args.command]
        return handler(args)
    except CONFIG_ERRORS as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except GrailError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001 - CLI boundary
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
