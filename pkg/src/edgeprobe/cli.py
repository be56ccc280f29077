"""Command-line entry point: convert, align, train, eval, report.

Experiment runs are driven by a flat key=value config file plus CLI
overrides (later wins); each run writes its own output directory and
refuses to overwrite an existing one.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from . import converters, core, evaluation, pipeline
from .alignment import get_adapter, retokenize_dataset
from .encoders import EmbeddingTable, load_activations
from .evaluation import CORE_SRL_ROLES
from .probe import (
    ProbeConfig,
    evaluate_probs,
    load_checkpoint,
    save_checkpoint,
    train_probe,
)

CONFIG_DEFAULTS = {
    "task": "task",
    "encoder": "direct",
    "seed": "0",
    "lr": "1e-4",
    "batch_size": "32",
    "eval_interval": "1000",
    "max_steps": "",
    "projection_dim": "256",
    "mlp_hidden_dim": "256",
    "state_dim": "64",
    "embedding_dim": "64",
    "train_jsonl": "",
    "dev_jsonl": "",
    "test_jsonl": "",
    "activations_train": "",
    "activations_dev": "",
    "activations_test": "",
    "output_dir": "",
}


class UsageError(ValueError):
    pass


def load_config(path=None, overrides=()) -> dict:
    config = dict(CONFIG_DEFAULTS)
    entries = []
    if path:
        with open(path, encoding="utf-8") as f:
            for line in f:
                line = line.strip()
                if line and not line.startswith("#"):
                    entries.append(line)
    entries.extend(overrides)
    for entry in entries:
        if "=" not in entry:
            raise UsageError(f"config entry {entry!r} is not key=value")
        key, value = entry.split("=", 1)
        key = key.strip()
        if key not in CONFIG_DEFAULTS:
            raise UsageError(f"unknown config key {key!r}")
        config[key] = value.strip()
    return config


def dump_config(config: dict) -> str:
    return "".join(f"{k}={config[k]}\n" for k in sorted(config))


def _load_split(config, split):
    path = config[f"{split}_jsonl"]
    if not path:
        return []
    return core.read_jsonl(path)


def _mode_activations(config, split, examples, table):
    acts_path = config[f"activations_{split}"]
    acts = load_activations(acts_path) if acts_path else None
    return pipeline.build_mode_activations(
        examples,
        config["encoder"],
        acts_by_index=acts,
        table=table,
        ortho_seed=int(config["seed"]),
        ortho_state_dim=int(config["state_dim"]),
    )


def _build_run_inputs(config):
    """Datasets, vocabulary, per-split probe inputs, and the ProbeConfig."""
    train = _load_split(config, "train")
    if not train:
        raise ValueError("config requires a non-empty train_jsonl")
    dev = _load_split(config, "dev")
    test = _load_split(config, "test")
    vocab = core.LabelVocabulary.from_examples(train)
    if len(vocab) == 0:
        raise ValueError("train split has no labels")
    two_span = all(t.span2 is not None for ex in train for t in ex.targets)
    any_two = any(t.span2 is not None for ex in train for t in ex.targets)
    if any_two and not two_span:
        raise ValueError("train split mixes unary and binary targets")

    table = None
    if not config["activations_train"]:
        tokens = [tok for ex in train for tok in ex.tokens]
        table = EmbeddingTable.random(
            tokens, dim=int(config["embedding_dim"]), seed=int(config["seed"])
        )

    splits = {}
    probe_mode = input_dim = n_layers = None
    for name, examples in (("train", train), ("dev", dev), ("test", test)):
        if not examples:
            splits[name] = ([], {})
            continue
        acts, probe_mode, input_dim, n_layers = _mode_activations(
            config, name, examples, table
        )
        splits[name] = (examples, acts)

    probe_config = ProbeConfig(
        input_dim=input_dim,
        n_labels=len(vocab),
        two_span=two_span,
        projection_dim=int(config["projection_dim"]),
        mlp_hidden_dim=int(config["mlp_hidden_dim"]),
        encoder_mode=probe_mode,
        cnn_k={"cnn1": 1, "cnn2": 2}.get(config["encoder"], 1),
        n_layers=n_layers,
    )
    return splits, vocab, probe_config


def cmd_convert(args) -> int:
    fmt = args.format
    if fmt == "conllu":
        examples = converters.from_conllu(args.input, keep_root=args.keep_root)
    elif fmt == "bracketed":
        pos_examples, constit_examples = converters.from_bracketed(args.input)
        examples = pos_examples if args.task == "pos" else constit_examples
    elif fmt == "cluster-json":
        examples = converters.from_cluster_jsonl(args.input)
    elif fmt == "span-tsv":
        if not args.sentences:
            raise UsageError("span-tsv requires --sentences")
        examples = converters.from_span_tsv(
            args.input, args.sentences, two_span=args.two_span
        )
    elif fmt == "relation-tsv":
        examples = converters.from_relation_tsv(args.input)
    else:
        raise UsageError(f"unknown format {fmt!r}")
    violations = core.validate(examples)
    if violations:
        raise ValueError("converted data failed validation: " + "; ".join(violations))
    core.write_jsonl(examples, args.output)
    print(json.dumps(converters.dataset_stats(examples), sort_keys=True))
    return 0


def cmd_align(args) -> int:
    examples = core.read_jsonl(args.input)
    target_token_lists = None
    adapter = None
    if args.target_tokens:
        target_token_lists = []
        with open(args.target_tokens, encoding="utf-8") as f:
            for line in f:
                if line.strip():
                    obj = json.loads(line)
                    target_token_lists.append(
                        obj["tokens"] if isinstance(obj, dict) else obj
                    )
        if len(target_token_lists) != len(examples):
            raise ValueError("parallel token file length mismatch")
    else:
        kwargs = {}
        if args.vocab:
            kwargs["vocab_path"] = args.vocab
        if args.lowercase:
            kwargs["lowercase"] = True
        adapter = get_adapter(args.adapter, **kwargs)
    new_examples, report = retokenize_dataset(
        examples, adapter, target_token_lists=target_token_lists
    )
    core.write_jsonl(new_examples, args.output)
    print(json.dumps(report, sort_keys=True))
    return 0


def _prepare_run_dir(config) -> str:
    out_dir = config["output_dir"]
    if not out_dir:
        raise UsageError("config requires output_dir")
    if os.path.exists(out_dir) and os.listdir(out_dir):
        raise ValueError(f"refusing to overwrite non-empty run directory {out_dir}")
    os.makedirs(out_dir, exist_ok=True)
    return out_dir


def cmd_train(args) -> int:
    config = load_config(args.config, args.override)
    out_dir = _prepare_run_dir(config)
    splits, vocab, probe_config = _build_run_inputs(config)
    train_examples, train_acts = splits["train"]
    dev_examples, dev_acts = splits["dev"]
    train_items = pipeline.prepare_items(train_examples, train_acts, vocab)
    dev_items = pipeline.prepare_items(dev_examples, dev_acts, vocab)
    max_steps = int(config["max_steps"]) if config["max_steps"] else None
    params, log = train_probe(
        train_items,
        dev_items,
        probe_config,
        seed=int(config["seed"]),
        lr=float(config["lr"]),
        batch_size=int(config["batch_size"]),
        eval_interval=int(config["eval_interval"]),
        max_steps=max_steps,
    )
    with open(os.path.join(out_dir, "config.txt"), "w", encoding="utf-8") as f:
        f.write(dump_config(config))
    save_checkpoint(os.path.join(out_dir, "checkpoint.epp"), params)
    with open(os.path.join(out_dir, "train_log.jsonl"), "w", encoding="utf-8") as f:
        for entry in log:
            f.write(json.dumps(entry, sort_keys=True) + "\n")
    best = max((e["dev_f1"] for e in log), default=0.0)
    print(json.dumps({"steps": log[-1]["step"], "best_dev_f1": best}, sort_keys=True))
    return 0


def _parse_label_sets(entries):
    out = {}
    for entry in entries or ():
        if "=" not in entry:
            raise UsageError(f"--label-set entry {entry!r} is not name=l1,l2")
        name, labels = entry.split("=", 1)
        if labels == "core":
            out[name] = list(CORE_SRL_ROLES)
        else:
            out[name] = labels.split(",")
    return out


def cmd_eval(args) -> int:
    config = load_config(os.path.join(args.run, "config.txt"), args.override)
    params = load_checkpoint(os.path.join(args.run, "checkpoint.epp"))
    splits, vocab, probe_config = _build_run_inputs(config)
    examples, acts = splits[args.split]
    if not examples:
        raise ValueError(f"split {args.split!r} is empty or unconfigured")
    items = pipeline.prepare_items(examples, acts, vocab)
    probs, golds = evaluate_probs(items, params, probe_config)
    targets = [t for ex in examples for t in ex.targets]
    extra_fn = pipeline.unpredictable_label_counts(examples, vocab)
    report = evaluation.build_report(
        probs,
        golds,
        vocab.labels,
        targets=targets if args.by_distance else None,
        label_slices=_parse_label_sets(args.label_set) if args.by_label or args.label_set else None,
        max_bucket=args.max_bucket,
        extra_fn=extra_fn,
    )
    report_dict = report.to_dict()
    if not args.by_label:
        report_dict["per_label"] = {}
    out_json = os.path.join(args.run, f"report_{args.split}.json")
    with open(out_json, "w", encoding="utf-8") as f:
        f.write(json.dumps(report_dict, sort_keys=True, indent=2) + "\n")
    with open(os.path.join(args.run, f"report_{args.split}.txt"), "w", encoding="utf-8") as f:
        f.write(report.to_text() + "\n")
    if args.by_distance:
        evaluation.distance_buckets_csv(
            report.distance_buckets, os.path.join(args.run, f"distance_{args.split}.csv")
        )
    print(json.dumps({"f1": report.f1, "n": report.n}, sort_keys=True))
    return 0


def cmd_report(args) -> int:
    runs = {}
    for entry in args.runs:
        if "=" not in entry:
            raise UsageError(f"run entry {entry!r} is not label=path")
        label, path = entry.split("=", 1)
        with open(path, encoding="utf-8") as f:
            runs.setdefault(label, []).append(json.load(f))
    if args.baseline and args.baseline not in runs:
        raise UsageError(f"baseline {args.baseline!r} not among runs")
    rows = []
    for label, reports in runs.items():
        agg = evaluation.multi_run_average([r["f1"] for r in reports])
        rows.append({"run": label, "f1": agg["mean"], "runs": agg["k"],
                     "spread": agg["spread"]})
    baseline_f1 = None
    if args.baseline:
        baseline_f1 = next(r["f1"] for r in rows if r["run"] == args.baseline)
    lines = [f"{'run':<20} {'F1':>8} {'runs':>5} {'spread':>8} {'abs delta':>10}"]
    for r in rows:
        delta = "" if baseline_f1 is None else f"{r['f1'] - baseline_f1:+.4f}"
        lines.append(
            f"{r['run']:<20} {r['f1']:>8.4f} {r['runs']:>5} "
            f"{r['spread']:>8.4f} {delta:>10}"
        )
    text = "\n".join(lines)
    print(text)
    if args.csv:
        with open(args.csv, "w", encoding="utf-8") as f:
            f.write("run,f1,runs,spread,abs_delta\n")
            for r in rows:
                delta = "" if baseline_f1 is None else f"{r['f1'] - baseline_f1:.6f}"
                f.write(f"{r['run']},{r['f1']:.6f},{r['runs']},{r['spread']:.6f},{delta}\n")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="edgeprobe")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("convert", help="cast annotation formats to edge JSONL")
    p.add_argument("--format", required=True,
                   choices=["conllu", "bracketed", "span-tsv", "cluster-json",
                            "relation-tsv"])
    p.add_argument("--task", default="dep")
    p.add_argument("--keep-root", action="store_true")
    p.add_argument("--sentences")
    p.add_argument("--two-span", action="store_true")
    p.add_argument("input")
    p.add_argument("output")
    p.set_defaults(fn=cmd_convert)

    p = sub.add_parser("align", help="retokenize a dataset and project spans")
    p.add_argument("--adapter", default="whitespace")
    p.add_argument("--vocab")
    p.add_argument("--lowercase", action="store_true")
    p.add_argument("--target-tokens")
    p.add_argument("input")
    p.add_argument("output")
    p.set_defaults(fn=cmd_align)

    p = sub.add_parser("train", help="train a probe from a config file")
    p.add_argument("config")
    p.add_argument("override", nargs="*", help="key=value config overrides")
    p.set_defaults(fn=cmd_train)

    p = sub.add_parser("eval", help="evaluate a trained run")
    p.add_argument("run")
    p.add_argument("--split", default="dev", choices=["train", "dev", "test"])
    p.add_argument("--by-label", action="store_true")
    p.add_argument("--by-distance", action="store_true")
    p.add_argument("--label-set", action="append",
                   help="name=l1,l2,... (or name=core for ARG0..ARG5)")
    p.add_argument("--max-bucket", type=int, default=8)
    p.add_argument("--override", action="append", default=[])
    p.set_defaults(fn=cmd_eval)

    p = sub.add_parser("report", help="aggregate run reports into a table")
    p.add_argument("runs", nargs="+", help="label=path/to/report.json")
    p.add_argument("--baseline")
    p.add_argument("--csv")
    p.set_defaults(fn=cmd_report)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return 2 if e.code not in (0, None) else 0
    try:
        return args.fn(args)
    except UsageError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except FileNotFoundError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except Exception as e:  # runtime failure
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
