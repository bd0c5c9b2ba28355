"""Command-line interface.

Subcommands: split, train, evaluate, predict, gradcheck, featurize.
Exit codes: 0 success / all checks passed, 1 check failure, 2 input or data
error, 3 numeric divergence during training.

Every artifact-writing command also writes a run manifest (resolved
configuration, dataset path and content hash, seed, package version) so a
run can be reproduced from the manifest alone.
"""

import argparse
import csv
import hashlib
import json
import logging
import os
import sys

from . import __version__
from .errors import MolegraphError, NonFiniteGradient, NonFiniteValue

EXIT_OK = 0
EXIT_CHECK_FAILED = 1
EXIT_INPUT_ERROR = 2
EXIT_DIVERGED = 3


def main(argv=None):
    parser = _build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        stream=sys.stderr, level=logging.INFO, format="%(levelname)s %(message)s"
    )
    try:
        return args.func(args)
    except (NonFiniteGradient, NonFiniteValue) as exc:
        print(f"error: training diverged: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    except (MolegraphError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT_ERROR


def _build_parser():
    parser = argparse.ArgumentParser(
        prog="molegraph",
        description="Molecular property prediction from SMILES (graph "
        "convolutions with a super-node readout).",
    )
    sub = parser.add_subparsers(required=True)

    p = sub.add_parser("split", help="split a dataset and write a subset manifest CSV")
    _data_args(p, tasks_required=False)
    _split_args(p)
    p.add_argument("--out", required=True, help="output CSV (row_index, smiles, subset)")
    p.set_defaults(func=cmd_split)

    p = sub.add_parser("train", help="train a model end to end")
    _data_args(p, tasks_required=True)
    _split_args(p)
    p.add_argument("--loss", default=None, help="ce | focal:<gamma> | mse (default by task kind)")
    p.add_argument("--epochs", type=int, default=50)
    p.add_argument("--batch-size", type=int, default=32)
    p.add_argument("--learning-rate", type=float, default=1e-3)
    p.add_argument("--patience", type=int, default=10)
    p.add_argument("--seed", type=int, default=0, help="training seed (shuffle + init)")
    p.add_argument("--node-width", type=int, default=64)
    p.add_argument("--super-width", type=int, default=128)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("evaluate", help="evaluate a checkpoint on a dataset split")
    p.add_argument("--checkpoint", required=True)
    _data_args(p, tasks_required=False)
    _split_args(p)
    p.add_argument("--subset", choices=["train", "valid", "test", "all"], default="test")
    p.add_argument("--out", help="optional CSV output path")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("predict", help="score SMILES with a trained checkpoint")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--smiles", nargs="*", default=[], help="inline SMILES strings")
    p.add_argument("--data", help="CSV file with a SMILES column")
    p.add_argument("--smiles-col", default="smiles")
    p.add_argument("--out", help="output CSV (default: stdout)")
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("gradcheck", help="finite-difference check of all layers")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_gradcheck)

    p = sub.add_parser("featurize", help="emit per-atom feature matrices as CSV")
    p.add_argument("--smiles", nargs="*", default=[])
    p.add_argument("--data", help="CSV file with a SMILES column")
    p.add_argument("--smiles-col", default="smiles")
    p.add_argument("--out", help="output CSV (default: stdout)")
    p.set_defaults(func=cmd_featurize)

    return parser


def _data_args(p, tasks_required):
    p.add_argument("--data", required=True, help="input CSV with a header row")
    p.add_argument("--smiles-col", default="smiles")
    p.add_argument("--tasks", required=tasks_required, default="",
                   help="comma-separated label column names")
    p.add_argument("--task-kind", choices=["classification", "regression"],
                   default="classification")


def _split_args(p):
    p.add_argument("--split-method", choices=["index", "random", "scaffold"],
                   default="index")
    p.add_argument("--split-seed", type=int, default=0)
    p.add_argument("--fractions", default="0.8,0.1,0.1")


def _load(args):
    from . import data as data_mod

    tasks = [t for t in (args.tasks or "").split(",") if t]
    return data_mod.load_csv(
        args.data,
        smiles_column=args.smiles_col,
        task_columns=tasks,
        task_kind=args.task_kind,
    )


def _split_spec(args):
    from .data import SplitSpec

    fractions = tuple(float(x) for x in args.fractions.split(","))
    return SplitSpec(method=args.split_method, fractions=fractions, seed=args.split_seed)


def _file_sha256(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _write_manifest(path, payload):
    payload = dict(payload)
    payload["version"] = __version__
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


# --- subcommands ---

def cmd_split(args):
    from . import data as data_mod

    dataset = _load(args)
    spec = _split_spec(args)
    subsets = dict(zip(("train", "valid", "test"), data_mod.split(dataset, spec)))

    row_index = {id(row): i for i, row in enumerate(dataset.rows)}
    with open(args.out, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["row_index", "smiles", "subset"])
        for name, subset in subsets.items():
            for row in subset.rows:
                writer.writerow([row_index[id(row)], row.smiles, name])
    _write_manifest(args.out + ".manifest.json", {
        "command": "split",
        "data": args.data,
        "data_sha256": _file_sha256(args.data),
        "smiles_column": args.smiles_col,
        "split": {"method": spec.method, "fractions": spec.fractions, "seed": spec.seed},
        "kept": dataset.kept,
        "dropped": len(dataset.dropped),
    })
    sizes = {name: len(s) for name, s in subsets.items()}
    print(f"kept={dataset.kept} dropped={len(dataset.dropped)}")
    print(f"sizes: train={sizes['train']} valid={sizes['valid']} test={sizes['test']}")
    if spec.method == "scaffold":
        keys = {data_mod.scaffold_key(r.graph) for r in dataset.rows}
        print(f"distinct scaffold keys: {len(keys)}")
    return EXIT_OK


def cmd_train(args):
    from . import data as data_mod
    from .model import ModelConfig, build_model, save_checkpoint
    from .train import TrainConfig, evaluate, fit

    dataset = _load(args)
    tasks = list(dataset.task_names)
    if not tasks:
        raise MolegraphError("--tasks must name at least one label column")
    spec = _split_spec(args)
    train_ds, valid_ds, test_ds = data_mod.split(dataset, spec)

    model = build_model(ModelConfig(
        task_count=len(tasks),
        task_kind=args.task_kind,
        node_width=args.node_width,
        super_width=args.super_width,
        seed=args.seed,
        task_names=tuple(tasks),
    ))
    if args.task_kind == "regression":
        mean, std, train_ds, valid_ds, test_ds = data_mod.normalize_targets(
            train_ds, valid_ds, test_ds
        )
        model.target_mean[...] = mean
        model.target_std[...] = std

    loss = args.loss or ("mse" if args.task_kind == "regression" else "ce")
    cfg = TrainConfig(
        learning_rate=args.learning_rate,
        batch_size=args.batch_size,
        epochs=args.epochs,
        loss=loss,
        seed=args.seed,
        early_stop_patience=args.patience,
    )
    history = fit(model, train_ds, valid_ds, cfg)

    os.makedirs(args.out_dir, exist_ok=True)
    ckpt_path = os.path.join(args.out_dir, "model.ckpt")
    save_checkpoint(model, ckpt_path)
    with open(os.path.join(args.out_dir, "history.csv"), "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["epoch", "train_loss", "valid_metric"])
        for rec in history:
            writer.writerow([rec["epoch"], f"{rec['train_loss']:.10g}",
                             f"{rec['valid_metric']:.10g}"])
    for name, subset in (("train", train_ds), ("valid", valid_ds), ("test", test_ds)):
        report = evaluate(model, subset, split_name=name)
        print(report)
        with open(os.path.join(args.out_dir, f"eval_{name}.csv"), "w") as fh:
            fh.write(report.to_csv())
    _write_manifest(os.path.join(args.out_dir, "manifest.json"), {
        "command": "train",
        "data": args.data,
        "data_sha256": _file_sha256(args.data),
        "smiles_column": args.smiles_col,
        "tasks": tasks,
        "task_kind": args.task_kind,
        "split": {"method": spec.method, "fractions": spec.fractions, "seed": spec.seed},
        "train": {
            "loss": cfg.loss, "epochs": cfg.epochs, "batch_size": cfg.batch_size,
            "learning_rate": cfg.learning_rate, "patience": cfg.early_stop_patience,
            "seed": cfg.seed, "adam": [cfg.adam_beta1, cfg.adam_beta2, cfg.adam_epsilon],
        },
        "model": {
            "node_width": args.node_width, "super_width": args.super_width,
            "classifier_hidden": model.config.classifier_hidden,
        },
        "kept": dataset.kept,
        "dropped": len(dataset.dropped),
    })
    return EXIT_OK


def cmd_evaluate(args):
    from . import data as data_mod
    from .model import load_checkpoint
    from .train import evaluate

    model = load_checkpoint(args.checkpoint)
    args.task_kind = model.config.task_kind
    if not args.tasks:
        args.tasks = ",".join(model.config.task_names)
    dataset = _load(args)
    if args.subset == "all":
        subset = dataset
    else:
        parts = dict(zip(("train", "valid", "test"), data_mod.split(dataset, _split_spec(args))))
        subset = parts[args.subset]
    if model.config.task_kind == "regression":
        # align labels with the model's normalized-target space
        from .data import DataRow, Dataset

        rows = [
            DataRow(r.smiles, r.graph, (r.y - model.target_mean) / model.target_std, r.mask)
            for r in subset.rows
        ]
        subset = Dataset(rows, subset.task_names, subset.task_kind)
    report = evaluate(model, subset, split_name=args.subset)
    print(report)
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(report.to_csv())
    return EXIT_OK


def cmd_predict(args):
    from .chem import featurize, parse_smiles, sanitize_smiles
    from .graph import build_batch
    from .model import load_checkpoint

    model = load_checkpoint(args.checkpoint)
    smiles = _collect_smiles(args)
    tasks = list(model.config.task_names) or [
        f"task{i}" for i in range(model.config.task_count)
    ]

    rows = []
    n_ok = 0
    for s in smiles:
        try:
            graph = parse_smiles(sanitize_smiles(s))
        except MolegraphError as exc:
            rows.append([s] + [""] * len(tasks) + [f"{type(exc).__name__}: {exc}"])
            continue
        batch, packed = build_batch([graph], [featurize(graph)])
        out = model.predict(batch, packed)[0]
        if model.config.task_kind == "classification":
            import numpy as np

            out = 1.0 / (1.0 + np.exp(-out))
        else:
            out = out * model.target_std + model.target_mean
        rows.append([s] + [f"{v:.6f}" for v in out] + [""])
        n_ok += 1

    fh = open(args.out, "w", newline="", encoding="utf-8") if args.out else sys.stdout
    try:
        writer = csv.writer(fh)
        writer.writerow(["smiles", *tasks, "error"])
        writer.writerows(rows)
    finally:
        if args.out:
            fh.close()
    if n_ok == 0:
        raise MolegraphError("no SMILES could be scored")
    return EXIT_OK


def cmd_gradcheck(args):
    from .gradcheck import TOLERANCE, run_all

    results = run_all(seed=args.seed)
    failed = [r for r in results if not r.passed]
    for r in results:
        status = "PASS" if r.passed else "FAIL"
        print(f"{status}  {r.name:<28} max_rel_err={r.max_rel_error:.3e}")
    print(f"{len(results) - len(failed)}/{len(results)} checks passed "
          f"(tolerance {TOLERANCE:g})")
    return EXIT_OK if not failed else EXIT_CHECK_FAILED


def cmd_featurize(args):
    from .chem import featurize, parse_smiles, sanitize_smiles

    smiles = _collect_smiles(args)
    fh = open(args.out, "w", newline="", encoding="utf-8") if args.out else sys.stdout
    try:
        writer = csv.writer(fh)
        from .chem import FEATURE_WIDTH

        writer.writerow(["mol_index", "atom_index"] + [f"f{i}" for i in range(FEATURE_WIDTH)])
        for mi, s in enumerate(smiles):
            graph = parse_smiles(sanitize_smiles(s))
            for ai, row in enumerate(featurize(graph)):
                writer.writerow([mi, ai] + [f"{v:g}" for v in row])
    finally:
        if args.out:
            fh.close()
    return EXIT_OK


def _collect_smiles(args):
    smiles = list(args.smiles)
    if args.data:
        with open(args.data, newline="", encoding="utf-8") as fh:
            reader = csv.DictReader(fh)
            if args.smiles_col not in (reader.fieldnames or []):
                raise MolegraphError(f"column {args.smiles_col!r} not in {args.data}")
            smiles += [rec[args.smiles_col] for rec in reader]
    if not smiles:
        raise MolegraphError("no SMILES given (use --smiles or --data)")
    return smiles


if __name__ == "__main__":
    sys.exit(main())
